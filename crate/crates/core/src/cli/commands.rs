use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::cli::config::{GenerateMode, RunConfig};
use crate::cli::SelfcheckArgs;
use crate::data::{load_raw, save_raw, synth_generate, tile_sheet, Dataset};
use crate::error::{Error, Result};
use crate::evaluation::evaluate_model;
use crate::model::checkpoint;
use crate::model::generate::{conditional_grid, marginal_grid, sample_prior_latents};
use crate::model::{ModelConfig, ParamStore, Vlac};
use crate::real::{Dtype, Real};
use crate::seeding::{stream_rng, Purpose};
use crate::selfcheck::{run_all, SelfcheckOptions};
use crate::training::metrics::{metrics_header, EVAL_HEADER};
use crate::training::{load_params, train, TrainSinks, Trainer};

pub const CONFIG_ECHO: &str = "config.txt";
pub const METRICS_FILE: &str = "metrics.tsv";
pub const EVALUATIONS_FILE: &str = "evaluations.tsv";
pub const CHECKPOINT_DIR: &str = "checkpoints";
pub const PREVIEW_FILE: &str = "preview.ppm";
/// Preview sheets show an 8 × 8 grid of the first records.
pub const PREVIEW_GRID: usize = 8;

fn require_out(out: Option<&Path>) -> Result<&Path> {
    out.ok_or_else(|| Error::Config("--out DIR is required".into()))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn load_dataset(config: &RunConfig) -> Result<Dataset> {
    match &config.data {
        Some(dir) => load_raw(dir),
        None => synth_generate(&config.factors, config.n, config.seed),
    }
}

/// Writes the dataset, its preview sheet and the configuration to `out`.
pub fn cmd_synth(config: &RunConfig, out: Option<&Path>) -> Result<String> {
    let out = require_out(out)?;
    let data = synth_generate(&config.factors, config.n, config.seed)?;
    save_raw(out, &data)?;
    let blank = vec![0.0f64; data.x_dim()];
    let images: Vec<Vec<f64>> = (0..data.len().min(PREVIEW_GRID * PREVIEW_GRID))
        .map(|i| data.image(i).iter().map(|&p| p as f64 / 255.0).collect())
        .collect();
    let tiles: Vec<&[f64]> = (0..PREVIEW_GRID * PREVIEW_GRID)
        .map(|i| images.get(i).map_or(blank.as_slice(), Vec::as_slice))
        .collect();
    let sheet = tile_sheet(&tiles, PREVIEW_GRID, PREVIEW_GRID, data.height, data.width, data.channels)?;
    sheet.save(&out.join(PREVIEW_FILE))?;
    write_file(&out.join(CONFIG_ECHO), config.echo())?;
    Ok(format!(
        "wrote {} images ({}x{}x{}) with labels {:?} to {}\n",
        data.len(),
        data.height,
        data.width,
        data.channels,
        data.label_channels.iter().map(|(n, _)| n.as_str()).collect::<Vec<_>>(),
        out.display()
    ))
}

fn open_log(path: &Path, header: &str, fresh: bool) -> Result<fs::File> {
    let exists = path.exists();
    let mut file = OpenOptions::new()
        .create(true)
        .write(true)
        .append(!fresh)
        .truncate(fresh)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    if fresh || !exists {
        writeln!(file, "{header}").map_err(|e| Error::io(path, e))?;
    }
    Ok(file)
}

/// Trains (or resumes, with `checkpoint`) and fills the run directory `out`.
pub fn cmd_train(config: &RunConfig, out: Option<&Path>) -> Result<String> {
    match config.precision {
        Dtype::F32 => train_in::<f32>(config, require_out(out)?),
        Dtype::F64 => train_in::<f64>(config, require_out(out)?),
    }
}

fn train_in<S: Real>(config: &RunConfig, out: &Path) -> Result<String> {
    create_dir(out)?;
    write_file(&out.join(CONFIG_ECHO), config.echo())?;
    let data = load_dataset(config)?;
    let mut trainer = match &config.checkpoint {
        Some(path) => Trainer::<S>::restore(&checkpoint::load::<S>(path)?, config.train_config())?,
        None => Trainer::<S>::new(config.model_config(data.x_dim())?, config.train_config())?,
    };
    if trainer.model().config().x_dim != data.x_dim() {
        return Err(Error::Config(format!(
            "checkpoint expects {} values per image, dataset has {}",
            trainer.model().config().x_dim,
            data.x_dim()
        )));
    }
    for (key, value) in [
        ("data.height", data.height),
        ("data.width", data.width),
        ("data.channels", data.channels),
    ] {
        trainer.set_meta(key, &value.to_string());
    }
    let fresh = trainer.step() == 0;
    let layers = trainer.model().num_layers();
    let mut metrics = open_log(&out.join(METRICS_FILE), &metrics_header(layers), fresh)?;
    let mut evaluations = open_log(&out.join(EVALUATIONS_FILE), EVAL_HEADER, fresh)?;
    let ckpt_dir = out.join(CHECKPOINT_DIR);
    create_dir(&ckpt_dir)?;
    let start_step = trainer.step();
    let history = {
        let mut sinks = TrainSinks {
            metrics: Some(&mut metrics),
            evaluations: Some(&mut evaluations),
            checkpoint_dir: Some(ckpt_dir.clone()),
        };
        train(&mut trainer, &data, &mut sinks)?
    };
    let last = history
        .last()
        .map_or("no steps run".to_string(), |b| format!("final minibatch ELBO {:.4}", b.total));
    Ok(format!(
        "trained steps {start_step}..{} ({}); checkpoint {}\n",
        trainer.step(),
        last,
        crate::training::checkpoint_path(&ckpt_dir, None).display()
    ))
}

struct Loaded<S> {
    model: Vlac,
    store: ParamStore<S>,
    geometry: Option<(usize, usize, usize)>,
}

fn load_checkpoint<S: Real>(config: &RunConfig) -> Result<Loaded<S>> {
    let path = config
        .checkpoint
        .as_ref()
        .ok_or_else(|| Error::Config("--checkpoint PATH is required".into()))?;
    let ckpt = checkpoint::load::<S>(path)?;
    let model_config = ModelConfig::from_meta(|k| ckpt.meta(k))?;
    let (model, store) = load_params(model_config, &ckpt)?;
    let dim = |k: &str| ckpt.meta(k).and_then(|v| v.parse::<usize>().ok());
    let geometry = match (dim("data.height"), dim("data.width"), dim("data.channels")) {
        (Some(h), Some(w), Some(c)) => Some((h, w, c)),
        _ => None,
    };
    Ok(Loaded { model, store, geometry })
}

fn check_layer(model: &Vlac, layer: usize, need_mixture: bool) -> Result<usize> {
    let l = model.num_layers();
    if layer == 0 || layer > l {
        return Err(Error::Config(format!("layer {layer} outside 1..={l}")));
    }
    let k = model.config().layers[layer - 1].k;
    if need_mixture && k < 2 {
        return Err(Error::Config(format!(
            "layer {layer} has K = 1: it has no cluster variable; choose a layer with K > 1 (components per layer: {:?})",
            model.config().ks()
        )));
    }
    Ok(layer - 1)
}

/// Scores the clusters of `layer` against every label channel of the dataset.
pub fn cmd_eval(config: &RunConfig, out: Option<&Path>) -> Result<String> {
    match config.precision {
        Dtype::F32 => eval_in::<f32>(config, out),
        Dtype::F64 => eval_in::<f64>(config, out),
    }
}

fn eval_in<S: Real>(config: &RunConfig, out: Option<&Path>) -> Result<String> {
    let loaded = load_checkpoint::<S>(config)?;
    let layer = check_layer(&loaded.model, config.layer, true)?;
    let data = load_dataset(config)?;
    let report = evaluate_model(&loaded.model, &loaded.store, &data, layer)?;
    let out = out.map_or_else(|| PathBuf::from("."), Path::to_path_buf);
    create_dir(&out)?;
    let path = out.join(format!("eval-layer{}.tsv", config.layer));
    write_file(&path, report.to_delimited())?;
    let mut s = String::new();
    for c in &report.channels {
        s.push_str(&format!(
            "layer {} vs {}: many-to-one {:.4}, injective {:.4}\n",
            config.layer, c.name, c.many_to_one.accuracy, c.injective.accuracy
        ));
    }
    s.push_str(&format!("report written to {}\n", path.display()));
    Ok(s)
}

/// Writes a per-component or marginal-resample grid of decoder means.
pub fn cmd_generate(config: &RunConfig, out: Option<&Path>) -> Result<String> {
    match config.precision {
        Dtype::F32 => generate_in::<f32>(config, out),
        Dtype::F64 => generate_in::<f64>(config, out),
    }
}

fn generate_in<S: Real>(config: &RunConfig, out: Option<&Path>) -> Result<String> {
    let loaded = load_checkpoint::<S>(config)?;
    let (model, store) = (&loaded.model, &loaded.store);
    let layer = check_layer(model, config.layer, config.mode == GenerateMode::Conditional)?;
    let (h, w, c) = loaded
        .geometry
        .unwrap_or((config.factors.height, config.factors.width, 3));
    if h * w * c != model.config().x_dim {
        return Err(Error::Config(format!(
            "image geometry {h}x{w}x{c} does not match {} model outputs",
            model.config().x_dim
        )));
    }
    let mut rng = stream_rng(config.seed, Purpose::Generate, 0);
    let grid = match config.mode {
        GenerateMode::Conditional => conditional_grid(model, store, layer, config.rows, &mut rng)?,
        GenerateMode::Marginal => {
            let base = sample_prior_latents(model, store, config.rows, &mut rng)?;
            marginal_grid(model, store, layer, &base, config.cols, &mut rng)?
        }
    };
    let tiles: Vec<&[S]> = (0..grid.rows * grid.cols).map(|i| grid.tiles.row(i)).collect();
    let sheet = tile_sheet(&tiles, grid.rows, grid.cols, h, w, c)?;
    let out = out.map_or_else(|| PathBuf::from("."), Path::to_path_buf);
    create_dir(&out)?;
    let path = out.join(format!("{}-layer{}.ppm", config.mode.name(), config.layer));
    sheet.save(&path)?;
    Ok(format!(
        "{} grid: {} rows x {} columns, {}x{} pixels, written to {}\n",
        config.mode.name(),
        grid.rows,
        grid.cols,
        sheet.width,
        sheet.height,
        path.display()
    ))
}

/// Runs every self-check suite, printing one line per suite.
pub fn cmd_selfcheck(args: &SelfcheckArgs) -> Result<String> {
    let options = SelfcheckOptions {
        seed: args.seed,
        fault: args.inject_fault.clone(),
    };
    let results = run_all(&options);
    let mut report = String::new();
    for r in &results {
        report.push_str(&r.line());
        report.push('\n');
        for f in &r.failures {
            report.push_str(&format!("  {f}\n"));
        }
    }
    if let Some(dir) = &args.out {
        create_dir(dir)?;
        write_file(&dir.join("selfcheck.txt"), &report)?;
    }
    let failed: Vec<&str> = results.iter().filter(|r| !r.passed).map(|r| r.name).collect();
    if failed.is_empty() {
        Ok(report)
    } else {
        print!("{report}");
        Err(Error::SelfcheckFailed(format!("suites {}", failed.join(", "))))
    }
}
