//! Flat `key = value` run configuration.

use std::fmt::Write as _;
use std::path::PathBuf;

use crate::data::FactorSpec;
use crate::error::{Error, Result};
use crate::model::{ModelConfig, Preset, DEFAULT_BLOCK_DEPTH, DEFAULT_D_Z, DEFAULT_HIDDEN, DEFAULT_SIGMA_X, K_ONE, K_TWO};
use crate::real::Dtype;
use crate::training::TrainConfig;

/// Every recognised key with a one-line description.
pub const KEYS: &[(&str, &str)] = &[
    ("seed", "seed for initialisation, data, noise and shuffling"),
    ("precision", "f32 or f64 (overridden by VLAC_PRECISION)"),
    ("preset", "vlac-kone, vlac-ktwo, gm-dgm, vlae or custom"),
    ("k", "comma-separated components per layer; a new value selects the custom preset"),
    ("d_z", "latent width of every layer"),
    ("hidden", "units per hidden layer of every network block"),
    ("block_depth", "hidden layers per network block"),
    ("sigma_x", "fixed standard deviation of the pixel likelihood"),
    ("gm_k", "components of the gm-dgm baseline"),
    ("gm_matched_layer", "ladder layer whose depth the gm-dgm networks match"),
    ("vlae_layers", "layers of the vlae preset"),
    ("batch_size", "minibatch size"),
    ("steps", "total training steps"),
    ("learning_rate", "Adam step size"),
    ("beta1", "Adam first-moment decay"),
    ("beta2", "Adam second-moment decay"),
    ("epsilon", "Adam denominator offset"),
    ("tau_start", "initial Concrete temperature"),
    ("tau_end", "final Concrete temperature"),
    ("anneal_steps", "steps of linear temperature decay (auto = steps / 2)"),
    ("straight_through", "feed hard cluster samples forward (true/false)"),
    ("checkpoint_every", "checkpoint cadence in steps (0 = final only)"),
    ("eval_every", "evaluation cadence in steps (0 = never)"),
    ("eval_size", "datapoints per periodic evaluation"),
    ("data", "dataset directory in the raw format (empty = synthesise)"),
    ("n", "synthetic dataset size"),
    ("shapes", "synthetic glyph count (1-4)"),
    ("thicknesses", "synthetic stroke thickness count (1-3)"),
    ("hues", "synthetic hue count"),
    ("backgrounds", "synthetic background level count"),
    ("height", "synthetic image height"),
    ("width", "synthetic image width"),
    ("jitter", "synthetic maximum glyph offset in pixels"),
    ("layer", "1-based layer for eval and generate"),
    ("mode", "generate protocol: conditional or marginal"),
    ("rows", "rows of generated grids"),
    ("cols", "columns of marginal-resample grids"),
    ("checkpoint", "checkpoint manifest for eval, generate, or resuming train"),
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GenerateMode {
    Conditional,
    Marginal,
}

impl GenerateMode {
    pub fn name(self) -> &'static str {
        match self {
            GenerateMode::Conditional => "conditional",
            GenerateMode::Marginal => "marginal",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub precision: Dtype,
    pub preset: Preset,
    pub k: Vec<usize>,
    pub d_z: usize,
    pub hidden: usize,
    pub block_depth: usize,
    pub sigma_x: f64,
    pub gm_k: usize,
    pub gm_matched_layer: usize,
    pub vlae_layers: usize,
    pub train: TrainConfig,
    pub data: Option<PathBuf>,
    pub n: usize,
    pub factors: FactorSpec,
    pub layer: usize,
    pub mode: GenerateMode,
    pub rows: usize,
    pub cols: usize,
    pub checkpoint: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            precision: Dtype::F32,
            preset: Preset::VlacKTwo,
            k: K_TWO.to_vec(),
            d_z: DEFAULT_D_Z,
            hidden: DEFAULT_HIDDEN,
            block_depth: DEFAULT_BLOCK_DEPTH,
            sigma_x: DEFAULT_SIGMA_X,
            gm_k: 50,
            gm_matched_layer: 3,
            vlae_layers: 4,
            train: TrainConfig::default(),
            data: None,
            n: 8000,
            factors: FactorSpec::default(),
            layer: 3,
            mode: GenerateMode::Conditional,
            rows: 8,
            cols: 8,
            checkpoint: None,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("invalid value `{value}` for `{key}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Config(format!("invalid value `{value}` for `{key}` (true/false)"))),
    }
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        let t = &mut self.train;
        let f = &mut self.factors;
        match key {
            "seed" => self.seed = parse(key, v)?,
            "precision" => self.precision = Dtype::parse(v).ok_or_else(|| Error::Config(format!("unknown precision `{v}`")))?,
            "preset" => {
                self.preset = v.parse()?;
                match self.preset {
                    Preset::VlacKOne => self.k = K_ONE.to_vec(),
                    Preset::VlacKTwo => self.k = K_TWO.to_vec(),
                    _ => {}
                }
            }
            "k" => {
                let k: Vec<usize> = v.split(',').map(|x| parse(key, x)).collect::<Result<_>>()?;
                // restating the current components (as a config echo does) keeps the preset
                if k != self.k {
                    self.k = k;
                    self.preset = Preset::Custom;
                }
            }
            "d_z" => self.d_z = parse(key, v)?,
            "hidden" => self.hidden = parse(key, v)?,
            "block_depth" => self.block_depth = parse(key, v)?,
            "sigma_x" => self.sigma_x = parse(key, v)?,
            "gm_k" => self.gm_k = parse(key, v)?,
            "gm_matched_layer" => self.gm_matched_layer = parse(key, v)?,
            "vlae_layers" => self.vlae_layers = parse(key, v)?,
            "batch_size" => t.batch_size = parse(key, v)?,
            "steps" => t.steps = parse(key, v)?,
            "learning_rate" => t.learning_rate = parse(key, v)?,
            "beta1" => t.beta1 = parse(key, v)?,
            "beta2" => t.beta2 = parse(key, v)?,
            "epsilon" => t.epsilon = parse(key, v)?,
            "tau_start" => t.tau_start = parse(key, v)?,
            "tau_end" => t.tau_end = parse(key, v)?,
            "anneal_steps" => t.anneal_steps = if v == "auto" { None } else { Some(parse(key, v)?) },
            "straight_through" => t.straight_through = parse_bool(key, v)?,
            "checkpoint_every" => t.checkpoint_every = parse(key, v)?,
            "eval_every" => t.eval_every = parse(key, v)?,
            "eval_size" => t.eval_size = parse(key, v)?,
            "data" => self.data = (!v.is_empty()).then(|| PathBuf::from(v)),
            "n" => self.n = parse(key, v)?,
            "shapes" => f.shapes = parse(key, v)?,
            "thicknesses" => f.thicknesses = parse(key, v)?,
            "hues" => f.hues = parse(key, v)?,
            "backgrounds" => f.backgrounds = parse(key, v)?,
            "height" => f.height = parse(key, v)?,
            "width" => f.width = parse(key, v)?,
            "jitter" => f.jitter = parse(key, v)?,
            "layer" => self.layer = parse(key, v)?,
            "mode" => {
                self.mode = match v {
                    "conditional" => GenerateMode::Conditional,
                    "marginal" => GenerateMode::Marginal,
                    _ => return Err(Error::Config(format!("unknown mode `{v}` (conditional, marginal)"))),
                }
            }
            "rows" => self.rows = parse(key, v)?,
            "cols" => self.cols = parse(key, v)?,
            "checkpoint" => self.checkpoint = (!v.is_empty()).then(|| PathBuf::from(v)),
            _ => return Err(Error::Config(format!("unknown configuration key `{key}`"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`, got `{raw}`", i + 1)))?;
            self.set(key.trim(), value)
                .map_err(|e| Error::Config(format!("line {}: {}", i + 1, e.to_string().trim_start_matches("configuration error: "))))?;
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> String {
        let t = &self.train;
        let f = &self.factors;
        let join = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>().join(",");
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        match key {
            "seed" => self.seed.to_string(),
            "precision" => self.precision.to_string(),
            "preset" => self.preset.to_string(),
            "k" => join(&self.k),
            "d_z" => self.d_z.to_string(),
            "hidden" => self.hidden.to_string(),
            "block_depth" => self.block_depth.to_string(),
            "sigma_x" => self.sigma_x.to_string(),
            "gm_k" => self.gm_k.to_string(),
            "gm_matched_layer" => self.gm_matched_layer.to_string(),
            "vlae_layers" => self.vlae_layers.to_string(),
            "batch_size" => t.batch_size.to_string(),
            "steps" => t.steps.to_string(),
            "learning_rate" => t.learning_rate.to_string(),
            "beta1" => t.beta1.to_string(),
            "beta2" => t.beta2.to_string(),
            "epsilon" => t.epsilon.to_string(),
            "tau_start" => t.tau_start.to_string(),
            "tau_end" => t.tau_end.to_string(),
            "anneal_steps" => t.anneal_steps.map_or("auto".into(), |a| a.to_string()),
            "straight_through" => t.straight_through.to_string(),
            "checkpoint_every" => t.checkpoint_every.to_string(),
            "eval_every" => t.eval_every.to_string(),
            "eval_size" => t.eval_size.to_string(),
            "data" => path(&self.data),
            "n" => self.n.to_string(),
            "shapes" => f.shapes.to_string(),
            "thicknesses" => f.thicknesses.to_string(),
            "hues" => f.hues.to_string(),
            "backgrounds" => f.backgrounds.to_string(),
            "height" => f.height.to_string(),
            "width" => f.width.to_string(),
            "jitter" => f.jitter.to_string(),
            "layer" => self.layer.to_string(),
            "mode" => self.mode.name().to_string(),
            "rows" => self.rows.to_string(),
            "cols" => self.cols.to_string(),
            "checkpoint" => path(&self.checkpoint),
            _ => String::new(),
        }
    }

    /// Every key and its effective value; reading it back reproduces this configuration.
    pub fn echo(&self) -> String {
        let mut s = String::new();
        for (key, _) in KEYS {
            let _ = writeln!(s, "{key} = {}", self.get(key));
        }
        s
    }

    /// Training settings with the run seed applied.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            ..self.train.clone()
        }
    }

    pub fn model_config(&self, x_dim: usize) -> Result<ModelConfig> {
        let mut config = match self.preset {
            Preset::VlacKOne | Preset::VlacKTwo | Preset::Custom => {
                let ks: &[usize] = match self.preset {
                    Preset::VlacKOne => &crate::model::K_ONE,
                    Preset::VlacKTwo => &K_TWO,
                    _ => &self.k,
                };
                let mut c = ModelConfig::ladder(ks, x_dim, self.d_z, self.hidden);
                c.block_depth = self.block_depth;
                c
            }
            Preset::Vlae => {
                let mut c = ModelConfig::vlae(self.vlae_layers, x_dim);
                c.layers.iter_mut().for_each(|l| {
                    l.d_z = self.d_z;
                    l.hidden = self.hidden;
                });
                c.block_depth = self.block_depth;
                c
            }
            Preset::GmDgm => {
                let mut c = ModelConfig::gm_dgm(self.gm_k, x_dim, self.d_z, self.hidden, self.gm_matched_layer);
                c.block_depth = self.block_depth * self.gm_matched_layer;
                c
            }
        };
        config.sigma_x = self.sigma_x;
        config.seed = self.seed;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Config("n must be at least 1".into()));
        }
        if self.rows == 0 || self.cols == 0 {
            return Err(Error::Config("rows and cols must be at least 1".into()));
        }
        if self.layer == 0 {
            return Err(Error::Config("layers are numbered from 1".into()));
        }
        self.factors.validate()?;
        self.train_config().validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn echo_round_trips() {
        let mut c = RunConfig::default();
        c.apply_text("seed = 5\npreset = custom\nk = 1,4,4,1 # ladder\n\nsteps=10\nanneal_steps = 3").unwrap();
        let mut back = RunConfig::default();
        back.apply_text(&c.echo()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.k, vec![1, 4, 4, 1]);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        let mut c = RunConfig::default();
        assert!(matches!(c.apply_text("colour = red"), Err(Error::Config(_))));
        assert!(c.apply_text("steps = many").is_err());
        assert!(c.apply_text("no equals sign").is_err());
    }

    #[test]
    fn every_key_is_settable() {
        let c = RunConfig::default();
        for (key, _) in KEYS {
            let mut d = RunConfig::default();
            d.set(key, &c.get(key)).unwrap_or_else(|e| panic!("{key}: {e}"));
            assert_eq!(d, c, "{key}");
        }
    }

    #[test]
    fn k_selects_custom_only_when_it_changes() {
        let mut c = RunConfig::default();
        c.set("preset", "gm-dgm").unwrap();
        c.set("k", &c.get("k")).unwrap();
        assert_eq!(c.preset, Preset::GmDgm);
        c.set("preset", "vlac-kone").unwrap();
        assert_eq!(c.k, K_ONE);
        c.set("k", "1,4,4,1").unwrap();
        assert_eq!((c.preset, c.k.as_slice()), (Preset::Custom, &[1, 4, 4, 1][..]));
    }

    #[test]
    fn presets_build_models() {
        let mut c = RunConfig::default();
        for preset in Preset::ALL {
            c.preset = preset;
            assert!(c.model_config(48).is_ok(), "{preset}");
        }
        c.preset = Preset::GmDgm;
        assert_eq!(c.model_config(48).unwrap().block_depth, 6);
    }
}
