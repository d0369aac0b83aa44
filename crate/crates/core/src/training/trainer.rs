use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::autodiff::Tape;
use crate::data::{step_batch, Dataset};
use crate::error::{Error, Result};
use crate::evaluation::evaluate_model;
use crate::model::checkpoint::{self, Checkpoint};
use crate::model::{LadderNoise, ModelConfig, ParamStore, Vlac, YMode};
use crate::real::Real;
use crate::seeding::{stream_rng, Purpose};
use crate::tensor::Tensor;
use crate::training::elbo::{elbo, ElboBreakdown};
use crate::training::metrics::{metrics_row, write_eval_rows};
use crate::training::optim::{Adam, AdamConfig};
use crate::training::schedule::TemperatureSchedule;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub steps: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub tau_start: f64,
    pub tau_end: f64,
    /// Defaults to half of `steps`.
    pub anneal_steps: Option<usize>,
    pub seed: u64,
    /// Feed hard one-hot cluster samples forward (relaxed gradients).
    pub straight_through: bool,
    /// Checkpoint cadence in steps; 0 keeps only the final checkpoint.
    pub checkpoint_every: usize,
    /// Evaluation cadence in steps; 0 disables periodic evaluation.
    pub eval_every: usize,
    /// Datapoints scored by each periodic evaluation.
    pub eval_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        TrainConfig {
            batch_size: 64,
            steps: 5000,
            learning_rate: adam.learning_rate,
            beta1: adam.beta1,
            beta2: adam.beta2,
            epsilon: adam.epsilon,
            tau_start: 1.0,
            tau_end: 0.5,
            anneal_steps: None,
            seed: 0,
            straight_through: false,
            checkpoint_every: 0,
            eval_every: 0,
            eval_size: 2000,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return bad(format!("learning_rate must be non-negative, got {}", self.learning_rate));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return bad(format!("{name} must lie in [0, 1), got {b}"));
            }
        }
        if !(self.epsilon > 0.0) {
            return bad(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if !(self.tau_end > 0.0) || !(self.tau_end <= self.tau_start) || !self.tau_start.is_finite() {
            return bad(format!(
                "temperatures must satisfy 0 < tau_end <= tau_start, got {} and {}",
                self.tau_end, self.tau_start
            ));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }

    pub fn schedule(&self) -> TemperatureSchedule {
        TemperatureSchedule {
            start: self.tau_start,
            end: self.tau_end,
            anneal_steps: self.anneal_steps.unwrap_or(self.steps / 2),
        }
    }
}

/// Model, parameters and optimiser state of one run.
///
/// The noise of step `t` and the shuffle of epoch `e` are derived from the seed
/// and `t` (resp. `e`) alone, so a restored trainer continues bit-exactly.
#[derive(Clone, Debug)]
pub struct Trainer<S> {
    model: Vlac,
    store: ParamStore<S>,
    adam: Adam<S>,
    config: TrainConfig,
    step: usize,
    meta: Vec<(String, String)>,
}

const ADAM_M: &str = "adam.m:";
const ADAM_V: &str = "adam.v:";

impl<S: Real> Trainer<S> {
    pub fn new(model: ModelConfig, config: TrainConfig) -> Result<Self> {
        let (model, store) = Vlac::init::<S>(model)?;
        Self::from_parts(model, store, config)
    }

    pub fn from_parts(model: Vlac, store: ParamStore<S>, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let adam = Adam::new(config.adam(), &store);
        Ok(Trainer {
            model,
            store,
            adam,
            config,
            step: 0,
            meta: Vec::new(),
        })
    }

    pub fn model(&self) -> &Vlac {
        &self.model
    }

    pub fn store(&self) -> &ParamStore<S> {
        &self.store
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    /// Steps completed so far.
    pub fn step(&self) -> usize {
        self.step
    }

    pub fn into_parts(self) -> (Vlac, ParamStore<S>) {
        (self.model, self.store)
    }

    /// Extra metadata carried into every checkpoint.
    pub fn set_meta(&mut self, key: &str, value: &str) {
        match self.meta.iter_mut().find(|(k, _)| k == key) {
            Some(entry) => entry.1 = value.to_string(),
            None => self.meta.push((key.to_string(), value.to_string())),
        }
    }

    /// Temperature used by the next step.
    pub fn temperature(&self) -> f64 {
        self.config.schedule().at(self.step)
    }

    fn mode(&self) -> YMode {
        let temperature = self.temperature();
        if self.config.straight_through {
            YMode::StraightThrough { temperature }
        } else {
            YMode::Relaxed { temperature }
        }
    }

    /// One Adam step on the negated ELBO of `x` (`[batch, x_dim]`); returns the
    /// ELBO terms before the update.
    pub fn train_step(&mut self, x: &Tensor<S>) -> Result<ElboBreakdown> {
        let batch = x.shape().first().copied().unwrap_or(0);
        let mut rng = stream_rng(self.config.seed, Purpose::Noise, self.step as u64);
        let noise = LadderNoise::sample(self.model.config(), batch, &mut rng);
        let tape = Tape::new();
        let p = self.store.bind(&tape);
        let terms = elbo(&self.model, &p, tape.constant(x.clone()), &noise, &self.mode())?;
        let breakdown = terms.breakdown()?;
        let grads = tape.backward(terms.loss()?)?;
        let mut flat = Vec::with_capacity(self.store.len());
        for (id, &var) in self.store.ids().zip(p.vars()) {
            let g = grads.wrt(var);
            if !g.all_finite() {
                return Err(Error::NonFiniteGradient {
                    param: self.store.name(id).to_string(),
                });
            }
            flat.push(g);
        }
        self.adam.step(&mut self.store, &flat)?;
        self.step += 1;
        Ok(breakdown)
    }

    /// Parameters, optimiser moments, step counter and model configuration.
    pub fn checkpoint(&self) -> Checkpoint<S> {
        let mut meta = vec![
            ("step".to_string(), self.step.to_string()),
            ("adam.t".to_string(), self.adam.t.to_string()),
            ("dtype".to_string(), S::DTYPE.to_string()),
        ];
        meta.extend(self.model.config().to_meta());
        meta.extend(self.meta.iter().cloned());
        let mut tensors = Vec::with_capacity(3 * self.store.len());
        for (name, t) in self.store.iter() {
            tensors.push((name.to_string(), t.clone()));
        }
        for ((name, _), (m, v)) in self.store.iter().zip(self.adam.m.iter().zip(&self.adam.v)) {
            tensors.push((format!("{ADAM_M}{name}"), m.clone()));
            tensors.push((format!("{ADAM_V}{name}"), v.clone()));
        }
        Checkpoint { meta, tensors }
    }

    /// Rebuilds a trainer from [`Trainer::checkpoint`] output. Optimiser moments
    /// missing from the checkpoint start at zero.
    pub fn restore(ckpt: &Checkpoint<S>, config: TrainConfig) -> Result<Self> {
        let model_config = ModelConfig::from_meta(|k| ckpt.meta(k))?;
        let (model, store) = load_params(model_config, ckpt)?;
        let mut trainer = Self::from_parts(model, store, config)?;
        let parse = |key: &str| -> Result<u64> {
            ckpt.meta(key)
                .unwrap_or("0")
                .parse()
                .map_err(|_| Error::Config(format!("bad checkpoint `{key}`")))
        };
        trainer.step = parse("step")? as usize;
        const RESERVED: [&str; 3] = ["step", "adam.t", "dtype"];
        trainer.meta = ckpt
            .meta
            .iter()
            .filter(|(k, _)| !RESERVED.contains(&k.as_str()) && !k.starts_with("model."))
            .cloned()
            .collect();
        trainer.adam.t = parse("adam.t")?;
        let names: Vec<String> = trainer.store.iter().map(|(n, _)| n.to_string()).collect();
        for (i, name) in names.iter().enumerate() {
            if let Some(m) = ckpt.tensor(&format!("{ADAM_M}{name}")) {
                trainer.adam.m[i] = m.clone();
            }
            if let Some(v) = ckpt.tensor(&format!("{ADAM_V}{name}")) {
                trainer.adam.v[i] = v.clone();
            }
        }
        Ok(trainer)
    }
}

/// Model and parameters stored in a checkpoint.
pub fn load_params<S: Real>(model_config: ModelConfig, ckpt: &Checkpoint<S>) -> Result<(Vlac, ParamStore<S>)> {
    let (model, mut store) = Vlac::init::<S>(model_config)?;
    let names: Vec<String> = store.iter().map(|(n, _)| n.to_string()).collect();
    for name in names {
        let t = ckpt
            .tensor(&name)
            .ok_or_else(|| Error::Config(format!("checkpoint lacks parameter `{name}`")))?;
        store.set(&name, t.clone())?;
    }
    Ok((model, store))
}

/// Model and parameters of a checkpoint file.
pub fn load_model<S: Real>(manifest: &Path) -> Result<(Vlac, ParamStore<S>)> {
    let ckpt = checkpoint::load::<S>(manifest)?;
    let config = ModelConfig::from_meta(|k| ckpt.meta(k))?;
    load_params(config, &ckpt)
}

/// Destinations for what [`train`] produces; every field is optional.
#[derive(Default)]
pub struct TrainSinks<'a> {
    /// Receives one [`metrics_row`] per step.
    pub metrics: Option<&'a mut dyn Write>,
    /// Receives evaluation rows every `eval_every` steps.
    pub evaluations: Option<&'a mut dyn Write>,
    /// Checkpoints go to `step{N}.ckpt` every `checkpoint_every` steps and to
    /// `final.ckpt` at the end.
    pub checkpoint_dir: Option<PathBuf>,
}

pub fn checkpoint_path(dir: &Path, step: Option<usize>) -> PathBuf {
    match step {
        Some(s) => dir.join(format!("step{s:07}.ckpt")),
        None => dir.join("final.ckpt"),
    }
}

/// Runs the remaining steps of `trainer` on shuffled minibatches of `data`.
/// Returns the ELBO terms of every step run.
pub fn train<S: Real>(trainer: &mut Trainer<S>, data: &Dataset, sinks: &mut TrainSinks<'_>) -> Result<Vec<ElboBreakdown>> {
    if data.is_empty() {
        return Err(Error::invalid("cannot train on an empty dataset"));
    }
    if data.x_dim() != trainer.model.config().x_dim {
        return Err(Error::invalid(format!(
            "dataset images have {} values, model expects {}",
            data.x_dim(),
            trainer.model.config().x_dim
        )));
    }
    let config = trainer.config.clone();
    let eval_data = data.head(config.eval_size);
    let mixture_layers: Vec<usize> = (0..trainer.model.num_layers())
        .filter(|&l| trainer.model.config().layers[l].is_mixture())
        .collect();
    let start = Instant::now();
    let mut history = Vec::new();
    while trainer.step < config.steps {
        let indices = step_batch(data.len(), config.batch_size, config.seed, trainer.step);
        let tau = trainer.temperature();
        let breakdown = trainer.train_step(&data.batch::<S>(&indices))?;
        let step = trainer.step;
        if let Some(out) = sinks.metrics.as_mut() {
            writeln!(out, "{}", metrics_row(step, &breakdown, tau, start.elapsed().as_millis()))
                .map_err(|e| Error::io("metrics log", e))?;
        }
        if config.eval_every > 0 && step.is_multiple_of(config.eval_every) {
            if let Some(out) = sinks.evaluations.as_mut() {
                for &l in &mixture_layers {
                    let report = evaluate_model(&trainer.model, &trainer.store, &eval_data, l)?;
                    write_eval_rows(&mut **out, step, &report)?;
                }
            }
        }
        if let Some(dir) = &sinks.checkpoint_dir {
            if config.checkpoint_every > 0 && step.is_multiple_of(config.checkpoint_every) {
                checkpoint::save(&checkpoint_path(dir, Some(step)), &trainer.checkpoint())?;
            }
        }
        history.push(breakdown);
    }
    if let Some(dir) = &sinks.checkpoint_dir {
        checkpoint::save(&checkpoint_path(dir, None), &trainer.checkpoint())?;
    }
    Ok(history)
}
