//! The ladder: inference network (bottom-up), generative network (top-down), per-layer
//! mixture priors and the amortised cluster posteriors.
//!
//! Layers are indexed from 0 here; layer 0 is the one closest to the data.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Tape, Var};
use crate::distributions::{
    concrete_sample, gaussian_log_prob, gaussian_rsample, raw_from_stddev, stddev_from_raw, CategoricalParams,
    ConcreteSample, DiagGaussian, MixtureComponents,
};
use crate::error::{Error, Result};
use crate::model::config::{LayerSpec, ModelConfig};
use crate::model::network::{Activation, Linear, Mlp};
use crate::model::params::{standard_normal, BoundParams, ParamId, ParamStore};
use crate::real::Real;
use crate::tensor::Tensor;

/// Learnable mixture components `{μ_y, σ_y}` of one layer.
#[derive(Clone, Debug, PartialEq)]
pub struct MixturePrior {
    /// `[K, d_z]`
    pub means: ParamId,
    /// `[K, d_z]`, mapped through softplus
    pub raw_std: ParamId,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LadderLayer {
    pub spec: LayerSpec,
    /// `g_ℓ`: previous state (and previous cluster variable) to `h_ℓ`.
    pub encoder: Mlp,
    /// `π_ℓ`: logits of `q(y_ℓ | x)`.
    pub classifier: Option<Mlp>,
    pub posterior_mean: Linear,
    pub posterior_std: Linear,
    pub prior: Option<MixturePrior>,
    /// `f_ℓ`: `(z_ℓ, z̃_{ℓ+1})` to `z̃_ℓ`.
    pub decoder: Mlp,
}

/// Ladder model with a Gaussian-mixture prior on every layer where `K_ℓ > 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct Vlac {
    config: ModelConfig,
    layers: Vec<LadderLayer>,
    /// `f_0`: `z̃_1` to the likelihood mean.
    output: Mlp,
}

/// How cluster variables are fed downstream during encoding.
#[derive(Clone, Debug, PartialEq)]
pub enum YMode {
    /// Concrete relaxation at the given temperature.
    Relaxed { temperature: f64 },
    /// Hard one-hot forward, relaxed gradient.
    StraightThrough { temperature: f64 },
    /// Same hard component for every row; one entry per layer (ignored where `K = 1`).
    Fixed(Vec<usize>),
}

/// Caller-supplied noise for one encoding pass.
#[derive(Clone, Debug, PartialEq)]
pub struct LadderNoise<S> {
    /// `[batch, d_z]` standard normal, per layer.
    pub normal: Vec<Tensor<S>>,
    /// `[batch, K]` uniform in (0, 1), per mixture layer.
    pub uniform: Vec<Option<Tensor<S>>>,
}

impl<S: Real> LadderNoise<S> {
    pub fn sample<R: Rng>(config: &ModelConfig, batch: usize, rng: &mut R) -> Self {
        let mut normal = Vec::new();
        let mut uniform = Vec::new();
        for l in &config.layers {
            normal.push(standard_normal(rng, &[batch, l.d_z]));
            uniform.push(l.is_mixture().then(|| {
                let data = (0..batch * l.k).map(|_| S::lit(rng.random::<f64>())).collect();
                Tensor::new(vec![batch, l.k], data).expect("sized")
            }));
        }
        LadderNoise { normal, uniform }
    }

    /// Zero Gaussian noise and uniform noise of ½.
    pub fn zeros(config: &ModelConfig, batch: usize) -> Self {
        LadderNoise {
            normal: config.layers.iter().map(|l| Tensor::zeros(&[batch, l.d_z])).collect(),
            uniform: config
                .layers
                .iter()
                .map(|l| l.is_mixture().then(|| Tensor::full(&[batch, l.k], S::lit(0.5))))
                .collect(),
        }
    }

    pub fn batch(&self) -> usize {
        self.normal.first().map_or(0, |t| t.shape()[0])
    }

    /// Copy of this noise with different uniform draws.
    pub fn with_uniform(&self, uniform: Vec<Option<Tensor<S>>>) -> Self {
        LadderNoise {
            normal: self.normal.clone(),
            uniform,
        }
    }
}

#[derive(Clone, Debug)]
pub struct LayerCategorical<'t, S: Real> {
    pub params: CategoricalParams<'t, S>,
    /// Absent in [`YMode::Fixed`].
    pub sample: Option<ConcreteSample<'t, S>>,
    /// The value fed to the posterior head, the prior and the next encoder block.
    pub y: Var<'t, S>,
}

#[derive(Clone, Debug)]
pub struct LayerLatent<'t, S: Real> {
    pub h: Var<'t, S>,
    pub categorical: Option<LayerCategorical<'t, S>>,
    pub posterior: DiagGaussian<'t, S>,
    pub z: Var<'t, S>,
}

/// One sample of every `(h_ℓ, y_ℓ, z_ℓ)`.
#[derive(Clone, Debug)]
pub struct LatentState<'t, S: Real> {
    pub layers: Vec<LayerLatent<'t, S>>,
}

impl<'t, S: Real> LatentState<'t, S> {
    pub fn z(&self) -> Vec<Var<'t, S>> {
        self.layers.iter().map(|l| l.z).collect()
    }
}

#[derive(Clone, Debug)]
pub struct DecodeOutput<'t, S: Real> {
    /// Mean of the fixed-variance likelihood, `[batch, x_dim]`.
    pub x_mean: Var<'t, S>,
    /// `z̃_ℓ`, layer 0 first.
    pub z_tilde: Vec<Var<'t, S>>,
}

fn rows_of<S: Real>(x: Var<'_, S>, x_dim: usize) -> Result<usize> {
    match x.shape().as_slice() {
        &[b, d] if d == x_dim => Ok(b),
        other => Err(Error::ShapeMismatch {
            op: "encode",
            left: vec![0, x_dim],
            right: other.to_vec(),
        }),
    }
}

impl Vlac {
    /// Builds the networks and registers freshly initialised parameters in a new store.
    pub fn init<S: Real>(config: ModelConfig) -> Result<(Self, ParamStore<S>)> {
        config.validate()?;
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let layers_spec = config.layers.clone();
        let depth = config.block_depth;
        let mut layers = Vec::with_capacity(layers_spec.len());
        for (i, spec) in layers_spec.iter().enumerate() {
            let name = format!("layer{}", i + 1);
            let prev = i.checked_sub(1).map(|j| layers_spec[j]);
            let trunk_in = prev.map_or(config.x_dim, |p| p.hidden);
            let encoder_in = trunk_in + prev.filter(LayerSpec::is_mixture).map_or(0, |p| p.k);
            let block = |input: usize| {
                let mut w = vec![input];
                w.extend(std::iter::repeat_n(spec.hidden, depth));
                w
            };
            let encoder = Mlp::new(&mut store, &mut rng, &format!("{name}.encoder"), &block(encoder_in), Activation::Relu)?;
            let classifier = if spec.is_mixture() {
                Some(Mlp::new(
                    &mut store,
                    &mut rng,
                    &format!("{name}.classifier"),
                    &[trunk_in, spec.hidden, spec.k],
                    Activation::Identity,
                )?)
            } else {
                None
            };
            let head_in = spec.hidden + if spec.is_mixture() { spec.k } else { 0 };
            let posterior_mean = Linear::new(&mut store, &mut rng, &format!("{name}.posterior_mean"), head_in, spec.d_z)?;
            let posterior_std = Linear::new(&mut store, &mut rng, &format!("{name}.posterior_std"), head_in, spec.d_z)?;
            let prior = if spec.is_mixture() {
                let means = store.add(format!("{name}.prior.means"), standard_normal(&mut rng, &[spec.k, spec.d_z]))?;
                let raw_std = store.add(
                    format!("{name}.prior.raw_std"),
                    Tensor::full(&[spec.k, spec.d_z], S::lit(raw_from_stddev(1.0))),
                )?;
                Some(MixturePrior { means, raw_std })
            } else {
                None
            };
            let above = layers_spec.get(i + 1).map_or(0, |l| l.hidden);
            let decoder = Mlp::new(
                &mut store,
                &mut rng,
                &format!("{name}.decoder"),
                &block(spec.d_z + above),
                Activation::Relu,
            )?;
            layers.push(LadderLayer {
                spec: *spec,
                encoder,
                classifier,
                posterior_mean,
                posterior_std,
                prior,
                decoder,
            });
        }
        let output = Mlp::new(
            &mut store,
            &mut rng,
            "output",
            &[layers_spec[0].hidden, config.x_dim],
            Activation::Sigmoid,
        )?;
        Ok((Vlac { config, layers, output }, store))
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn layers(&self) -> &[LadderLayer] {
        &self.layers
    }

    pub fn output(&self) -> &Mlp {
        &self.output
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    fn layer(&self, i: usize) -> Result<&LadderLayer> {
        self.layers
            .get(i)
            .ok_or_else(|| Error::invalid(format!("layer index {i} outside 0..{}", self.layers.len())))
    }

    /// Whether `h_i` on the deterministic trunk is read by a later classifier.
    fn trunk_needed_after(&self, i: usize) -> bool {
        self.layers[i + 1..].iter().any(|l| l.spec.is_mixture())
    }

    /// Samples `q(y, z | x)` through the ladder.
    ///
    /// Classifier `π_ℓ` reads the deterministic trunk state below layer `ℓ`
    /// (the data itself for the first layer). On that trunk every cluster
    /// variable is replaced by its posterior probabilities, so `q(y_ℓ | x)` depends
    /// on `x` alone; when no mixture layer sits below, the trunk is the sampled `h`.
    pub fn encode<'t, S: Real>(
        &self,
        p: &BoundParams<'t, S>,
        x: Var<'t, S>,
        noise: &LadderNoise<S>,
        mode: &YMode,
    ) -> Result<LatentState<'t, S>> {
        let batch = rows_of(x, self.config.x_dim)?;
        if noise.normal.len() != self.layers.len() || noise.uniform.len() != self.layers.len() {
            return Err(Error::invalid(format!(
                "noise covers {} layers, model has {}",
                noise.normal.len(),
                self.layers.len()
            )));
        }
        if let YMode::Fixed(ys) = mode {
            if ys.len() != self.layers.len() {
                return Err(Error::invalid(format!(
                    "fixed assignment covers {} layers, model has {}",
                    ys.len(),
                    self.layers.len()
                )));
            }
        }
        let tape = x.tape();
        let mut out: Vec<LayerLatent<'t, S>> = Vec::with_capacity(self.layers.len());
        // state below the current layer: sampled and deterministic trunk
        let mut h_below = x;
        let mut trunk_below = Some(x);
        let mut probs_below: Option<Var<'t, S>> = None;
        let mut diverged = false;

        for (i, layer) in self.layers.iter().enumerate() {
            let spec = layer.spec;
            let categorical = match &layer.classifier {
                Some(classifier) => {
                    let trunk = trunk_below.ok_or_else(|| Error::invalid("deterministic trunk unavailable"))?;
                    let params = CategoricalParams::new(classifier.forward(p, trunk)?);
                    let (sample, y) = match mode {
                        YMode::Relaxed { temperature } | YMode::StraightThrough { temperature } => {
                            let u = noise.uniform[i]
                                .as_ref()
                                .ok_or_else(|| Error::invalid(format!("missing uniform noise for layer {}", i + 1)))?;
                            let s = concrete_sample(params.logits, *temperature, u)?;
                            let y = match mode {
                                YMode::StraightThrough { .. } => s.straight_through()?,
                                _ => s.relaxed,
                            };
                            (Some(s), y)
                        }
                        YMode::Fixed(ys) => {
                            let hard = Tensor::one_hot(&vec![ys[i]; batch], spec.k)?;
                            (None, tape.constant(hard))
                        }
                    };
                    Some(LayerCategorical { params, sample, y })
                }
                None => None,
            };

            // h_ℓ = g_ℓ(h_{ℓ-1}, y_{ℓ-1})
            let prev_y = i.checked_sub(1).and_then(|j| out[j].categorical.as_ref().map(|c| c.y));
            let h = match prev_y {
                Some(y) => layer.encoder.forward(p, tape.concat(&[h_below, y], 1)?)?,
                None => layer.encoder.forward(p, h_below)?,
            };
            let need_trunk = self.trunk_needed_after(i);
            let trunk = if !need_trunk {
                None
            } else if let Some(probs) = prev_y.and(probs_below) {
                diverged = true;
                let below = trunk_below.expect("trunk kept while needed");
                Some(layer.encoder.forward(p, tape.concat(&[below, probs], 1)?)?)
            } else if diverged {
                let below = trunk_below.expect("trunk kept while needed");
                Some(layer.encoder.forward(p, below)?)
            } else {
                Some(h)
            };

            let head_in = match &categorical {
                Some(c) => tape.concat(&[h, c.y], 1)?,
                None => h,
            };
            let posterior = DiagGaussian::from_raw(
                layer.posterior_mean.forward(p, head_in)?,
                layer.posterior_std.forward(p, head_in)?,
            )?;
            let eps = &noise.normal[i];
            if eps.shape() != [batch, spec.d_z] {
                return Err(Error::ShapeMismatch {
                    op: "encode",
                    left: vec![batch, spec.d_z],
                    right: eps.shape().to_vec(),
                });
            }
            let z = gaussian_rsample(&posterior, tape.constant(eps.clone()))?;

            probs_below = match (&categorical, need_trunk) {
                (Some(c), true) => Some(c.params.probs()?),
                _ => None,
            };
            h_below = h;
            trunk_below = trunk;
            out.push(LayerLatent {
                h,
                categorical,
                posterior,
                z,
            });
        }
        Ok(LatentState { layers: out })
    }

    /// Runs the generative ladder top-down and returns the likelihood mean.
    pub fn decode<'t, S: Real>(&self, p: &BoundParams<'t, S>, z: &[Var<'t, S>]) -> Result<DecodeOutput<'t, S>> {
        if z.len() != self.layers.len() {
            return Err(Error::invalid(format!(
                "decode needs {} latent layers, got {}",
                self.layers.len(),
                z.len()
            )));
        }
        let mut z_tilde = Vec::with_capacity(z.len());
        let mut above: Option<Var<'t, S>> = None;
        for (layer, &zl) in self.layers.iter().zip(z).rev() {
            let width = zl.shape().last().copied().unwrap_or(0);
            if width != layer.spec.d_z {
                return Err(Error::ShapeMismatch {
                    op: "decode",
                    left: vec![layer.spec.d_z],
                    right: zl.shape(),
                });
            }
            let input = match above {
                Some(t) => zl.tape().concat(&[zl, t], 1)?,
                None => zl,
            };
            let t = layer.decoder.forward(p, input)?;
            z_tilde.push(t);
            above = Some(t);
        }
        z_tilde.reverse();
        let x_mean = self.output.forward(p, z_tilde[0])?;
        Ok(DecodeOutput { x_mean, z_tilde })
    }

    /// `q(y_ℓ | x)` for every mixture layer, as `(layer index, params)`.
    pub fn classify<'t, S: Real>(
        &self,
        p: &BoundParams<'t, S>,
        x: Var<'t, S>,
    ) -> Result<Vec<(usize, CategoricalParams<'t, S>)>> {
        rows_of(x, self.config.x_dim)?;
        let tape = x.tape();
        let mut out = Vec::new();
        let mut trunk = x;
        let mut probs_below: Option<Var<'t, S>> = None;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut probs = None;
            if let Some(classifier) = &layer.classifier {
                let params = CategoricalParams::new(classifier.forward(p, trunk)?);
                if self.trunk_needed_after(i) {
                    probs = Some(params.probs()?);
                }
                out.push((i, params));
            }
            if !self.trunk_needed_after(i) {
                break;
            }
            trunk = match probs_below {
                Some(pr) => layer.encoder.forward(p, tape.concat(&[trunk, pr], 1)?)?,
                None => layer.encoder.forward(p, trunk)?,
            };
            probs_below = probs;
        }
        Ok(out)
    }

    /// `p(z_ℓ | y_ℓ)` with the component parameters mixed by the (possibly relaxed)
    /// assignment `y` of shape `[batch, K]`.
    pub fn prior_given<'t, S: Real>(
        &self,
        p: &BoundParams<'t, S>,
        layer: usize,
        y: Var<'t, S>,
    ) -> Result<DiagGaussian<'t, S>> {
        let prior = self
            .layer(layer)?
            .prior
            .as_ref()
            .ok_or_else(|| Error::invalid(format!("layer {} has a single component", layer + 1)))?;
        let mean = y.matmul(p.var(prior.means))?;
        let raw = y.matmul(p.var(prior.raw_std))?;
        DiagGaussian::from_raw(mean, raw)
    }

    /// Per-row `log p(z_ℓ | y_ℓ)`; `y` is ignored for single-component layers.
    pub fn prior_log_prob<'t, S: Real>(
        &self,
        p: &BoundParams<'t, S>,
        layer: usize,
        z: Var<'t, S>,
        y: Option<Var<'t, S>>,
    ) -> Result<Var<'t, S>> {
        let spec = self.layer(layer)?.spec;
        let d = if spec.is_mixture() {
            let y = y.ok_or_else(|| Error::invalid(format!("layer {} needs an assignment", layer + 1)))?;
            self.prior_given(p, layer, y)?
        } else {
            let tape = z.tape();
            let shape = z.shape();
            DiagGaussian::new(
                tape.constant(Tensor::zeros(&shape)),
                tape.constant(Tensor::full(&shape, S::one())),
            )?
        };
        gaussian_log_prob(&d, z)
    }

    /// Plain-valued prior components of one layer (the standard normal when `K = 1`).
    pub fn prior_components<S: Real>(&self, store: &ParamStore<S>, layer: usize) -> Result<MixtureComponents<S>> {
        let l = self.layer(layer)?;
        match &l.prior {
            Some(prior) => MixtureComponents::new(
                store.get(prior.means).clone(),
                store.get(prior.raw_std).map(stddev_from_raw),
            ),
            None => Ok(MixtureComponents::standard(l.spec.d_z)),
        }
    }

    /// Runs [`Vlac::classify`] on plain inputs in chunks and returns the
    /// posterior probabilities `[n, K]` of one mixture layer.
    pub fn posterior_probs<S: Real>(
        &self,
        store: &ParamStore<S>,
        x: &Tensor<S>,
        layer: usize,
        chunk: usize,
    ) -> Result<Tensor<S>> {
        let spec = self.layer(layer)?.spec;
        if !spec.is_mixture() {
            return Err(Error::invalid(format!(
                "layer {} has K = 1 and no cluster variable",
                layer + 1
            )));
        }
        let n = x.shape()[0];
        let mut data = Vec::with_capacity(n * spec.k);
        let rows: Vec<usize> = (0..n).collect();
        for part in rows.chunks(chunk.max(1)) {
            let tape = Tape::new();
            let p = store.bind_constants(&tape);
            let xb = tape.constant(x.gather_rows(part));
            let cats = self.classify(&p, xb)?;
            let (_, params) = cats
                .into_iter()
                .find(|(i, _)| *i == layer)
                .expect("every mixture layer is classified");
            data.extend_from_slice(params.probs()?.value().data());
        }
        Tensor::new(vec![n, spec.k], data)
    }
}
