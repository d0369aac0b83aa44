//! Diagonal Gaussians, categoricals, the Concrete (Gumbel-Softmax) relaxation and
//! the closed-form divergences that make up the objective.
//!
//! Every density and divergence reduces over the last axis only, so a `[batch, d]`
//! input yields one value per row and a `[d]` input yields a single value.

use crate::autodiff::{softplus, Var};
use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::Tensor;

/// Added to `softplus(raw)` so standard deviations never collapse to zero.
pub const STDDEV_FLOOR: f64 = 1e-6;

/// Uniform noise is clamped to `[UNIFORM_CLAMP, 1 - UNIFORM_CLAMP]` before the Gumbel transform.
pub const UNIFORM_CLAMP: f64 = 1e-7;

/// ½·ln(2π)
pub const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// Maps an unconstrained parameter to a standard deviation.
pub fn stddev_from_raw<S: Real>(raw: S) -> S {
    softplus(raw) + S::lit(STDDEV_FLOOR)
}

/// Inverse of [`stddev_from_raw`] (for initialisation).
pub fn raw_from_stddev(stddev: f64) -> f64 {
    let s = stddev - STDDEV_FLOOR;
    s + (-(-s).exp_m1()).ln()
}

#[derive(Clone, Copy, Debug)]
pub struct DiagGaussian<'t, S: Real> {
    pub mean: Var<'t, S>,
    pub stddev: Var<'t, S>,
}

impl<'t, S: Real> DiagGaussian<'t, S> {
    pub fn new(mean: Var<'t, S>, stddev: Var<'t, S>) -> Result<Self> {
        if mean.shape() != stddev.shape() {
            return Err(Error::ShapeMismatch {
                op: "diag_gaussian",
                left: mean.shape(),
                right: stddev.shape(),
            });
        }
        Ok(DiagGaussian { mean, stddev })
    }

    /// Standard deviation parameterised as `softplus(raw) + STDDEV_FLOOR`.
    pub fn from_raw(mean: Var<'t, S>, raw: Var<'t, S>) -> Result<Self> {
        let stddev = raw.softplus()?.add_scalar(STDDEV_FLOOR)?;
        Self::new(mean, stddev)
    }
}

fn check_same(op: &'static str, a: &[usize], b: &[usize]) -> Result<()> {
    if a != b {
        return Err(Error::ShapeMismatch {
            op,
            left: a.to_vec(),
            right: b.to_vec(),
        });
    }
    Ok(())
}

/// Σᵢ [ −½ln 2π − ln σᵢ − (xᵢ−μᵢ)²/(2σᵢ²) ]
pub fn gaussian_log_prob<'t, S: Real>(d: &DiagGaussian<'t, S>, x: Var<'t, S>) -> Result<Var<'t, S>> {
    check_same("gaussian_log_prob", &d.mean.shape(), &x.shape())?;
    let z = x.sub(d.mean)?.div(d.stddev)?;
    z.square()?
        .mul_scalar(-0.5)?
        .sub(d.stddev.log()?)?
        .add_scalar(-HALF_LN_2PI)?
        .sum_last()
}

/// Reparameterised draw `μ + σ ⊙ noise`, with `noise` supplied by the caller.
pub fn gaussian_rsample<'t, S: Real>(d: &DiagGaussian<'t, S>, noise: Var<'t, S>) -> Result<Var<'t, S>> {
    check_same("gaussian_rsample", &d.mean.shape(), &noise.shape())?;
    d.mean.add(d.stddev.mul(noise)?)
}

/// KL(q ‖ p) between diagonal Gaussians.
pub fn kl_gaussian_gaussian<'t, S: Real>(
    q: &DiagGaussian<'t, S>,
    p: &DiagGaussian<'t, S>,
) -> Result<Var<'t, S>> {
    check_same("kl_gaussian_gaussian", &q.mean.shape(), &p.mean.shape())?;
    let var_q = q.stddev.square()?;
    let var_p = p.stddev.square()?;
    let spread = var_q.add(q.mean.sub(p.mean)?.square()?)?;
    let ratio = spread.div(var_p.mul_scalar(2.0)?)?;
    p.stddev
        .log()?
        .sub(q.stddev.log()?)?
        .add(ratio)?
        .add_scalar(-0.5)?
        .sum_last()
}

/// KL(q ‖ N(0, I)).
pub fn kl_standard_normal<'t, S: Real>(q: &DiagGaussian<'t, S>) -> Result<Var<'t, S>> {
    let spread = q.stddev.square()?.add(q.mean.square()?)?;
    spread
        .mul_scalar(0.5)?
        .sub(q.stddev.log()?)?
        .add_scalar(-0.5)?
        .sum_last()
}

/// Categorical distribution over the last axis, held as unnormalised logits.
#[derive(Clone, Copy, Debug)]
pub struct CategoricalParams<'t, S: Real> {
    pub logits: Var<'t, S>,
}

impl<'t, S: Real> CategoricalParams<'t, S> {
    pub fn new(logits: Var<'t, S>) -> Self {
        CategoricalParams { logits }
    }

    pub fn k(&self) -> usize {
        *self.logits.shape().last().unwrap_or(&1)
    }

    pub fn log_probs(&self) -> Result<Var<'t, S>> {
        self.logits.log_softmax()
    }

    pub fn probs(&self) -> Result<Var<'t, S>> {
        self.logits.softmax()
    }

    /// Most probable category per row.
    pub fn argmax(&self) -> Vec<usize> {
        self.logits.value().argmax_rows()
    }
}

/// KL(q ‖ Cat(1/K)) = Σₖ qₖ (ln qₖ + ln K).
pub fn kl_categorical_uniform<'t, S: Real>(q: &CategoricalParams<'t, S>, k: usize) -> Result<Var<'t, S>> {
    if k == 0 || k != q.k() {
        return Err(Error::invalid(format!(
            "kl_categorical_uniform: K = {k} but logits have {} categories",
            q.k()
        )));
    }
    let log_p = q.log_probs()?;
    let p = log_p.exp()?;
    p.mul(log_p.add_scalar((k as f64).ln())?)?.sum_last()
}

/// One draw from the Concrete distribution.
#[derive(Clone, Debug)]
pub struct ConcreteSample<'t, S: Real> {
    /// Point on the simplex, differentiable w.r.t. the logits.
    pub relaxed: Var<'t, S>,
    /// One-hot at the argmax of the perturbed logits.
    pub hard: Tensor<S>,
    pub temperature: f64,
}

impl<'t, S: Real> ConcreteSample<'t, S> {
    /// Forward value `hard`, gradient of `relaxed`.
    pub fn straight_through(&self) -> Result<Var<'t, S>> {
        let tape = self.relaxed.tape();
        let hard = tape.constant(self.hard.clone());
        hard.add(self.relaxed.sub(self.relaxed.detach())?)
    }

    pub fn categories(&self) -> Vec<usize> {
        self.hard.argmax_rows()
    }
}

/// Gumbel noise `−ln(−ln u)` with `u` clamped away from 0 and 1.
pub fn gumbel_from_uniform<S: Real>(u: S) -> S {
    let lo = S::lit(UNIFORM_CLAMP);
    let hi = S::one() - lo;
    let u = u.max(lo).min(hi);
    -(-u.ln()).ln()
}

/// `softmax((logits + g) / τ)` with `g` the Gumbel transform of `uniform`.
pub fn concrete_sample<'t, S: Real>(
    logits: Var<'t, S>,
    temperature: f64,
    uniform: &Tensor<S>,
) -> Result<ConcreteSample<'t, S>> {
    if !(temperature > 0.0) || !temperature.is_finite() {
        return Err(Error::invalid(format!("temperature must be positive, got {temperature}")));
    }
    check_same("concrete_sample", &logits.shape(), uniform.shape())?;
    let tape = logits.tape();
    let gumbel = tape.constant(uniform.map(gumbel_from_uniform));
    let perturbed = logits.add(gumbel)?;
    let hard_idx = perturbed.value().argmax_rows();
    let k = *uniform.shape().last().unwrap_or(&1);
    let mut hard = Tensor::one_hot(&hard_idx, k)?;
    hard = hard.reshape(uniform.shape())?;
    let relaxed = perturbed.mul_scalar(1.0 / temperature)?.softmax()?;
    Ok(ConcreteSample {
        relaxed,
        hard,
        temperature,
    })
}

/// Plain-valued mixture components `{μ_y, σ_y}` of one latent layer.
#[derive(Clone, Debug, PartialEq)]
pub struct MixtureComponents<S> {
    /// `[K, d]`
    pub means: Tensor<S>,
    /// `[K, d]`, strictly positive
    pub stddevs: Tensor<S>,
}

impl<S: Real> MixtureComponents<S> {
    pub fn new(means: Tensor<S>, stddevs: Tensor<S>) -> Result<Self> {
        check_same("mixture_components", means.shape(), stddevs.shape())?;
        if means.rank() != 2 || means.shape()[0] == 0 {
            return Err(Error::invalid("mixture components must be [K, d] with K >= 1"));
        }
        Ok(MixtureComponents { means, stddevs })
    }

    /// The single standard-normal component used by layers with K = 1.
    pub fn standard(d: usize) -> Self {
        MixtureComponents {
            means: Tensor::zeros(&[1, d]),
            stddevs: Tensor::full(&[1, d], S::one()),
        }
    }

    pub fn k(&self) -> usize {
        self.means.shape()[0]
    }

    pub fn dim(&self) -> usize {
        self.means.shape()[1]
    }

    /// `μ_y + σ_y ⊙ noise`
    pub fn sample_component(&self, y: usize, noise: &[S]) -> Result<Vec<S>> {
        if y >= self.k() {
            return Err(Error::invalid(format!("component {y} outside 0..{}", self.k())));
        }
        if noise.len() != self.dim() {
            return Err(Error::ShapeMismatch {
                op: "sample_component",
                left: vec![self.dim()],
                right: vec![noise.len()],
            });
        }
        Ok(self
            .means
            .row(y)
            .iter()
            .zip(self.stddevs.row(y))
            .zip(noise)
            .map(|((&m, &s), &e)| m + s * e)
            .collect())
    }
}

/// Draws `y` uniformly from the components (via `u ∈ [0, 1)`), then `z ~ N(μ_y, σ_y)`.
pub fn mixture_marginal_sample<S: Real>(
    prior: &MixtureComponents<S>,
    u: f64,
    noise: &[S],
) -> Result<(usize, Vec<S>)> {
    let k = prior.k();
    let y = ((u.clamp(0.0, 1.0) * k as f64) as usize).min(k - 1);
    Ok((y, prior.sample_component(y, noise)?))
}
