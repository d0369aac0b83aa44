//! Single-layer Gaussian-mixture baseline. It is the ladder restricted to one
//! latent layer; this module only adds the combined forward pass.

use crate::autodiff::Var;
use crate::distributions::{gaussian_log_prob, CategoricalParams, DiagGaussian};
use crate::error::{Error, Result};
use crate::model::ladder::{LadderNoise, LatentState, Vlac, YMode};
use crate::model::params::BoundParams;
use crate::real::Real;
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct GmDgmForward<'t, S: Real> {
    pub latents: LatentState<'t, S>,
    /// Likelihood mean `[batch, x_dim]`.
    pub x_mean: Var<'t, S>,
    /// `log p(x | z)` per row.
    pub reconstruction: Var<'t, S>,
    /// `q(y | x)`.
    pub posterior: CategoricalParams<'t, S>,
}

/// Encode, decode and score a batch with a one-layer mixture model.
pub fn gm_dgm_forward<'t, S: Real>(
    model: &Vlac,
    p: &BoundParams<'t, S>,
    x: Var<'t, S>,
    noise: &LadderNoise<S>,
    mode: &YMode,
) -> Result<GmDgmForward<'t, S>> {
    if model.num_layers() != 1 || !model.config().layers[0].is_mixture() {
        return Err(Error::invalid("the baseline has exactly one latent layer with K > 1"));
    }
    let latents = model.encode(p, x, noise, mode)?;
    let x_mean = model.decode(p, &latents.z())?.x_mean;
    let sigma = x.tape().constant(Tensor::full(&x_mean.shape(), S::lit(model.config().sigma_x)));
    let reconstruction = gaussian_log_prob(&DiagGaussian::new(x_mean, sigma)?, x)?;
    let posterior = latents.layers[0]
        .categorical
        .as_ref()
        .map(|c| c.params)
        .expect("mixture layer carries a categorical");
    Ok(GmDgmForward {
        latents,
        x_mean,
        reconstruction,
        posterior,
    })
}
