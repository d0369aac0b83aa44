//! Plain variational ladder autoencoder: independent standard-normal latent
//! layers and no cluster variables. It shares networks and parameters with a
//! [`Vlac`] whose layers all have a single component and serves as the reference
//! that such a model must reproduce exactly.

use crate::autodiff::Var;
use crate::distributions::{gaussian_log_prob, gaussian_rsample, kl_standard_normal, DiagGaussian};
use crate::error::{Error, Result};
use crate::model::ladder::Vlac;
use crate::model::params::BoundParams;
use crate::real::Real;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug)]
pub struct Vlae<'m> {
    model: &'m Vlac,
}

#[derive(Clone, Debug)]
pub struct VlaeElbo<'t, S: Real> {
    pub reconstruction: Var<'t, S>,
    pub kl_z: Vec<Var<'t, S>>,
    pub total: Var<'t, S>,
}

impl<'m> Vlae<'m> {
    pub fn new(model: &'m Vlac) -> Result<Self> {
        if model.layers().iter().any(|l| l.spec.is_mixture()) {
            return Err(Error::invalid("a plain ladder needs K = 1 on every layer"));
        }
        Ok(Vlae { model })
    }

    /// `h_ℓ = g_ℓ(h_{ℓ-1})`, `z_ℓ = μ(h_ℓ) + σ(h_ℓ) ⊙ ε_ℓ` with `h_0 = x`.
    pub fn encode<'t, S: Real>(
        &self,
        p: &BoundParams<'t, S>,
        x: Var<'t, S>,
        normal: &[Tensor<S>],
    ) -> Result<Vec<(DiagGaussian<'t, S>, Var<'t, S>)>> {
        let tape = x.tape();
        let mut h = x;
        let mut out = Vec::new();
        for (layer, eps) in self.model.layers().iter().zip(normal) {
            h = layer.encoder.forward(p, h)?;
            let q = DiagGaussian::from_raw(layer.posterior_mean.forward(p, h)?, layer.posterior_std.forward(p, h)?)?;
            let z = gaussian_rsample(&q, tape.constant(eps.clone()))?;
            out.push((q, z));
        }
        Ok(out)
    }

    /// `z̃_L = f_L(z_L)`, `z̃_ℓ = f_ℓ(z_ℓ, z̃_{ℓ+1})`, mean `f_0(z̃_1)`.
    pub fn decode<'t, S: Real>(&self, p: &BoundParams<'t, S>, z: &[Var<'t, S>]) -> Result<Var<'t, S>> {
        let mut above: Option<Var<'t, S>> = None;
        for (layer, &zl) in self.model.layers().iter().zip(z).rev() {
            let input = match above {
                Some(t) => zl.tape().concat(&[zl, t], 1)?,
                None => zl,
            };
            above = Some(layer.decoder.forward(p, input)?);
        }
        let top = above.ok_or_else(|| Error::invalid("no latent layers"))?;
        self.model.output().forward(p, top)
    }

    pub fn elbo<'t, S: Real>(
        &self,
        p: &BoundParams<'t, S>,
        x: Var<'t, S>,
        normal: &[Tensor<S>],
    ) -> Result<VlaeElbo<'t, S>> {
        let tape = x.tape();
        let latents = self.encode(p, x, normal)?;
        let z: Vec<_> = latents.iter().map(|(_, z)| *z).collect();
        let mean = self.decode(p, &z)?;
        let shape = mean.shape();
        let sigma = tape.constant(Tensor::full(&shape, S::lit(self.model.config().sigma_x)));
        let recon_rows = gaussian_log_prob(&DiagGaussian::new(mean, sigma)?, x)?;
        let mut total_rows = recon_rows;
        let mut kl_z = Vec::new();
        for (q, _) in &latents {
            let rows = kl_standard_normal(q)?;
            total_rows = total_rows.sub(rows)?;
            kl_z.push(rows.mean()?);
        }
        Ok(VlaeElbo {
            reconstruction: recon_rows.mean()?,
            kl_z,
            total: total_rows.mean()?,
        })
    }
}
