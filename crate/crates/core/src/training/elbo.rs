use crate::autodiff::Var;
use crate::distributions::{
    gaussian_log_prob, kl_categorical_uniform, kl_gaussian_gaussian, kl_standard_normal, DiagGaussian,
};
use crate::error::{Error, Result};
use crate::model::{BoundParams, LadderNoise, LatentState, Vlac, YMode};
use crate::real::Real;
use crate::tensor::Tensor;

/// Batch-mean values of every ELBO term.
#[derive(Clone, Debug, PartialEq)]
pub struct ElboBreakdown {
    pub reconstruction: f64,
    /// One entry per layer.
    pub kl_z: Vec<f64>,
    /// One entry per layer; exactly 0 where `K = 1`.
    pub kl_y: Vec<f64>,
    pub total: f64,
}

impl ElboBreakdown {
    /// `reconstruction − Σ kl_z − Σ kl_y`.
    pub fn recomposed(&self) -> f64 {
        self.reconstruction - self.kl_z.iter().sum::<f64>() - self.kl_y.iter().sum::<f64>()
    }
}

/// Per-row terms of one ELBO evaluation, still on the tape.
#[derive(Clone, Debug)]
pub struct ElboTerms<'t, S: Real> {
    pub latents: LatentState<'t, S>,
    pub x_mean: Var<'t, S>,
    /// `log p(x | z)` per row.
    pub reconstruction: Var<'t, S>,
    /// `KL(q(z_ℓ | x, y) ‖ p(z_ℓ | y_ℓ))` per row and layer.
    pub kl_z: Vec<Var<'t, S>>,
    /// `KL(q(y_ℓ | x) ‖ Cat(1/K))` per row, mixture layers only.
    pub kl_y: Vec<Option<Var<'t, S>>>,
    /// Per-row ELBO.
    pub total: Var<'t, S>,
}

impl<'t, S: Real> ElboTerms<'t, S> {
    /// Batch-mean ELBO as a scalar on the tape.
    pub fn mean(&self) -> Result<Var<'t, S>> {
        named("total", self.total.mean())
    }

    /// Negated batch-mean ELBO, the quantity minimised in training.
    pub fn loss(&self) -> Result<Var<'t, S>> {
        named("total", self.total.mean()?.neg())
    }

    pub fn breakdown(&self) -> Result<ElboBreakdown> {
        let mean = |v: Var<'t, S>, term: &str| -> Result<f64> {
            let m = named(term, v.mean())?.item()?.as_f64();
            if m.is_finite() {
                Ok(m)
            } else {
                Err(Error::NonFiniteTerm { term: term.to_string() })
            }
        };
        let mut kl_z = Vec::new();
        let mut kl_y = Vec::new();
        for (l, (z, y)) in self.kl_z.iter().zip(&self.kl_y).enumerate() {
            kl_z.push(mean(*z, &format!("kl_z[{}]", l + 1))?);
            kl_y.push(match y {
                Some(y) => mean(*y, &format!("kl_y[{}]", l + 1))?,
                None => 0.0,
            });
        }
        Ok(ElboBreakdown {
            reconstruction: mean(self.reconstruction, "reconstruction")?,
            kl_z,
            kl_y,
            total: mean(self.total, "total")?,
        })
    }
}

/// Attributes numeric failures inside one term to that term.
fn named<T>(term: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::NonFinite { op } | Error::Domain { op, .. } => Error::NonFiniteTerm {
            term: format!("{term} (in {op})"),
        },
        other => other,
    })
}

fn finite<'t, S: Real>(term: impl Fn() -> String, v: Var<'t, S>) -> Result<Var<'t, S>> {
    if v.value().all_finite() {
        Ok(v)
    } else {
        Err(Error::NonFiniteTerm { term: term() })
    }
}

/// `log N(x | mean, σ_x² I)` per row.
pub fn reconstruction_log_prob<'t, S: Real>(x: Var<'t, S>, mean: Var<'t, S>, sigma_x: f64) -> Result<Var<'t, S>> {
    let sigma = x.tape().constant(Tensor::full(&mean.shape(), S::lit(sigma_x)));
    gaussian_log_prob(&DiagGaussian::new(mean, sigma)?, x)
}

/// Single-sample ELBO estimate: one Gaussian draw per layer and, on mixture
/// layers, one Concrete draw (or a fixed assignment, per `mode`).
///
/// The Gaussian KL of a mixture layer is taken against `p(z_ℓ | y_ℓ)` with
/// component means and raw standard deviations mixed by `y_ℓ`, which equals the
/// component prior whenever `y_ℓ` is one-hot.
pub fn elbo<'t, S: Real>(
    model: &Vlac,
    p: &BoundParams<'t, S>,
    x: Var<'t, S>,
    noise: &LadderNoise<S>,
    mode: &YMode,
) -> Result<ElboTerms<'t, S>> {
    let latents = named("encode", model.encode(p, x, noise, mode))?;
    let z = latents.z();
    let x_mean = named("decode", model.decode(p, &z))?.x_mean;
    let reconstruction = finite(
        || "reconstruction".into(),
        named("reconstruction", reconstruction_log_prob(x, x_mean, model.config().sigma_x))?,
    )?;
    let mut total = reconstruction;
    let mut kl_z = Vec::with_capacity(latents.layers.len());
    for (l, lat) in latents.layers.iter().enumerate() {
        let term = format!("kl_z[{}]", l + 1);
        let rows = match &lat.categorical {
            Some(c) => {
                let prior = named(&term, model.prior_given(p, l, c.y))?;
                named(&term, kl_gaussian_gaussian(&lat.posterior, &prior))?
            }
            None => named(&term, kl_standard_normal(&lat.posterior))?,
        };
        let rows = finite(|| term.clone(), rows)?;
        total = total.sub(rows)?;
        kl_z.push(rows);
    }
    let mut kl_y = Vec::with_capacity(latents.layers.len());
    for (l, lat) in latents.layers.iter().enumerate() {
        kl_y.push(match &lat.categorical {
            Some(c) => {
                let term = format!("kl_y[{}]", l + 1);
                let rows = finite(|| term.clone(), named(&term, kl_categorical_uniform(&c.params, c.params.k()))?)?;
                total = total.sub(rows)?;
                Some(rows)
            }
            None => None,
        });
    }
    let total = finite(|| "total".into(), total)?;
    Ok(ElboTerms {
        latents,
        x_mean,
        reconstruction,
        kl_z,
        kl_y,
        total,
    })
}
