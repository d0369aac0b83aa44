//! Exact marginalisation over every hard assignment of the cluster variables.
//! Exponential in the number of mixture layers; used as a reference for the
//! single-sample estimator.

use crate::autodiff::Tape;
use crate::error::{Error, Result};
use crate::model::{LadderNoise, ParamStore, Vlac, YMode};
use crate::real::Real;
use crate::tensor::Tensor;
use crate::training::elbo::elbo;

/// Largest number of assignment combinations [`exact_elbo`] will enumerate.
pub const MAX_COMBINATIONS: usize = 256;

#[derive(Clone, Debug, PartialEq)]
pub struct ExactElbo<S> {
    /// Per-row ELBO.
    pub rows: Vec<S>,
    /// Mean over rows.
    pub mean: S,
}

/// Every assignment `(y_1, ..., y_L)` with `y_ℓ ∈ 0..K_ℓ`, last layer fastest.
pub fn assignments(ks: &[usize]) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for &k in ks {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                (0..k).map(move |y| {
                    let mut next = prefix.clone();
                    next.push(y);
                    next
                })
            })
            .collect();
    }
    out
}

/// `Σ_y Π_ℓ q(y_ℓ | x) [log p(x | z) − Σ_ℓ KL_z,ℓ](y) − Σ_ℓ KL(q(y_ℓ | x) ‖ p(y_ℓ))`
/// with the Gaussian noise in `normal` shared by every branch.
pub fn exact_elbo<S: Real>(model: &Vlac, store: &ParamStore<S>, x: &Tensor<S>, normal: &[Tensor<S>]) -> Result<ExactElbo<S>> {
    let config = model.config();
    let combos = config.combinations();
    if combos > MAX_COMBINATIONS {
        return Err(Error::GuardExceeded(format!(
            "{combos} assignment combinations exceed {MAX_COMBINATIONS}"
        )));
    }
    let rows = x.shape()[0];
    let noise = LadderNoise {
        normal: normal.to_vec(),
        uniform: vec![None; config.num_layers()],
    };

    let tape = Tape::new();
    let p = store.bind_constants(&tape);
    let xv = tape.constant(x.clone());
    let posteriors: Vec<Option<Tensor<S>>> = {
        let mut by_layer = vec![None; config.num_layers()];
        for (l, params) in model.classify(&p, xv)? {
            by_layer[l] = Some(params.probs()?.value());
        }
        by_layer
    };

    let mut acc = vec![S::zero(); rows];
    let mut kl_y = vec![S::zero(); rows];
    let mut first = true;
    for combo in assignments(&config.ks()) {
        let terms = elbo(model, &p, xv, &noise, &YMode::Fixed(combo.clone()))?;
        let mut branch = terms.reconstruction;
        for kl in &terms.kl_z {
            branch = branch.sub(*kl)?;
        }
        let branch = branch.value();
        for r in 0..rows {
            let weight = posteriors
                .iter()
                .zip(&combo)
                .filter_map(|(q, &y)| q.as_ref().map(|q| q.row(r)[y]))
                .fold(S::one(), |w, q| w * q);
            acc[r] = acc[r] + weight * branch.data()[r];
        }
        if first {
            // KL(q(y) ‖ p(y)) does not depend on the branch
            for kl in terms.kl_y.iter().flatten() {
                for (r, v) in kl.value().data().iter().enumerate() {
                    kl_y[r] = kl_y[r] + *v;
                }
            }
            first = false;
        }
    }
    if config.layers.iter().any(|l| l.is_mixture()) {
        for r in 0..rows {
            acc[r] = acc[r] - kl_y[r];
        }
    }
    let mut sum = S::zero();
    for v in &acc {
        sum = sum + *v;
    }
    let mean = sum / S::lit(rows as f64);
    Ok(ExactElbo { rows: acc, mean })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn enumerates_in_order() {
        assert_eq!(assignments(&[2, 1, 3]).len(), 6);
        assert_eq!(assignments(&[2, 2]), vec![vec![0, 0], vec![0, 1], vec![1, 0], vec![1, 1]]);
        assert_eq!(assignments(&[1, 1]), vec![vec![0, 0]]);
    }
}
