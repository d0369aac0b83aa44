//! Affine layers and the multilayer perceptron used for every network block.

use rand::Rng;

use crate::autodiff::Var;
use crate::error::Result;
use crate::model::params::{he_normal, BoundParams, ParamId, ParamStore};
use crate::real::Real;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new<S: Real, R: Rng>(
        store: &mut ParamStore<S>,
        rng: &mut R,
        name: &str,
        in_dim: usize,
        out_dim: usize,
    ) -> Result<Self> {
        let weight = store.add(format!("{name}.weight"), he_normal(rng, in_dim, out_dim))?;
        let bias = store.add(format!("{name}.bias"), Tensor::zeros(&[out_dim]))?;
        Ok(Linear {
            weight,
            bias,
            in_dim,
            out_dim,
        })
    }

    pub fn forward<'t, S: Real>(&self, p: &BoundParams<'t, S>, x: Var<'t, S>) -> Result<Var<'t, S>> {
        x.matmul(p.var(self.weight))?.add(p.var(self.bias))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Relu,
    Sigmoid,
}

impl Activation {
    fn apply<'t, S: Real>(self, x: Var<'t, S>) -> Result<Var<'t, S>> {
        match self {
            Activation::Identity => Ok(x),
            Activation::Relu => x.relu(),
            Activation::Sigmoid => x.sigmoid(),
        }
    }
}

/// Stack of affine layers with relu between them and a configurable final activation.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Linear>,
    pub output: Activation,
}

impl Mlp {
    /// `widths = [in, h1, ..., out]`.
    pub fn new<S: Real, R: Rng>(
        store: &mut ParamStore<S>,
        rng: &mut R,
        name: &str,
        widths: &[usize],
        output: Activation,
    ) -> Result<Self> {
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| Linear::new(store, rng, &format!("{name}.{i}"), w[0], w[1]))
            .collect::<Result<_>>()?;
        Ok(Mlp { layers, output })
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().expect("non-empty").out_dim
    }

    pub fn forward<'t, S: Real>(&self, p: &BoundParams<'t, S>, x: Var<'t, S>) -> Result<Var<'t, S>> {
        let last = self.layers.len() - 1;
        let mut h = x;
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(p, h)?;
            h = if i == last { self.output.apply(h)? } else { h.relu()? };
        }
        Ok(h)
    }
}
