//! Decoder-mean generation: per-component sampling of one layer and marginal
//! resampling of one layer, each with every other layer held fixed.

use rand::Rng;

use crate::autodiff::Tape;
use crate::distributions::mixture_marginal_sample;
use crate::error::{Error, Result};
use crate::model::ladder::Vlac;
use crate::model::params::{standard_normal, ParamStore};
use crate::real::Real;
use crate::tensor::Tensor;

/// `rows × cols` decoder means, stored row-major as `[rows * cols, x_dim]`.
#[derive(Clone, Debug, PartialEq)]
pub struct TileGrid<S> {
    pub rows: usize,
    pub cols: usize,
    pub tiles: Tensor<S>,
}

impl<S: Real> TileGrid<S> {
    pub fn tile(&self, row: usize, col: usize) -> &[S] {
        self.tiles.row(row * self.cols + col)
    }
}

/// Decoder mean for plain latents (`[rows, d_z]` per layer).
pub fn decode_mean<S: Real>(model: &Vlac, store: &ParamStore<S>, z: &[Tensor<S>]) -> Result<Tensor<S>> {
    let tape = Tape::new();
    let p = store.bind_constants(&tape);
    let vars: Vec<_> = z.iter().map(|t| tape.constant(t.clone())).collect();
    Ok(model.decode(&p, &vars)?.x_mean.value())
}

/// One draw per row from every layer's prior marginal.
pub fn sample_prior_latents<S: Real, R: Rng>(
    model: &Vlac,
    store: &ParamStore<S>,
    rows: usize,
    rng: &mut R,
) -> Result<Vec<Tensor<S>>> {
    (0..model.num_layers())
        .map(|layer| {
            let prior = model.prior_components(store, layer)?;
            let d = prior.dim();
            let mut data = Vec::with_capacity(rows * d);
            for _ in 0..rows {
                let eps = standard_normal::<S, _>(rng, &[d]);
                let (_, z) = mixture_marginal_sample(&prior, rng.random::<f64>(), eps.data())?;
                data.extend(z);
            }
            Tensor::new(vec![rows, d], data)
        })
        .collect()
}

fn check_fixed<S: Real>(model: &Vlac, fixed: &[Tensor<S>], rows: usize) -> Result<()> {
    if fixed.len() != model.num_layers() {
        return Err(Error::invalid(format!(
            "fixed latents cover {} layers, model has {}",
            fixed.len(),
            model.num_layers()
        )));
    }
    for (l, t) in model.layers().iter().zip(fixed) {
        if t.shape() != [rows, l.spec.d_z] {
            return Err(Error::ShapeMismatch {
                op: "generate",
                left: vec![rows, l.spec.d_z],
                right: t.shape().to_vec(),
            });
        }
    }
    Ok(())
}

/// Decoder means with layer `layer` drawn from component `component`
/// (`z = μ_y + σ_y ⊙ noise`) and every other layer taken from `fixed`.
pub fn generate_conditional<S: Real>(
    model: &Vlac,
    store: &ParamStore<S>,
    layer: usize,
    component: usize,
    fixed: &[Tensor<S>],
    noise: &Tensor<S>,
) -> Result<Tensor<S>> {
    let spec = model
        .layers()
        .get(layer)
        .ok_or_else(|| Error::invalid(format!("no layer {}", layer + 1)))?
        .spec;
    if !spec.is_mixture() {
        return Err(Error::invalid(format!(
            "layer {} has K = 1; per-component generation needs K > 1",
            layer + 1
        )));
    }
    if component >= spec.k {
        return Err(Error::invalid(format!(
            "component {component} outside 0..{} for layer {}",
            spec.k,
            layer + 1
        )));
    }
    let rows = noise.shape().first().copied().unwrap_or(0);
    check_fixed(model, fixed, rows)?;
    let prior = model.prior_components(store, layer)?;
    let mut data = Vec::with_capacity(rows * spec.d_z);
    for r in 0..rows {
        data.extend(prior.sample_component(component, noise.row(r))?);
    }
    let mut z = fixed.to_vec();
    z[layer] = Tensor::new(vec![rows, spec.d_z], data)?;
    decode_mean(model, store, &z)
}

/// Decoder means with layer `layer` redrawn from its prior marginal
/// (component chosen by `uniform[r]`, then `noise`) and every other layer taken from `base`.
pub fn generate_marginal_resample<S: Real>(
    model: &Vlac,
    store: &ParamStore<S>,
    layer: usize,
    base: &[Tensor<S>],
    uniform: &[f64],
    noise: &Tensor<S>,
) -> Result<Tensor<S>> {
    let prior = model.prior_components(store, layer)?;
    let rows = uniform.len();
    check_fixed(model, base, rows)?;
    if noise.shape() != [rows, prior.dim()] {
        return Err(Error::ShapeMismatch {
            op: "generate_marginal_resample",
            left: vec![rows, prior.dim()],
            right: noise.shape().to_vec(),
        });
    }
    let mut data = Vec::with_capacity(rows * prior.dim());
    for (r, &u) in uniform.iter().enumerate() {
        data.extend(mixture_marginal_sample(&prior, u, noise.row(r))?.1);
    }
    let mut z = base.to_vec();
    z[layer] = Tensor::new(vec![rows, prior.dim()], data)?;
    decode_mean(model, store, &z)
}

/// Per-component grid: one column per component of `layer`, one row per draw of the
/// other layers. Within a row every column shares the same fixed layers and noise.
pub fn conditional_grid<S: Real, R: Rng>(
    model: &Vlac,
    store: &ParamStore<S>,
    layer: usize,
    rows: usize,
    rng: &mut R,
) -> Result<TileGrid<S>> {
    let k = model
        .layers()
        .get(layer)
        .ok_or_else(|| Error::invalid(format!("no layer {}", layer + 1)))?
        .spec
        .k;
    if k < 2 {
        return Err(Error::invalid(format!(
            "layer {} has K = 1; per-component generation needs K > 1",
            layer + 1
        )));
    }
    let fixed = sample_prior_latents(model, store, rows, rng)?;
    let d = model.layers()[layer].spec.d_z;
    let noise = standard_normal::<S, _>(rng, &[rows, d]);
    let columns = (0..k)
        .map(|y| generate_conditional(model, store, layer, y, &fixed, &noise))
        .collect::<Result<Vec<_>>>()?;
    Ok(interleave(&columns, rows))
}

/// Marginal-resampling grid: row `r` keeps `base` row `r` fixed outside `layer`,
/// each of the `cols` columns redraws `layer` from its marginal.
pub fn marginal_grid<S: Real, R: Rng>(
    model: &Vlac,
    store: &ParamStore<S>,
    layer: usize,
    base: &[Tensor<S>],
    cols: usize,
    rng: &mut R,
) -> Result<TileGrid<S>> {
    let rows = base.first().map_or(0, |t| t.shape()[0]);
    let d = model
        .layers()
        .get(layer)
        .ok_or_else(|| Error::invalid(format!("no layer {}", layer + 1)))?
        .spec
        .d_z;
    let columns = (0..cols)
        .map(|_| {
            let uniform: Vec<f64> = (0..rows).map(|_| rng.random()).collect();
            let noise = standard_normal::<S, _>(rng, &[rows, d]);
            generate_marginal_resample(model, store, layer, base, &uniform, &noise)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(interleave(&columns, rows))
}

fn interleave<S: Real>(columns: &[Tensor<S>], rows: usize) -> TileGrid<S> {
    let cols = columns.len();
    let x_dim = columns.first().map_or(0, |c| c.shape()[1]);
    let mut data = Vec::with_capacity(rows * cols * x_dim);
    for r in 0..rows {
        for c in columns {
            data.extend_from_slice(c.row(r));
        }
    }
    TileGrid {
        rows,
        cols,
        tiles: Tensor::new(vec![rows * cols, x_dim], data).expect("sized"),
    }
}
