//! Networks, priors and generation protocols of the ladder model and its
//! single-layer baseline.

mod baseline;
pub mod checkpoint;
mod config;
pub mod generate;
mod ladder;
mod network;
mod params;
mod vlae;

pub use baseline::{gm_dgm_forward, GmDgmForward};
pub use config::{LayerSpec, ModelConfig, Preset, DEFAULT_BLOCK_DEPTH, DEFAULT_D_Z, DEFAULT_HIDDEN, DEFAULT_SIGMA_X, K_ONE, K_TWO};
pub use ladder::{
    DecodeOutput, LadderLayer, LadderNoise, LatentState, LayerCategorical, LayerLatent, MixturePrior, Vlac, YMode,
};
pub use network::{Activation, Linear, Mlp};
pub use params::{BoundParams, ParamId, ParamStore};
pub use vlae::{Vlae, VlaeElbo};

/// The single-layer Gaussian-mixture baseline is the ladder with one layer.
pub type GmDgm = Vlac;
