//! Datasets: the synthetic hierarchical-factor images, the binary dataset
//! format, shuffled batching, and PPM export.

mod dataset;
pub mod ppm;
pub mod raw;
pub mod synth;

pub use dataset::{epoch_order, iterate, step_batch, BatchIter, Dataset};
pub use ppm::{tile_sheet, RgbImage};
pub use raw::{load_raw, save_raw};
pub use synth::{chi_square_independence, render, synth_generate, ChiSquareTest, FactorSpec, FACTOR_NAMES};
