//! Train a short run, then draw a per-component grid and a marginal-resampling
//! grid for the third layer and write both as PPM sheets.
//!
//! ```text
//! cargo run --release --example generate_grids -- [steps] [out-dir]
//! ```

use std::path::{Path, PathBuf};

use vlac::data::{synth_generate, tile_sheet, FactorSpec};
use vlac::model::generate::{conditional_grid, marginal_grid, sample_prior_latents, TileGrid};
use vlac::model::ModelConfig;
use vlac::seeding::{stream_rng, Purpose};
use vlac::training::{train, TrainConfig, TrainSinks, Trainer};

const LAYER: usize = 2;

fn save(grid: &TileGrid<f32>, spec: &FactorSpec, path: &Path) -> vlac::Result<()> {
    let tiles: Vec<&[f32]> = (0..grid.rows * grid.cols).map(|i| grid.tiles.row(i)).collect();
    let sheet = tile_sheet(&tiles, grid.rows, grid.cols, spec.height, spec.width, FactorSpec::CHANNELS)?;
    sheet.save(path)?;
    println!("{} rows x {} columns -> {}", grid.rows, grid.cols, path.display());
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let steps: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(1000);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "grids-out".into()));
    std::fs::create_dir_all(&out)?;

    let spec = FactorSpec::shapes_and_hues();
    let data = synth_generate(&spec, 4000, 0)?;
    let model = ModelConfig::ladder(&[1, 4, 4, 1], spec.x_dim(), 4, 64);
    let mut trainer = Trainer::<f32>::new(model, TrainConfig { steps, ..TrainConfig::default() })?;
    train(&mut trainer, &data, &mut TrainSinks::default())?;
    let (model, store) = (trainer.model(), trainer.store());

    let mut rng = stream_rng(0, Purpose::Generate, 0);
    let grid = conditional_grid(model, store, LAYER, 8, &mut rng)?;
    save(&grid, &spec, &out.join("conditional-layer3.ppm"))?;

    let base = sample_prior_latents(model, store, 8, &mut rng)?;
    let grid = marginal_grid(model, store, LAYER, &base, 8, &mut rng)?;
    save(&grid, &spec, &out.join("marginal-layer3.ppm"))?;
    Ok(())
}
