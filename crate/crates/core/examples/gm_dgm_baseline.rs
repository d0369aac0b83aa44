//! Train the single-layer Gaussian-mixture baseline with many components and
//! score its clusters against every factor.
//!
//! ```text
//! cargo run --release --example gm_dgm_baseline -- [steps] [components]
//! ```

use vlac::data::{synth_generate, FactorSpec};
use vlac::evaluation::{evaluate_model, AssignmentMode};
use vlac::model::ModelConfig;
use vlac::training::{train, TrainConfig, TrainSinks, Trainer};

fn main() -> vlac::Result<()> {
    let mut args = std::env::args().skip(1);
    let steps: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(3000);
    let k: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(16);

    let spec = FactorSpec::shapes_and_hues();
    let data = synth_generate(&spec, 8000, 0)?;
    // the encoder depth matches the trunk below the third ladder layer
    let model = ModelConfig::gm_dgm(k, spec.x_dim(), 4, 64, 3);
    let mut trainer = Trainer::<f32>::new(model, TrainConfig { steps, ..TrainConfig::default() })?;
    train(&mut trainer, &data, &mut TrainSinks::default())?;

    let report = evaluate_model(trainer.model(), trainer.store(), &data, 0)?;
    for c in &report.channels {
        println!(
            "{:<10} many-to-one {:.3}  injective {:.3}",
            c.name,
            c.accuracy(AssignmentMode::ManyToOne),
            c.accuracy(AssignmentMode::Injective)
        );
    }
    println!("occupancy {:?}", report.occupancy);
    Ok(())
}
