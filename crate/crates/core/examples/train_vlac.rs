//! Train a four-layer ladder with mixture priors on layers 2 and 3 on the
//! synthetic glyph dataset, then score each mixture layer against every factor.
//!
//! ```text
//! cargo run --release --example train_vlac -- [steps] [seed]
//! ```

use std::time::Instant;

use vlac::data::{synth_generate, FactorSpec};
use vlac::evaluation::{evaluate_model, AssignmentMode};
use vlac::model::ModelConfig;
use vlac::training::{train, TrainConfig, TrainSinks, Trainer};

fn main() -> vlac::Result<()> {
    let mut args = std::env::args().skip(1);
    let steps: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(5000);
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(0);

    let spec = FactorSpec::shapes_and_hues();
    let data = synth_generate(&spec, 8000, seed)?;
    let model = ModelConfig::ladder(&[1, 4, 4, 1], spec.x_dim(), 4, 64).with_seed(seed);
    let config = TrainConfig {
        steps,
        seed,
        ..TrainConfig::default()
    };
    let mut trainer = Trainer::<f32>::new(model, config)?;
    let start = Instant::now();
    let history = train(&mut trainer, &data, &mut TrainSinks::default())?;
    let last = history.last().map(|b| b.total).unwrap_or(f64::NAN);
    println!("{steps} steps in {:.1?}, final batch ELBO {last:.2}", start.elapsed());

    for layer in [1, 2] {
        let report = evaluate_model(trainer.model(), trainer.store(), &data, layer)?;
        for c in &report.channels {
            println!(
                "layer {} vs {:<10} many-to-one {:.3}  injective {:.3}",
                layer + 1,
                c.name,
                c.accuracy(AssignmentMode::ManyToOne),
                c.accuracy(AssignmentMode::Injective)
            );
        }
        println!("  occupancy {:?}", report.occupancy);
    }
    Ok(())
}
