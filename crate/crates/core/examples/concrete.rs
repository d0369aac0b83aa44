//! Draw Concrete (Gumbel-softmax) samples from one categorical at several
//! temperatures. Hard samples follow the categorical whatever the temperature;
//! relaxed samples sharpen towards the simplex vertices as it falls.
//!
//! ```text
//! cargo run --release --example concrete
//! ```

use rand::Rng;
use vlac::autodiff::Tape;
use vlac::distributions::concrete_sample;
use vlac::seeding::{stream_rng, Purpose};
use vlac::Tensor;

const DRAWS: usize = 20_000;

fn main() -> vlac::Result<()> {
    let probs = [0.1, 0.2, 0.3, 0.4];
    let logits: Vec<f64> = (0..DRAWS).flat_map(|_| probs.map(f64::ln)).collect();
    let mut rng = stream_rng(0, Purpose::Noise, 0);
    let uniform = Tensor::new(vec![DRAWS, 4], (0..DRAWS * 4).map(|_| rng.random()).collect())?;

    println!("target probabilities {probs:?}");
    for tau in [1.0, 0.5, 0.1] {
        let tape = Tape::<f64>::new();
        let sample = concrete_sample(tape.constant(Tensor::new(vec![DRAWS, 4], logits.clone())?), tau, &uniform)?;
        let mut freq = [0.0; 4];
        for c in sample.categories() {
            freq[c] += 1.0 / DRAWS as f64;
        }
        let relaxed = sample.relaxed.value();
        let peak: f64 = (0..DRAWS)
            .map(|r| relaxed.row(r).iter().cloned().fold(0.0, f64::max))
            .sum::<f64>()
            / DRAWS as f64;
        println!(
            "tau {tau:<4} hard frequencies [{}]  mean largest relaxed coordinate {peak:.3}",
            freq.iter().map(|f| format!("{f:.3}")).collect::<Vec<_>>().join(", ")
        );
    }
    Ok(())
}
