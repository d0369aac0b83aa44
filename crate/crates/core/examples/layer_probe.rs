//! Trains a plain ladder (every `K = 1`) on the synthetic data, then clusters each
//! layer's posterior means with k-means and scores the clusters against every
//! factor. This is how a designated clustering layer is chosen.
//!
//! ```text
//! cargo run --release --example layer_probe -- [steps] [seed]
//! ```

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vlac::autodiff::Tape;
use vlac::data::{synth_generate, FactorSpec};
use vlac::evaluation::evaluate_predictions;
use vlac::model::{LadderNoise, ModelConfig, YMode};
use vlac::training::{train, TrainConfig, TrainSinks, Trainer};

const CLUSTERS: usize = 4;

fn kmeans(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut centres: Vec<Vec<f64>> = (0..k).map(|_| points[rng.random_range(0..points.len())].clone()).collect();
    let mut assign = vec![0; points.len()];
    for _ in 0..50 {
        for (a, p) in assign.iter_mut().zip(points) {
            let dist = |c: &Vec<f64>| c.iter().zip(p).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
            *a = (0..k).min_by(|&i, &j| dist(&centres[i]).total_cmp(&dist(&centres[j]))).unwrap();
        }
        for (c, centre) in centres.iter_mut().enumerate() {
            let members: Vec<&Vec<f64>> = points.iter().zip(&assign).filter(|(_, &a)| a == c).map(|(p, _)| p).collect();
            if members.is_empty() {
                continue;
            }
            for (d, v) in centre.iter_mut().enumerate() {
                *v = members.iter().map(|m| m[d]).sum::<f64>() / members.len() as f64;
            }
        }
    }
    assign
}

fn main() -> vlac::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let steps = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(5000);
    let seed = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(0);
    let layers = std::env::var("LAYERS").ok().and_then(|s| s.parse().ok()).unwrap_or(4);

    let spec = FactorSpec::shapes_and_hues();
    let data = synth_generate(&spec, 8000, seed)?;
    let model = ModelConfig::ladder(&vec![1; layers], data.x_dim(), 4, 64).with_seed(seed);
    let config = TrainConfig { steps, seed, ..TrainConfig::default() };
    let mut trainer = Trainer::<f32>::new(model, config)?;
    let history = train(&mut trainer, &data, &mut TrainSinks::default())?;
    if let Some(last) = history.last() {
        println!("final batch ELBO {:.2}, KL per layer {:?}", last.total, last.kl_z);
    }

    let probe = data.head(2000);
    let x = probe.all::<f32>();
    let tape = Tape::new();
    let p = trainer.store().bind_constants(&tape);
    let noise = LadderNoise::zeros(trainer.model().config(), probe.len());
    let latents = trainer.model().encode(&p, tape.constant(x), &noise, &YMode::Relaxed { temperature: 1.0 })?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (l, layer) in latents.layers.iter().enumerate() {
        let means = layer.posterior.mean.value();
        let d = means.shape()[1];
        let points: Vec<Vec<f64>> = (0..probe.len()).map(|i| means.row(i).iter().map(|&v| v as f64).collect()).collect();
        let report = evaluate_predictions(&probe, l, CLUSTERS, &kmeans(&points, CLUSTERS, &mut rng))?;
        let scores: Vec<String> = report
            .channels
            .iter()
            .filter(|c| c.classes > 1)
            .map(|c| format!("{} {:.3}", c.name, c.many_to_one.accuracy))
            .collect();
        println!("layer {} (d_z {d}): {}", l + 1, scores.join("  "));
    }
    Ok(())
}
