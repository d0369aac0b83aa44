use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use vlac::autodiff::Tape;
use vlac::distributions::{
    concrete_sample, gaussian_log_prob, gaussian_rsample, kl_categorical_uniform, kl_gaussian_gaussian,
    mixture_marginal_sample, CategoricalParams, DiagGaussian, MixtureComponents,
};
use vlac::Tensor;

fn t(shape: &[usize], v: &[f64]) -> Tensor<f64> {
    Tensor::from_f64(shape, v).unwrap()
}

fn density(mu: &[f64], sigma: &[f64], x: &[f64]) -> f64 {
    mu.iter()
        .zip(sigma)
        .zip(x)
        .map(|((m, s), x)| {
            (-(x - m) * (x - m) / (2.0 * s * s)).exp() / (s * (2.0 * std::f64::consts::PI).sqrt())
        })
        .product::<f64>()
        .ln()
}

#[test]
fn log_prob_matches_direct_density() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for _ in 0..20 {
        let mu: Vec<f64> = (0..4).map(|_| rng.random_range(-2.0..2.0)).collect();
        let sigma: Vec<f64> = (0..4).map(|_| rng.random_range(0.2..2.0)).collect();
        let x: Vec<f64> = (0..4).map(|_| rng.random_range(-3.0..3.0)).collect();
        let tape = Tape::<f64>::new();
        let d = DiagGaussian::new(tape.constant(t(&[4], &mu)), tape.constant(t(&[4], &sigma))).unwrap();
        let lp = gaussian_log_prob(&d, tape.constant(t(&[4], &x))).unwrap().item().unwrap();
        assert!((lp - density(&mu, &sigma, &x)).abs() < 1e-10);
    }
}

#[test]
fn rsample_mean_within_four_standard_errors() {
    let n = 100_000;
    let (mu, sigma) = (1.5, 0.7);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let noise: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let tape = Tape::<f64>::new();
    let d = DiagGaussian::new(
        tape.constant(Tensor::full(&[n, 1], mu)),
        tape.constant(Tensor::full(&[n, 1], sigma)),
    )
    .unwrap();
    let z = gaussian_rsample(&d, tape.constant(t(&[n, 1], &noise))).unwrap().value();
    let mean = z.data().iter().sum::<f64>() / n as f64;
    assert!((mean - mu).abs() < 4.0 * sigma / (n as f64).sqrt());
}

#[test]
fn gaussian_kl_matches_monte_carlo() {
    let n = 100_000;
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let (mq, sq) = (vec![0.3, -0.5], vec![0.8, 1.2]);
    let (mp, sp) = (vec![-0.2, 0.4], vec![1.1, 0.6]);
    let tape = Tape::<f64>::new();
    let q = DiagGaussian::new(tape.constant(t(&[2], &mq)), tape.constant(t(&[2], &sq))).unwrap();
    let p = DiagGaussian::new(tape.constant(t(&[2], &mp)), tape.constant(t(&[2], &sp))).unwrap();
    let kl = kl_gaussian_gaussian(&q, &p).unwrap().item().unwrap();
    let draws: Vec<f64> = (0..n)
        .map(|_| {
            let z: Vec<f64> = (0..2).map(|i| mq[i] + sq[i] * rng.sample::<f64, _>(StandardNormal)).collect();
            density(&mq, &sq, &z) - density(&mp, &sp, &z)
        })
        .collect();
    let mean = draws.iter().sum::<f64>() / n as f64;
    let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    assert!((kl - mean).abs() < 3.0 * (var / n as f64).sqrt(), "kl {kl} mc {mean}");
}

#[test]
fn categorical_kl_matches_direct_sum() {
    let logits = [0.3, -1.2, 2.0, 0.0, 0.7];
    let z: f64 = logits.iter().map(|l: &f64| l.exp()).sum();
    let direct: f64 = logits.iter().map(|l| {
        let q = l.exp() / z;
        q * (q * 5.0).ln()
    }).sum();
    let tape = Tape::<f64>::new();
    let q = CategoricalParams::new(tape.constant(t(&[5], &logits)));
    let kl = kl_categorical_uniform(&q, 5).unwrap().item().unwrap();
    assert!((kl - direct).abs() < 1e-10);
}

#[test]
fn hard_concrete_frequencies_follow_softmax() {
    let logits = [1.0, 0.0, -0.5, 0.3];
    let z: f64 = logits.iter().map(|l: &f64| l.exp()).sum();
    let n = 100_000;
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let uniform: Vec<f64> = (0..n * 4).map(|_| rng.random()).collect();
    let tape = Tape::<f64>::new();
    let rows = Tensor::new(vec![n, 4], logits.repeat(n)).unwrap();
    let sample = concrete_sample(tape.constant(rows), 0.3, &t(&[n, 4], &uniform)).unwrap();
    let mut counts = [0usize; 4];
    for c in sample.categories() {
        counts[c] += 1;
    }
    for k in 0..4 {
        let p = logits[k].exp() / z;
        let freq = counts[k] as f64 / n as f64;
        assert!((freq - p).abs() < 3.0 * (p * (1.0 - p) / n as f64).sqrt(), "category {k}: {freq} vs {p}");
    }
}

#[test]
fn mixture_marginal_is_bimodal_with_even_weights() {
    let prior = MixtureComponents::new(t(&[2, 1], &[-5.0, 5.0]), t(&[2, 1], &[0.5, 0.5])).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let n = 10_000;
    let mut right = 0;
    for _ in 0..n {
        let (y, z) = mixture_marginal_sample(&prior, rng.random(), &[rng.sample(StandardNormal)]).unwrap();
        assert_eq!(y == 1, z[0] > 0.0);
        assert!(z[0].abs() > 2.0);
        right += y;
    }
    let frac = right as f64 / n as f64;
    assert!((frac - 0.5).abs() < 3.0 * (0.25 / n as f64).sqrt());
}

proptest! {
    #[test]
    fn gaussian_kl_is_nonnegative_and_zero_on_self(
        mq in prop::collection::vec(-3.0f64..3.0, 3),
        sq in prop::collection::vec(0.05f64..3.0, 3),
        mp in prop::collection::vec(-3.0f64..3.0, 3),
        sp in prop::collection::vec(0.05f64..3.0, 3),
    ) {
        let tape = Tape::<f64>::new();
        let q = DiagGaussian::new(tape.constant(t(&[3], &mq)), tape.constant(t(&[3], &sq))).unwrap();
        let p = DiagGaussian::new(tape.constant(t(&[3], &mp)), tape.constant(t(&[3], &sp))).unwrap();
        prop_assert!(kl_gaussian_gaussian(&q, &p).unwrap().item().unwrap() >= -1e-12);
        prop_assert!(kl_gaussian_gaussian(&q, &q).unwrap().item().unwrap().abs() <= 1e-12);
    }

    #[test]
    fn categorical_kl_is_between_zero_and_log_k(logits in prop::collection::vec(-10.0f64..10.0, 2..8)) {
        let k = logits.len();
        let tape = Tape::<f64>::new();
        let q = CategoricalParams::new(tape.constant(t(&[k], &logits)));
        let kl = kl_categorical_uniform(&q, k).unwrap().item().unwrap();
        prop_assert!(kl >= -1e-12 && kl <= (k as f64).ln() + 1e-12);
    }

    #[test]
    fn relaxed_concrete_lies_on_simplex(
        logits in prop::collection::vec(-5.0f64..5.0, 4),
        u in prop::collection::vec(0.0f64..1.0, 4),
        tau in 0.05f64..2.0,
    ) {
        let tape = Tape::<f64>::new();
        let s = concrete_sample(tape.constant(t(&[4], &logits)), tau, &t(&[4], &u)).unwrap();
        let v = s.relaxed.value();
        prop_assert!((v.data().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(v.data().iter().all(|&p| p >= 0.0));
        prop_assert_eq!(s.hard.data().iter().sum::<f64>(), 1.0);
    }
}
