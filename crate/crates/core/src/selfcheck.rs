//! Built-in numerical checks: derivatives against central differences,
//! closed-form divergences against Monte-Carlo estimates, Concrete sampling
//! frequencies, the assignment solver against exhaustive search, and the
//! single-component ladder against the plain ladder.

use std::time::{Duration, Instant};

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{gradcheck, ElementwiseOp, GradcheckReport, ReduceOp, Tape, Var};
use crate::distributions::{concrete_sample, kl_categorical_uniform, kl_gaussian_gaussian, CategoricalParams, DiagGaussian};
use crate::error::Result;
use crate::evaluation::{brute_force_accuracy, cluster_accuracy, AssignmentMode, LabelPair};
use crate::model::{LadderNoise, ModelConfig, ParamStore, Vlac, Vlae, YMode};
use crate::seeding::{stream_rng, Purpose};
use crate::tensor::Tensor;
use crate::training::elbo;

pub const GRAD_EPS: f64 = 1e-5;
pub const GRAD_TOL: f64 = 1e-4;
pub const SEEDS: u64 = 10;
pub const MC_SAMPLES: usize = 100_000;
pub const STANDARD_ERRORS: f64 = 3.0;
pub const ASSIGNMENT_INSTANCES: usize = 200;
pub const CONCRETE_TEMPERATURES: [f64; 3] = [0.1, 0.5, 1.0];

#[derive(Clone, Debug, Default)]
pub struct SelfcheckOptions {
    pub seed: u64,
    /// Doubles the backward pass of the named op (e.g. `"log"`, `"matmul"`) so
    /// that the gradient suite can be seen to fail.
    #[doc(hidden)]
    pub fault: Option<String>,
}

#[derive(Clone, Debug)]
pub struct SuiteResult {
    pub name: &'static str,
    pub passed: bool,
    pub checks: usize,
    /// One line per failed check.
    pub failures: Vec<String>,
    pub elapsed: Duration,
}

impl SuiteResult {
    pub fn line(&self) -> String {
        format!(
            "{}\t{}\t{} checks\t{:.2}s",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.checks,
            self.elapsed.as_secs_f64()
        )
    }
}

fn suite(name: &'static str, body: impl FnOnce(&mut Vec<String>) -> Result<usize>) -> SuiteResult {
    let start = Instant::now();
    let mut failures = Vec::new();
    let checks = match body(&mut failures) {
        Ok(n) => n,
        Err(e) => {
            failures.push(format!("error: {e}"));
            0
        }
    };
    SuiteResult {
        name,
        passed: failures.is_empty(),
        checks,
        failures,
        elapsed: start.elapsed(),
    }
}

pub fn run_all(options: &SelfcheckOptions) -> Vec<SuiteResult> {
    vec![
        gradient_suite(options),
        divergence_suite(options.seed),
        concrete_suite(options.seed),
        assignment_suite(options.seed),
        vlae_reduction_suite(options.seed),
    ]
}

fn normal(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal)).collect();
    Tensor::new(shape.to_vec(), data).expect("sized")
}

fn away_from_zero(t: Tensor<f64>, margin: f64) -> Tensor<f64> {
    t.map(|v| if v >= 0.0 { v + margin } else { v - margin })
}

type Case = Box<dyn Fn(&mut ChaCha8Rng) -> (Tensor<f64>, Box<dyn for<'t> Fn(&'t Tape<f64>, Var<'t, f64>) -> Result<Var<'t, f64>>>)>;

/// Weighted sum `Σ w ⊙ v`, so that every output coordinate carries a distinct gradient.
fn weighted<'t>(v: Var<'t, f64>, w: &Tensor<f64>) -> Result<Var<'t, f64>> {
    v.mul(v.tape().constant(w.clone()))?.sum()
}

fn op_cases() -> Vec<(String, Case)> {
    let mut cases: Vec<(String, Case)> = Vec::new();
    for op in ElementwiseOp::ALL {
        if op.is_binary() {
            for broadcast_left in [false, true] {
                let name = format!("{}{}", op.name(), if broadcast_left { " (broadcast operand)" } else { "" });
                cases.push((
                    name,
                    Box::new(move |rng| {
                        let full = normal(rng, &[3, 4]);
                        let row = normal(rng, &[4]);
                        let w = normal(rng, &[3, 4]);
                        let fix = |t: Tensor<f64>| if op == ElementwiseOp::Div { away_from_zero(t, 0.5) } else { t };
                        if broadcast_left {
                            let other = full;
                            let f: Box<dyn for<'t> Fn(&'t Tape<f64>, Var<'t, f64>) -> Result<Var<'t, f64>>> =
                                Box::new(move |tape, b| weighted(tape.elementwise(op, tape.constant(other.clone()), Some(b))?, &w));
                            (fix(row), f)
                        } else {
                            let other = fix(row);
                            let f: Box<dyn for<'t> Fn(&'t Tape<f64>, Var<'t, f64>) -> Result<Var<'t, f64>>> =
                                Box::new(move |tape, a| weighted(tape.elementwise(op, a, Some(tape.constant(other.clone())))?, &w));
                            (full, f)
                        }
                    }),
                ));
            }
        } else {
            cases.push((
                op.name().to_string(),
                Box::new(move |rng| {
                    let mut x = normal(rng, &[3, 4]);
                    if op == ElementwiseOp::Log {
                        x = x.map(|v| v.abs() + 0.5);
                    }
                    if op == ElementwiseOp::Relu {
                        x = away_from_zero(x, 0.1);
                    }
                    let w = normal(rng, &[3, 4]);
                    let f: Box<dyn for<'t> Fn(&'t Tape<f64>, Var<'t, f64>) -> Result<Var<'t, f64>>> =
                        Box::new(move |tape, a| weighted(tape.elementwise(op, a, None)?, &w));
                    (x, f)
                }),
            ));
        }
    }
    for left in [true, false] {
        cases.push((
            format!("matmul ({} operand)", if left { "left" } else { "right" }),
            Box::new(move |rng| {
                let a = normal(rng, &[3, 4]);
                let b = normal(rng, &[4, 2]);
                let w = normal(rng, &[3, 2]);
                if left {
                    let f: Box<dyn for<'t> Fn(&'t Tape<f64>, Var<'t, f64>) -> Result<Var<'t, f64>>> =
                        Box::new(move |tape, a| weighted(a.matmul(tape.constant(b.clone()))?, &w));
                    (a, f)
                } else {
                    let f: Box<dyn for<'t> Fn(&'t Tape<f64>, Var<'t, f64>) -> Result<Var<'t, f64>>> =
                        Box::new(move |tape, b| weighted(tape.constant(a.clone()).matmul(b)?, &w));
                    (b, f)
                }
            }),
        ));
    }
    for kind in [ReduceOp::Sum, ReduceOp::Mean, ReduceOp::Max] {
        for axis in [Some(0), Some(1), None] {
            cases.push((
                format!("{} (axis {axis:?})", kind.name()),
                Box::new(move |rng| {
                    let x = normal(rng, &[3, 4]);
                    let out_len = match axis {
                        Some(0) => 4,
                        Some(_) => 3,
                        None => 1,
                    };
                    let w = normal(rng, &[out_len]);
                    let f: Box<dyn for<'t> Fn(&'t Tape<f64>, Var<'t, f64>) -> Result<Var<'t, f64>>> =
                        Box::new(move |tape, a| weighted(tape.reduce(kind, a, axis, false)?.reshape(&[out_len])?, &w));
                    (x, f)
                }),
            ));
        }
    }
    for axis in [0, 1] {
        cases.push((
            format!("concat (axis {axis})"),
            Box::new(move |rng| {
                let a = normal(rng, &[2, 3]);
                let other = normal(rng, if axis == 0 { &[1, 3] } else { &[2, 2] });
                let w = normal(rng, if axis == 0 { &[3, 3] } else { &[2, 5] });
                let f: Box<dyn for<'t> Fn(&'t Tape<f64>, Var<'t, f64>) -> Result<Var<'t, f64>>> =
                    Box::new(move |tape, a| weighted(tape.concat(&[a, tape.constant(other.clone())], axis)?.square()?, &w));
                (a, f)
            }),
        ));
    }
    cases.push((
        "reshape".into(),
        Box::new(|rng| {
            let a = normal(rng, &[2, 6]);
            let m = normal(rng, &[4, 2]);
            let w = normal(rng, &[3, 2]);
            let f: Box<dyn for<'t> Fn(&'t Tape<f64>, Var<'t, f64>) -> Result<Var<'t, f64>>> =
                Box::new(move |tape, a| weighted(a.reshape(&[3, 4])?.matmul(tape.constant(m.clone()))?, &w));
            (a, f)
        }),
    ));
    cases.push((
        "log_softmax".into(),
        Box::new(|rng| {
            let a = normal(rng, &[3, 5]);
            let w = normal(rng, &[3, 5]);
            let f: Box<dyn for<'t> Fn(&'t Tape<f64>, Var<'t, f64>) -> Result<Var<'t, f64>>> =
                Box::new(move |_, a| weighted(a.log_softmax()?, &w));
            (a, f)
        }),
    ));
    cases.push((
        "two-layer MLP".into(),
        Box::new(|rng| {
            let x = normal(rng, &[5, 4]);
            let w1 = normal(rng, &[4, 6]);
            let b1 = normal(rng, &[6]);
            let w2 = normal(rng, &[6, 2]);
            let f: Box<dyn for<'t> Fn(&'t Tape<f64>, Var<'t, f64>) -> Result<Var<'t, f64>>> = Box::new(move |tape, w1| {
                let h = tape.constant(x.clone()).matmul(w1)?.add(tape.constant(b1.clone()))?.tanh()?;
                h.matmul(tape.constant(w2.clone()))?.sigmoid()?.sum()
            });
            (w1, f)
        }),
    ));
    cases
}

/// A small mixture ladder used by the objective checks. Every parameter is
/// offset by uniform noise in ±0.1 so that no relu sits exactly on its kink
/// (zero biases and dead units would otherwise put some there).
pub fn tiny_model(seed: u64) -> Result<(Vlac, ParamStore<f64>)> {
    let mut config = ModelConfig::ladder(&[1, 3, 2], 6, 2, 5).with_seed(seed).with_sigma_x(0.5);
    config.block_depth = 1;
    let (model, mut store) = Vlac::init::<f64>(config)?;
    let mut rng = stream_rng(seed, Purpose::Selfcheck, 2);
    for t in store.values_mut() {
        for v in t.data_mut() {
            *v += rng.random_range(-0.1..0.1);
        }
    }
    Ok((model, store))
}

/// Gradient of the negated ELBO checked at every coordinate of every parameter.
fn elbo_gradcheck(seed: u64, fault: Option<&str>) -> Result<Vec<(String, GradcheckReport)>> {
    let (model, store) = tiny_model(seed)?;
    let mut rng = stream_rng(seed, Purpose::Selfcheck, 1);
    let x = normal(&mut rng, &[4, 6]).map(|v| 1.0 / (1.0 + (-v).exp()));
    let noise = LadderNoise::<f64>::sample(model.config(), 4, &mut rng);
    let mode = YMode::Relaxed { temperature: 0.7 };
    let names: Vec<String> = store.iter().map(|(n, _)| n.to_string()).collect();
    let mut out = Vec::new();
    for name in &names {
        let id = store.id(name).expect("listed");
        let point = store.get(id).clone();
        let report = gradcheck(
            |tape, v| {
                if let Some(op) = fault {
                    tape.inject_gradient_fault(op);
                }
                let mut p = store.bind_constants(tape);
                p.replace(id, v);
                elbo(&model, &p, tape.constant(x.clone()), &noise, &mode)?.loss()
            },
            &point,
            GRAD_EPS,
            GRAD_TOL,
        )?;
        out.push((name.clone(), report));
    }
    Ok(out)
}

pub fn gradient_suite(options: &SelfcheckOptions) -> SuiteResult {
    suite("gradient", |failures| {
        let mut checks = 0;
        let fault = options.fault.as_deref();
        for (name, case) in op_cases() {
            for s in 0..SEEDS {
                let mut rng = stream_rng(options.seed + s, Purpose::Selfcheck, 0);
                let (point, f) = case(&mut rng);
                let report = gradcheck(
                    |tape, v| {
                        if let Some(op) = fault {
                            tape.inject_gradient_fault(op);
                        }
                        f(tape, v)
                    },
                    &point,
                    GRAD_EPS,
                    GRAD_TOL,
                )?;
                checks += report.checked;
                if !report.passed() {
                    failures.push(format!("op `{name}` seed {s}: max rel. error {:.3e}", report.max_rel_error));
                }
            }
        }
        for s in 0..SEEDS {
            for (param, report) in elbo_gradcheck(options.seed + s, fault)? {
                checks += report.checked;
                if !report.passed() {
                    failures.push(format!(
                        "negative ELBO w.r.t. `{param}` seed {s}: max rel. error {:.3e}",
                        report.max_rel_error
                    ));
                }
            }
        }
        Ok(checks)
    })
}

/// Direct evaluation of `log N(z | μ, diag σ²)`.
fn log_density(z: &[f64], mean: &[f64], std: &[f64]) -> f64 {
    z.iter()
        .zip(mean)
        .zip(std)
        .map(|((&z, &m), &s)| -0.5 * (2.0 * std::f64::consts::PI).ln() - s.ln() - (z - m).powi(2) / (2.0 * s * s))
        .sum()
}

fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

pub fn divergence_suite(seed: u64) -> SuiteResult {
    suite("divergence", |failures| {
        let mut checks = 0;
        for s in 0..SEEDS {
            let mut rng = stream_rng(seed + s, Purpose::Selfcheck, 2);
            let d = 3;
            let params: Vec<Vec<f64>> = (0..4)
                .map(|i| {
                    (0..d)
                        .map(|_| if i % 2 == 0 { rng.sample(rand_distr::StandardNormal) } else { rng.random_range(0.5..1.5) })
                        .collect()
                })
                .collect();
            let (mq, sq, mp, sp) = (&params[0], &params[1], &params[2], &params[3]);
            let tape = Tape::<f64>::new();
            let var = |v: &Vec<f64>| tape.constant(Tensor::from_vec(v.clone()));
            let q = DiagGaussian::new(var(mq), var(sq))?;
            let p = DiagGaussian::new(var(mp), var(sp))?;
            let closed = kl_gaussian_gaussian(&q, &p)?.item()?;
            let self_kl = kl_gaussian_gaussian(&q, &q)?.item()?;
            let samples: Vec<f64> = (0..MC_SAMPLES)
                .map(|_| {
                    let z: Vec<f64> = (0..d)
                        .map(|i| mq[i] + sq[i] * rng.sample::<f64, _>(rand_distr::StandardNormal))
                        .collect();
                    log_density(&z, mq, sq) - log_density(&z, mp, sp)
                })
                .collect();
            let (mc, se) = mean_and_se(&samples);
            checks += 2;
            if (mc - closed).abs() > STANDARD_ERRORS * se {
                failures.push(format!("Gaussian KL seed {s}: closed form {closed:.6} vs MC {mc:.6} ± {se:.2e}"));
            }
            if self_kl.abs() > 1e-12 {
                failures.push(format!("Gaussian KL(q, q) seed {s} = {self_kl:e}"));
            }

            let k = 5;
            let logits: Vec<f64> = (0..k).map(|_| 1.5 * rng.sample::<f64, _>(rand_distr::StandardNormal)).collect();
            let cat = CategoricalParams::new(tape.constant(Tensor::from_vec(logits.clone())));
            let closed = kl_categorical_uniform(&cat, k)?.item()?;
            let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let norm: f64 = logits.iter().map(|l| (l - max).exp()).sum();
            let probs: Vec<f64> = logits.iter().map(|l| (l - max).exp() / norm).collect();
            let samples: Vec<f64> = (0..MC_SAMPLES)
                .map(|_| {
                    let u: f64 = rng.random();
                    let mut acc = 0.0;
                    let y = probs.iter().position(|p| {
                        acc += p;
                        u < acc
                    });
                    let y = y.unwrap_or(k - 1);
                    probs[y].ln() + (k as f64).ln()
                })
                .collect();
            let (mc, se) = mean_and_se(&samples);
            let uniform = CategoricalParams::new(tape.constant(Tensor::from_vec(vec![0.3; k])));
            let zero = kl_categorical_uniform(&uniform, k)?.item()?;
            checks += 2;
            if (mc - closed).abs() > STANDARD_ERRORS * se {
                failures.push(format!("categorical KL seed {s}: closed form {closed:.6} vs MC {mc:.6} ± {se:.2e}"));
            }
            if zero.abs() > 1e-12 {
                failures.push(format!("categorical KL(uniform) seed {s} = {zero:e}"));
            }
        }
        Ok(checks)
    })
}

pub fn concrete_suite(seed: u64) -> SuiteResult {
    suite("concrete", |failures| {
        let mut checks = 0;
        let mut rng = stream_rng(seed, Purpose::Selfcheck, 3);
        let k = 4;
        let logits: Vec<f64> = (0..k).map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal)).collect();
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let norm: f64 = logits.iter().map(|l| (l - max).exp()).sum();
        let probs: Vec<f64> = logits.iter().map(|l| (l - max).exp() / norm).collect();
        let tiled = Tensor::new(vec![MC_SAMPLES, k], logits.repeat(MC_SAMPLES))?;
        for tau in CONCRETE_TEMPERATURES {
            let u = Tensor::new(vec![MC_SAMPLES, k], (0..MC_SAMPLES * k).map(|_| rng.random::<f64>()).collect())?;
            let tape = Tape::<f64>::new();
            let sample = concrete_sample(tape.constant(tiled.clone()), tau, &u)?;
            let mut counts = vec![0usize; k];
            for c in sample.categories() {
                counts[c] += 1;
            }
            for (c, &n) in counts.iter().enumerate() {
                let freq = n as f64 / MC_SAMPLES as f64;
                let se = (probs[c] * (1.0 - probs[c]) / MC_SAMPLES as f64).sqrt();
                checks += 1;
                if (freq - probs[c]).abs() > STANDARD_ERRORS * se {
                    failures.push(format!(
                        "tau {tau}: category {c} frequency {freq:.5} vs probability {:.5} ± {se:.2e}",
                        probs[c]
                    ));
                }
            }
        }
        Ok(checks)
    })
}

pub fn assignment_suite(seed: u64) -> SuiteResult {
    suite("assignment", |failures| {
        let mut rng = stream_rng(seed, Purpose::Selfcheck, 4);
        let mut checks = 0;
        for i in 0..ASSIGNMENT_INSTANCES {
            let t = rng.random_range(1..=4);
            let k = rng.random_range(1..=5);
            let n = rng.random_range(1..=40);
            let y = (0..n).map(|_| rng.random_range(0..k)).collect();
            let c = (0..n).map(|_| rng.random_range(0..t)).collect();
            let pairs = LabelPair::new(y, c, k, t)?;
            for mode in AssignmentMode::ALL {
                checks += 1;
                let fast = cluster_accuracy(&pairs, mode);
                let slow = brute_force_accuracy(&pairs, mode)?;
                if fast.matched != slow.matched {
                    failures.push(format!(
                        "instance {i} ({mode}): solver {} vs exhaustive {}",
                        fast.matched, slow.matched
                    ));
                }
            }
        }
        let hand = LabelPair::new(vec![0, 0, 0, 1, 1, 1], vec![0, 0, 1, 0, 1, 1], 2, 2)?;
        for mode in AssignmentMode::ALL {
            checks += 1;
            let acc = cluster_accuracy(&hand, mode).accuracy;
            if acc != 4.0 / 6.0 {
                failures.push(format!("hand case ({mode}): {acc} instead of 4/6"));
            }
        }
        Ok(checks)
    })
}

pub fn vlae_reduction_suite(seed: u64) -> SuiteResult {
    suite("vlae-reduction", |failures| {
        let mut checks = 0;
        for s in 0..SEEDS {
            let mut config = ModelConfig::ladder(&[1, 1, 1], 12, 2, 8).with_seed(seed + s);
            config.block_depth = 2;
            let (model, store) = Vlac::init::<f64>(config)?;
            let mut rng = stream_rng(seed + s, Purpose::Selfcheck, 5);
            let x = normal(&mut rng, &[5, 12]).map(|v| 1.0 / (1.0 + (-v).exp()));
            let noise = LadderNoise::<f64>::sample(model.config(), 5, &mut rng);
            let tape = Tape::<f64>::new();
            let p = store.bind(&tape);
            let xv = tape.constant(x);
            let ladder = elbo(&model, &p, xv, &noise, &YMode::Relaxed { temperature: 1.0 })?;
            let plain = Vlae::new(&model)?.elbo(&p, xv, &noise.normal)?;
            let a = ladder.mean()?.item()?;
            let b = plain.total.item()?;
            checks += 1;
            if a.to_bits() != b.to_bits() {
                failures.push(format!("seed {s}: mixture ladder {a:e} vs plain ladder {b:e}"));
            }
            if ladder.kl_y.iter().any(Option::is_some) {
                failures.push(format!("seed {s}: single-component layers produced cluster terms"));
            }
        }
        Ok(checks)
    })
}
