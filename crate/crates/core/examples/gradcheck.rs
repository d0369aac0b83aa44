//! Check the reverse-mode engine against central differences on a small MLP loss,
//! then inject a fault into one backward rule and watch the check catch it.
//!
//! ```text
//! cargo run --release --example gradcheck
//! ```

use rand::Rng;
use vlac::autodiff::{gradcheck, Tape, Var};
use vlac::seeding::{stream_rng, Purpose};
use vlac::Tensor;

/// `mean(softplus(tanh(x W)))` with `x` fixed and `W` the `[4, 5]` view of `p`.
fn mlp_loss<'t>(tape: &'t Tape<f64>, p: Var<'t, f64>) -> vlac::Result<Var<'t, f64>> {
    let x = tape.constant(Tensor::from_f64(&[3, 4], &[0.3, -1.2, 0.5, 0.9, -0.4, 0.1, 1.1, -0.7, 0.8, 0.2, -0.6, 0.4])?);
    let h = x.matmul(p.reshape(&[4, 5])?)?.tanh()?;
    h.softplus()?.mean()
}

/// The same loss with the `tanh` backward rule doubled.
fn faulty_loss<'t>(tape: &'t Tape<f64>, p: Var<'t, f64>) -> vlac::Result<Var<'t, f64>> {
    tape.inject_gradient_fault("tanh");
    mlp_loss(tape, p)
}

fn main() -> vlac::Result<()> {
    let mut rng = stream_rng(0, Purpose::Selfcheck, 0);
    let point = Tensor::new(vec![20], (0..20).map(|_| rng.random_range(-1.0..1.0)).collect())?;

    let report = gradcheck(mlp_loss, &point, 1e-6, 1e-4)?;
    println!(
        "clean tape:  {} coordinates, max relative error {:.2e}, passed {}",
        report.checked,
        report.max_rel_error,
        report.passed()
    );

    let report = gradcheck(faulty_loss, &point, 1e-6, 1e-4)?;
    println!(
        "tanh fault:  {} coordinates, {} failures, max relative error {:.2e}",
        report.checked,
        report.failures.len(),
        report.max_rel_error
    );
    Ok(())
}
