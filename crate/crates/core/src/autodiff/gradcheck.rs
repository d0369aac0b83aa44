use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Gradients smaller than this are compared on an absolute scale.
pub const REL_ERROR_FLOOR: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq)]
pub struct GradcheckFailure {
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct GradcheckReport {
    pub checked: usize,
    pub max_rel_error: f64,
    pub failures: Vec<GradcheckFailure>,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR)
}

/// Compares `backward()` against central differences at every coordinate of `point`.
pub fn gradcheck<F>(f: F, point: &Tensor<f64>, eps: f64, tol: f64) -> Result<GradcheckReport>
where
    F: for<'t> Fn(&'t Tape<f64>, Var<'t, f64>) -> Result<Var<'t, f64>>,
{
    let coords: Vec<usize> = (0..point.len()).collect();
    gradcheck_coords(f, point, &coords, eps, tol)
}

/// As [`gradcheck`], restricted to the listed flat coordinates.
pub fn gradcheck_coords<F>(
    f: F,
    point: &Tensor<f64>,
    coords: &[usize],
    eps: f64,
    tol: f64,
) -> Result<GradcheckReport>
where
    F: for<'t> Fn(&'t Tape<f64>, Var<'t, f64>) -> Result<Var<'t, f64>>,
{
    let eval = |p: &Tensor<f64>| -> Result<f64> {
        let tape = Tape::new();
        let x = tape.constant(p.clone());
        f(&tape, x)?.item()
    };

    let tape = Tape::new();
    let x = tape.param(point.clone());
    let y = f(&tape, x)?;
    let analytic = tape.backward(y)?.wrt(x);

    let mut report = GradcheckReport::default();
    for &i in coords {
        if i >= point.len() {
            return Err(Error::invalid(format!("coordinate {i} outside {} values", point.len())));
        }
        let mut plus = point.clone();
        plus.data_mut()[i] += eps;
        let mut minus = point.clone();
        minus.data_mut()[i] -= eps;
        let numeric = (eval(&plus)? - eval(&minus)?) / (2.0 * eps);
        let a = analytic.data()[i];
        let rel = relative_error(a, numeric);
        report.checked += 1;
        report.max_rel_error = report.max_rel_error.max(rel);
        if rel >= tol || !rel.is_finite() {
            report.failures.push(GradcheckFailure {
                index: i,
                analytic: a,
                numeric,
                rel_error: rel,
            });
        }
    }
    Ok(report)
}
