use super::{Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Outcome of comparing analytic gradients with central differences.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    /// `(parameter index, flat entry index)` of the largest relative error.
    pub worst: Option<(usize, usize)>,
    pub entries_checked: usize,
    pub tol: f64,
    pub passed: bool,
}

/// Magnitude below which relative errors are measured against this floor
/// instead of the gradient itself.
pub const REL_ERROR_FLOOR: f64 = 1e-6;

/// Checks every entry of `params` for the scalar function `f`.
///
/// `f` receives a fresh tape and one leaf per parameter and must return a
/// `1 × 1` output; it is called `1 + 2 · entries` times.
pub fn grad_check<F>(f: F, params: &[Tensor], eps: f64, tol: f64) -> Result<GradCheckReport>
where
    F: Fn(&Tape, &[Var]) -> Result<Var>,
{
    if !(1e-7..=1e-3).contains(&eps) {
        return Err(Error::op("grad_check", format!("eps {eps} outside [1e-7, 1e-3]")));
    }
    let eval = |ps: &[Tensor]| -> Result<f64> {
        let tape = Tape::new();
        let vars: Vec<Var> = ps.iter().map(|p| tape.constant(p.clone())).collect();
        let out = f(&tape, &vars)?;
        let v = tape.value(out).item();
        if !v.is_finite() {
            return Err(Error::NonFinite { op: "grad_check" });
        }
        Ok(v)
    };

    let tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.param(p.clone())).collect();
    let out = f(&tape, &vars)?;
    if !tape.value(out).item().is_finite() {
        return Err(Error::NonFinite { op: "grad_check" });
    }
    let grads = tape.backward(out)?;

    let mut work: Vec<Tensor> = params.to_vec();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        max_abs_error: 0.0,
        worst: None,
        entries_checked: 0,
        tol,
        passed: true,
    };
    for (pi, p) in params.iter().enumerate() {
        let analytic = grads.get_or_zeros(vars[pi], p.shape());
        for e in 0..p.len() {
            let orig = p.data()[e];
            work[pi].data_mut()[e] = orig + eps;
            let up = eval(&work)?;
            work[pi].data_mut()[e] = orig - eps;
            let down = eval(&work)?;
            work[pi].data_mut()[e] = orig;

            let numeric = (up - down) / (2.0 * eps);
            let a = analytic.data()[e];
            let abs = (a - numeric).abs();
            let rel = abs / a.abs().max(numeric.abs()).max(REL_ERROR_FLOOR);
            report.max_abs_error = report.max_abs_error.max(abs);
            if rel > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = report.max_rel_error.max(rel);
                report.worst = Some((pi, e));
            }
            report.entries_checked += 1;
        }
    }
    report.passed = report.max_rel_error <= tol;
    Ok(report)
}
