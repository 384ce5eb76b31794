//! Central finite-difference gradient checking. The forward evaluation is the
//! only thing shared with the reverse pass, so this serves as an independent
//! oracle for every backward rule.

use crate::error::Result;

/// Central finite differences of a scalar function at `x` with step `h`.
pub fn central_diff<F>(f: F, x: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    let mut grad = vec![0.0; x.len()];
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        probe[i] = x[i] + h;
        let fp = f(&probe)?;
        probe[i] = x[i] - h;
        let fm = f(&probe)?;
        probe[i] = x[i];
        grad[i] = (fp - fm) / (2.0 * h);
    }
    Ok(grad)
}

/// Worst-case discrepancy between an analytic and a numeric gradient:
/// relative error where the analytic entry is large, absolute error where it
/// is below `abs_floor`.
pub fn max_discrepancy(analytic: &[f64], numeric: &[f64], abs_floor: f64) -> (f64, f64) {
    let mut max_rel: f64 = 0.0;
    let mut max_abs_small: f64 = 0.0;
    for (&a, &n) in analytic.iter().zip(numeric) {
        if a.abs() < abs_floor {
            max_abs_small = max_abs_small.max((a - n).abs());
        } else {
            max_rel = max_rel.max((a - n).abs() / a.abs().max(n.abs()));
        }
    }
    (max_rel, max_abs_small)
}

/// Assert-style check used by tests: relative error at most `rel_tol` on
/// large entries, absolute error at most `abs_tol` on near-zero entries.
pub fn check_close(
    analytic: &[f64],
    numeric: &[f64],
    rel_tol: f64,
    abs_tol: f64,
) -> std::result::Result<(), String> {
    if analytic.len() != numeric.len() {
        return Err(format!(
            "length mismatch: {} vs {}",
            analytic.len(),
            numeric.len()
        ));
    }
    let (rel, abs_small) = max_discrepancy(analytic, numeric, 1e-8);
    if rel > rel_tol {
        return Err(format!("max relative error {rel:.3e} exceeds {rel_tol:.1e}"));
    }
    if abs_small > abs_tol {
        return Err(format!(
            "max absolute error {abs_small:.3e} on near-zero entries exceeds {abs_tol:.1e}"
        ));
    }
    Ok(())
}
