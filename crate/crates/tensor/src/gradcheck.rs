//! Central finite-difference gradient checking.
//!
//! The numeric side only ever calls the forward path, so it stays independent
//! of every analytic backward it validates. Relative error is measured
//! against max(|analytic|, |numeric|, floor); the floor keeps near-zero
//! gradient pairs from blowing up the ratio beyond what f64 differencing can
//! resolve.

#[derive(Debug, Clone, Copy)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub max_abs_err: f64,
    pub checked: usize,
}

impl GradCheckReport {
    pub fn merge(self, other: GradCheckReport) -> GradCheckReport {
        GradCheckReport {
            max_rel_err: self.max_rel_err.max(other.max_rel_err),
            max_abs_err: self.max_abs_err.max(other.max_abs_err),
            checked: self.checked + other.checked,
        }
    }

    pub fn empty() -> GradCheckReport {
        GradCheckReport {
            max_rel_err: 0.0,
            max_abs_err: 0.0,
            checked: 0,
        }
    }
}

pub const DEFAULT_STEP: f64 = 1e-6;
pub const REL_ERR_FLOOR: f64 = 1e-3;

/// Central difference d f / d x[i] for every i, where `f` maps the full
/// buffer to a scalar.
pub fn central_diff(f: &mut dyn FnMut(&[f64]) -> f64, x: &[f64], step: f64) -> Vec<f64> {
    let mut work = x.to_vec();
    let mut grads = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = work[i];
        work[i] = orig + step;
        let hi = f(&work);
        work[i] = orig - step;
        let lo = f(&work);
        work[i] = orig;
        grads.push((hi - lo) / (2.0 * step));
    }
    grads
}

/// Compare an analytic gradient against a numeric one.
pub fn compare(analytic: &[f64], numeric: &[f64]) -> GradCheckReport {
    assert_eq!(analytic.len(), numeric.len());
    let mut report = GradCheckReport::empty();
    for (a, n) in analytic.iter().zip(numeric.iter()) {
        let abs = (a - n).abs();
        let denom = a.abs().max(n.abs()).max(REL_ERR_FLOOR);
        report.max_abs_err = report.max_abs_err.max(abs);
        report.max_rel_err = report.max_rel_err.max(abs / denom);
        report.checked += 1;
    }
    report
}

/// Full check of one input buffer: numeric gradient of `f` vs `analytic`.
pub fn check(
    f: &mut dyn FnMut(&[f64]) -> f64,
    x: &[f64],
    analytic: &[f64],
    step: f64,
) -> GradCheckReport {
    let numeric = central_diff(f, x, step);
    compare(analytic, &numeric)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_gradient_matches() {
        // f(x) = sum(x^2), df/dx = 2x
        let x = vec![0.5, -1.5, 2.0];
        let mut f = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>();
        let analytic: Vec<f64> = x.iter().map(|a| 2.0 * a).collect();
        let report = check(&mut f, &x, &analytic, DEFAULT_STEP);
        assert!(report.max_rel_err < 1e-8, "{report:?}");
    }

    #[test]
    fn wrong_gradient_is_caught() {
        let x = vec![1.0, 2.0];
        let mut f = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>();
        let wrong = vec![2.0, 3.0]; // should be [2, 4]
        let report = check(&mut f, &x, &wrong, DEFAULT_STEP);
        assert!(report.max_rel_err > 0.1);
    }
}
