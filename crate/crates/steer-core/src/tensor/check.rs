//! Finite-difference gradient verification.
//!
//! `central_diff` evaluates a scalar function twice per coordinate and never
//! touches the tape, so it stays an independent oracle for the backward pass.

/// Central finite differences of `f` around `x0` with step `h`.
pub fn central_diff<F>(x0: &[f64], h: f64, mut f: F) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut grad = vec![0.0; x0.len()];
    let mut x = x0.to_vec();
    for i in 0..x0.len() {
        x[i] = x0[i] + h;
        let fp = f(&x);
        x[i] = x0[i] - h;
        let fm = f(&x);
        x[i] = x0[i];
        grad[i] = (fp - fm) / (2.0 * h);
    }
    grad
}

/// Relative error max(|a-b|) / max(1, |a|, |b|), elementwise maximum.
pub fn max_rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(1.0))
        .fold(0.0, f64::max)
}
