//! Central finite differences for gradient verification.
//!
//! Deliberately independent of the tangent-linear and adjoint machinery it is
//! used to check: it only ever calls the supplied scalar function.

/// Central-difference gradient of `f` at `point`.
///
/// The step for coordinate `i` is `eps * (1 + |point[i]|)` so the
/// perturbation stays meaningful across coordinate scales.
pub fn central_gradient(
    mut f: impl FnMut(&[f64]) -> f64,
    point: &[f64],
    eps: f64,
) -> Vec<f64> {
    let mut x = point.to_vec();
    let mut grad = Vec::with_capacity(point.len());
    for i in 0..point.len() {
        let h = eps * (1.0 + point[i].abs());
        x[i] = point[i] + h;
        let f_plus = f(&x);
        x[i] = point[i] - h;
        let f_minus = f(&x);
        x[i] = point[i];
        grad.push((f_plus - f_minus) / (2.0 * h));
    }
    grad
}

/// Central-difference derivatives for a subset of coordinates.
pub fn central_gradient_at(
    mut f: impl FnMut(&[f64]) -> f64,
    point: &[f64],
    coords: &[usize],
    eps: f64,
) -> Vec<f64> {
    let mut x = point.to_vec();
    let mut grad = Vec::with_capacity(coords.len());
    for &i in coords {
        let h = eps * (1.0 + point[i].abs());
        x[i] = point[i] + h;
        let f_plus = f(&x);
        x[i] = point[i] - h;
        let f_minus = f(&x);
        x[i] = point[i];
        grad.push((f_plus - f_minus) / (2.0 * h));
    }
    grad
}

/// Largest componentwise deviation between two gradients, relative to the
/// overall gradient scale `max(||a||_inf, ||b||_inf)`.
pub fn max_relative_error(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "gradient length mismatch");
    let scale = a
        .iter()
        .chain(b)
        .fold(0.0f64, |m, v| m.max(v.abs()))
        .max(f64::MIN_POSITIVE);
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0f64, f64::max)
        / scale
}
