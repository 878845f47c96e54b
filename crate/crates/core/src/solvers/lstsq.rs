use nalgebra::DMatrix;

use super::DVec;

/// Coefficients `alpha` minimizing `|r0 + Σ alpha_i (d_i - r0)|`, with the
/// history `d` ordered oldest first.
///
/// Solved by QR. Rank deficiency is handled by dropping the oldest columns
/// until the triangle is well conditioned; dropped entries get `alpha = 0`.
pub fn min_residual_combination(r0: &DVec, d: &[&DVec]) -> Vec<f64> {
    let l = d.len();
    let mut alpha = vec![0.0; l];
    let scale = d.iter().map(|v| v.norm()).fold(r0.norm(), f64::max);
    if scale == 0.0 || !scale.is_finite() {
        return alpha;
    }
    for first in 0..l {
        let cols = l - first;
        if cols > r0.len() {
            continue;
        }
        let a = DMatrix::from_fn(r0.len(), cols, |i, j| d[first + j][i] - r0[i]);
        let qr = a.qr();
        let r = qr.r();
        let rmax = (0..cols).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
        let ok = rmax > 1e-14 * scale && (0..cols).all(|i| r[(i, i)].abs() > 1e-10 * rmax);
        if !ok {
            continue;
        }
        let rhs = -(qr.q().transpose() * r0);
        if let Some(sol) = r.solve_upper_triangular(&rhs) {
            if sol.iter().all(|v| v.is_finite()) {
                alpha[first..].copy_from_slice(sol.as_slice());
                return alpha;
            }
        }
    }
    alpha
}
