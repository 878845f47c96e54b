use nalgebra::DMatrix;

use super::DVec;

#[derive(Debug, Clone, PartialEq)]
pub struct GmresReport {
    pub x: DVec,
    pub converged: bool,
    /// The Krylov basis became invariant while the residual was still large.
    pub breakdown: bool,
    pub iterations: usize,
    pub residual_norm: f64,
}

/// Restarted GMRES for `A x = b` from `x = 0`, with modified Gram-Schmidt
/// Arnoldi and Givens rotations. Stops when `|b - A x| <= rtol |b|` or after
/// `max_it` matrix-vector products in total.
pub fn gmres<M, E>(
    mut matvec: M,
    b: &DVec,
    restart: usize,
    rtol: f64,
    max_it: usize,
) -> Result<GmresReport, E>
where
    M: FnMut(&DVec) -> Result<DVec, E>,
{
    let n = b.len();
    let bnorm = b.norm();
    let mut x = DVec::zeros(n);
    let target = rtol * bnorm;
    if bnorm == 0.0 {
        return Ok(GmresReport {
            x,
            converged: true,
            breakdown: false,
            iterations: 0,
            residual_norm: 0.0,
        });
    }
    let restart = restart.max(1);
    let mut total = 0;
    let mut r = b.clone();
    let mut beta = bnorm;
    loop {
        let mut v: Vec<DVec> = vec![&r / beta];
        let mut h = DMatrix::<f64>::zeros(restart + 1, restart);
        let mut cs = vec![0.0; restart];
        let mut sn = vec![0.0; restart];
        let mut g = DVec::zeros(restart + 1);
        g[0] = beta;
        let mut k = 0;
        let mut invariant = false;
        while k < restart && total < max_it {
            let mut w = matvec(&v[k])?;
            total += 1;
            let w0 = w.norm();
            for (i, vi) in v.iter().enumerate() {
                let hik = w.dot(vi);
                h[(i, k)] = hik;
                w.axpy(-hik, vi, 1.0);
            }
            let wn = w.norm();
            h[(k + 1, k)] = wn;
            for i in 0..k {
                let (a, c) = (h[(i, k)], h[(i + 1, k)]);
                h[(i, k)] = cs[i] * a + sn[i] * c;
                h[(i + 1, k)] = -sn[i] * a + cs[i] * c;
            }
            let (a, c) = (h[(k, k)], h[(k + 1, k)]);
            let d = a.hypot(c);
            if d == 0.0 {
                // Singular operator on the current basis.
                return Ok(GmresReport {
                    x,
                    converged: false,
                    breakdown: true,
                    iterations: total,
                    residual_norm: g[k].abs(),
                });
            }
            cs[k] = a / d;
            sn[k] = c / d;
            h[(k, k)] = d;
            h[(k + 1, k)] = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            k += 1;
            if g[k].abs() <= target {
                break;
            }
            if wn <= 1e-14 * w0 {
                invariant = true;
                break;
            }
            v.push(w / wn);
        }
        // Back substitution on the k×k triangle.
        let mut y = DVec::zeros(k);
        for i in (0..k).rev() {
            let mut s = g[i];
            for j in i + 1..k {
                s -= h[(i, j)] * y[j];
            }
            y[i] = s / h[(i, i)];
        }
        for (j, yj) in y.iter().enumerate() {
            x.axpy(*yj, &v[j], 1.0);
        }
        let est = g[k].abs();
        if est <= target || invariant {
            // The invariant case is a lucky breakdown: the Krylov space holds
            // the solution, so the residual is exact up to rounding.
            return Ok(GmresReport {
                x,
                converged: true,
                breakdown: false,
                iterations: total,
                residual_norm: est,
            });
        }
        if total >= max_it {
            return Ok(GmresReport {
                x,
                converged: false,
                breakdown: false,
                iterations: total,
                residual_norm: est,
            });
        }
        r = b - matvec(&x)?;
        total += 1;
        beta = r.norm();
        if beta <= target {
            return Ok(GmresReport {
                x,
                converged: true,
                breakdown: false,
                iterations: total,
                residual_norm: beta,
            });
        }
    }
}
