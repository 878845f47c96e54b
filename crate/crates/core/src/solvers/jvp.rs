use thiserror::Error;

use super::{DVec, EvalError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum JvpError {
    #[error("zero direction vector")]
    ZeroDirection,
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Forward-difference directional derivative `(F(x + h v) - F(x)) / h` with
/// `h = h_scale * sqrt(eps) * (1 + |x|) / |v|`. One evaluation of `f`.
pub fn jvp_fd<F>(f: &mut F, x: &DVec, v: &DVec, fx: &DVec, h_scale: f64) -> Result<DVec, JvpError>
where
    F: FnMut(&DVec) -> Result<DVec, EvalError>,
{
    let vnorm = v.norm();
    if vnorm == 0.0 {
        return Err(JvpError::ZeroDirection);
    }
    let h = h_scale * f64::EPSILON.sqrt() * (1.0 + x.norm()) / vnorm;
    let xp = x + v * h;
    let fp = f(&xp)?;
    Ok((fp - fx) / h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solvers::test_util::lcg_matrix;

    #[test]
    fn linear_map_is_reproduced() {
        let a = lcg_matrix(5, 7);
        let aa = a.clone();
        let mut f = move |x: &DVec| Ok(&aa * x);
        let x = DVec::from_fn(5, |i, _| i as f64 - 2.0);
        let v = DVec::from_fn(5, |i, _| 1.0 / (i as f64 + 1.0));
        let fx = f(&x).unwrap();
        let jv = jvp_fd(&mut f, &x, &v, &fx, 1.0).unwrap();
        let exact = &a * &v;
        assert!((jv - &exact).norm() <= 1e-6 * exact.norm());
    }

    #[test]
    fn scaling_direction_scales_result() {
        let mut f = |x: &DVec| Ok(x.map(|t| t.sin()));
        let x = DVec::from_vec(vec![0.3, -1.2]);
        let v = DVec::from_vec(vec![1.0, 2.0]);
        let fx = f(&x).unwrap();
        let a = jvp_fd(&mut f, &x, &v, &fx, 1.0).unwrap();
        let b = jvp_fd(&mut f, &x, &(&v * 10.0), &fx, 1.0).unwrap();
        assert!((b - a * 10.0).norm() <= 1e-6 * 10.0 * v.norm());
    }

    #[test]
    fn square_derivative() {
        let mut calls = 0;
        let mut f = |x: &DVec| {
            calls += 1;
            Ok(x.map(|t| t * t))
        };
        let x = DVec::from_element(1, 2.0);
        let fx = DVec::from_element(1, 4.0);
        let jv = jvp_fd(&mut f, &x, &DVec::from_element(1, 1.0), &fx, 1.0).unwrap();
        assert!((jv[0] - 4.0).abs() < 1e-5);
        assert_eq!(calls, 1);
    }

    #[test]
    fn zero_direction_is_an_error() {
        let mut f = |x: &DVec| Ok(x.clone());
        let x = DVec::zeros(2);
        assert_eq!(
            jvp_fd(&mut f, &x, &x, &x, 1.0),
            Err(JvpError::ZeroDirection)
        );
    }
}
