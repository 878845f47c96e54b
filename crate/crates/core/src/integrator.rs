//! Explicit Runge-Kutta micro-step integrators used inside slaves.

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Classic fourth-order scheme with a fixed micro-step.
    Rk4,
    /// Dormand-Prince 5(4) with step-size control.
    Rk45,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntegratorConfig {
    pub method: Method,
    /// Fixed step for RK4, initial trial step for RK45.
    pub micro_step: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Window of the backward-difference output derivative. `None` means
    /// `1e-6` times the macro-step size.
    pub fd_derivative_dt: Option<f64>,
    pub max_micro_steps: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            method: Method::Rk45,
            micro_step: 1e-3,
            rel_tol: 1e-8,
            abs_tol: 1e-8,
            fd_derivative_dt: None,
            max_micro_steps: 1_000_000,
        }
    }
}

impl IntegratorConfig {
    pub fn rk4(micro_step: f64) -> Self {
        Self {
            method: Method::Rk4,
            micro_step,
            ..Self::default()
        }
    }

    pub fn rk45(rel_tol: f64, abs_tol: f64) -> Self {
        Self {
            rel_tol,
            abs_tol,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), IntegrationError> {
        let ok = self.micro_step > 0.0
            && self.rel_tol > 0.0
            && self.abs_tol > 0.0
            && self.fd_derivative_dt.is_none_or(|w| w > 0.0)
            && self.max_micro_steps > 0;
        if ok {
            Ok(())
        } else {
            Err(IntegrationError::BadConfig)
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IntegrationError {
    #[error("integrator configuration has a non-positive step or tolerance")]
    BadConfig,
    #[error("step size underflow at t = {t}")]
    StepUnderflow { t: f64 },
    #[error("non-finite state at t = {t}")]
    NonFinite { t: f64 },
    #[error("more than {0} micro-steps")]
    TooManySteps(usize),
}

/// Integrate `dx/dt = f(t, x)` from `t0` to `t1` in place.
///
/// Returns the number of accepted micro-steps.
pub fn integrate<F>(
    mut f: F,
    t0: f64,
    t1: f64,
    x: &mut [f64],
    cfg: &IntegratorConfig,
) -> Result<usize, IntegrationError>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    cfg.validate()?;
    if t1 <= t0 {
        return Ok(0);
    }
    match cfg.method {
        Method::Rk4 => rk4(&mut f, t0, t1, x, cfg),
        Method::Rk45 => dopri5(&mut f, t0, t1, x, cfg),
    }
}

fn check_finite(t: f64, x: &[f64]) -> Result<(), IntegrationError> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(IntegrationError::NonFinite { t })
    }
}

fn rk4<F>(
    f: &mut F,
    t0: f64,
    t1: f64,
    x: &mut [f64],
    cfg: &IntegratorConfig,
) -> Result<usize, IntegrationError>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let span = t1 - t0;
    // Small slack so spans that are whole multiples of the step are not split.
    let n = ((span / cfg.micro_step) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
    if n > cfg.max_micro_steps {
        return Err(IntegrationError::TooManySteps(cfg.max_micro_steps));
    }
    let h = span / n as f64;
    let d = x.len();
    let (mut k1, mut k2, mut k3, mut k4, mut tmp) = (
        vec![0.0; d],
        vec![0.0; d],
        vec![0.0; d],
        vec![0.0; d],
        vec![0.0; d],
    );
    for i in 0..n {
        let t = t0 + i as f64 * h;
        f(t, x, &mut k1);
        for j in 0..d {
            tmp[j] = x[j] + 0.5 * h * k1[j];
        }
        f(t + 0.5 * h, &tmp, &mut k2);
        for j in 0..d {
            tmp[j] = x[j] + 0.5 * h * k2[j];
        }
        f(t + 0.5 * h, &tmp, &mut k3);
        for j in 0..d {
            tmp[j] = x[j] + h * k3[j];
        }
        f(t + h, &tmp, &mut k4);
        for j in 0..d {
            x[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
        check_finite(t + h, x)?;
    }
    Ok(n)
}

// Dormand-Prince tableau.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

fn dopri5<F>(
    f: &mut F,
    t0: f64,
    t1: f64,
    x: &mut [f64],
    cfg: &IntegratorConfig,
) -> Result<usize, IntegrationError>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let d = x.len();
    let mut k = vec![vec![0.0; d]; 7];
    let mut tmp = vec![0.0; d];
    let mut x5 = vec![0.0; d];
    let mut t = t0;
    let mut h = cfg.micro_step.min(t1 - t0);
    let mut accepted = 0usize;
    let mut attempts = 0usize;
    f(t, x, &mut k[0]);
    while t < t1 {
        attempts += 1;
        if attempts > cfg.max_micro_steps {
            return Err(IntegrationError::TooManySteps(cfg.max_micro_steps));
        }
        let last = t + h >= t1 || (t1 - (t + h)) < 1e-12 * h;
        if last {
            h = t1 - t;
        }
        if h <= 1e-14 * t.abs().max(1.0) {
            return Err(IntegrationError::StepUnderflow { t });
        }
        for s in 1..7 {
            let (done, rest) = k.split_at_mut(s);
            for j in 0..d {
                tmp[j] = x[j] + h * done.iter().zip(&A[s]).map(|(ks, a)| a * ks[j]).sum::<f64>();
            }
            f(t + C[s] * h, &tmp, &mut rest[0]);
        }
        let mut err = 0.0;
        for j in 0..d {
            let mut hi = x[j];
            let mut lo = x[j];
            for s in 0..7 {
                hi += h * B5[s] * k[s][j];
                lo += h * B4[s] * k[s][j];
            }
            x5[j] = hi;
            let sc = cfg.abs_tol + cfg.rel_tol * x[j].abs().max(hi.abs());
            err += ((hi - lo) / sc).powi(2);
        }
        let err = if d == 0 { 0.0 } else { (err / d as f64).sqrt() };
        if !err.is_finite() {
            h *= 0.2;
            continue;
        }
        if err <= 1.0 {
            t = if last { t1 } else { t + h };
            x.copy_from_slice(&x5);
            check_finite(t, x)?;
            // FSAL: the last stage is f at the new point.
            k.swap(0, 6);
            accepted += 1;
            let fac = if err == 0.0 {
                5.0
            } else {
                (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
            };
            h *= fac;
        } else {
            h *= (0.9 * err.powf(-0.2)).clamp(0.2, 1.0);
        }
    }
    Ok(accepted)
}
