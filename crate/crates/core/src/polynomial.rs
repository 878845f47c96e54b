//! Per-step input polynomials and the call-history bookkeeping that picks
//! which constraints apply.
//!
//! Polynomials live in the monomial basis of `s = t - t_a` on `[t_a, t_b)`.
//! Every builder below is a closed-form solution of its constraint system.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolyError {
    #[error("degenerate step [{start}, {end})")]
    DegenerateStep { start: f64, end: f64 },
    #[error(
        "step [{cur_start}, {cur_end}) neither continues nor restarts [{prev_start}, {prev_end})"
    )]
    NonContiguousStep {
        prev_start: f64,
        prev_end: f64,
        cur_start: f64,
        cur_end: f64,
    },
    #[error("a replay call needs right boundary data")]
    MissingRightData,
    #[error("no committed left boundary data for a step starting at {0}")]
    MissingLeftData(f64),
    #[error("expected {expected} channels, got {actual}")]
    ChannelMismatch { expected: usize, actual: usize },
}

/// A macro-step `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    pub start: f64,
    pub end: f64,
}

impl Step {
    pub fn new(start: f64, end: f64) -> Result<Self, PolyError> {
        if end > start && start.is_finite() && end.is_finite() {
            Ok(Self { start, end })
        } else {
            Err(PolyError::DegenerateStep { start, end })
        }
    }

    pub fn size(&self) -> f64 {
        self.end - self.start
    }
}

/// Cubic (at most) polynomial on one step, for one input channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InputPolynomial {
    pub start: f64,
    pub end: f64,
    /// `p(t) = c[0] + c[1] s + c[2] s² + c[3] s³` with `s = t - start`.
    pub coeffs: [f64; 4],
}

impl InputPolynomial {
    pub fn constant(step: Step, v: f64) -> Self {
        Self {
            start: step.start,
            end: step.end,
            coeffs: [v, 0.0, 0.0, 0.0],
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        let s = t - self.start;
        let c = &self.coeffs;
        c[0] + s * (c[1] + s * (c[2] + s * c[3]))
    }

    pub fn derivative(&self, t: f64) -> f64 {
        let s = t - self.start;
        let c = &self.coeffs;
        c[1] + s * (2.0 * c[2] + s * 3.0 * c[3])
    }

    pub fn degree(&self) -> usize {
        self.coeffs.iter().rposition(|&c| c != 0.0).unwrap_or(0)
    }
}

/// Which constraint set the current call uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StepMode {
    /// New step starting where the previous one ended.
    MovingOn,
    /// Same step again, with right data from the solver iterate.
    Replay,
    /// Same start, different end: previous calls on this start are forgotten.
    ShrinkRetry,
    /// First call of the first step (or a shrink of it): constant inputs.
    FirstStep,
    /// Later calls on the first step: no left derivative constraint.
    FirstStepReplay,
}

impl StepMode {
    /// Whether the call uses right boundary data.
    pub fn uses_right_data(self) -> bool {
        matches!(self, StepMode::Replay | StepMode::FirstStepReplay)
    }
}

/// Per-channel boundary data. Right data is only present on replay calls.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BoundaryData {
    pub left_value: Vec<f64>,
    pub left_derivative: Vec<f64>,
    pub right_value: Option<Vec<f64>>,
    pub right_derivative: Option<Vec<f64>>,
}

/// Degree ≤ 2 with `p(a) = v`, `p'(a) = d`, `p(b) = v`.
pub fn build_moving_on(value: f64, derivative: f64, step: Step) -> InputPolynomial {
    let h = step.size();
    InputPolynomial {
        start: step.start,
        end: step.end,
        coeffs: [value, derivative, -derivative / h, 0.0],
    }
}

/// Cubic Hermite through `(v0, d0)` at the start and `(v1, d1)` at the end.
pub fn build_replay(v0: f64, d0: f64, v1: f64, d1: f64, step: Step) -> InputPolynomial {
    let h = step.size();
    let dv = v1 - v0;
    let c2 = (3.0 * dv / h - 2.0 * d0 - d1) / h;
    let c3 = (-2.0 * dv / h + d0 + d1) / (h * h);
    InputPolynomial {
        start: step.start,
        end: step.end,
        coeffs: [v0, d0, c2, c3],
    }
}

/// First-step polynomial: constant `u_init` without right data, otherwise
/// degree ≤ 2 with `p(a) = u_init`, `p(b) = v1`, `p'(b) = d1`.
pub fn build_first_step(u_init: f64, right: Option<(f64, f64)>, step: Step) -> InputPolynomial {
    match right {
        None => InputPolynomial::constant(step, u_init),
        Some((v1, d1)) => {
            let h = step.size();
            let dv = v1 - u_init;
            let c2 = (d1 * h - dv) / (h * h);
            let c1 = 2.0 * dv / h - d1;
            InputPolynomial {
                start: step.start,
                end: step.end,
                coeffs: [u_init, c1, c2, 0.0],
            }
        }
    }
}

/// Classify the current call from the previous call's step.
pub fn select_mode(prev: Option<Step>, cur: Step, t_init: f64) -> Result<StepMode, PolyError> {
    let first = cur.start == t_init;
    let Some(prev) = prev else {
        return Ok(StepMode::FirstStep);
    };
    if prev.end == cur.start {
        Ok(StepMode::MovingOn)
    } else if prev.start == cur.start && prev.end == cur.end {
        Ok(if first {
            StepMode::FirstStepReplay
        } else {
            StepMode::Replay
        })
    } else if prev.start == cur.start {
        Ok(if first {
            StepMode::FirstStep
        } else {
            StepMode::ShrinkRetry
        })
    } else {
        Err(PolyError::NonContiguousStep {
            prev_start: prev.start,
            prev_end: prev.end,
            cur_start: cur.start,
            cur_end: cur.end,
        })
    }
}

/// Input-side memory of one system across calls.
#[derive(Debug, Clone, PartialEq)]
pub struct InterfaceState {
    t_init: f64,
    u_init: Vec<f64>,
    last_step: Option<Step>,
    /// Value and derivative at the start of the uncommitted step.
    left: Option<(Vec<f64>, Vec<f64>)>,
    last_polys: Vec<InputPolynomial>,
}

impl InterfaceState {
    pub fn new(t_init: f64, u_init: Vec<f64>) -> Self {
        Self {
            t_init,
            u_init,
            last_step: None,
            left: None,
            last_polys: Vec::new(),
        }
    }

    pub fn n_channels(&self) -> usize {
        self.u_init.len()
    }

    pub fn u_init(&self) -> &[f64] {
        &self.u_init
    }

    pub fn set_u_init(&mut self, u_init: Vec<f64>) {
        self.u_init = u_init;
    }

    pub fn last_polynomials(&self) -> &[InputPolynomial] {
        &self.last_polys
    }

    /// Left data `(values, derivatives)` carried into the current step, if any.
    pub fn left_data(&self) -> Option<(&[f64], &[f64])> {
        self.left
            .as_ref()
            .map(|(v, d)| (v.as_slice(), d.as_slice()))
    }

    /// Build this call's polynomials. `right` holds the solver iterate's
    /// `(values, derivatives)` for this system and is ignored outside replays.
    pub fn build(
        &mut self,
        step: Step,
        right: Option<(&[f64], &[f64])>,
    ) -> Result<(StepMode, Vec<InputPolynomial>), PolyError> {
        let n = self.n_channels();
        let mut mode = select_mode(self.last_step, step, self.t_init)?;
        if let Some((v, d)) = right {
            for len in [v.len(), d.len()] {
                if len != n {
                    return Err(PolyError::ChannelMismatch {
                        expected: n,
                        actual: len,
                    });
                }
            }
        }
        if mode.uses_right_data() && right.is_none() {
            return Err(PolyError::MissingRightData);
        }
        // Without committed history only the initial step can be built.
        if matches!(
            mode,
            StepMode::MovingOn | StepMode::ShrinkRetry | StepMode::Replay
        ) && self.left.is_none()
        {
            if step.start == self.t_init {
                mode = StepMode::FirstStep;
            } else {
                return Err(PolyError::MissingLeftData(step.start));
            }
        }
        let polys: Vec<InputPolynomial> = match mode {
            StepMode::FirstStep => self
                .u_init
                .iter()
                .map(|&u| build_first_step(u, None, step))
                .collect(),
            StepMode::FirstStepReplay => {
                let (v, d) = right.expect("checked above");
                (0..n)
                    .map(|i| build_first_step(self.u_init[i], Some((v[i], d[i])), step))
                    .collect()
            }
            StepMode::MovingOn | StepMode::ShrinkRetry => {
                let (lv, ld) = self.left.as_ref().expect("checked above");
                (0..n)
                    .map(|i| build_moving_on(lv[i], ld[i], step))
                    .collect()
            }
            StepMode::Replay => {
                let (lv, ld) = self.left.as_ref().expect("checked above");
                let (v, d) = right.expect("checked above");
                (0..n)
                    .map(|i| build_replay(lv[i], ld[i], v[i], d[i], step))
                    .collect()
            }
        };
        self.last_step = Some(step);
        self.last_polys = polys.clone();
        Ok((mode, polys))
    }

    /// Freeze the last call's polynomials: their right boundary becomes the
    /// next step's left data.
    pub fn commit(&mut self) {
        if let Some(step) = self.last_step {
            let v = self.last_polys.iter().map(|p| p.eval(step.end)).collect();
            let d = self
                .last_polys
                .iter()
                .map(|p| p.derivative(step.end))
                .collect();
            self.left = Some((v, d));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn step(a: f64, b: f64) -> Step {
        Step::new(a, b).unwrap()
    }

    /// Solve the general constraint system with a dense solve as an oracle.
    fn oracle(rows: &[[f64; 4]], rhs: &[f64]) -> Vec<f64> {
        let n = rows.len();
        let m = nalgebra::DMatrix::from_fn(n, n, |i, j| rows[i][j]);
        let b = nalgebra::DVector::from_column_slice(rhs);
        m.lu().solve(&b).unwrap().iter().copied().collect()
    }

    fn value_row(s: f64) -> [f64; 4] {
        [1.0, s, s * s, s * s * s]
    }

    fn deriv_row(s: f64) -> [f64; 4] {
        [0.0, 1.0, 2.0 * s, 3.0 * s * s]
    }

    #[test]
    fn moving_on_examples() {
        let p = build_moving_on(1.0, 0.0, step(0.0, 1.0));
        assert_eq!(p.coeffs, [1.0, 0.0, 0.0, 0.0]);

        let p = build_moving_on(0.0, 1.0, step(0.0, 1.0));
        for t in [0.0, 0.25, 0.5, 1.0] {
            assert!((p.eval(t) - (t - t * t)).abs() < 1e-15);
        }
        assert!(p.degree() <= 2);
    }

    #[test]
    fn replay_examples() {
        let p = build_replay(2.5, 0.0, 2.5, 0.0, step(3.0, 4.0));
        assert_eq!(p.degree(), 0);
        let p = build_replay(0.0, 0.0, 1.0, 0.0, step(0.0, 1.0));
        for t in [0.0, 0.3, 0.5, 0.9] {
            assert!((p.eval(t) - (3.0 * t * t - 2.0 * t * t * t)).abs() < 1e-15);
        }
        assert_eq!(p.eval(0.5), 0.5);
    }

    #[test]
    fn first_step_examples() {
        assert_eq!(
            build_first_step(5.0, None, step(0.0, 0.1)).coeffs,
            [5.0, 0.0, 0.0, 0.0]
        );
        let p = build_first_step(0.0, Some((1.0, 1.0)), step(0.0, 1.0));
        assert_eq!(p.coeffs, [0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn select_mode_examples() {
        let t0 = 0.0;
        assert_eq!(
            select_mode(None, step(0.0, 1.0), t0).unwrap(),
            StepMode::FirstStep
        );
        assert_eq!(
            select_mode(Some(step(0.0, 1.0)), step(1.0, 2.0), t0).unwrap(),
            StepMode::MovingOn
        );
        assert_eq!(
            select_mode(Some(step(1.0, 2.0)), step(1.0, 2.0), t0).unwrap(),
            StepMode::Replay
        );
        assert_eq!(
            select_mode(Some(step(1.0, 2.0)), step(1.0, 1.5), t0).unwrap(),
            StepMode::ShrinkRetry
        );
        assert_eq!(
            select_mode(Some(step(0.0, 1.0)), step(0.0, 1.0), t0).unwrap(),
            StepMode::FirstStepReplay
        );
        assert_eq!(
            select_mode(Some(step(0.0, 1.0)), step(0.0, 0.5), t0).unwrap(),
            StepMode::FirstStep
        );
        assert!(matches!(
            select_mode(Some(step(0.0, 1.0)), step(2.0, 3.0), t0),
            Err(PolyError::NonContiguousStep { .. })
        ));
    }

    #[test]
    fn degenerate_steps_are_rejected() {
        assert!(Step::new(1.0, 1.0).is_err());
        assert!(Step::new(1.0, 0.5).is_err());
    }

    #[test]
    fn interface_state_protocol() {
        let mut st = InterfaceState::new(0.0, vec![2.0]);
        let s0 = step(0.0, 0.5);
        let (m, p) = st.build(s0, None).unwrap();
        assert_eq!(m, StepMode::FirstStep);
        assert_eq!(p[0].coeffs, [2.0, 0.0, 0.0, 0.0]);
        let (m, p) = st.build(s0, Some((&[3.0], &[1.0]))).unwrap();
        assert_eq!(m, StepMode::FirstStepReplay);
        assert_eq!(p[0].eval(0.0), 2.0);
        st.commit();
        let end = p[0];

        let s1 = step(0.5, 1.0);
        let (m, p) = st.build(s1, None).unwrap();
        assert_eq!(m, StepMode::MovingOn);
        assert_eq!(p[0].eval(0.5), end.eval(0.5));
        assert_eq!(p[0].derivative(0.5), end.derivative(0.5));
        let moving = p[0];

        let (m, _) = st.build(s1, Some((&[0.0], &[0.0]))).unwrap();
        assert_eq!(m, StepMode::Replay);
        let (m, p) = st.build(step(0.5, 0.75), None).unwrap();
        assert_eq!(m, StepMode::ShrinkRetry);
        // Same constraints as a moving-on call from the committed data.
        assert_eq!(
            p[0],
            build_moving_on(moving.coeffs[0], moving.coeffs[1], step(0.5, 0.75))
        );

        assert_eq!(
            st.build(step(0.5, 0.75), None),
            Err(PolyError::MissingRightData)
        );
        assert!(matches!(
            st.build(step(0.5, 0.75), Some((&[0.0, 1.0], &[0.0]))),
            Err(PolyError::ChannelMismatch { .. })
        ));
    }

    proptest! {
        #[test]
        fn replay_matches_dense_oracle(
            a in -5.0f64..5.0, h in 1e-3f64..2.0,
            v0 in -10.0f64..10.0, d0 in -10.0f64..10.0,
            v1 in -10.0f64..10.0, d1 in -10.0f64..10.0,
        ) {
            let s = step(a, a + h);
            let p = build_replay(v0, d0, v1, d1, s);
            let rows = [value_row(0.0), deriv_row(0.0), value_row(h), deriv_row(h)];
            let c = oracle(&rows, &[v0, d0, v1, d1]);
            let scale = 1.0 + v0.abs() + v1.abs() + d0.abs() + d1.abs();
            for (i, t) in [a, a + 0.3 * h, a + h].into_iter().enumerate() {
                let sv = t - a;
                let want = c[0] + c[1] * sv + c[2] * sv * sv + c[3] * sv * sv * sv;
                prop_assert!((p.eval(t) - want).abs() <= 1e-9 * scale, "point {}", i);
            }
            prop_assert!((p.eval(a) - v0).abs() <= 1e-12 * scale);
            prop_assert!((p.derivative(a) - d0).abs() <= 1e-12 * scale);
            prop_assert!((p.eval(a + h) - v1).abs() <= 1e-12 * scale);
            prop_assert!((p.derivative(a + h) - d1).abs() <= 1e-11 * scale);
        }

        #[test]
        fn moving_on_constraints_hold(
            a in -5.0f64..5.0, h in 1e-3f64..2.0, v in -10.0f64..10.0, d in -10.0f64..10.0,
        ) {
            let p = build_moving_on(v, d, step(a, a + h));
            let scale = 1.0 + v.abs() + d.abs();
            prop_assert!(p.degree() <= 2);
            prop_assert!((p.eval(a) - v).abs() <= 1e-12 * scale);
            prop_assert!((p.derivative(a) - d).abs() <= 1e-12 * scale);
            prop_assert!((p.eval(a + h) - v).abs() <= 1e-12 * scale);
        }

        #[test]
        fn first_step_matches_dense_oracle(
            h in 1e-3f64..2.0, u in -10.0f64..10.0, v1 in -10.0f64..10.0, d1 in -10.0f64..10.0,
        ) {
            let p = build_first_step(u, Some((v1, d1)), step(0.0, h));
            let rows = [
                [1.0, 0.0, 0.0, 0.0],
                [1.0, h, h * h, 0.0],
                [0.0, 1.0, 2.0 * h, 0.0],
            ];
            let m = nalgebra::Matrix3::from_fn(|i, j| rows[i][j]);
            let c = m.lu().solve(&nalgebra::Vector3::new(u, v1, d1)).unwrap();
            let scale = 1.0 + u.abs() + v1.abs() + d1.abs();
            for t in [0.0, 0.5 * h, h] {
                prop_assert!((p.eval(t) - (c[0] + c[1] * t + c[2] * t * t)).abs() <= 1e-9 * scale);
            }
            prop_assert!((p.derivative(h) - d1).abs() <= 1e-11 * scale);
            prop_assert!((p.eval(h) - v1).abs() <= 1e-12 * scale);
        }

        #[test]
        fn committed_sequence_is_c1(
            rights in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 1..8),
            sizes in prop::collection::vec(0.01f64..0.5, 8),
        ) {
            let mut st = InterfaceState::new(0.0, vec![1.0]);
            let mut t = 0.0;
            let mut prev: Option<InputPolynomial> = None;
            for (k, (v, d)) in rights.iter().enumerate() {
                let s = step(t, t + sizes[k]);
                let (_, p0) = st.build(s, None).unwrap();
                let (_, p) = st.build(s, Some((&[*v], &[*d]))).unwrap();
                if let Some(q) = prev {
                    prop_assert!((q.eval(t) - p[0].eval(t)).abs() <= 1e-10);
                    prop_assert!((q.derivative(t) - p[0].derivative(t)).abs() <= 1e-10);
                    prop_assert!((q.eval(t) - p0[0].eval(t)).abs() <= 1e-10);
                }
                st.commit();
                prev = Some(p[0]);
                t = s.end;
            }
        }
    }
}
