//! Fixed-step integration of a flow field: forward Euler (the discretization
//! under study) and classical RK4 as a continuous-time reference.

use crate::error::{Error, Result};
use crate::flows::{eval_field, FlowField, FlowState};
use crate::linalg;
use crate::lyapunov::{self, DiagnosticsRecord, LyapunovSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    Euler,
    Rk4,
}

impl Scheme {
    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Euler => "euler",
            Scheme::Rk4 => "rk4",
        }
    }
}

impl std::str::FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euler" => Ok(Scheme::Euler),
            "rk4" => Ok(Scheme::Rk4),
            _ => Err(Error::invalid("scheme", format!("unknown scheme `{s}`"))),
        }
    }
}

/// States whose norm exceeds `DIVERGENCE_FACTOR·(1 + ‖s₀‖)` stop the run.
pub const DIVERGENCE_FACTOR: f64 = 1e8;

#[derive(Debug, Clone)]
pub struct IntegrateOptions {
    pub h: f64,
    pub n_steps: usize,
    pub scheme: Scheme,
    pub diag: Option<LyapunovSpec>,
    /// Diagnostics are evaluated at steps `0, stride, 2·stride, …` and at the last step.
    pub stride: usize,
    /// Keep every state; otherwise only the first and last are stored.
    pub record_states: bool,
}

impl IntegrateOptions {
    pub fn new(h: f64, n_steps: usize, scheme: Scheme) -> Self {
        Self {
            h,
            n_steps,
            scheme,
            diag: None,
            stride: 1,
            record_states: true,
        }
    }

    pub fn with_diag(mut self, spec: LyapunovSpec, stride: usize) -> Self {
        self.diag = Some(spec);
        self.stride = stride.max(1);
        self
    }

    pub fn states_off(mut self) -> Self {
        self.record_states = false;
        self
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub states: Vec<FlowState>,
    pub records: Vec<DiagnosticsRecord>,
    /// `‖ẋ_k‖²` at every step `k < steps_taken`; for the bilevel flow this is `‖∇_x E_λ‖²`.
    pub outer_grad_sq: Vec<f64>,
    pub h: f64,
    pub scheme: Scheme,
    pub steps_taken: usize,
    pub diverged: bool,
}

impl Trajectory {
    pub fn last(&self) -> &FlowState {
        self.states.last().expect("trajectory holds the initial state")
    }
}

fn step(field: &FlowField<'_>, s: &FlowState, k1: &FlowState, h: f64, scheme: Scheme) -> Result<FlowState> {
    match scheme {
        Scheme::Euler => Ok(s.axpy(h, k1)),
        Scheme::Rk4 => {
            let k2 = eval_field(field, &s.axpy(h / 2.0, k1))?;
            let k3 = eval_field(field, &s.axpy(h / 2.0, &k2))?;
            let k4 = eval_field(field, &s.axpy(h, &k3))?;
            let mut next = s.clone();
            for (part, w) in [(k1, 1.0), (&k2, 2.0), (&k3, 2.0), (&k4, 1.0)] {
                next = next.axpy(h * w / 6.0, part);
            }
            Ok(next)
        }
    }
}

pub fn integrate(field: &FlowField<'_>, state0: &FlowState, opts: &IntegrateOptions) -> Result<Trajectory> {
    if !(opts.h > 0.0 && opts.h.is_finite()) {
        return Err(Error::invalid("h", "must be a finite value > 0"));
    }
    if opts.n_steps == 0 {
        return Err(Error::invalid("n_steps", "must be >= 1"));
    }
    field.check_shape(state0)?;
    state0.check_finite()?;
    if let Some(spec) = &opts.diag {
        spec.validate(field.problem())?;
    }
    let h = opts.h;
    let limit = DIVERGENCE_FACTOR * (1.0 + state0.norm());
    let mut s = state0.clone();
    s.t = 0.0;
    let mut traj = Trajectory {
        states: vec![s.clone()],
        records: Vec::new(),
        outer_grad_sq: Vec::with_capacity(opts.n_steps),
        h,
        scheme: opts.scheme,
        steps_taken: 0,
        diverged: false,
    };
    let diag = |s: &FlowState, out: &mut Vec<DiagnosticsRecord>| -> Result<()> {
        if let Some(spec) = &opts.diag {
            out.push(lyapunov::diagnostics(spec, field.problem(), s)?);
        }
        Ok(())
    };
    diag(&s, &mut traj.records)?;
    for k in 0..opts.n_steps {
        let advanced = eval_field(field, &s).and_then(|k1| {
            let g = linalg::norm_sq(&k1.x);
            step(field, &s, &k1, h, opts.scheme).map(|n| (g, n))
        });
        let (g, mut next) = match advanced {
            Ok(v) => v,
            Err(Error::NonFinite { .. }) => {
                traj.diverged = true;
                break;
            }
            Err(e) => return Err(e),
        };
        traj.outer_grad_sq.push(g);
        next.t = (k + 1) as f64 * h;
        traj.steps_taken = k + 1;
        let n = next.norm();
        if !(n <= limit) {
            traj.diverged = true;
            traj.states.push(next);
            break;
        }
        let last = k + 1 == opts.n_steps;
        if (k + 1) % opts.stride == 0 || last {
            diag(&next, &mut traj.records)?;
        }
        if opts.record_states || last {
            traj.states.push(next.clone());
        }
        s = next;
    }
    lyapunov::fill_w_dot(&mut traj.records);
    Ok(traj)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    /// `W(u + hG(u)) − W(u)`
    pub lhs: f64,
    /// `−(h/2)(c₁‖∇Φ‖² + c₂‖r_y‖² + c₃‖r_z‖²)`
    pub rhs: f64,
    /// `rhs − lhs`; nonnegative when the one-step inequality holds.
    pub margin: f64,
}

/// Evaluates both sides of the one-step Euler decrease inequality at `state`.
pub fn one_step_check(
    spec: &LyapunovSpec,
    field: &FlowField<'_>,
    state: &FlowState,
    h: f64,
    c: [f64; 3],
) -> Result<StepReport> {
    let p = field.problem();
    let here = lyapunov::diagnostics(spec, p, state)?;
    let g = eval_field(field, state)?;
    let next = state.axpy(h, &g);
    let w_next = lyapunov::lyapunov_value(spec, p, &next)?;
    let lhs = w_next - here.w;
    let rhs = -(h / 2.0) * (c[0] * here.grad_phi_sq + c[1] * here.r_y_sq + c[2] * here.r_z_sq);
    Ok(StepReport {
        lhs,
        rhs,
        margin: rhs - lhs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flows::{FlowKind, HypergradOptions};
    use crate::problems::make_quadratic_bilevel;

    fn ideal_run(h: f64, n: usize, scheme: Scheme) -> f64 {
        let p = make_quadratic_bilevel(0.5, 1.0);
        let kind = FlowKind::IdealHypergrad(HypergradOptions::default());
        let field = FlowField::new(&kind, &p).unwrap();
        let tr = integrate(&field, &FlowState::outer(vec![1.0]), &IntegrateOptions::new(h, n, scheme))
            .unwrap();
        assert_eq!(tr.states.len(), n + 1);
        assert_eq!(tr.last().t, n as f64 * h);
        tr.last().x[0]
    }

    #[test]
    fn ideal_flow_matches_closed_form() {
        let target = (-1.0f64).exp();
        assert!((ideal_run(1e-3, 4000, Scheme::Euler) - target).abs() <= 5e-4);
        assert!((ideal_run(1e-2, 400, Scheme::Rk4) - target).abs() <= 1e-8);
    }

    #[test]
    fn times_are_exact_multiples() {
        let p = make_quadratic_bilevel(0.5, 1.0);
        let kind = FlowKind::IdealHypergrad(HypergradOptions::default());
        let field = FlowField::new(&kind, &p).unwrap();
        let tr = integrate(&field, &FlowState::outer(vec![1.0]), &IntegrateOptions::new(0.1, 50, Scheme::Euler))
            .unwrap();
        for (k, s) in tr.states.iter().enumerate() {
            assert_eq!(s.t, k as f64 * 0.1);
        }
    }

    #[test]
    fn stationary_start_is_constant() {
        let p = make_quadratic_bilevel(0.5, 1.0);
        let kind = FlowKind::Bilevel {
            lambda: 10.0,
            delta: 1.0,
            eta: 1.0,
        };
        let field = FlowField::new(&kind, &p).unwrap();
        let s0 = FlowState::new(vec![0.0], vec![0.0], Some(vec![0.0]));
        let tr = integrate(&field, &s0, &IntegrateOptions::new(0.1, 20, Scheme::Rk4)).unwrap();
        assert!(tr.states.iter().all(|s| s.norm() == 0.0));
    }

    #[test]
    fn divergence_is_flagged_not_raised() {
        let p = make_quadratic_bilevel(0.5, 1.0);
        let kind = FlowKind::Bilevel {
            lambda: 10.0,
            delta: 1.0,
            eta: 1.0,
        };
        let field = FlowField::new(&kind, &p).unwrap();
        let s0 = FlowState::new(vec![1.0], vec![0.0], Some(vec![0.0]));
        let tr = integrate(&field, &s0, &IntegrateOptions::new(1.0, 10_000, Scheme::Euler)).unwrap();
        assert!(tr.diverged);
        assert!(tr.steps_taken < 10_000);
    }

    #[test]
    fn rejects_bad_step_parameters() {
        let p = make_quadratic_bilevel(0.5, 1.0);
        let kind = FlowKind::IdealHypergrad(HypergradOptions::default());
        let field = FlowField::new(&kind, &p).unwrap();
        let s0 = FlowState::outer(vec![1.0]);
        assert!(integrate(&field, &s0, &IntegrateOptions::new(0.1, 0, Scheme::Euler)).is_err());
        assert!(integrate(&field, &s0, &IntegrateOptions::new(-0.1, 5, Scheme::Euler)).is_err());
    }

    #[test]
    fn stride_keeps_last_record() {
        let p = make_quadratic_bilevel(0.5, 1.0);
        let kind = FlowKind::Bilevel {
            lambda: 10.0,
            delta: 1.0,
            eta: 1.0,
        };
        let field = FlowField::new(&kind, &p).unwrap();
        let s0 = FlowState::new(vec![1.0], vec![0.0], Some(vec![0.0]));
        let opts = IntegrateOptions::new(0.01, 25, Scheme::Euler)
            .with_diag(LyapunovSpec::bilevel(0.5, 0.5, 10.0), 10)
            .states_off();
        let tr = integrate(&field, &s0, &opts).unwrap();
        let ts: Vec<f64> = tr.records.iter().map(|r| r.t).collect();
        assert_eq!(ts, vec![0.0, 0.1, 0.2, 0.25]);
        assert_eq!(tr.states.len(), 2);
        assert_eq!(tr.outer_grad_sq.len(), 25);
    }

    #[test]
    fn one_step_at_stationary_state_is_zero() {
        let p = make_quadratic_bilevel(0.5, 1.0);
        let kind = FlowKind::Bilevel {
            lambda: 10.0,
            delta: 1.0,
            eta: 1.0,
        };
        let field = FlowField::new(&kind, &p).unwrap();
        let s = FlowState::new(vec![0.0], vec![0.0], Some(vec![0.0]));
        let r = one_step_check(&LyapunovSpec::bilevel(0.5, 0.5, 10.0), &field, &s, 0.1, [1.0; 3]).unwrap();
        assert_eq!((r.lhs, r.rhs), (0.0, 0.0));
    }
}
