//! Vector fields of the coupled single-loop flows and of the ideal
//! hyper-gradient flow.

use crate::error::{Error, Result};
use crate::linalg::{self, CgOptions};
use crate::problems::{self, Family, InnerSolveOptions, Problem};

/// Variables of a coupled flow. `z` is absent for minimax and for the ideal
/// flow, whose `y` is empty.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowState {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Option<Vec<f64>>,
    pub t: f64,
}

impl FlowState {
    pub fn new(x: Vec<f64>, y: Vec<f64>, z: Option<Vec<f64>>) -> Self {
        Self { x, y, z, t: 0.0 }
    }

    /// Outer variable only, for the ideal flow.
    pub fn outer(x: Vec<f64>) -> Self {
        Self::new(x, Vec::new(), None)
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            x: vec![0.0; self.x.len()],
            y: vec![0.0; self.y.len()],
            z: self.z.as_ref().map(|z| vec![0.0; z.len()]),
            t: self.t,
        }
    }

    pub fn len(&self) -> usize {
        self.x.len() + self.y.len() + self.z.as_ref().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `(x, y, z)` concatenated.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.len());
        v.extend_from_slice(&self.x);
        v.extend_from_slice(&self.y);
        if let Some(z) = &self.z {
            v.extend_from_slice(z);
        }
        v
    }

    /// Inverse of [`to_flat`](Self::to_flat) using `self` as the shape template.
    pub fn with_flat(&self, v: &[f64], t: f64) -> Self {
        let (nx, ny) = (self.x.len(), self.y.len());
        Self {
            x: v[..nx].to_vec(),
            y: v[nx..nx + ny].to_vec(),
            z: self.z.as_ref().map(|_| v[nx + ny..].to_vec()),
            t,
        }
    }

    pub fn norm(&self) -> f64 {
        let z2 = self.z.as_deref().map_or(0.0, linalg::norm_sq);
        (linalg::norm_sq(&self.x) + linalg::norm_sq(&self.y) + z2).sqrt()
    }

    /// `self + s·other`, keeping `self.t`.
    pub fn axpy(&self, s: f64, other: &FlowState) -> FlowState {
        FlowState {
            x: linalg::axpy(&self.x, s, &other.x),
            y: linalg::axpy(&self.y, s, &other.y),
            z: match (&self.z, &other.z) {
                (Some(a), Some(b)) => Some(linalg::axpy(a, s, b)),
                (z, _) => z.clone(),
            },
            t: self.t,
        }
    }

    pub fn check_finite(&self) -> Result<()> {
        check_finite("x", &self.x)?;
        check_finite("y", &self.y)?;
        if let Some(z) = &self.z {
            check_finite("z", z)?;
        }
        Ok(())
    }
}

fn check_finite(component: &'static str, v: &[f64]) -> Result<()> {
    match linalg::first_non_finite(v) {
        Some(index) => Err(Error::NonFinite { component, index }),
        None => Ok(()),
    }
}

/// Options for the implicit hyper-gradient.
#[derive(Debug, Clone, Default)]
pub struct HypergradOptions {
    pub cg: CgOptions,
    pub inner: InnerSolveOptions,
}

impl HypergradOptions {
    pub fn for_problem(p: &dyn Problem) -> Self {
        Self {
            cg: CgOptions::default(),
            inner: InnerSolveOptions::for_problem(p),
        }
    }
}

#[derive(Debug, Clone)]
pub enum FlowKind {
    Minimax { gamma: f64 },
    Bilevel { lambda: f64, delta: f64, eta: f64 },
    MinMinMax { delta: f64, eta: f64 },
    IdealHypergrad(HypergradOptions),
}

impl FlowKind {
    pub fn name(&self) -> &'static str {
        match self {
            FlowKind::Minimax { .. } => "minimax",
            FlowKind::Bilevel { .. } => "bilevel",
            FlowKind::MinMinMax { .. } => "minminmax",
            FlowKind::IdealHypergrad(_) => "ideal",
        }
    }
}

/// A flow bound to a problem instance.
#[derive(Clone, Copy)]
pub struct FlowField<'a> {
    kind: &'a FlowKind,
    problem: &'a dyn Problem,
}

fn positive(name: &'static str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(name, format!("must be a finite value > 0, got {v}")))
    }
}

impl<'a> FlowField<'a> {
    pub fn new(kind: &'a FlowKind, problem: &'a dyn Problem) -> Result<Self> {
        let family = problem.family();
        let expected = match kind {
            FlowKind::Minimax { gamma } => {
                positive("gamma", *gamma)?;
                Some(Family::Minimax)
            }
            FlowKind::Bilevel { lambda, delta, eta } => {
                positive("lambda", *lambda)?;
                positive("delta", *delta)?;
                positive("eta", *eta)?;
                Some(Family::Bilevel)
            }
            FlowKind::MinMinMax { delta, eta } => {
                positive("delta", *delta)?;
                positive("eta", *eta)?;
                Some(Family::MinMinMax)
            }
            FlowKind::IdealHypergrad(_) => None,
        };
        if let Some(f) = expected {
            if f != family {
                return Err(Error::invalid(
                    "flow",
                    format!("{} flow needs a {} problem", kind.name(), f.as_str()),
                ));
            }
        }
        Ok(Self { kind, problem })
    }

    pub fn kind(&self) -> &FlowKind {
        self.kind
    }

    pub fn problem(&self) -> &'a dyn Problem {
        self.problem
    }

    /// Checks that `state` has the shape this flow evolves.
    pub fn check_shape(&self, state: &FlowState) -> Result<()> {
        let d = self.problem.dims();
        let dim = |what, expected: usize, got: usize| {
            if expected == got {
                Ok(())
            } else {
                Err(Error::Dimension {
                    what,
                    expected,
                    got,
                })
            }
        };
        dim("x", d.x, state.x.len())?;
        match self.kind {
            FlowKind::IdealHypergrad(_) => Ok(()),
            FlowKind::Minimax { .. } => dim("y", d.y, state.y.len()),
            _ => {
                dim("y", d.y, state.y.len())?;
                let z = state.z.as_ref().ok_or(Error::Dimension {
                    what: "z",
                    expected: d.z,
                    got: 0,
                })?;
                dim("z", d.z, z.len())
            }
        }
    }

    /// Initial state for this flow with the given outer point and inner values.
    pub fn state(&self, x: Vec<f64>, y: Vec<f64>, z: Vec<f64>) -> FlowState {
        match self.kind {
            FlowKind::IdealHypergrad(_) => FlowState::outer(x),
            FlowKind::Minimax { .. } => FlowState::new(x, y, None),
            _ => FlowState::new(x, y, Some(z)),
        }
    }
}

/// `(ẋ, ẏ, ż)` at `state`; the returned state carries `state.t`.
pub fn eval_field(field: &FlowField<'_>, state: &FlowState) -> Result<FlowState> {
    field.check_shape(state)?;
    let p = field.problem;
    let f = p.upper();
    let (x, y) = (&state.x[..], &state.y[..]);
    let out = match field.kind {
        FlowKind::Minimax { gamma } => FlowState {
            x: linalg::scale(&f.grad_x(x, y), -1.0),
            y: linalg::scale(&f.grad_u(x, y), *gamma),
            z: None,
            t: state.t,
        },
        FlowKind::Bilevel { lambda, delta, eta } => {
            let g = p.lower_or_err()?;
            let z = state.z.as_deref().unwrap_or_default();
            let (gxy, gy) = g.grads(x, y);
            let (gxz, gz) = g.grads(x, z);
            let mut xd = f.grad_x(x, y);
            for i in 0..xd.len() {
                xd[i] = -(xd[i] + lambda * (gxy[i] - gxz[i]));
            }
            let fy = f.grad_u(x, y);
            let yd = fy
                .iter()
                .zip(&gy)
                .map(|(a, b)| -delta * (a + lambda * b))
                .collect();
            let zd = linalg::scale(&gz, -eta * lambda);
            FlowState {
                x: xd,
                y: yd,
                z: Some(zd),
                t: state.t,
            }
        }
        FlowKind::MinMinMax { delta, eta } => {
            let g = p.lower_or_err()?;
            let z = state.z.as_deref().unwrap_or_default();
            let (fx, fy) = f.grads(x, y);
            let (gx, gz) = g.grads(x, z);
            FlowState {
                x: linalg::sub(&gx, &fx),
                y: linalg::scale(&fy, -delta),
                z: Some(linalg::scale(&gz, -eta)),
                t: state.t,
            }
        }
        FlowKind::IdealHypergrad(opts) => FlowState {
            x: linalg::scale(&hypergradient(p, x, opts)?, -1.0),
            y: Vec::new(),
            z: None,
            t: state.t,
        },
    };
    out.check_finite()?;
    Ok(out)
}

/// Gradient of the ideal outer objective at `x`.
///
/// Bilevel: `∇F = ∇_x f(x, y*) − ∇²_{xy} g(x, y*)·v` with `∇²_{yy} g·v = ∇_y f(x, y*)`
/// solved by conjugate gradient. Minimax and min–min–max use the Danskin
/// gradients of `F` and `𝓛`.
pub fn hypergradient(p: &dyn Problem, x: &[f64], opts: &HypergradOptions) -> Result<Vec<f64>> {
    let f = p.upper();
    let grad = match p.family() {
        Family::Minimax => {
            let y = problems::upper_argopt(p, x, &opts.inner)?;
            f.grad_x(x, &y)
        }
        Family::MinMinMax => {
            let g = p.lower_or_err()?;
            let y = problems::upper_argopt(p, x, &opts.inner)?;
            let z = problems::lower_argmin(p, x, &opts.inner)?;
            linalg::sub(&f.grad_x(x, &y), &g.grad_x(x, &z))
        }
        Family::Bilevel => {
            let g = p.lower_or_err()?;
            let y = problems::lower_argmin(p, x, &opts.inner)?;
            let rhs = f.grad_u(x, &y);
            let sol = linalg::conjugate_gradient(
                |v| problems::hvp_uu(g, x, &y, v),
                &rhs,
                opts.cg,
            )?;
            linalg::sub(&f.grad_x(x, &y), &problems::jvp_xu(g, x, &y, &sol.x))
        }
    };
    check_finite("x", &grad)?;
    Ok(grad)
}

/// `−∇F(x)`
pub fn ideal_flow_field(p: &dyn Problem, x: &[f64], opts: &HypergradOptions) -> Result<Vec<f64>> {
    Ok(linalg::scale(&hypergradient(p, x, opts)?, -1.0))
}
