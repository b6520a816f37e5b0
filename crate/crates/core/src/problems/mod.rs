//! Problem oracles: the first-order (plus optional second-order product)
//! interface every nested problem instance implements, and the concrete
//! instances used by the experiments.

mod gradcheck;
mod hyperclean;
mod inner;
mod quadratic;

pub use gradcheck::{check_gradients, GradCheckEntry, GradCheckReport};
pub use hyperclean::{make_hypercleaning, HypercleanConfig, Hypercleaning};
pub use inner::{lower_argmin, penalized_argmin, upper_argopt, InnerSolveOptions};
pub use quadratic::{
    make_quadratic_bilevel, make_quadratic_minimax, make_quadratic_minminmax, QuadraticBilevel,
    QuadraticMinMinMax, QuadraticMinimax,
};

use crate::error::{Error, Result};
use crate::linalg;

/// Which nested problem an oracle describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    /// `min_x max_y f(x, y)`
    Minimax,
    /// `min_x f(x, y*(x))` with `y*(x) = argmin_y g(x, y)`
    Bilevel,
    /// `min_x min_y max_z f(x, y) − g(x, z)`
    MinMinMax,
}

impl Family {
    pub fn as_str(self) -> &'static str {
        match self {
            Family::Minimax => "minimax",
            Family::Bilevel => "bilevel",
            Family::MinMinMax => "minminmax",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub x: usize,
    pub y: usize,
    /// Zero for minimax problems.
    pub z: usize,
}

/// Exact strong-convexity modulus of `f + λg` in `y`, of the form `offset + slope·λ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineModulus {
    pub offset: f64,
    pub slope: f64,
}

impl AffineModulus {
    pub fn at(&self, lambda: f64) -> f64 {
        self.offset + self.slope * lambda
    }
}

/// Regularity constants of an instance. Unused entries stay at zero.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemConstants {
    /// Strong convexity of the inner objective: `g(x,·)` for bilevel and
    /// min–min–max (`μ_g`), `−f(x,·)` for minimax.
    pub mu: f64,
    /// Strong convexity of `f(x,·)` for min–min–max (`μ_f`).
    pub mu_f: Option<f64>,
    /// Weak convexity of `f(x,·)`.
    pub rho: f64,
    pub l_fx: f64,
    pub l_gx: f64,
    /// Cross-Lipschitz modulus of `∇_x f` in `y` for minimax.
    pub l_xy: f64,
    /// Lipschitz modulus of `∇_y f` in `y`.
    pub l_fy: f64,
    /// Lipschitz modulus of `∇_y g` in `y` (inner smoothness, used for step sizes).
    pub l_gy: f64,
    pub m_gxy: f64,
    pub l_gxy: f64,
    pub l_gyy: f64,
    pub g_star: f64,
    /// Error-bound constant; replaces `1/μ` in conversion constants when set.
    pub kappa: Option<f64>,
    pub mu_lambda_exact: Option<AffineModulus>,
}

impl Default for ProblemConstants {
    fn default() -> Self {
        Self {
            mu: 1.0,
            mu_f: None,
            rho: 0.0,
            l_fx: 0.0,
            l_gx: 0.0,
            l_xy: 0.0,
            l_fy: 0.0,
            l_gy: 0.0,
            m_gxy: 0.0,
            l_gxy: 0.0,
            l_gyy: 0.0,
            g_star: 0.0,
            kappa: None,
            mu_lambda_exact: None,
        }
    }
}

impl ProblemConstants {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu > 0.0) {
            return Err(Error::invalid("mu", "must be > 0"));
        }
        if let Some(mf) = self.mu_f {
            if !(mf > 0.0) {
                return Err(Error::invalid("mu_f", "must be > 0"));
            }
        }
        let lipschitz = [
            ("rho", self.rho),
            ("l_fx", self.l_fx),
            ("l_gx", self.l_gx),
            ("l_xy", self.l_xy),
            ("l_fy", self.l_fy),
            ("l_gy", self.l_gy),
            ("m_gxy", self.m_gxy),
            ("l_gxy", self.l_gxy),
            ("l_gyy", self.l_gyy),
            ("g_star", self.g_star),
        ];
        for (name, v) in lipschitz {
            if !(v >= 0.0) {
                return Err(Error::invalid(name, "must be >= 0"));
            }
        }
        if let Some(k) = self.kappa {
            if !(k > 0.0) {
                return Err(Error::invalid("kappa", "must be > 0"));
            }
        }
        Ok(())
    }

    /// `1/κ` when an error-bound constant is set, otherwise `μ`.
    pub fn effective_mu(&self) -> f64 {
        match self.kappa {
            Some(k) => 1.0 / k,
            None => self.mu,
        }
    }

    pub fn effective_mu_f(&self) -> f64 {
        match self.kappa {
            Some(k) => 1.0 / k,
            None => self.mu_f.unwrap_or(self.mu),
        }
    }

    pub fn with_kappa(mut self, kappa: Option<f64>) -> Self {
        self.kappa = kappa;
        self
    }
}

/// A scalar objective `h(x, u)` with its partial gradients and optional
/// second-order products. Missing products fall back to central
/// differences of the gradients (see [`hvp_uu`], [`jvp_xu`], [`jvp_ux`]).
pub trait Objective: Send + Sync {
    fn value(&self, x: &[f64], u: &[f64]) -> f64;
    fn grad_x(&self, x: &[f64], u: &[f64]) -> Vec<f64>;
    fn grad_u(&self, x: &[f64], u: &[f64]) -> Vec<f64>;

    /// `(∇_x h, ∇_u h)` together; override when they share work.
    fn grads(&self, x: &[f64], u: &[f64]) -> (Vec<f64>, Vec<f64>) {
        (self.grad_x(x, u), self.grad_u(x, u))
    }

    /// `∇²_{uu} h · v`
    fn hvp_uu(&self, _x: &[f64], _u: &[f64], _v: &[f64]) -> Option<Vec<f64>> {
        None
    }

    /// `∇²_{xu} h · v` for `v` in u-space; the result lives in x-space.
    fn jvp_xu(&self, _x: &[f64], _u: &[f64], _v: &[f64]) -> Option<Vec<f64>> {
        None
    }

    /// Transpose product `∇²_{ux} h · w` for `w` in x-space.
    fn jvp_ux(&self, _x: &[f64], _u: &[f64], _w: &[f64]) -> Option<Vec<f64>> {
        None
    }
}

fn fd_step(x: &[f64], u: &[f64]) -> f64 {
    1e-5 * (1.0 + (linalg::norm_sq(x) + linalg::norm_sq(u)).sqrt())
}

pub fn hvp_uu(h: &dyn Objective, x: &[f64], u: &[f64], v: &[f64]) -> Vec<f64> {
    if let Some(hv) = h.hvp_uu(x, u, v) {
        return hv;
    }
    let eps = fd_step(x, u);
    let plus = h.grad_u(x, &linalg::axpy(u, eps, v));
    let minus = h.grad_u(x, &linalg::axpy(u, -eps, v));
    linalg::scale(&linalg::sub(&plus, &minus), 0.5 / eps)
}

pub fn jvp_xu(h: &dyn Objective, x: &[f64], u: &[f64], v: &[f64]) -> Vec<f64> {
    if let Some(jv) = h.jvp_xu(x, u, v) {
        return jv;
    }
    let eps = fd_step(x, u);
    let plus = h.grad_x(x, &linalg::axpy(u, eps, v));
    let minus = h.grad_x(x, &linalg::axpy(u, -eps, v));
    linalg::scale(&linalg::sub(&plus, &minus), 0.5 / eps)
}

pub fn jvp_ux(h: &dyn Objective, x: &[f64], u: &[f64], w: &[f64]) -> Vec<f64> {
    if let Some(jw) = h.jvp_ux(x, u, w) {
        return jw;
    }
    let eps = fd_step(x, u);
    let plus = h.grad_u(&linalg::axpy(x, eps, w), u);
    let minus = h.grad_u(&linalg::axpy(x, -eps, w), u);
    linalg::scale(&linalg::sub(&plus, &minus), 0.5 / eps)
}

/// The oracle contract for one nested problem instance.
///
/// `upper()` is `f`. `lower()` is `g` (absent for minimax, where the inner
/// problem is the maximization of `f`). For min–min–max, `g` is evaluated at
/// `(x, z)` with `z` of length `dims().z`.
pub trait Problem: Send + Sync {
    fn name(&self) -> String;
    fn family(&self) -> Family;
    fn dims(&self) -> Dims;
    fn constants(&self) -> &ProblemConstants;
    fn upper(&self) -> &dyn Objective;
    fn lower(&self) -> Option<&dyn Objective>;

    /// Analytic optimizer of `f(x,·)`: the maximizer for minimax, the
    /// minimizer for min–min–max.
    fn upper_argopt_exact(&self, _x: &[f64]) -> Option<Vec<f64>> {
        None
    }

    /// Analytic minimizer of `g(x,·)`.
    fn lower_argmin_exact(&self, _x: &[f64]) -> Option<Vec<f64>> {
        None
    }

    /// Analytic minimizer of `f(x,·) + λ g(x,·)`.
    fn penalized_argmin_exact(&self, _x: &[f64], _lambda: f64) -> Option<Vec<f64>> {
        None
    }

    /// A lower bound on the outer envelope (`F`, `𝓛*_λ` or `𝓛`), when known.
    fn envelope_lower_bound(&self) -> Option<f64> {
        None
    }

    /// Whether envelope quantities can be evaluated in closed form.
    fn has_analytic_inner(&self) -> bool {
        false
    }

    fn lower_or_err(&self) -> Result<&dyn Objective> {
        self.lower()
            .ok_or(Error::Unsupported("lower-level objective g"))
    }
}
