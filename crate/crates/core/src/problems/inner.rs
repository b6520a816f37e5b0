//! Inner solvers: gradient descent with step `1/(μ + L)` on the strongly
//! convex (or concave) inner problem, used whenever no closed form exists.

use super::{Family, Objective, Problem};
use crate::error::{Error, Result};
use crate::linalg;

#[derive(Debug, Clone)]
pub struct InnerSolveOptions {
    /// Stop once `‖∇‖ ≤ tol`.
    pub tol: f64,
    pub max_iter: usize,
    /// Warm start; zeros when absent.
    pub init: Option<Vec<f64>>,
    /// Ignore analytic solvers and always iterate.
    pub force_iterative: bool,
}

impl Default for InnerSolveOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 1_000_000,
            init: None,
            force_iterative: false,
        }
    }
}

impl InnerSolveOptions {
    /// Default tolerance per problem: `1e-10` for closed-form instances, `1e-7` otherwise.
    pub fn for_problem(p: &dyn Problem) -> Self {
        let tol = if p.has_analytic_inner() { 1e-10 } else { 1e-7 };
        Self {
            tol,
            ..Self::default()
        }
    }

    pub fn with_init(mut self, init: Vec<f64>) -> Self {
        self.init = Some(init);
        self
    }
}

/// Minimizes `u ↦ sign·Σ_k w_k h_k(x, u)` by fixed-step gradient descent.
fn descend(
    terms: &[(f64, &dyn Objective)],
    sign: f64,
    x: &[f64],
    dim: usize,
    step: f64,
    opts: &InnerSolveOptions,
) -> Result<Vec<f64>> {
    let mut u = match &opts.init {
        Some(u0) if u0.len() == dim => u0.clone(),
        Some(u0) => {
            return Err(Error::Dimension {
                what: "inner warm start",
                expected: dim,
                got: u0.len(),
            })
        }
        None => vec![0.0; dim],
    };
    let grad = |u: &[f64]| {
        let mut acc = vec![0.0; dim];
        for &(w, h) in terms {
            linalg::axpy_in_place(&mut acc, sign * w, &h.grad_u(x, u));
        }
        acc
    };
    let mut g = grad(&u);
    let mut gn = linalg::norm(&g);
    let mut iters = 0;
    while gn > opts.tol {
        if iters >= opts.max_iter || !gn.is_finite() {
            return Err(Error::InnerSolve {
                iters,
                grad_norm: gn,
            });
        }
        linalg::axpy_in_place(&mut u, -step, &g);
        g = grad(&u);
        gn = linalg::norm(&g);
        iters += 1;
    }
    Ok(u)
}

fn gd_step(mu: f64, l: f64) -> f64 {
    1.0 / (mu + l.max(mu))
}

/// `y*(x) = argmin_y g(x, y)`
pub fn lower_argmin(p: &dyn Problem, x: &[f64], opts: &InnerSolveOptions) -> Result<Vec<f64>> {
    if !opts.force_iterative {
        if let Some(y) = p.lower_argmin_exact(x) {
            return Ok(y);
        }
    }
    let g = p.lower_or_err()?;
    let c = p.constants();
    let dim = match p.family() {
        Family::MinMinMax => p.dims().z,
        _ => p.dims().y,
    };
    descend(&[(1.0, g)], 1.0, x, dim, gd_step(c.mu, c.l_gy), opts)
}

/// Optimizer of `f(x,·)`: the maximizer for minimax, the minimizer for min–min–max.
pub fn upper_argopt(p: &dyn Problem, x: &[f64], opts: &InnerSolveOptions) -> Result<Vec<f64>> {
    if !opts.force_iterative {
        if let Some(y) = p.upper_argopt_exact(x) {
            return Ok(y);
        }
    }
    let c = p.constants();
    let (sign, mu) = match p.family() {
        Family::Minimax => (-1.0, c.mu),
        Family::MinMinMax => (1.0, c.mu_f.unwrap_or(c.mu)),
        Family::Bilevel => return Err(Error::Unsupported("upper-level optimizer for bilevel")),
    };
    descend(&[(1.0, p.upper())], sign, x, p.dims().y, gd_step(mu, c.l_fy), opts)
}

/// `y_λ*(x) = argmin_y f(x, y) + λ g(x, y)`
pub fn penalized_argmin(
    p: &dyn Problem,
    x: &[f64],
    lambda: f64,
    opts: &InnerSolveOptions,
) -> Result<Vec<f64>> {
    if !opts.force_iterative {
        if let Some(y) = p.penalized_argmin_exact(x, lambda) {
            return Ok(y);
        }
    }
    let g = p.lower_or_err()?;
    let c = p.constants();
    let modulus = match c.mu_lambda_exact {
        Some(m) => m.at(lambda),
        None => lambda * c.mu - c.rho,
    };
    if !(modulus > 0.0) {
        return Err(Error::invalid(
            "lambda",
            format!("f + λg is not strongly convex at λ = {lambda}"),
        ));
    }
    let smooth = c.l_fy + lambda * c.l_gy;
    descend(
        &[(1.0, p.upper()), (lambda, g)],
        1.0,
        x,
        p.dims().y,
        gd_step(modulus, smooth),
        opts,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{make_quadratic_bilevel, make_quadratic_minimax, QuadraticMinMinMax};

    fn iterative() -> InnerSolveOptions {
        InnerSolveOptions {
            force_iterative: true,
            ..InnerSolveOptions::default()
        }
    }

    #[test]
    fn iterative_matches_closed_forms() {
        let p = make_quadratic_bilevel(0.5, 1.0);
        let x = [3.0];
        let y = lower_argmin(&p, &x, &iterative()).unwrap();
        assert!((y[0] - 1.5).abs() < 1e-9);
        let yl = penalized_argmin(&p, &x, 10.0, &iterative()).unwrap();
        assert!((yl[0] - 3.0 * 6.0 / 11.0).abs() < 1e-9);

        let m = make_quadratic_minimax(1.0, 2.0).unwrap();
        let y = upper_argopt(&m, &[4.0], &iterative()).unwrap();
        assert!((y[0] - 2.0).abs() < 1e-9);

        let q = QuadraticMinMinMax::default();
        let y = upper_argopt(&q, &[2.0], &iterative()).unwrap();
        assert!((y[0] - 2.0).abs() < 1e-9);
        let z = lower_argmin(&q, &[2.0], &iterative()).unwrap();
        assert!((z[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn reports_non_convergence() {
        let p = make_quadratic_bilevel(0.5, 1.0);
        let opts = InnerSolveOptions {
            max_iter: 2,
            ..iterative()
        };
        let err = lower_argmin(&p, &[100.0], &opts).unwrap_err();
        assert!(err.is_numerical());
    }

    #[test]
    fn bilevel_has_no_upper_optimizer() {
        let p = make_quadratic_bilevel(0.5, 1.0);
        assert!(upper_argopt(&p, &[1.0], &iterative()).is_err());
    }
}
