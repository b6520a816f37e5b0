//! Closed-form quadratic instances. Each family acts coordinatewise, so a
//! `dim`-dimensional instance is `dim` decoupled copies of the scalar one.

use super::{AffineModulus, Dims, Family, Objective, Problem, ProblemConstants};
use crate::error::{Error, Result};
use crate::linalg;

fn zip_map(a: &[f64], b: &[f64], f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    a.iter().zip(b).map(|(&p, &q)| f(p, q)).collect()
}

/// `f(x, y) = l_xy·⟨x, y⟩ − (μ/2)‖y‖²`, strongly concave in `y`.
#[derive(Debug, Clone)]
pub struct MinimaxObjective {
    l_xy: f64,
    mu: f64,
}

impl Objective for MinimaxObjective {
    fn value(&self, x: &[f64], y: &[f64]) -> f64 {
        self.l_xy * linalg::dot(x, y) - 0.5 * self.mu * linalg::norm_sq(y)
    }
    fn grad_x(&self, _x: &[f64], y: &[f64]) -> Vec<f64> {
        linalg::scale(y, self.l_xy)
    }
    fn grad_u(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        zip_map(x, y, |xi, yi| self.l_xy * xi - self.mu * yi)
    }
    fn hvp_uu(&self, _x: &[f64], _y: &[f64], v: &[f64]) -> Option<Vec<f64>> {
        Some(linalg::scale(v, -self.mu))
    }
    fn jvp_xu(&self, _x: &[f64], _y: &[f64], v: &[f64]) -> Option<Vec<f64>> {
        Some(linalg::scale(v, self.l_xy))
    }
    fn jvp_ux(&self, _x: &[f64], _y: &[f64], w: &[f64]) -> Option<Vec<f64>> {
        Some(linalg::scale(w, self.l_xy))
    }
}

#[derive(Debug, Clone)]
pub struct QuadraticMinimax {
    dim: usize,
    f: MinimaxObjective,
    constants: ProblemConstants,
}

/// Quadratic minimax with `y*(x) = (l_xy/μ)x` and `F(x) = l_xy²/(2μ)‖x‖²`.
pub fn make_quadratic_minimax(l_xy: f64, mu: f64) -> Result<QuadraticMinimax> {
    QuadraticMinimax::new(l_xy, mu, 1)
}

impl QuadraticMinimax {
    pub fn new(l_xy: f64, mu: f64, dim: usize) -> Result<Self> {
        if !(mu > 0.0) {
            return Err(Error::invalid("mu", "must be > 0"));
        }
        if !(l_xy >= 0.0) {
            return Err(Error::invalid("l_xy", "must be >= 0"));
        }
        if dim == 0 {
            return Err(Error::invalid("dim", "must be >= 1"));
        }
        let constants = ProblemConstants {
            mu,
            l_xy,
            l_fx: l_xy,
            l_fy: mu,
            ..ProblemConstants::default()
        };
        Ok(Self {
            dim,
            f: MinimaxObjective { l_xy, mu },
            constants,
        })
    }

    pub fn value_function(&self, x: &[f64]) -> f64 {
        self.f.l_xy * self.f.l_xy / (2.0 * self.f.mu) * linalg::norm_sq(x)
    }

    pub fn with_kappa(mut self, kappa: Option<f64>) -> Self {
        self.constants.kappa = kappa;
        self
    }
}

impl Problem for QuadraticMinimax {
    fn name(&self) -> String {
        "quad-minimax".into()
    }
    fn family(&self) -> Family {
        Family::Minimax
    }
    fn dims(&self) -> Dims {
        Dims {
            x: self.dim,
            y: self.dim,
            z: 0,
        }
    }
    fn constants(&self) -> &ProblemConstants {
        &self.constants
    }
    fn upper(&self) -> &dyn Objective {
        &self.f
    }
    fn lower(&self) -> Option<&dyn Objective> {
        None
    }
    fn upper_argopt_exact(&self, x: &[f64]) -> Option<Vec<f64>> {
        Some(linalg::scale(x, self.f.l_xy / self.f.mu))
    }
    fn envelope_lower_bound(&self) -> Option<f64> {
        Some(0.0)
    }
    fn has_analytic_inner(&self) -> bool {
        true
    }
}

/// `g(x, y) = ½‖y − a x‖²`
#[derive(Debug, Clone)]
pub struct BilevelLower {
    a: f64,
}

impl Objective for BilevelLower {
    fn value(&self, x: &[f64], y: &[f64]) -> f64 {
        0.5 * zip_map(x, y, |xi, yi| (yi - self.a * xi).powi(2))
            .iter()
            .sum::<f64>()
    }
    fn grad_x(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        zip_map(x, y, |xi, yi| -self.a * (yi - self.a * xi))
    }
    fn grad_u(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        zip_map(x, y, |xi, yi| yi - self.a * xi)
    }
    fn hvp_uu(&self, _x: &[f64], _y: &[f64], v: &[f64]) -> Option<Vec<f64>> {
        Some(v.to_vec())
    }
    fn jvp_xu(&self, _x: &[f64], _y: &[f64], v: &[f64]) -> Option<Vec<f64>> {
        Some(linalg::scale(v, -self.a))
    }
    fn jvp_ux(&self, _x: &[f64], _y: &[f64], w: &[f64]) -> Option<Vec<f64>> {
        Some(linalg::scale(w, -self.a))
    }
}

/// `f(x, y) = ½‖x − b y‖²`
#[derive(Debug, Clone)]
pub struct BilevelUpper {
    b: f64,
}

impl Objective for BilevelUpper {
    fn value(&self, x: &[f64], y: &[f64]) -> f64 {
        0.5 * zip_map(x, y, |xi, yi| (xi - self.b * yi).powi(2))
            .iter()
            .sum::<f64>()
    }
    fn grad_x(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        zip_map(x, y, |xi, yi| xi - self.b * yi)
    }
    fn grad_u(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        zip_map(x, y, |xi, yi| -self.b * (xi - self.b * yi))
    }
    fn hvp_uu(&self, _x: &[f64], _y: &[f64], v: &[f64]) -> Option<Vec<f64>> {
        Some(linalg::scale(v, self.b * self.b))
    }
    fn jvp_xu(&self, _x: &[f64], _y: &[f64], v: &[f64]) -> Option<Vec<f64>> {
        Some(linalg::scale(v, -self.b))
    }
    fn jvp_ux(&self, _x: &[f64], _y: &[f64], w: &[f64]) -> Option<Vec<f64>> {
        Some(linalg::scale(w, -self.b))
    }
}

#[derive(Debug, Clone)]
pub struct QuadraticBilevel {
    dim: usize,
    f: BilevelUpper,
    g: BilevelLower,
    constants: ProblemConstants,
}

/// The quadratic bilevel instance `g = ½(y − a x)²`, `f = ½(x − b y)²`.
pub fn make_quadratic_bilevel(a: f64, b: f64) -> QuadraticBilevel {
    QuadraticBilevel::new(a, b, 1)
}

impl QuadraticBilevel {
    pub fn new(a: f64, b: f64, dim: usize) -> Self {
        let constants = ProblemConstants {
            mu: 1.0,
            rho: 0.0,
            l_fx: b.abs(),
            l_gx: a.abs(),
            l_fy: b * b,
            l_gy: 1.0,
            m_gxy: a.abs(),
            l_gxy: 0.0,
            l_gyy: 0.0,
            mu_lambda_exact: Some(AffineModulus {
                offset: b * b,
                slope: 1.0,
            }),
            ..ProblemConstants::default()
        };
        Self {
            dim: dim.max(1),
            f: BilevelUpper { b },
            g: BilevelLower { a },
            constants,
        }
    }

    pub fn a(&self) -> f64 {
        self.g.a
    }

    pub fn b(&self) -> f64 {
        self.f.b
    }

    pub fn with_kappa(mut self, kappa: Option<f64>) -> Self {
        self.constants.kappa = kappa;
        self
    }

    pub fn with_g_star(mut self, g_star: f64) -> Self {
        self.constants.g_star = g_star;
        self
    }

    /// `(1 − ab)²`, the curvature of the hyper-objective.
    pub fn hyper_curvature(&self) -> f64 {
        (1.0 - self.g.a * self.f.b).powi(2)
    }

    /// `F(x) = ½(1 − ab)²‖x‖²`
    pub fn hyper_objective(&self, x: &[f64]) -> f64 {
        0.5 * self.hyper_curvature() * linalg::norm_sq(x)
    }

    pub fn hyper_gradient_exact(&self, x: &[f64]) -> Vec<f64> {
        linalg::scale(x, self.hyper_curvature())
    }

    /// Closed-form ideal hyper-gradient flow `w(t) = w(0)·exp(−(1 − ab)² t)`.
    pub fn ideal_trajectory(&self, w0: &[f64], t: f64) -> Vec<f64> {
        linalg::scale(w0, (-self.hyper_curvature() * t).exp())
    }

    /// `∇𝓛*_λ(x) = ∇_x f(x, y_λ*) + λ(∇_x g(x, y_λ*) − ∇_x g(x, y*))`
    pub fn penalized_envelope_gradient(&self, x: &[f64], lambda: f64) -> Vec<f64> {
        let (a, b) = (self.g.a, self.f.b);
        let c = (b + lambda * a) / (b * b + lambda);
        // y_λ* − a x = (c − a) x,  x − b y_λ* = (1 − b c) x
        linalg::scale(x, (1.0 - b * c) - lambda * a * (c - a))
    }
}

impl Problem for QuadraticBilevel {
    fn name(&self) -> String {
        "quad-bilevel".into()
    }
    fn family(&self) -> Family {
        Family::Bilevel
    }
    fn dims(&self) -> Dims {
        Dims {
            x: self.dim,
            y: self.dim,
            z: self.dim,
        }
    }
    fn constants(&self) -> &ProblemConstants {
        &self.constants
    }
    fn upper(&self) -> &dyn Objective {
        &self.f
    }
    fn lower(&self) -> Option<&dyn Objective> {
        Some(&self.g)
    }
    fn lower_argmin_exact(&self, x: &[f64]) -> Option<Vec<f64>> {
        Some(linalg::scale(x, self.g.a))
    }
    fn penalized_argmin_exact(&self, x: &[f64], lambda: f64) -> Option<Vec<f64>> {
        let (a, b) = (self.g.a, self.f.b);
        Some(linalg::scale(x, (b + lambda * a) / (b * b + lambda)))
    }
    fn envelope_lower_bound(&self) -> Option<f64> {
        Some(0.0)
    }
    fn has_analytic_inner(&self) -> bool {
        true
    }
}

/// `f(x, y) = ½‖y − x‖² + ½‖x‖²`
#[derive(Debug, Clone)]
pub struct MinMinMaxUpper;

impl Objective for MinMinMaxUpper {
    fn value(&self, x: &[f64], y: &[f64]) -> f64 {
        0.5 * linalg::norm_sq(&linalg::sub(y, x)) + 0.5 * linalg::norm_sq(x)
    }
    fn grad_x(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        zip_map(x, y, |xi, yi| 2.0 * xi - yi)
    }
    fn grad_u(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        linalg::sub(y, x)
    }
    fn hvp_uu(&self, _x: &[f64], _y: &[f64], v: &[f64]) -> Option<Vec<f64>> {
        Some(v.to_vec())
    }
    fn jvp_xu(&self, _x: &[f64], _y: &[f64], v: &[f64]) -> Option<Vec<f64>> {
        Some(linalg::scale(v, -1.0))
    }
    fn jvp_ux(&self, _x: &[f64], _y: &[f64], w: &[f64]) -> Option<Vec<f64>> {
        Some(linalg::scale(w, -1.0))
    }
}

/// `g(x, z) = ½‖z − a_g x‖² + (a_f/2)‖x‖²`
#[derive(Debug, Clone)]
pub struct MinMinMaxLower {
    a_f: f64,
    a_g: f64,
}

impl Objective for MinMinMaxLower {
    fn value(&self, x: &[f64], z: &[f64]) -> f64 {
        let gap: f64 = zip_map(x, z, |xi, zi| (zi - self.a_g * xi).powi(2))
            .iter()
            .sum();
        0.5 * gap + 0.5 * self.a_f * linalg::norm_sq(x)
    }
    fn grad_x(&self, x: &[f64], z: &[f64]) -> Vec<f64> {
        zip_map(x, z, |xi, zi| -self.a_g * (zi - self.a_g * xi) + self.a_f * xi)
    }
    fn grad_u(&self, x: &[f64], z: &[f64]) -> Vec<f64> {
        zip_map(x, z, |xi, zi| zi - self.a_g * xi)
    }
    fn hvp_uu(&self, _x: &[f64], _z: &[f64], v: &[f64]) -> Option<Vec<f64>> {
        Some(v.to_vec())
    }
    fn jvp_xu(&self, _x: &[f64], _z: &[f64], v: &[f64]) -> Option<Vec<f64>> {
        Some(linalg::scale(v, -self.a_g))
    }
    fn jvp_ux(&self, _x: &[f64], _z: &[f64], w: &[f64]) -> Option<Vec<f64>> {
        Some(linalg::scale(w, -self.a_g))
    }
}

#[derive(Debug, Clone)]
pub struct QuadraticMinMinMax {
    dim: usize,
    f: MinMinMaxUpper,
    g: MinMinMaxLower,
    constants: ProblemConstants,
}

/// Quadratic min–min–max with `f*(x) = ½‖x‖²`, `g*(x) = (a_f/2)‖x‖²` and
/// `𝓛(x) = ((1 − a_f)/2)‖x‖²`, which is bounded below iff `a_f ≤ 1`.
pub fn make_quadratic_minminmax(a_f: f64, a_g: f64) -> Result<QuadraticMinMinMax> {
    QuadraticMinMinMax::new(a_f, a_g, 1)
}

impl QuadraticMinMinMax {
    pub fn new(a_f: f64, a_g: f64, dim: usize) -> Result<Self> {
        if !(a_f <= 1.0) || !a_g.is_finite() {
            return Err(Error::invalid(
                "a_f",
                format!("𝓛(x) = ((1 − a_f)/2)‖x‖² is unbounded below for a_f = {a_f}"),
            ));
        }
        let constants = ProblemConstants {
            mu: 1.0,
            mu_f: Some(1.0),
            l_fx: 1.0,
            l_gx: a_g.abs(),
            l_fy: 1.0,
            l_gy: 1.0,
            ..ProblemConstants::default()
        };
        Ok(Self {
            dim: dim.max(1),
            f: MinMinMaxUpper,
            g: MinMinMaxLower { a_f, a_g },
            constants,
        })
    }

    pub fn with_kappa(mut self, kappa: Option<f64>) -> Self {
        self.constants.kappa = kappa;
        self
    }

    pub fn envelope(&self, x: &[f64]) -> f64 {
        0.5 * (1.0 - self.g.a_f) * linalg::norm_sq(x)
    }

    pub fn envelope_gradient(&self, x: &[f64]) -> Vec<f64> {
        linalg::scale(x, 1.0 - self.g.a_f)
    }
}

impl Default for QuadraticMinMinMax {
    fn default() -> Self {
        Self::new(0.5, 0.5, 1).expect("default parameters are admissible")
    }
}

impl Problem for QuadraticMinMinMax {
    fn name(&self) -> String {
        "quad-minminmax".into()
    }
    fn family(&self) -> Family {
        Family::MinMinMax
    }
    fn dims(&self) -> Dims {
        Dims {
            x: self.dim,
            y: self.dim,
            z: self.dim,
        }
    }
    fn constants(&self) -> &ProblemConstants {
        &self.constants
    }
    fn upper(&self) -> &dyn Objective {
        &self.f
    }
    fn lower(&self) -> Option<&dyn Objective> {
        Some(&self.g)
    }
    fn upper_argopt_exact(&self, x: &[f64]) -> Option<Vec<f64>> {
        Some(x.to_vec())
    }
    fn lower_argmin_exact(&self, x: &[f64]) -> Option<Vec<f64>> {
        Some(linalg::scale(x, self.g.a_g))
    }
    fn envelope_lower_bound(&self) -> Option<f64> {
        Some(self.envelope(&vec![0.0; self.dim]).min(0.0))
    }
    fn has_analytic_inner(&self) -> bool {
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimax_inner_solution_and_value() {
        let p = make_quadratic_minimax(1.0, 1.0).unwrap();
        assert_eq!(p.upper_argopt_exact(&[2.0]).unwrap(), vec![2.0]);
        assert_eq!(p.value_function(&[2.0]), 2.0);
        assert_eq!(p.upper().grad_u(&[1.0], &[1.0]), vec![0.0]);
        let decoupled = make_quadratic_minimax(0.0, 1.0).unwrap();
        for x in [-3.0, 0.5, 7.0] {
            assert_eq!(decoupled.value_function(&[x]), 0.0);
        }
        // F(x) = max_y f(x, y)
        let y = p.upper_argopt_exact(&[2.0]).unwrap();
        assert_eq!(p.upper().value(&[2.0], &y), 2.0);
    }

    #[test]
    fn minimax_rejects_nonpositive_mu() {
        assert!(make_quadratic_minimax(1.0, 0.0).is_err());
        assert!(make_quadratic_minimax(1.0, -1.0).is_err());
    }

    #[test]
    fn bilevel_closed_forms() {
        let p = make_quadratic_bilevel(0.5, 1.0);
        assert_eq!(p.hyper_gradient_exact(&[1.0]), vec![0.25]);
        assert_eq!(p.lower_argmin_exact(&[4.0]).unwrap(), vec![2.0]);
        let y = p.penalized_argmin_exact(&[11.0], 10.0).unwrap();
        assert!((y[0] - 6.0).abs() < 1e-12);
        let grad = p.penalized_envelope_gradient(&[11.0], 10.0);
        assert!((grad[0] - 2.5).abs() < 1e-12);
    }

    #[test]
    fn bilevel_penalized_solution_is_stationary() {
        let p = QuadraticBilevel::new(0.7, -1.3, 3);
        let x = [0.3, -2.0, 1.5];
        let lambda = 4.0;
        let y = p.penalized_argmin_exact(&x, lambda).unwrap();
        let r = linalg::axpy(
            &p.upper().grad_u(&x, &y),
            lambda,
            &p.lower().unwrap().grad_u(&x, &y),
        );
        assert!(linalg::norm(&r) <= 1e-12 * (1.0 + linalg::norm(&x)));
        let ys = p.lower_argmin_exact(&x).unwrap();
        assert!(linalg::norm(&p.lower().unwrap().grad_u(&x, &ys)) <= 1e-12);
    }

    #[test]
    fn penalized_solution_approaches_lower_solution() {
        // ‖y_λ* − y*‖ ≤ (2/(μλ))‖∇_y f(x, y*)‖ for λ ≥ λ̄ = 2 L_fy / μ
        let p = make_quadratic_bilevel(0.5, 1.0);
        let lambda_bar = 2.0 * p.constants().l_fy / p.constants().mu;
        for x in [-3.0, -0.5, 1.0, 2.5] {
            let ys = p.lower_argmin_exact(&[x]).unwrap();
            let gfy = linalg::norm(&p.upper().grad_u(&[x], &ys));
            for k in 0..20 {
                let lambda = lambda_bar * 1.5f64.powi(k);
                let yl = p.penalized_argmin_exact(&[x], lambda).unwrap();
                let gap = (yl[0] - ys[0]).abs();
                assert!(gap <= 2.0 / lambda * gfy + 1e-14, "x={x} λ={lambda}");
            }
        }
    }

    #[test]
    fn bilevel_exact_modulus_dominates_sufficient_bound() {
        let p = make_quadratic_bilevel(0.5, 1.0);
        let c = p.constants();
        let exact = c.mu_lambda_exact.unwrap();
        for lambda in [0.1, 1.0, 10.0, 1e3] {
            assert!(exact.at(lambda) >= lambda * c.mu - c.rho);
        }
    }

    #[test]
    fn minminmax_defaults() {
        let p = QuadraticMinMinMax::default();
        assert_eq!(p.envelope(&[2.0]), 1.0);
        assert_eq!(p.envelope_gradient(&[2.0]), vec![1.0]);
        assert_eq!(p.envelope(&[0.0]), 0.0);
        assert_eq!(p.lower_argmin_exact(&[3.0]).unwrap(), vec![1.5]);
        let x = [2.0];
        let ys = p.upper_argopt_exact(&x).unwrap();
        let zs = p.lower_argmin_exact(&x).unwrap();
        let l = p.upper().value(&x, &ys) - p.lower().unwrap().value(&x, &zs);
        assert_eq!(l, p.envelope(&x));
    }

    #[test]
    fn minminmax_rejects_unbounded() {
        assert!(make_quadratic_minminmax(1.5, 0.5).is_err());
        assert!(make_quadratic_minminmax(1.0, 0.5).is_ok());
    }
}
