//! Empirical constants for the hypercleaning diagnostics: finite-difference
//! power iteration for the cross-Lipschitz modulus, inner curvature by
//! Lanczos, the conversion scale `Ĉ = L̂/μ̂` and the resulting thresholds.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::flows::FlowState;
use crate::linalg;
use crate::lyapunov::{self, LyapunovSpec};
use crate::problems::{self, Problem};
use crate::rng::SplitMix64;

#[derive(Debug, Clone, PartialEq)]
pub struct CrossLipschitzEstimate {
    pub value: f64,
    /// Singular-value estimate after each iteration.
    pub history: Vec<f64>,
    /// True when the operator vanished on the start vector.
    pub zero_operator: bool,
}

/// Approximates `‖∇²_{xy} g‖₂` at `(x, y)` by power iteration on `MᵀM`, where
/// `M v ≈ [∇_x g(x, y + εv) − ∇_x g(x, y − εv)]/(2ε)` and
/// `Mᵀ u ≈ [∇_y g(x + εu, y) − ∇_y g(x − εu, y)]/(2ε)`.
pub fn estimate_cross_lipschitz(
    p: &dyn Problem,
    x: &[f64],
    y: &[f64],
    iters: usize,
    fd_eps: f64,
    seed: u64,
) -> Result<CrossLipschitzEstimate> {
    if iters == 0 {
        return Err(Error::invalid("iters", "must be >= 1"));
    }
    if !(fd_eps > 0.0) {
        return Err(Error::invalid("fd_eps", "must be > 0"));
    }
    let g = p.lower_or_err()?;
    let apply_m = |v: &[f64]| {
        let plus = g.grad_x(x, &linalg::axpy(y, fd_eps, v));
        let minus = g.grad_x(x, &linalg::axpy(y, -fd_eps, v));
        linalg::scale(&linalg::sub(&plus, &minus), 0.5 / fd_eps)
    };
    let apply_mt = |u: &[f64]| {
        let plus = g.grad_u(&linalg::axpy(x, fd_eps, u), y);
        let minus = g.grad_u(&linalg::axpy(x, -fd_eps, u), y);
        linalg::scale(&linalg::sub(&plus, &minus), 0.5 / fd_eps)
    };
    let mut rng = SplitMix64::with_stream(seed, 20);
    let mut v = rng.gaussian_vec(y.len(), 1.0);
    if linalg::normalize(&mut v) == 0.0 {
        return Err(Error::invalid("y", "inner dimension is zero"));
    }
    let mut history = Vec::with_capacity(iters);
    for _ in 0..iters {
        let mv = apply_m(&v);
        let sigma = linalg::norm(&mv);
        history.push(sigma);
        let mut next = apply_mt(&mv);
        if linalg::normalize(&mut next) == 0.0 {
            return Ok(CrossLipschitzEstimate {
                value: 0.0,
                history,
                zero_operator: true,
            });
        }
        v = next;
    }
    Ok(CrossLipschitzEstimate {
        value: *history.last().unwrap_or(&0.0),
        history,
        zero_operator: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MuMode {
    /// The instance's declared modulus (`ρ_reg` for hypercleaning).
    RegOnly,
    /// Smallest Ritz value of `∇²_{yy} g` after the given number of Lanczos steps.
    Lanczos(usize),
}

/// Curvature `μ̂` of `g(x, ·)` at `(x, y)`. Lanczos estimates are floored at
/// `μ·(1 − 1e-6)` with `μ` the declared modulus.
pub fn estimate_mu(p: &dyn Problem, x: &[f64], y: &[f64], mode: MuMode) -> Result<f64> {
    let mu = p.constants().mu;
    let steps = match mode {
        MuMode::RegOnly => return Ok(mu),
        MuMode::Lanczos(k) => k.max(1).min(y.len()),
    };
    let g = p.lower_or_err()?;
    let ritz = lanczos_extremes(|v| problems::hvp_uu(g, x, y, v), y.len(), steps, 0)?;
    Ok(ritz.0.max(mu * (1.0 - 1e-6)))
}

/// `(min, max)` Ritz values of a symmetric operator after `steps` Lanczos
/// iterations with full reorthogonalization.
pub fn lanczos_extremes<F>(apply: F, dim: usize, steps: usize, seed: u64) -> Result<(f64, f64)>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let mut rng = SplitMix64::with_stream(seed, 21);
    let mut q = rng.gaussian_vec(dim, 1.0);
    linalg::normalize(&mut q);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(steps);
    let (mut alphas, mut betas): (Vec<f64>, Vec<f64>) = (Vec::new(), Vec::new());
    for _ in 0..steps {
        let mut w = apply(&q);
        let a = linalg::dot(&w, &q);
        alphas.push(a);
        linalg::axpy_in_place(&mut w, -a, &q);
        if let (Some(prev), Some(&b)) = (basis.last(), betas.last()) {
            linalg::axpy_in_place(&mut w, -b, prev);
        }
        basis.push(q.clone());
        for b in &basis {
            let c = linalg::dot(&w, b);
            linalg::axpy_in_place(&mut w, -c, b);
        }
        let b = linalg::norm(&w);
        if b <= 1e-12 * (1.0 + a.abs()) || basis.len() == dim {
            break;
        }
        betas.push(b);
        q = linalg::scale(&w, 1.0 / b);
    }
    let m = alphas.len();
    if m == 0 || alphas.iter().any(|a| !a.is_finite()) {
        return Err(Error::NonFinite {
            component: "lanczos",
            index: 0,
        });
    }
    let t = DMatrix::from_fn(m, m, |i, j| {
        if i == j {
            alphas[i]
        } else if i + 1 == j || j + 1 == i {
            betas[i.min(j)]
        } else {
            0.0
        }
    });
    let eig = SymmetricEigen::new(t).eigenvalues;
    let lo = eig.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok((lo, hi))
}

/// `Ĉ = L̂/μ̂`, `δ̂₀ = Ĉ²/2`, `η̂₀ = 2Ĉ²`.
pub fn empirical_thresholds(l_hat: f64, mu_hat: f64) -> Result<(f64, f64, f64)> {
    if !(mu_hat > 0.0) {
        return Err(Error::invalid("mu_hat", "must be > 0"));
    }
    let c = l_hat / mu_hat;
    Ok((c, 0.5 * c * c, 2.0 * c * c))
}

#[derive(Debug, Clone)]
pub struct EstimateOptions {
    pub iters: usize,
    /// Defaults to `1e-4·(1 + ‖anchor‖)`.
    pub fd_eps: Option<f64>,
    pub seed: u64,
    pub mu_mode: MuMode,
    /// Scale of the seeded Gaussian anchor `θ`.
    pub anchor_scale: f64,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        Self {
            iters: 30,
            fd_eps: None,
            seed: 0,
            mu_mode: MuMode::RegOnly,
            anchor_scale: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateReport {
    pub l_hat: f64,
    pub mu_hat: f64,
    pub c_hat: f64,
    pub delta0_hat: f64,
    pub eta0_hat: f64,
    pub iters: usize,
    pub fd_eps: f64,
    pub anchor: String,
    pub zero_operator: bool,
}

impl EstimateReport {
    pub const CSV_HEADER: &'static str =
        "L_hat,mu_hat,C_hat,delta0_hat,eta0_hat,iters,fd_eps,anchor";

    pub fn csv_row(&self) -> String {
        let f = lyapunov::fmt_f64;
        format!(
            "{},{},{},{},{},{},{},{}",
            f(self.l_hat),
            f(self.mu_hat),
            f(self.c_hat),
            f(self.delta0_hat),
            f(self.eta0_hat),
            self.iters,
            f(self.fd_eps),
            self.anchor
        )
    }
}

impl std::fmt::Display for EstimateReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let n = lyapunov::fmt_f64;
        writeln!(f, "{:<12} {}", "L_hat", n(self.l_hat))?;
        writeln!(f, "{:<12} {}", "mu_hat", n(self.mu_hat))?;
        writeln!(f, "{:<12} {}", "C_hat", n(self.c_hat))?;
        writeln!(f, "{:<12} {}", "delta0_hat", n(self.delta0_hat))?;
        writeln!(f, "{:<12} {}", "eta0_hat", n(self.eta0_hat))?;
        writeln!(f, "{:<12} {}", "iters", self.iters)?;
        writeln!(f, "{:<12} {}", "fd_eps", n(self.fd_eps))?;
        writeln!(f, "{:<12} {}", "anchor", self.anchor)
    }
}

/// Estimation at the anchor `x = 0`, `y ~ anchor_scale·N(0, I)` (seeded).
pub fn estimate(p: &dyn Problem, opts: &EstimateOptions) -> Result<EstimateReport> {
    let d = p.dims();
    let x = vec![0.0; d.x];
    let y = SplitMix64::with_stream(opts.seed, 22).gaussian_vec(d.y, opts.anchor_scale);
    let anchor_norm = (linalg::norm_sq(&x) + linalg::norm_sq(&y)).sqrt();
    let fd_eps = opts.fd_eps.unwrap_or(1e-4 * (1.0 + anchor_norm));
    let cl = estimate_cross_lipschitz(p, &x, &y, opts.iters, fd_eps, opts.seed)?;
    let mu_hat = estimate_mu(p, &x, &y, opts.mu_mode)?;
    let (c_hat, delta0_hat, eta0_hat) = empirical_thresholds(cl.value, mu_hat)?;
    Ok(EstimateReport {
        l_hat: cl.value,
        mu_hat,
        c_hat,
        delta0_hat,
        eta0_hat,
        iters: opts.iters,
        fd_eps,
        anchor: format!(
            "x=0;y=N(0,{})@seed{}",
            lyapunov::fmt_f64(opts.anchor_scale),
            opts.seed
        ),
        zero_operator: cl.zero_operator,
    })
}

/// Dense central-difference Hessian of `W` over the flattened state.
pub fn lyapunov_hessian(
    spec: &LyapunovSpec,
    p: &dyn Problem,
    state: &FlowState,
    fd_eps: f64,
) -> Result<DMatrix<f64>> {
    let u = state.to_flat();
    let n = u.len();
    let w = |v: &[f64]| lyapunov::lyapunov_value(spec, p, &state.with_flat(v, state.t));
    let mut h = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let mut val = 0.0;
            for (si, sj, sign) in [(1.0, 1.0, 1.0), (1.0, -1.0, -1.0), (-1.0, 1.0, -1.0), (-1.0, -1.0, 1.0)] {
                let mut v = u.clone();
                v[i] += si * fd_eps;
                v[j] += sj * fd_eps;
                val += sign * w(&v)?;
            }
            let hij = val / (4.0 * fd_eps * fd_eps);
            h[(i, j)] = hij;
            h[(j, i)] = hij;
        }
    }
    Ok(h)
}

/// Spectral norm of a symmetric matrix by power iteration on `H²`.
pub fn power_iteration_sym(h: &DMatrix<f64>, iters: usize, seed: u64) -> f64 {
    let n = h.nrows();
    let mut rng = SplitMix64::with_stream(seed, 23);
    let mut v = nalgebra::DVector::from_vec(rng.gaussian_vec(n, 1.0));
    let mut est = 0.0;
    for _ in 0..iters.max(1) {
        let hv = h * &v;
        est = hv.norm();
        let next = h * hv;
        let nn = next.norm();
        if nn == 0.0 {
            return est;
        }
        v = next / nn;
    }
    est
}

/// `L_W`: spectral norm of the finite-difference Hessian of `W` at `state`.
pub fn estimate_l_w(
    spec: &LyapunovSpec,
    p: &dyn Problem,
    state: &FlowState,
    iters: usize,
    seed: u64,
) -> Result<f64> {
    let eps = 1e-4 * (1.0 + state.norm());
    let h = lyapunov_hessian(spec, p, state, eps)?;
    Ok(power_iteration_sym(&h, iters, seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::make_quadratic_bilevel;

    #[test]
    fn quadratic_cross_modulus() {
        let p = make_quadratic_bilevel(0.5, 1.0);
        let e = estimate_cross_lipschitz(&p, &[0.3], &[-0.2], 20, 1e-4, 0).unwrap();
        assert!((e.value - 0.5).abs() < 1e-6);
        let z = make_quadratic_bilevel(0.0, 1.0);
        let e = estimate_cross_lipschitz(&z, &[0.3], &[-0.2], 20, 1e-4, 0).unwrap();
        assert_eq!(e.value, 0.0);
        assert!(e.zero_operator);
    }

    #[test]
    fn quadratic_lanczos_mu() {
        let p = make_quadratic_bilevel(0.5, 1.0);
        let mu = estimate_mu(&p, &[1.0], &[0.0], MuMode::Lanczos(5)).unwrap();
        assert!((mu - 1.0).abs() < 1e-8);
        assert_eq!(estimate_mu(&p, &[1.0], &[0.0], MuMode::RegOnly).unwrap(), 1.0);
    }

    #[test]
    fn lanczos_finds_extremes_of_diagonal() {
        let d = [0.5, 2.0, 3.0, 7.0, 11.0];
        let (lo, hi) = lanczos_extremes(
            |v| v.iter().zip(&d).map(|(a, b)| a * b).collect(),
            5,
            5,
            1,
        )
        .unwrap();
        assert!((lo - 0.5).abs() < 1e-10 && (hi - 11.0).abs() < 1e-10);
    }

    #[test]
    fn empirical_threshold_examples() {
        let (c, d0, e0) = empirical_thresholds(1.0, 0.05).unwrap();
        assert!((c - 20.0).abs() < 1e-12);
        assert!((d0 - 200.0).abs() < 1e-9 && (e0 - 800.0).abs() < 1e-9);
        let (_, d1, e1) = empirical_thresholds(1.0, 0.02).unwrap();
        assert!((d1 / d0 - 6.25).abs() < 1e-12 && (e1 / e0 - 6.25).abs() < 1e-12);
        assert_eq!(empirical_thresholds(0.0, 0.05).unwrap(), (0.0, 0.0, 0.0));
        assert!(empirical_thresholds(1.0, 0.0).is_err());
    }

    #[test]
    fn w_hessian_of_quadratic_is_recovered() {
        let p = make_quadratic_bilevel(0.5, 1.0);
        let spec = LyapunovSpec::bilevel(0.5, 0.5, 10.0);
        let s = FlowState::new(vec![0.4], vec![-0.3], Some(vec![0.9]));
        let h = lyapunov_hessian(&spec, &p, &s, 1e-4).unwrap();
        let h2 = lyapunov_hessian(&spec, &p, &FlowState::new(vec![-2.0], vec![1.0], Some(vec![3.0])), 1e-3)
            .unwrap();
        assert!((&h - &h2).amax() < 1e-5);
        let exact = SymmetricEigen::new(h.clone()).eigenvalues.amax();
        assert!((power_iteration_sym(&h, 200, 0) - exact).abs() < 1e-8 * exact);
    }
}
