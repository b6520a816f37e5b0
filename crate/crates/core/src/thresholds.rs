//! Closed-form constants: conversion constants, time-scale thresholds,
//! error-bound substitutions, bridge bias, tracking bounds and the Euler
//! step-size rule.

use std::fmt;

use crate::error::{Error, Result};
use crate::problems::{Family, Problem, ProblemConstants};

/// Curvature input for the minimax threshold: `μ`, or an error-bound `κ` replacing `1/μ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Curvature {
    Mu(f64),
    Kappa(f64),
}

impl Curvature {
    fn inverse(self) -> Result<f64> {
        match self {
            Curvature::Mu(mu) if mu > 0.0 => Ok(1.0 / mu),
            Curvature::Kappa(k) if k > 0.0 => Ok(k),
            Curvature::Mu(_) => Err(Error::invalid("mu", "must be > 0")),
            Curvature::Kappa(_) => Err(Error::invalid("kappa", "must be > 0")),
        }
    }
}

/// `γ₀ = (5/4)·C²` with `C = L_xy/μ` (or `L_xy·κ`).
pub fn gamma_threshold(l_xy: f64, curvature: Curvature) -> Result<f64> {
    if !(l_xy >= 0.0) {
        return Err(Error::invalid("l_xy", "must be >= 0"));
    }
    let c = match curvature {
        Curvature::Mu(mu) if mu > 0.0 => l_xy / mu,
        _ => l_xy * curvature.inverse()?,
    };
    Ok(1.25 * c * c)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinimaxThresholds {
    pub gamma0: f64,
    pub c1: f64,
    pub k_y: f64,
}

/// General minimax form: `K_y = α + (1−α)/(2ε)`, `c₁ = 1 − (1−α)ε/2`,
/// `γ₀ = K_y C²/α`. `α = ½, ε = 2` gives `γ₀ = (5/4)C²` and `c₁ = ½`.
pub fn minimax_thresholds(c: f64, alpha: f64, eps: f64) -> Result<MinimaxThresholds> {
    unit_interval("alpha", alpha)?;
    if !(eps > 0.0) {
        return Err(Error::invalid("eps", "must be > 0"));
    }
    let c1 = 1.0 - (1.0 - alpha) * eps / 2.0;
    if !(c1 > 0.0) {
        return Err(Error::invalid("eps", "descent constant c1 must be > 0"));
    }
    let k_y = alpha + (1.0 - alpha) / (2.0 * eps);
    Ok(MinimaxThresholds {
        gamma0: k_y * c * c / alpha,
        c1,
        k_y,
    })
}

fn unit_interval(name: &'static str, v: f64) -> Result<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(name, format!("must lie in (0, 1), got {v}")))
    }
}

/// Which modulus of `f + λg` entered `C_y(λ)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModulusSource {
    /// `λμ − ρ`
    Sufficient,
    /// Instance-supplied exact modulus.
    Exact,
    /// `λ/κ − ρ` from an error-bound constant.
    ErrorBound,
    /// Not applicable (minimax, min–min–max).
    None,
}

impl ModulusSource {
    pub fn as_str(self) -> &'static str {
        match self {
            ModulusSource::Sufficient => "lambda*mu-rho",
            ModulusSource::Exact => "exact",
            ModulusSource::ErrorBound => "lambda/kappa-rho",
            ModulusSource::None => "n/a",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Conversion {
    pub c_y: f64,
    /// Zero for minimax.
    pub c_z: f64,
    /// `μ_λ` (bilevel only, NaN otherwise).
    pub mu_lambda: f64,
    pub modulus: ModulusSource,
    /// `κ` when an error-bound constant replaced `1/μ`.
    pub kappa: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ConversionOptions {
    /// Use the instance's exact `μ_λ` instead of `λμ − ρ` when available.
    pub use_exact_modulus: bool,
}

/// Deviation-to-residual constants `(C_y, C_z)` for the instance's family.
///
/// Bilevel: `C_y(λ) = (L_fx + λL_gx)/μ_λ`, `C_z = L_gx/μ`. Minimax: `C_y = L_xy/μ`.
/// Min–min–max: `C_y = L_fx/μ_f`, `C_z = L_gx/μ_g`. An error-bound `κ`
/// replaces every `1/μ`.
pub fn conversion_constants(
    family: Family,
    c: &ProblemConstants,
    lambda: f64,
    opts: ConversionOptions,
) -> Result<Conversion> {
    c.validate()?;
    match family {
        Family::Minimax => Ok(Conversion {
            c_y: match c.kappa {
                Some(k) => c.l_xy * k,
                None => c.l_xy / c.mu,
            },
            c_z: 0.0,
            mu_lambda: f64::NAN,
            modulus: ModulusSource::None,
            kappa: c.kappa,
        }),
        Family::MinMinMax => {
            let mu_f = c.mu_f.unwrap_or(c.mu);
            let (c_y, c_z) = match c.kappa {
                Some(k) => (c.l_fx * k, c.l_gx * k),
                None => (c.l_fx / mu_f, c.l_gx / c.mu),
            };
            Ok(Conversion {
                c_y,
                c_z,
                mu_lambda: f64::NAN,
                modulus: ModulusSource::None,
                kappa: c.kappa,
            })
        }
        Family::Bilevel => {
            if !(lambda > 0.0) {
                return Err(Error::invalid("lambda", "must be > 0"));
            }
            let (mu_lambda, modulus) = match (c.kappa, c.mu_lambda_exact) {
                (Some(k), _) => (lambda / k - c.rho, ModulusSource::ErrorBound),
                (None, Some(m)) if opts.use_exact_modulus => (m.at(lambda), ModulusSource::Exact),
                (None, _) => (lambda * c.mu - c.rho, ModulusSource::Sufficient),
            };
            if !(mu_lambda > 0.0) {
                return Err(Error::invalid(
                    "lambda",
                    format!("λ = {lambda} does not exceed ρ/μ (μ_λ = {mu_lambda})"),
                ));
            }
            let c_z = match c.kappa {
                Some(k) => c.l_gx * k,
                None => c.l_gx / c.mu,
            };
            Ok(Conversion {
                c_y: (c.l_fx + lambda * c.l_gx) / mu_lambda,
                c_z,
                mu_lambda,
                modulus,
                kappa: c.kappa,
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BilevelThresholds {
    pub delta0: f64,
    pub eta0: f64,
    pub c1: f64,
    pub k_y: f64,
    /// Normalized by `λ²`: `η₀ = K_z C_z²/β`.
    pub k_z: f64,
}

/// `δ₀ = K_y C_y²/α` with `K_y = (1−α)/(2ε₁) + θ|α−β|/2`;
/// `η₀ = K_z C_z²/β` with `K_z = β + (1−β)²/(2(1−α)(1−ε₁/2)) + |α−β|/(2θ)`;
/// `c₁ = (1−α)(1−ε₁/2)/2`.
pub fn bilevel_thresholds(
    c_y: f64,
    c_z: f64,
    alpha: f64,
    beta: f64,
    theta: f64,
    eps1: f64,
) -> Result<BilevelThresholds> {
    unit_interval("alpha", alpha)?;
    unit_interval("beta", beta)?;
    if !(theta > 0.0) {
        return Err(Error::invalid("theta", "must be > 0"));
    }
    if !(eps1 > 0.0 && eps1 < 2.0) {
        return Err(Error::invalid("eps1", "must lie in (0, 2)"));
    }
    let gap = (alpha - beta).abs();
    let k_y = (1.0 - alpha) / (2.0 * eps1) + theta * gap / 2.0;
    let shrink = 1.0 - eps1 / 2.0;
    let k_z = beta + (1.0 - beta).powi(2) / (2.0 * (1.0 - alpha) * shrink) + gap / (2.0 * theta);
    Ok(BilevelThresholds {
        delta0: k_y * c_y * c_y / alpha,
        eta0: k_z * c_z * c_z / beta,
        c1: (1.0 - alpha) * shrink / 2.0,
        k_y,
        k_z,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinMinMaxThresholds {
    pub delta0: f64,
    pub eta0: f64,
    pub c1: f64,
    pub k_y: f64,
    pub k_z: f64,
    pub eps1: f64,
    pub eps2: f64,
}

/// Default Young parameters `ε₁ = 1/(2(1+α))`, `ε₂ = 1/(2(1−β))`, which give `c₁ = ½`.
pub fn minminmax_default_eps(alpha: f64, beta: f64) -> (f64, f64) {
    (1.0 / (2.0 * (1.0 + alpha)), 1.0 / (2.0 * (1.0 - beta)))
}

/// `K_y = (1+α)/(2ε₁) + |α−β|/2`, `K_z = (1−β)/(2ε₂) + |α−β|/2 + β`,
/// `c₁ = 1 − (1+α)ε₁/2 − (1−β)ε₂/2`, `δ₀ = K_y C_y²/α`, `η₀ = K_z C_z²/β`.
pub fn minminmax_thresholds(
    c_y: f64,
    c_z: f64,
    alpha: f64,
    beta: f64,
    eps1: f64,
    eps2: f64,
) -> Result<MinMinMaxThresholds> {
    unit_interval("alpha", alpha)?;
    unit_interval("beta", beta)?;
    if !(eps1 > 0.0 && eps2 > 0.0) {
        return Err(Error::invalid("eps", "Young parameters must be > 0"));
    }
    let c1 = 1.0 - (1.0 + alpha) * eps1 / 2.0 - (1.0 - beta) * eps2 / 2.0;
    if !(c1 > 0.0) {
        return Err(Error::invalid(
            "eps",
            format!("(ε₁, ε₂) = ({eps1}, {eps2}) gives c1 = {c1} <= 0"),
        ));
    }
    let gap = (alpha - beta).abs();
    let k_y = (1.0 + alpha) / (2.0 * eps1) + gap / 2.0;
    let k_z = (1.0 - beta) / (2.0 * eps2) + gap / 2.0 + beta;
    Ok(MinMinMaxThresholds {
        delta0: k_y * c_y * c_y / alpha,
        eta0: k_z * c_z * c_z / beta,
        c1,
        k_y,
        k_z,
        eps1,
        eps2,
    })
}

/// `λ̄ = 2L_fy/μ`
pub fn lambda_bar(c: &ProblemConstants) -> f64 {
    2.0 * c.l_fy / c.mu
}

/// `C_br = (2/μ)(L_fx + M_gxy·L_fy/μ)·G + (2/μ²)(L_gxy + M_gxy·L_gyy/μ)·G²`
/// with `G = ‖∇_y f(x, y*(x))‖`.
pub fn bridge_constant(c: &ProblemConstants, grad_fy_at_opt: f64) -> f64 {
    let mu = c.mu;
    let g = grad_fy_at_opt;
    (2.0 / mu) * (c.l_fx + c.m_gxy * c.l_fy / mu) * g
        + (2.0 / (mu * mu)) * (c.l_gxy + c.m_gxy * c.l_gyy / mu) * g * g
}

/// Uniform bridge constant with `G` replaced by `G_*`.
pub fn bridge_constant_uniform(c: &ProblemConstants) -> f64 {
    bridge_constant(c, c.g_star)
}

/// `max{λ̄, 2C_br/√ε}`
pub fn lambda_for_eps(c_br: f64, eps: f64, lambda_bar: f64) -> f64 {
    lambda_bar.max(2.0 * c_br / eps.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EbSource {
    StrongConvexity { mu: f64 },
    Qg { mu_qg: f64 },
    PlQg { mu_pl: f64, mu_qg: f64 },
    UserSupplied { kappa: f64 },
}

/// Error-bound constant `κ` for each sufficient route.
pub fn eb_kappa(source: EbSource) -> Result<f64> {
    let pos = |name, v: f64| {
        if v > 0.0 {
            Ok(v)
        } else {
            Err(Error::invalid(name, "must be > 0"))
        }
    };
    Ok(match source {
        EbSource::StrongConvexity { mu } => 1.0 / pos("mu", mu)?,
        EbSource::Qg { mu_qg } => 2.0 / pos("mu_qg", mu_qg)?,
        EbSource::PlQg { mu_pl, mu_qg } => 1.0 / (pos("mu_qg", mu_qg)? * pos("mu_pl", mu_pl)?).sqrt(),
        EbSource::UserSupplied { kappa } => pos("kappa", kappa)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TrackingHorizon {
    /// `e^{L_F T}` growth over a finite window.
    Finite { l_f: f64, t: f64 },
    /// Uniform in time for a `μ_F`-strongly convex `F`.
    Uniform { mu_f: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackingParams {
    pub c_br: f64,
    pub lambda: f64,
    pub c_y: f64,
    pub c_z: f64,
    pub alpha: f64,
    pub beta: f64,
    pub delta: f64,
    pub delta0: f64,
    pub eta: f64,
    pub eta0: f64,
    /// `W(0) − 𝓛*_{λ,inf}`
    pub v0: f64,
    pub horizon: TrackingHorizon,
}

/// Bound on `sup_t ‖x(t) − w(t)‖` between the penalty flow and the ideal flow.
pub fn tracking_bound(p: &TrackingParams) -> Result<f64> {
    if !(p.delta > p.delta0) || !(p.eta > p.eta0) {
        return Err(Error::invalid(
            "margins",
            "tracking bound needs δ > δ₀ and η > η₀",
        ));
    }
    if !(p.lambda > 0.0) || !(p.v0 >= 0.0) {
        return Err(Error::invalid("tracking", "needs λ > 0 and V₀ >= 0"));
    }
    let margins = p.c_y / (p.alpha * (p.delta - p.delta0)).sqrt()
        + p.c_z / (p.beta * (p.eta - p.eta0)).sqrt();
    Ok(match p.horizon {
        TrackingHorizon::Finite { l_f, t } => {
            (l_f * t).exp() * (p.c_br * t / p.lambda + (t * p.v0).sqrt() * margins)
        }
        TrackingHorizon::Uniform { mu_f } => {
            if !(mu_f > 0.0) {
                return Err(Error::invalid("mu_F", "must be > 0"));
            }
            p.c_br / (mu_f * p.lambda) + (p.v0 / mu_f).sqrt() * margins
        }
    })
}

/// `min_{i: M_i > 0} c_i/(L_W M_i)`; `None` when every `M_i` vanishes.
pub fn euler_step_bound(c: [f64; 3], m: [f64; 3], l_w: f64) -> Result<Option<f64>> {
    if !(l_w > 0.0) {
        return Err(Error::invalid("L_W", "must be > 0"));
    }
    let mut best: Option<f64> = None;
    for i in 0..3 {
        if m[i] > 0.0 {
            let h = c[i] / (l_w * m[i]);
            best = Some(best.map_or(h, |b: f64| b.min(h)));
        }
    }
    Ok(best)
}

/// Dissipation coefficients `Ẇ ≤ −c₁‖∇Φ‖² − c₂‖r_y‖² − c₃‖r_z‖²` together with
/// the field bounds `‖G‖² ≤ M₁‖∇Φ‖² + M₂‖r_y‖² + M₃‖r_z‖²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalForm {
    pub c: [f64; 3],
    pub m: [f64; 3],
}

/// Minimax: `ẋ = −(∇F + D_y)`, `ẏ = γ r_y`, so `M = (2, 2C² + γ², 0)` and
/// `c = (c₁, α(γ − γ₀), 0)`.
pub fn minimax_normal_form(
    conv: &Conversion,
    th: &MinimaxThresholds,
    alpha: f64,
    gamma: f64,
) -> NormalForm {
    let c2 = conv.c_y.powi(2);
    NormalForm {
        c: [th.c1, alpha * (gamma - th.gamma0), 0.0],
        m: [2.0, 2.0 * c2 + gamma * gamma, 0.0],
    }
}

/// Bilevel: `ẋ = −(∇Φ + D_y − λD_z)`, `ẏ = −δ r_y`, `ż = −ηλ r_z`, so
/// `M = (3, 3C_y² + δ², 3λ²C_z² + η²λ²)` and
/// `c = (c₁, α(δ − δ₀), βλ²(η − η₀))`.
pub fn bilevel_normal_form(
    conv: &Conversion,
    th: &BilevelThresholds,
    alpha: f64,
    beta: f64,
    lambda: f64,
    delta: f64,
    eta: f64,
) -> NormalForm {
    let l2 = lambda * lambda;
    NormalForm {
        c: [
            th.c1,
            alpha * (delta - th.delta0),
            beta * l2 * (eta - th.eta0),
        ],
        m: [
            3.0,
            3.0 * conv.c_y.powi(2) + delta * delta,
            3.0 * l2 * conv.c_z.powi(2) + eta * eta * l2,
        ],
    }
}

/// Min–min–max: `ẋ = −(∇𝓛 + D_y − D_z)`, so `M = (3, 3C_y² + δ², 3C_z² + η²)`.
pub fn minminmax_normal_form(
    conv: &Conversion,
    th: &MinMinMaxThresholds,
    alpha: f64,
    beta: f64,
    delta: f64,
    eta: f64,
) -> NormalForm {
    NormalForm {
        c: [th.c1, alpha * (delta - th.delta0), beta * (eta - th.eta0)],
        m: [
            3.0,
            3.0 * conv.c_y.powi(2) + delta * delta,
            3.0 * conv.c_z.powi(2) + eta * eta,
        ],
    }
}

/// Young weights and options for [`threshold_report`].
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdInputs {
    pub alpha: f64,
    pub beta: f64,
    pub theta: f64,
    pub eps1: f64,
    /// Minimax Young parameter `ε`; `2` reproduces `γ₀ = (5/4)C²`.
    pub eps_minimax: f64,
    /// Min–min–max `ε₂`; `None` selects the defaults together with `ε₁`.
    pub eps2: Option<f64>,
    pub lambda: f64,
    pub use_exact_modulus: bool,
    /// Target accuracy for `λ(ε)`.
    pub eps_target: Option<f64>,
    /// Time scales `(γ or δ, η)` for the Euler bound.
    pub scales: Option<(f64, f64)>,
    pub l_w: Option<f64>,
}

impl Default for ThresholdInputs {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            beta: 0.5,
            theta: 1.0,
            eps1: 1.0,
            eps_minimax: 2.0,
            eps2: None,
            lambda: 10.0,
            use_exact_modulus: false,
            eps_target: None,
            scales: None,
            l_w: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdReport {
    pub family: Family,
    pub lambda: Option<f64>,
    pub c_y_lambda: f64,
    pub c_z: Option<f64>,
    pub gamma0: Option<f64>,
    pub delta0: Option<f64>,
    pub eta0: Option<f64>,
    pub c1: f64,
    pub k_y: f64,
    pub k_z: Option<f64>,
    pub lambda_bar: Option<f64>,
    pub c_br: Option<f64>,
    pub lambda_for_eps: Option<f64>,
    pub normal_form: Option<NormalForm>,
    pub h_max: Option<f64>,
    pub mu_lambda: Option<f64>,
    pub modulus: ModulusSource,
    pub kappa: Option<f64>,
}

pub fn threshold_report(p: &dyn Problem, inp: &ThresholdInputs) -> Result<ThresholdReport> {
    let c = p.constants();
    let family = p.family();
    let conv = conversion_constants(
        family,
        c,
        inp.lambda,
        ConversionOptions {
            use_exact_modulus: inp.use_exact_modulus,
        },
    )?;
    let mut r = ThresholdReport {
        family,
        lambda: None,
        c_y_lambda: conv.c_y,
        c_z: None,
        gamma0: None,
        delta0: None,
        eta0: None,
        c1: 0.0,
        k_y: 0.0,
        k_z: None,
        lambda_bar: None,
        c_br: None,
        lambda_for_eps: None,
        normal_form: None,
        h_max: None,
        mu_lambda: None,
        modulus: conv.modulus,
        kappa: conv.kappa,
    };
    match family {
        Family::Minimax => {
            let th = minimax_thresholds(conv.c_y, inp.alpha, inp.eps_minimax)?;
            r.gamma0 = Some(th.gamma0);
            r.c1 = th.c1;
            r.k_y = th.k_y;
            r.normal_form = inp
                .scales
                .map(|(gamma, _)| minimax_normal_form(&conv, &th, inp.alpha, gamma));
        }
        Family::Bilevel => {
            let th = bilevel_thresholds(conv.c_y, conv.c_z, inp.alpha, inp.beta, inp.theta, inp.eps1)?;
            let lb = lambda_bar(c);
            let c_br = bridge_constant_uniform(c);
            r.lambda = Some(inp.lambda);
            r.c_z = Some(conv.c_z);
            r.delta0 = Some(th.delta0);
            r.eta0 = Some(th.eta0);
            r.c1 = th.c1;
            r.k_y = th.k_y;
            r.k_z = Some(th.k_z);
            r.lambda_bar = Some(lb);
            r.c_br = Some(c_br);
            r.lambda_for_eps = inp.eps_target.map(|e| lambda_for_eps(c_br, e, lb));
            r.mu_lambda = Some(conv.mu_lambda);
            r.normal_form = inp.scales.map(|(delta, eta)| {
                bilevel_normal_form(&conv, &th, inp.alpha, inp.beta, inp.lambda, delta, eta)
            });
        }
        Family::MinMinMax => {
            let (d1, d2) = minminmax_default_eps(inp.alpha, inp.beta);
            let (e1, e2) = match inp.eps2 {
                Some(e2) => (inp.eps1, e2),
                None => (d1, d2),
            };
            let th = minminmax_thresholds(conv.c_y, conv.c_z, inp.alpha, inp.beta, e1, e2)?;
            r.c_z = Some(conv.c_z);
            r.delta0 = Some(th.delta0);
            r.eta0 = Some(th.eta0);
            r.c1 = th.c1;
            r.k_y = th.k_y;
            r.k_z = Some(th.k_z);
            r.normal_form = inp.scales.map(|(delta, eta)| {
                minminmax_normal_form(&conv, &th, inp.alpha, inp.beta, delta, eta)
            });
        }
    }
    if let (Some(nf), Some(l_w)) = (r.normal_form, inp.l_w) {
        r.h_max = euler_step_bound(nf.c, nf.m, l_w)?;
    }
    Ok(r)
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), crate::lyapunov::fmt_f64)
}

impl ThresholdReport {
    fn rows(&self) -> Vec<(&'static str, String)> {
        let num = crate::lyapunov::fmt_f64;
        vec![
            ("family", self.family.as_str().into()),
            ("lambda", opt(self.lambda)),
            ("C_y_lambda", num(self.c_y_lambda)),
            ("C_z", opt(self.c_z)),
            ("gamma0", opt(self.gamma0)),
            ("delta0", opt(self.delta0)),
            ("eta0", opt(self.eta0)),
            ("c1", num(self.c1)),
            ("K_y", num(self.k_y)),
            ("K_z", opt(self.k_z)),
            ("lambda_bar", opt(self.lambda_bar)),
            ("C_br", opt(self.c_br)),
            ("lambda_for_eps", opt(self.lambda_for_eps)),
            ("h_max", opt(self.h_max)),
            ("mu_lambda", opt(self.mu_lambda)),
            ("mu_lambda_source", self.modulus.as_str().into()),
            (
                "kappa",
                self.kappa
                    .map_or_else(|| "1/mu".into(), crate::lyapunov::fmt_f64),
            ),
        ]
    }

    pub fn csv_header(&self) -> String {
        self.rows().iter().map(|(k, _)| *k).collect::<Vec<_>>().join(",")
    }

    pub fn csv_row(&self) -> String {
        self.rows().into_iter().map(|(_, v)| v).collect::<Vec<_>>().join(",")
    }
}

impl fmt::Display for ThresholdReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in self.rows() {
            writeln!(f, "{k:<18} {v}")?;
        }
        Ok(())
    }
}
