//! Penalty flow versus ideal hypergradient flow on the 1D quadratic bilevel
//! instance.

use crate::error::{Error, Result};
use crate::flows::{FlowField, FlowKind, FlowState, HypergradOptions};
use crate::integrator::{integrate, IntegrateOptions, Scheme};
use crate::lyapunov::{lyapunov_value, LyapunovSpec};
use crate::metrics::{tracking_errors, TrackReport};
use crate::problems::{lower_argmin, InnerSolveOptions, Problem, QuadraticBilevel};
use crate::thresholds::{
    bilevel_thresholds, bridge_constant, conversion_constants, tracking_bound, BilevelThresholds,
    ConversionOptions, TrackingHorizon, TrackingParams,
};

use super::{initial_state, InitMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CaseSelect {
    A,
    B,
    Both,
}

impl std::str::FromStr for CaseSelect {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "A" | "a" => Ok(CaseSelect::A),
            "B" | "b" => Ok(CaseSelect::B),
            "both" => Ok(CaseSelect::Both),
            _ => Err(Error::invalid("case", format!("expected A, B or both, got `{s}`"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrackConfig {
    pub a: f64,
    pub b: f64,
    pub lambdas: Vec<f64>,
    pub cases: CaseSelect,
    pub horizon: f64,
    pub h: f64,
    pub scheme: Scheme,
    pub x0: f64,
    pub init: InitMode,
    pub seed: u64,
    pub alpha: f64,
    pub beta: f64,
    pub theta: f64,
    pub eps1: f64,
    /// `δ = delta_mult·δ₀(λ)` in Case A.
    pub delta_mult: f64,
    /// `η = eta_mult·η₀`.
    pub eta_mult: f64,
    pub use_exact_modulus: bool,
}

impl Default for TrackConfig {
    fn default() -> Self {
        Self {
            a: 0.5,
            b: 1.0,
            lambdas: vec![1.0, 2.0, 5.0, 10.0, 20.0],
            cases: CaseSelect::Both,
            horizon: 10.0,
            h: 1e-3,
            scheme: Scheme::Rk4,
            x0: 1.0,
            init: InitMode::ZeroGap,
            seed: 0,
            alpha: 0.5,
            beta: 0.5,
            theta: 1.0,
            eps1: 1.0,
            delta_mult: 1.5,
            eta_mult: 8.0,
            use_exact_modulus: false,
        }
    }
}

/// One penalty-flow run against the ideal flow.
#[derive(Debug, Clone)]
pub struct TrackRun {
    pub report: TrackReport,
    pub delta: f64,
    pub eta: f64,
    pub delta0: f64,
    pub eta0: f64,
    pub v0: f64,
    pub c_br: f64,
}

fn thresholds_at(p: &QuadraticBilevel, cfg: &TrackConfig, lambda: f64) -> Result<(f64, f64, BilevelThresholds)> {
    let conv = conversion_constants(
        p.family(),
        p.constants(),
        lambda,
        ConversionOptions {
            use_exact_modulus: cfg.use_exact_modulus,
        },
    )?;
    let th = bilevel_thresholds(conv.c_y, conv.c_z, cfg.alpha, cfg.beta, cfg.theta, cfg.eps1)?;
    Ok((conv.c_y, conv.c_z, th))
}

fn n_steps(cfg: &TrackConfig) -> Result<usize> {
    if !(cfg.horizon > 0.0 && cfg.h > 0.0) {
        return Err(Error::invalid("T/h", "horizon and step must be > 0"));
    }
    Ok((cfg.horizon / cfg.h).round().max(1.0) as usize)
}

/// Ideal-flow samples `w_k` on the same grid as the penalty flow.
pub fn ideal_path(p: &QuadraticBilevel, cfg: &TrackConfig) -> Result<Vec<Vec<f64>>> {
    let kind = FlowKind::IdealHypergrad(HypergradOptions::for_problem(p));
    let field = FlowField::new(&kind, p)?;
    let w0 = FlowState::outer(vec![cfg.x0; p.dims().x]);
    let traj = integrate(&field, &w0, &IntegrateOptions::new(cfg.h, n_steps(cfg)?, cfg.scheme))?;
    Ok(traj.states.into_iter().map(|s| s.x).collect())
}

/// `max_k ‖∇_y f(x_k, y*(x_k))‖` over the given outer iterates.
fn max_grad_fy(p: &dyn Problem, xs: &[&[f64]]) -> Result<f64> {
    let opts = InnerSolveOptions::for_problem(p);
    let mut g = 0.0_f64;
    for x in xs {
        let y = lower_argmin(p, x, &opts)?;
        g = g.max(crate::linalg::norm(&p.upper().grad_u(x, &y)));
    }
    Ok(g)
}

pub fn track_one(
    p: &QuadraticBilevel,
    cfg: &TrackConfig,
    ideal: &[Vec<f64>],
    lambda: f64,
    delta: f64,
    eta: f64,
    label: &str,
) -> Result<TrackRun> {
    let (c_y, c_z, th) = thresholds_at(p, cfg, lambda)?;
    let kind = FlowKind::Bilevel { lambda, delta, eta };
    let field = FlowField::new(&kind, p)?;
    let s0 = initial_state(p, &kind, cfg.init, Some(&[cfg.x0]), cfg.seed)?;
    let traj = integrate(&field, &s0, &IntegrateOptions::new(cfg.h, n_steps(cfg)?, cfg.scheme))?;
    if traj.diverged || traj.states.len() != ideal.len() {
        return Err(Error::NonFinite {
            component: "track",
            index: traj.steps_taken,
        });
    }
    let xs: Vec<Vec<f64>> = traj.states.iter().map(|s| s.x.clone()).collect();
    let (sup_err, avg_err, rms_err) = tracking_errors(&xs, ideal, cfg.h)?;

    let spec = LyapunovSpec::bilevel(cfg.alpha, cfg.beta, lambda);
    let v0 = lyapunov_value(&spec, p, &s0)? - p.envelope_lower_bound().unwrap_or(0.0);
    let all: Vec<&[f64]> = xs.iter().chain(ideal).map(|v| v.as_slice()).collect();
    let c_br = bridge_constant(p.constants(), max_grad_fy(p, &all)?);
    let bound = tracking_bound(&TrackingParams {
        c_br,
        lambda,
        c_y,
        c_z,
        alpha: cfg.alpha,
        beta: cfg.beta,
        delta,
        delta0: th.delta0,
        eta,
        eta0: th.eta0,
        v0: v0.max(0.0),
        horizon: TrackingHorizon::Finite {
            l_f: p.hyper_curvature(),
            t: cfg.horizon,
        },
    })
    .ok();
    Ok(TrackRun {
        report: TrackReport {
            lambda,
            case_label: label.to_string(),
            sup_err,
            avg_err,
            rms_err,
            bound,
        },
        delta,
        eta,
        delta0: th.delta0,
        eta0: th.eta0,
        v0,
        c_br,
    })
}

/// Case A: `δ = m·δ₀(λ)`, `η = m'·η₀`. Case B freezes `δ` at its `λ = 1` value.
pub fn run_track(cfg: &TrackConfig) -> Result<Vec<TrackRun>> {
    if cfg.lambdas.is_empty() {
        return Err(Error::invalid("lambdas", "needs at least one value"));
    }
    let p = QuadraticBilevel::new(cfg.a, cfg.b, 1);
    let ideal = ideal_path(&p, cfg)?;
    let (_, _, th1) = thresholds_at(&p, cfg, 1.0)?;
    let delta_b = cfg.delta_mult * th1.delta0;
    let mut out = Vec::new();
    for &lambda in &cfg.lambdas {
        let (_, _, th) = thresholds_at(&p, cfg, lambda)?;
        let eta = cfg.eta_mult * th.eta0;
        if matches!(cfg.cases, CaseSelect::A | CaseSelect::Both) {
            out.push(track_one(&p, cfg, &ideal, lambda, cfg.delta_mult * th.delta0, eta, "A")?);
        }
        if matches!(cfg.cases, CaseSelect::B | CaseSelect::Both) {
            out.push(track_one(&p, cfg, &ideal, lambda, delta_b, eta, "B")?);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cases_coincide_at_unit_lambda() {
        let cfg = TrackConfig {
            lambdas: vec![1.0],
            horizon: 1.0,
            h: 1e-2,
            ..TrackConfig::default()
        };
        let runs = run_track(&cfg).unwrap();
        assert_eq!(runs.len(), 2);
        assert_eq!(runs[0].delta, runs[1].delta);
        assert_eq!(runs[0].report.sup_err, runs[1].report.sup_err);
    }

    #[test]
    fn ideal_path_matches_closed_form() {
        let cfg = TrackConfig {
            horizon: 4.0,
            ..TrackConfig::default()
        };
        let p = QuadraticBilevel::new(cfg.a, cfg.b, 1);
        let w = ideal_path(&p, &cfg).unwrap();
        assert!((w.last().unwrap()[0] - (-1.0f64).exp()).abs() < 1e-8);
    }

    #[test]
    fn small_lambda_rejected_when_modulus_vanishes() {
        let p = QuadraticBilevel::new(0.5, 1.0, 1);
        let cfg = TrackConfig::default();
        assert!(thresholds_at(&p, &cfg, 0.0).is_err());
    }
}
