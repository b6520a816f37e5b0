//! `(δ, η)` phase-diagram sweeps.

use std::io::Write;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::flows::{FlowField, FlowKind, FlowState};
use crate::integrator::{integrate, IntegrateOptions, Scheme};
use crate::lyapunov::fmt_f64;
use crate::metrics::sweep_cell_metric;
use crate::problems::{Family, Problem};
use crate::rng::SplitMix64;

use super::log_grid;
use super::meta::Metadata;

/// Log-spaced axis `lo … hi` with `n` points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl Grid {
    /// `[center/span, center·span]`.
    pub fn around(center: f64, span: f64, n: usize) -> Self {
        Self {
            lo: center / span,
            hi: center * span,
            n,
        }
    }

    pub fn values(&self) -> Result<Vec<f64>> {
        log_grid(self.lo, self.hi, self.n)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub delta: Grid,
    pub eta: Grid,
    pub lambda: f64,
    pub h: f64,
    pub n_steps: usize,
    pub scheme: Scheme,
    pub threads: usize,
    pub seed: u64,
    /// Outer start; `None` means the origin.
    pub x0: Option<Vec<f64>>,
    /// Std of the seeded Gaussian start of the inner variables.
    pub inner_scale: f64,
}

impl SweepConfig {
    /// 12×12 grids spanning a factor 30 either side of the thresholds,
    /// `h = 0.05/(1+λ)`, 2000 steps.
    pub fn around(delta0: f64, eta0: f64, lambda: f64) -> Self {
        Self {
            delta: Grid::around(delta0, 30.0, 12),
            eta: Grid::around(eta0, 30.0, 12),
            lambda,
            h: default_h(lambda),
            n_steps: 2000,
            scheme: Scheme::Euler,
            threads: 1,
            seed: 0,
            x0: None,
            inner_scale: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, g) in [("delta grid", self.delta), ("eta grid", self.eta)] {
            if g.n < 1 {
                return Err(Error::invalid(name, "needs at least one point"));
            }
            g.values()?;
        }
        if !(self.h > 0.0 && self.h.is_finite()) {
            return Err(Error::invalid("h", "must be a finite value > 0"));
        }
        if self.n_steps == 0 {
            return Err(Error::invalid("steps", "must be >= 1"));
        }
        if self.threads == 0 {
            return Err(Error::invalid("threads", "must be >= 1"));
        }
        Ok(())
    }
}

pub fn default_h(lambda: f64) -> f64 {
    0.05 / (1.0 + lambda)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub delta: f64,
    pub eta: f64,
    pub metric: f64,
    pub diverged: bool,
    pub error: Option<String>,
}

impl SweepCell {
    pub fn csv_row(&self) -> String {
        let err = self
            .error
            .as_deref()
            .map(|e| e.replace([',', '\n'], ";"))
            .unwrap_or_default();
        format!("{},{},{},{}", fmt_f64(self.delta), fmt_f64(self.eta), fmt_f64(self.metric), err)
    }
}

pub const SWEEP_CSV_HEADER: &str = "delta,eta,log10_mean_grad_w_sq,error";

fn cell_kind(family: Family, lambda: f64, delta: f64, eta: f64) -> Result<FlowKind> {
    match family {
        Family::Bilevel => Ok(FlowKind::Bilevel { lambda, delta, eta }),
        Family::MinMinMax => Ok(FlowKind::MinMinMax { delta, eta }),
        Family::Minimax => Err(Error::invalid("problem", "sweeps need a family with two inner time scales")),
    }
}

/// Start shared by every cell.
pub fn sweep_initial_state(p: &dyn Problem, cfg: &SweepConfig) -> Result<FlowState> {
    let d = p.dims();
    let x = match &cfg.x0 {
        None => vec![0.0; d.x],
        Some(v) if v.len() == d.x => v.clone(),
        Some(v) if v.len() == 1 => vec![v[0]; d.x],
        Some(v) => {
            return Err(Error::Dimension {
                what: "x0",
                expected: d.x,
                got: v.len(),
            })
        }
    };
    let mut rng = SplitMix64::with_stream(cfg.seed, 31);
    let y = rng.gaussian_vec(d.y, cfg.inner_scale);
    let z = rng.gaussian_vec(d.z, cfg.inner_scale);
    Ok(FlowState::new(x, y, Some(z)))
}

/// One cell: fixed-step integration and the mean squared outer gradient.
pub fn run_cell(p: &dyn Problem, cfg: &SweepConfig, s0: &FlowState, delta: f64, eta: f64) -> SweepCell {
    let run = || -> Result<(f64, bool)> {
        let kind = cell_kind(p.family(), cfg.lambda, delta, eta)?;
        let field = FlowField::new(&kind, p)?;
        let opts = IntegrateOptions::new(cfg.h, cfg.n_steps, cfg.scheme).states_off();
        let traj = integrate(&field, s0, &opts)?;
        Ok((sweep_cell_metric(&traj.outer_grad_sq, traj.diverged), traj.diverged))
    };
    match run() {
        Ok((metric, diverged)) => SweepCell {
            delta,
            eta,
            metric,
            diverged,
            error: None,
        },
        Err(e) => SweepCell {
            delta,
            eta,
            metric: f64::NAN,
            diverged: false,
            error: Some(e.to_string()),
        },
    }
}

/// Row-major over `(δ, η)`: `δ` is the slow index.
pub fn run_sweep(p: &dyn Problem, cfg: &SweepConfig) -> Result<Vec<SweepCell>> {
    cfg.validate()?;
    cell_kind(p.family(), cfg.lambda, 1.0, 1.0)?;
    let s0 = sweep_initial_state(p, cfg)?;
    let deltas = cfg.delta.values()?;
    let etas = cfg.eta.values()?;
    let cells: Vec<(f64, f64)> = deltas
        .iter()
        .flat_map(|&d| etas.iter().map(move |&e| (d, e)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| Error::invalid("threads", e.to_string()))?;
    Ok(pool.install(|| {
        cells
            .par_iter()
            .map(|&(d, e)| run_cell(p, cfg, &s0, d, e))
            .collect()
    }))
}

pub fn write_sweep_csv(out: &mut dyn Write, meta: &Metadata, cells: &[SweepCell]) -> std::io::Result<()> {
    meta.write_to(out)?;
    writeln!(out, "{SWEEP_CSV_HEADER}")?;
    for c in cells {
        writeln!(out, "{}", c.csv_row())?;
    }
    Ok(())
}

/// Records the sweep parameters under their CLI flag names.
pub fn push_sweep_meta(meta: &mut Metadata, cfg: &SweepConfig) {
    meta.push("lambda", fmt_f64(cfg.lambda))
        .push("delta-lo", fmt_f64(cfg.delta.lo))
        .push("delta-hi", fmt_f64(cfg.delta.hi))
        .push("delta-n", cfg.delta.n)
        .push("eta-lo", fmt_f64(cfg.eta.lo))
        .push("eta-hi", fmt_f64(cfg.eta.hi))
        .push("eta-n", cfg.eta.n)
        .push("h", fmt_f64(cfg.h))
        .push("steps", cfg.n_steps)
        .push("scheme", cfg.scheme.as_str())
        .push("inner-scale", fmt_f64(cfg.inner_scale));
    if let Some(x0) = &cfg.x0 {
        meta.push(
            "x0",
            x0.iter().map(|v| fmt_f64(*v)).collect::<Vec<_>>().join(","),
        );
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quadrant {
    /// `δ ≥ δ₀, η ≥ η₀`
    AboveAbove,
    AboveBelow,
    BelowAbove,
    BelowBelow,
}

/// Median cell metric in each quadrant around `(δ₀, η₀)`, in the order of
/// [`Quadrant`]. `NaN` cells are skipped; `+∞` counts. Empty quadrants give `None`.
pub fn quadrant_medians(cells: &[SweepCell], delta0: f64, eta0: f64) -> [Option<f64>; 4] {
    let mut buckets: [Vec<f64>; 4] = Default::default();
    for c in cells.iter().filter(|c| !c.metric.is_nan()) {
        let q = match (c.delta >= delta0, c.eta >= eta0) {
            (true, true) => 0,
            (true, false) => 1,
            (false, true) => 2,
            (false, false) => 3,
        };
        buckets[q].push(c.metric);
    }
    buckets.map(|mut v| {
        if v.is_empty() {
            return None;
        }
        v.sort_by(f64::total_cmp);
        let n = v.len();
        Some(if n % 2 == 1 {
            v[n / 2]
        } else {
            let (a, b) = (v[n / 2 - 1], v[n / 2]);
            if a == b {
                a
            } else {
                0.5 * (a + b)
            }
        })
    })
}
