//! Experiment drivers shared by the CLI and the acceptance suite.

pub mod cli;
pub mod meta;
pub mod sweep;
pub mod track;

use crate::data::{synth_blobs, Dataset};
use crate::error::{Error, Result};
use crate::flows::{FlowKind, FlowState, HypergradOptions};
use crate::problems::{
    self, make_hypercleaning, Family, HypercleanConfig, InnerSolveOptions, Problem,
    QuadraticBilevel, QuadraticMinMinMax, QuadraticMinimax,
};
use crate::rng::SplitMix64;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Where hypercleaning data comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Csv(std::path::PathBuf),
    Synthetic { n: usize, d: usize, k: usize, seed: u64 },
}

impl DataSource {
    pub fn load(&self) -> Result<Dataset> {
        match self {
            DataSource::Csv(path) => Dataset::load_csv(path),
            DataSource::Synthetic { n, d, k, seed } => synth_blobs(*n, *d, *k, *seed),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ProblemChoice {
    QuadMinimax { l_xy: f64, mu: f64, dim: usize },
    QuadBilevel { a: f64, b: f64, dim: usize, g_star: f64 },
    QuadMinMinMax { a_f: f64, a_g: f64, dim: usize },
    Hyperclean { data: DataSource, config: HypercleanConfig },
}

impl ProblemChoice {
    pub fn build(&self, kappa: Option<f64>) -> Result<Box<dyn Problem>> {
        Ok(match self {
            ProblemChoice::QuadMinimax { l_xy, mu, dim } => {
                Box::new(QuadraticMinimax::new(*l_xy, *mu, *dim)?.with_kappa(kappa))
            }
            ProblemChoice::QuadBilevel { a, b, dim, g_star } => Box::new(
                QuadraticBilevel::new(*a, *b, *dim)
                    .with_kappa(kappa)
                    .with_g_star(*g_star),
            ),
            ProblemChoice::QuadMinMinMax { a_f, a_g, dim } => {
                Box::new(QuadraticMinMinMax::new(*a_f, *a_g, *dim)?.with_kappa(kappa))
            }
            ProblemChoice::Hyperclean { data, config } => {
                let ds = data.load()?;
                let mut p = make_hypercleaning(&ds, config)?;
                if let Some(k) = kappa {
                    p = p.with_mu(1.0 / k);
                }
                Box::new(p)
            }
        })
    }
}

/// Default flow for a problem family.
pub fn default_flow(family: Family, gamma: f64, lambda: f64, delta: f64, eta: f64) -> FlowKind {
    match family {
        Family::Minimax => FlowKind::Minimax { gamma },
        Family::Bilevel => FlowKind::Bilevel { lambda, delta, eta },
        Family::MinMinMax => FlowKind::MinMinMax { delta, eta },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitMode {
    /// Seeded standard Gaussian for every variable.
    Random,
    /// Inner variables at their optimizers for the given `x`.
    ZeroGap,
    Zeros,
}

impl std::str::FromStr for InitMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(InitMode::Random),
            "zero-gap" => Ok(InitMode::ZeroGap),
            "zeros" => Ok(InitMode::Zeros),
            _ => Err(Error::invalid("init", format!("unknown init mode `{s}`"))),
        }
    }
}

impl InitMode {
    pub fn as_str(self) -> &'static str {
        match self {
            InitMode::Random => "random",
            InitMode::ZeroGap => "zero-gap",
            InitMode::Zeros => "zeros",
        }
    }
}

/// Builds the initial state of `kind` on `p`. `x0` overrides the outer
/// variable (a single value is broadcast).
pub fn initial_state(
    p: &dyn Problem,
    kind: &FlowKind,
    mode: InitMode,
    x0: Option<&[f64]>,
    seed: u64,
) -> Result<FlowState> {
    let d = p.dims();
    let mut rng = SplitMix64::with_stream(seed, 30);
    let draw = |rng: &mut SplitMix64, n: usize| match mode {
        InitMode::Random => rng.gaussian_vec(n, 1.0),
        _ => vec![0.0; n],
    };
    let mut x = draw(&mut rng, d.x);
    if let Some(v) = x0 {
        x = match v.len() {
            1 => vec![v[0]; d.x],
            n if n == d.x => v.to_vec(),
            n => {
                return Err(Error::Dimension {
                    what: "x0",
                    expected: d.x,
                    got: n,
                })
            }
        };
    }
    let mut y = draw(&mut rng, d.y);
    let mut z = draw(&mut rng, d.z);
    if mode == InitMode::ZeroGap {
        let opts = InnerSolveOptions::for_problem(p);
        match kind {
            FlowKind::Minimax { .. } => y = problems::upper_argopt(p, &x, &opts)?,
            FlowKind::Bilevel { lambda, .. } => {
                z = problems::lower_argmin(p, &x, &opts)?;
                y = problems::penalized_argmin(p, &x, *lambda, &opts.clone().with_init(z.clone()))?;
            }
            FlowKind::MinMinMax { .. } => {
                y = problems::upper_argopt(p, &x, &opts)?;
                z = problems::lower_argmin(p, &x, &opts)?;
            }
            FlowKind::IdealHypergrad(_) => {}
        }
    }
    Ok(match kind {
        FlowKind::IdealHypergrad(_) => FlowState::outer(x),
        FlowKind::Minimax { .. } => FlowState::new(x, y, None),
        _ => FlowState::new(x, y, Some(z)),
    })
}

pub fn ideal_kind(p: &dyn Problem) -> FlowKind {
    FlowKind::IdealHypergrad(HypergradOptions::for_problem(p))
}

/// `n` log-spaced values from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi >= lo && lo.is_finite() && hi.is_finite()) {
        return Err(Error::invalid("grid", format!("bounds must satisfy 0 < lo <= hi, got [{lo}, {hi}]")));
    }
    if n == 1 {
        return Ok(vec![lo]);
    }
    if n == 0 {
        return Err(Error::invalid("grid", "needs at least one point"));
    }
    let (a, b) = (lo.ln(), hi.ln());
    Ok((0..n)
        .map(|i| {
            if i == 0 {
                lo
            } else if i + 1 == n {
                hi
            } else {
                (a + (b - a) * i as f64 / (n - 1) as f64).exp()
            }
        })
        .collect())
}

/// Parses `1,2.5,3` into floats.
pub fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::invalid("list", format!("`{t}` is not a number")))
        })
        .collect()
}
