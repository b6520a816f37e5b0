//! Command-line front end. Every CSV it writes starts with `# key=value`
//! metadata that `--replay` feeds back as flags.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::{Error, Result};
use crate::estimation::{estimate, EstimateOptions, EstimateReport, MuMode};
use crate::flows::FlowKind;
use crate::integrator::{integrate, IntegrateOptions, Scheme};
use crate::lyapunov::{fill_w_dot, fmt_f64, DiagnosticsRecord, LyapunovSpec};
use crate::metrics::TrackReport;
use crate::problems::{check_gradients, HypercleanConfig, Problem};
use crate::thresholds::{threshold_report, ThresholdInputs};
use crate::FlowField;

use super::meta::{pairs_to_args, parse_config, Metadata};
use super::sweep::{push_sweep_meta, run_sweep, write_sweep_csv, Grid, SweepConfig};
use super::track::{run_track, CaseSelect, TrackConfig};
use super::{default_flow, ideal_kind, initial_state, parse_list, DataSource, InitMode, ProblemChoice};

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

/// Exit code for a library error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        _ if e.is_numerical() => EXIT_NUMERICAL,
        Error::Data(_) | Error::Io(_) => EXIT_DATA,
        _ => EXIT_USAGE,
    }
}

#[derive(Parser, Debug)]
#[command(name = "nested-flow", version, about = "Coupled gradient flows for nested optimization")]
#[command(args_override_self = true)]
pub struct Cli {
    /// key=value file loaded before the command-line flags
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Re-run with the parameters recorded in a CSV written by this tool
    #[arg(long, global = true, value_name = "CSV")]
    pub replay: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Print conversion constants and time-scale thresholds
    Thresholds(ThresholdsArgs),
    /// Integrate a single flow and write the trajectory
    Run(RunArgs),
    /// (delta, eta) phase-diagram sweep
    Sweep(SweepArgs),
    /// Penalty flow versus ideal flow on the 1D quadratic bilevel problem
    Track(TrackArgs),
    /// Hypercleaning pipeline: estimation followed by a sweep
    Hyperclean(SweepArgs),
    /// Estimate the cross-Lipschitz constant and empirical thresholds
    Estimate(EstimateArgs),
    /// Compare analytic derivatives with finite differences
    CheckGrad(CheckGradArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Thresholds(_) => "thresholds",
            Command::Run(_) => "run",
            Command::Sweep(_) => "sweep",
            Command::Track(_) => "track",
            Command::Hyperclean(_) => "hyperclean",
            Command::Estimate(_) => "estimate",
            Command::CheckGrad(_) => "check-grad",
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProblemName {
    QuadMinimax,
    QuadBilevel,
    QuadMinminmax,
    Hyperclean,
}

impl ProblemName {
    fn as_str(self) -> &'static str {
        match self {
            ProblemName::QuadMinimax => "quad-minimax",
            ProblemName::QuadBilevel => "quad-bilevel",
            ProblemName::QuadMinminmax => "quad-minminmax",
            ProblemName::Hyperclean => "hyperclean",
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum FlowName {
    Minimax,
    Bilevel,
    Minminmax,
    Ideal,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum SchemeArg {
    Euler,
    Rk4,
}

impl From<SchemeArg> for Scheme {
    fn from(s: SchemeArg) -> Self {
        match s {
            SchemeArg::Euler => Scheme::Euler,
            SchemeArg::Rk4 => Scheme::Rk4,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum InitArg {
    Random,
    ZeroGap,
    Zeros,
}

impl From<InitArg> for InitMode {
    fn from(s: InitArg) -> Self {
        match s {
            InitArg::Random => InitMode::Random,
            InitArg::ZeroGap => InitMode::ZeroGap,
            InitArg::Zeros => InitMode::Zeros,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum MuModeArg {
    RegOnly,
    Lanczos,
}

#[derive(Args, Debug, Clone)]
pub struct ProblemArgs {
    #[arg(long, value_enum)]
    pub problem: Option<ProblemName>,
    /// Quadratic bilevel: g = (y - a x)^2 / 2
    #[arg(long, default_value_t = 0.5)]
    pub a: f64,
    /// Quadratic bilevel: f = (x - b y)^2 / 2
    #[arg(long, default_value_t = 1.0)]
    pub b: f64,
    /// Quadratic minimax coupling
    #[arg(long, default_value_t = 1.0)]
    pub lxy: f64,
    /// Quadratic minimax curvature in y
    #[arg(long, default_value_t = 1.0)]
    pub mu: f64,
    /// Min-min-max: curvature of g in x
    #[arg(long, default_value_t = 0.5)]
    pub af: f64,
    /// Min-min-max: coupling of g
    #[arg(long, default_value_t = 0.5)]
    pub ag: f64,
    #[arg(long, default_value_t = 1)]
    pub dim: usize,
    /// Bound on the upper-level y-gradient at the lower solution
    #[arg(long, default_value_t = 0.0)]
    pub g_star: f64,
    /// Error-bound constant replacing 1/mu
    #[arg(long)]
    pub kappa: Option<f64>,
    /// Hypercleaning: dataset CSV (features..., label)
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Hypercleaning: synthetic blobs n,d,K
    #[arg(long, default_value = "150,4,3")]
    pub synthetic: String,
    #[arg(long, default_value_t = 0.05)]
    pub rho_reg: f64,
    #[arg(long, default_value_t = 0.3)]
    pub corrupt: f64,
    #[arg(long, default_value_t = 0.6)]
    pub split: f64,
    /// Seed for data synthesis, splitting, corruption and initialization
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write the (synthetic) dataset to this CSV
    #[arg(long)]
    pub dump_data: Option<PathBuf>,
}

impl ProblemArgs {
    fn name(&self, default: ProblemName) -> ProblemName {
        self.problem.unwrap_or(default)
    }

    fn data_source(&self) -> Result<DataSource> {
        if let Some(p) = &self.data {
            return Ok(DataSource::Csv(p.clone()));
        }
        let parts: Vec<usize> = self
            .synthetic
            .split(',')
            .map(|t| t.trim().parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::invalid("synthetic", "expected n,d,K"))?;
        match parts[..] {
            [n, d, k] => Ok(DataSource::Synthetic { n, d, k, seed: self.seed }),
            _ => Err(Error::invalid("synthetic", "expected n,d,K")),
        }
    }

    fn choice(&self, default: ProblemName) -> Result<ProblemChoice> {
        Ok(match self.name(default) {
            ProblemName::QuadMinimax => ProblemChoice::QuadMinimax {
                l_xy: self.lxy,
                mu: self.mu,
                dim: self.dim,
            },
            ProblemName::QuadBilevel => ProblemChoice::QuadBilevel {
                a: self.a,
                b: self.b,
                dim: self.dim,
                g_star: self.g_star,
            },
            ProblemName::QuadMinminmax => ProblemChoice::QuadMinMinMax {
                a_f: self.af,
                a_g: self.ag,
                dim: self.dim,
            },
            ProblemName::Hyperclean => ProblemChoice::Hyperclean {
                data: self.data_source()?,
                config: HypercleanConfig {
                    rho_reg: self.rho_reg,
                    corrupt_frac: self.corrupt,
                    split_frac: self.split,
                    seed: self.seed,
                },
            },
        })
    }

    fn build(&self, default: ProblemName) -> Result<Box<dyn Problem>> {
        let choice = self.choice(default)?;
        if let Some(path) = &self.dump_data {
            if let ProblemChoice::Hyperclean { data, .. } = &choice {
                data.load()?.write_csv(&mut BufWriter::new(File::create(path)?))?;
            }
        }
        choice.build(self.kappa)
    }

    /// Only the flags that affect the selected instance are recorded.
    fn record(&self, m: &mut Metadata, default: ProblemName) {
        let name = self.name(default);
        m.push("problem", name.as_str());
        match name {
            ProblemName::QuadMinimax => {
                m.push("lxy", fmt_f64(self.lxy)).push("mu", fmt_f64(self.mu)).push("dim", self.dim);
            }
            ProblemName::QuadBilevel => {
                m.push("a", fmt_f64(self.a))
                    .push("b", fmt_f64(self.b))
                    .push("dim", self.dim)
                    .push("g-star", fmt_f64(self.g_star));
            }
            ProblemName::QuadMinminmax => {
                m.push("af", fmt_f64(self.af)).push("ag", fmt_f64(self.ag)).push("dim", self.dim);
            }
            ProblemName::Hyperclean => {
                match &self.data {
                    Some(p) => m.push("data", p.display()),
                    None => m.push("synthetic", &self.synthetic),
                };
                m.push("rho-reg", fmt_f64(self.rho_reg))
                    .push("corrupt", fmt_f64(self.corrupt))
                    .push("split", fmt_f64(self.split));
            }
        }
        m.push("seed", self.seed);
        if let Some(k) = self.kappa {
            m.push("kappa", fmt_f64(k));
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct ThresholdsArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[arg(long, default_value_t = 0.5)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0.5)]
    pub beta: f64,
    #[arg(long, default_value_t = 1.0)]
    pub theta: f64,
    #[arg(long, default_value_t = 1.0)]
    pub eps1: f64,
    #[arg(long)]
    pub eps2: Option<f64>,
    #[arg(long, default_value_t = 2.0)]
    pub eps_minimax: f64,
    #[arg(long, default_value_t = 10.0)]
    pub lambda: f64,
    /// Use the instance's exact penalized modulus instead of lambda*mu - rho
    #[arg(long)]
    pub exact_modulus: bool,
    /// Target accuracy for the penalty parameter lambda(eps)
    #[arg(long)]
    pub eps_target: Option<f64>,
    /// gamma (minimax) or delta, used for the Euler step bound
    #[arg(long)]
    pub scale1: Option<f64>,
    /// eta, used for the Euler step bound
    #[arg(long)]
    pub scale2: Option<f64>,
    /// Smoothness of W for the Euler step bound
    #[arg(long)]
    pub l_w: Option<f64>,
    /// Also write the report as CSV
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct RunArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    /// Defaults to the flow matching the problem family
    #[arg(long, value_enum)]
    pub flow: Option<FlowName>,
    #[arg(long, default_value_t = 2.5)]
    pub gamma: f64,
    #[arg(long, default_value_t = 10.0)]
    pub lambda: f64,
    #[arg(long, default_value_t = 1.0)]
    pub delta: f64,
    #[arg(long, default_value_t = 1.0)]
    pub eta: f64,
    #[arg(long, default_value_t = 0.01)]
    pub h: f64,
    #[arg(long, default_value_t = 1000)]
    pub steps: usize,
    #[arg(long, value_enum, default_value_t = SchemeArg::Euler)]
    pub scheme: SchemeArg,
    #[arg(long, value_enum, default_value_t = InitArg::Random)]
    pub init: InitArg,
    /// Outer start, comma-separated (a single value is broadcast)
    #[arg(long)]
    pub x0: Option<String>,
    /// Write Lyapunov diagnostics instead of raw states
    #[arg(long)]
    pub diag: bool,
    /// Append the state to each diagnostics row
    #[arg(long)]
    pub states: bool,
    #[arg(long, default_value_t = 1)]
    pub stride: usize,
    #[arg(long, default_value_t = 0.5)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0.5)]
    pub beta: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct EstimateFlags {
    #[arg(long, default_value_t = 30)]
    pub est_iters: usize,
    #[arg(long, value_enum, default_value_t = MuModeArg::RegOnly)]
    pub mu_mode: MuModeArg,
    #[arg(long, default_value_t = 20)]
    pub lanczos_steps: usize,
    /// Std of the seeded anchor for theta
    #[arg(long, default_value_t = 0.01)]
    pub anchor_scale: f64,
}

impl EstimateFlags {
    fn options(&self, seed: u64) -> EstimateOptions {
        EstimateOptions {
            iters: self.est_iters,
            fd_eps: None,
            seed,
            mu_mode: match self.mu_mode {
                MuModeArg::RegOnly => MuMode::RegOnly,
                MuModeArg::Lanczos => MuMode::Lanczos(self.lanczos_steps),
            },
            anchor_scale: self.anchor_scale,
        }
    }

    fn record(&self, m: &mut Metadata) {
        m.push("est-iters", self.est_iters)
            .push(
                "mu-mode",
                match self.mu_mode {
                    MuModeArg::RegOnly => "reg-only",
                    MuModeArg::Lanczos => "lanczos",
                },
            )
            .push("lanczos-steps", self.lanczos_steps)
            .push("anchor-scale", fmt_f64(self.anchor_scale));
    }
}

#[derive(Args, Debug, Clone)]
pub struct SweepArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[command(flatten)]
    pub est: EstimateFlags,
    #[arg(long, default_value_t = 10.0)]
    pub lambda: f64,
    #[arg(long)]
    pub delta_lo: Option<f64>,
    #[arg(long)]
    pub delta_hi: Option<f64>,
    #[arg(long, default_value_t = 12)]
    pub delta_n: usize,
    #[arg(long)]
    pub eta_lo: Option<f64>,
    #[arg(long)]
    pub eta_hi: Option<f64>,
    #[arg(long, default_value_t = 12)]
    pub eta_n: usize,
    /// Defaults to 0.05/(1+lambda)
    #[arg(long)]
    pub h: Option<f64>,
    #[arg(long, default_value_t = 2000)]
    pub steps: usize,
    #[arg(long, value_enum, default_value_t = SchemeArg::Euler)]
    pub scheme: SchemeArg,
    #[arg(long, env = "NESTED_FLOW_THREADS")]
    pub threads: Option<usize>,
    /// Std of the seeded start of the inner variables
    #[arg(long, default_value_t = 1.0)]
    pub inner_scale: f64,
    /// Outer start; defaults to the origin
    #[arg(long)]
    pub x0: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Hypercleaning: where to write the estimation CSV
    #[arg(long)]
    pub estimate_out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct TrackArgs {
    #[arg(long, default_value_t = 0.5)]
    pub a: f64,
    #[arg(long, default_value_t = 1.0)]
    pub b: f64,
    #[arg(long, default_value = "1,2,5,10,20")]
    pub lambdas: String,
    #[arg(long, default_value = "both")]
    pub case: String,
    /// Horizon
    #[arg(long = "T", default_value_t = 10.0)]
    pub horizon: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub h: f64,
    #[arg(long, value_enum, default_value_t = SchemeArg::Rk4)]
    pub scheme: SchemeArg,
    #[arg(long, default_value_t = 1.0)]
    pub x0: f64,
    #[arg(long, value_enum, default_value_t = InitArg::ZeroGap)]
    pub init: InitArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.5)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0.5)]
    pub beta: f64,
    #[arg(long, default_value_t = 1.5)]
    pub delta_mult: f64,
    #[arg(long, default_value_t = 8.0)]
    pub eta_mult: f64,
    #[arg(long)]
    pub exact_modulus: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[command(flatten)]
    pub est: EstimateFlags,
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct CheckGradArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[arg(long, default_value_t = 20)]
    pub points: usize,
    #[arg(long, default_value_t = 1e-5)]
    pub fd_step: f64,
    /// Defaults to 1e-6 (1e-5 for hypercleaning)
    #[arg(long)]
    pub tol: Option<f64>,
}

/// Splices `--config` and `--replay` pairs right after the subcommand so
/// that explicit flags win. Both may appear before or after the subcommand.
pub fn expand_args(argv: &[String]) -> Result<Vec<String>> {
    let mut sources = Vec::new();
    let mut rest = Vec::new();
    let mut it = argv.iter().skip(1);
    while let Some(a) = it.next() {
        let (flag, inline) = match a.split_once('=') {
            Some((f, v)) if f == "--config" || f == "--replay" => (f.to_string(), Some(v.to_string())),
            _ => (a.clone(), None),
        };
        if flag != "--config" && flag != "--replay" {
            rest.push(a.clone());
            continue;
        }
        let key = if flag == "--config" { "config" } else { "replay" };
        match inline.or_else(|| it.next().cloned()) {
            Some(p) => sources.push((key, PathBuf::from(p))),
            None => return Err(Error::invalid(key, "missing path")),
        }
    }
    let Some(sub_pos) = rest.iter().position(|a| !a.starts_with('-')) else {
        return Ok(argv.to_vec());
    };
    let sub = rest[sub_pos].clone();
    let mut injected = Vec::new();
    for (key, path) in &sources {
        if *key == "config" {
            let pairs = parse_config(&std::fs::read_to_string(path)?)?;
            injected.extend(pairs_to_args(pairs.iter().map(|(k, v)| (k.as_str(), v.as_str()))));
        } else {
            let meta = Metadata::read(path)?;
            if meta.get("command") != Some(sub.as_str()) {
                return Err(Error::invalid(
                    "replay",
                    format!("file was written by `{}`, not `{sub}`", meta.get("command").unwrap_or("?")),
                ));
            }
            injected.extend(pairs_to_args(meta.params()));
        }
    }
    let mut out = vec![argv[0].clone()];
    out.extend(rest.drain(..=sub_pos));
    out.extend(injected);
    out.extend(rest);
    Ok(out)
}

/// Parses and runs; returns the process exit code.
pub fn main_with_args(argv: Vec<String>) -> i32 {
    let argv = match expand_args(&argv) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_code(&e);
        }
    };
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    let name = cmd.name();
    match cmd {
        Command::Thresholds(a) => cmd_thresholds(&a),
        Command::Run(a) => cmd_run(&a),
        Command::Sweep(a) => cmd_sweep(&a, name),
        Command::Hyperclean(a) => cmd_sweep(&a, name),
        Command::Track(a) => cmd_track(&a),
        Command::Estimate(a) => cmd_estimate(&a),
        Command::CheckGrad(a) => cmd_check_grad(&a),
    }
}

fn open_out(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(std::io::stdout().lock())),
    })
}

fn parse_x0(s: &Option<String>) -> Result<Option<Vec<f64>>> {
    s.as_deref().map(parse_list).transpose()
}

fn cmd_thresholds(a: &ThresholdsArgs) -> Result<()> {
    let p = a.problem.build(ProblemName::QuadBilevel)?;
    let inputs = ThresholdInputs {
        alpha: a.alpha,
        beta: a.beta,
        theta: a.theta,
        eps1: a.eps1,
        eps_minimax: a.eps_minimax,
        eps2: a.eps2,
        lambda: a.lambda,
        use_exact_modulus: a.exact_modulus,
        eps_target: a.eps_target,
        scales: a.scale1.map(|s| (s, a.scale2.unwrap_or(s))),
        l_w: a.l_w,
    };
    let report = threshold_report(p.as_ref(), &inputs)?;
    print!("{report}");
    if let Some(path) = &a.csv {
        let mut m = Metadata::new("thresholds");
        a.problem.record(&mut m, ProblemName::QuadBilevel);
        m.push("alpha", fmt_f64(a.alpha))
            .push("beta", fmt_f64(a.beta))
            .push("theta", fmt_f64(a.theta))
            .push("eps1", fmt_f64(a.eps1))
            .push("eps-minimax", fmt_f64(a.eps_minimax))
            .push("lambda", fmt_f64(a.lambda))
            .push("exact-modulus", a.exact_modulus);
        for (k, v) in [
            ("eps2", a.eps2),
            ("eps-target", a.eps_target),
            ("scale1", a.scale1),
            ("scale2", a.scale2),
            ("l-w", a.l_w),
        ] {
            if let Some(v) = v {
                m.push(k, fmt_f64(v));
            }
        }
        let mut out = open_out(Some(path))?;
        m.write_to(&mut out)?;
        writeln!(out, "{}", report.csv_header())?;
        writeln!(out, "{}", report.csv_row())?;
        out.flush()?;
    }
    Ok(())
}

fn run_kind(a: &RunArgs, p: &dyn Problem) -> Result<FlowKind> {
    let fam = p.family();
    let kind = match a.flow {
        None => default_flow(fam, a.gamma, a.lambda, a.delta, a.eta),
        Some(FlowName::Ideal) => ideal_kind(p),
        Some(FlowName::Minimax) => FlowKind::Minimax { gamma: a.gamma },
        Some(FlowName::Bilevel) => FlowKind::Bilevel {
            lambda: a.lambda,
            delta: a.delta,
            eta: a.eta,
        },
        Some(FlowName::Minminmax) => FlowKind::MinMinMax {
            delta: a.delta,
            eta: a.eta,
        },
    };
    Ok(kind)
}

fn flow_label(kind: &FlowKind) -> &'static str {
    match kind {
        FlowKind::Minimax { .. } => "minimax",
        FlowKind::Bilevel { .. } => "bilevel",
        FlowKind::MinMinMax { .. } => "minminmax",
        FlowKind::IdealHypergrad(_) => "ideal",
    }
}

fn state_header(prefix: &str, n: usize) -> impl Iterator<Item = String> + '_ {
    (0..n).map(move |i| format!("{prefix}{i}"))
}

fn cmd_run(a: &RunArgs) -> Result<()> {
    let p = a.problem.build(ProblemName::QuadBilevel)?;
    let kind = run_kind(a, p.as_ref())?;
    let field = FlowField::new(&kind, p.as_ref())?;
    let x0 = parse_x0(&a.x0)?;
    let s0 = initial_state(p.as_ref(), &kind, a.init.into(), x0.as_deref(), a.problem.seed)?;
    let mut opts = IntegrateOptions::new(a.h, a.steps, a.scheme.into());
    if a.diag {
        let spec = match &kind {
            FlowKind::Minimax { .. } => LyapunovSpec::minimax(a.alpha),
            FlowKind::Bilevel { lambda, .. } => LyapunovSpec::bilevel(a.alpha, a.beta, *lambda),
            FlowKind::MinMinMax { .. } => LyapunovSpec::minminmax(a.alpha, a.beta),
            FlowKind::IdealHypergrad(_) => {
                return Err(Error::invalid("diag", "the ideal flow has no Lyapunov function"))
            }
        };
        opts = opts.with_diag(spec, a.stride);
    }
    let mut traj = integrate(&field, &s0, &opts)?;
    fill_w_dot(&mut traj.records);

    let mut m = Metadata::new("run");
    a.problem.record(&mut m, ProblemName::QuadBilevel);
    m.push("flow", flow_label(&kind));
    match &kind {
        FlowKind::Minimax { gamma } => {
            m.push("gamma", fmt_f64(*gamma));
        }
        FlowKind::Bilevel { lambda, delta, eta } => {
            m.push("lambda", fmt_f64(*lambda)).push("delta", fmt_f64(*delta)).push("eta", fmt_f64(*eta));
        }
        FlowKind::MinMinMax { delta, eta } => {
            m.push("delta", fmt_f64(*delta)).push("eta", fmt_f64(*eta));
        }
        FlowKind::IdealHypergrad(_) => {}
    }
    m.push("h", fmt_f64(a.h))
        .push("steps", a.steps)
        .push("scheme", opts.scheme.as_str())
        .push("init", InitMode::from(a.init).as_str());
    if let Some(x) = &x0 {
        m.push("x0", x.iter().map(|v| fmt_f64(*v)).collect::<Vec<_>>().join(","));
    }
    m.push("diag", a.diag).push("states", a.states);
    if a.diag {
        m.push("stride", opts.stride).push("alpha", fmt_f64(a.alpha)).push("beta", fmt_f64(a.beta));
    }
    m.push_derived("diverged", traj.diverged)
        .push_derived("steps_taken", traj.steps_taken);

    let mut out = open_out(a.out.as_deref())?;
    m.write_to(&mut out)?;
    let d = (s0.x.len(), s0.y.len(), s0.z.as_ref().map_or(0, Vec::len));
    let state_cols: Vec<String> = state_header("x", d.0)
        .chain(state_header("y", d.1))
        .chain(state_header("z", d.2))
        .collect();
    let state_row = |k: usize| -> String {
        let s = &traj.states[k.min(traj.states.len() - 1)];
        s.to_flat().iter().map(|v| fmt_f64(*v)).collect::<Vec<_>>().join(",")
    };
    if a.diag {
        let mut header = DiagnosticsRecord::CSV_HEADER.to_string();
        if a.states {
            header.push(',');
            header.push_str(&state_cols.join(","));
        }
        writeln!(out, "{header}")?;
        for r in &traj.records {
            let mut row = r.csv_row();
            if a.states {
                row.push(',');
                row.push_str(&state_row((r.t / a.h).round() as usize));
            }
            writeln!(out, "{row}")?;
        }
    } else {
        let mut header = vec!["t".to_string()];
        header.extend(state_cols);
        writeln!(out, "{}", header.join(","))?;
        for s in &traj.states {
            let mut row = vec![fmt_f64(s.t)];
            row.extend(s.to_flat().iter().map(|v| fmt_f64(*v)));
            writeln!(out, "{}", row.join(","))?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Threshold centre for the grids: estimated for hypercleaning, closed form
/// otherwise.
fn sweep_centre(
    p: &dyn Problem,
    is_hyperclean: bool,
    a: &SweepArgs,
) -> Result<(f64, f64, Option<EstimateReport>)> {
    if is_hyperclean {
        let r = estimate(p, &a.est.options(a.problem.seed))?;
        return Ok((r.delta0_hat, r.eta0_hat, Some(r)));
    }
    let inputs = ThresholdInputs {
        lambda: a.lambda,
        ..ThresholdInputs::default()
    };
    let r = threshold_report(p, &inputs)?;
    match (r.delta0, r.eta0) {
        (Some(d), Some(e)) => Ok((d, e, None)),
        _ => Err(Error::invalid("problem", "sweeps need a family with two inner time scales")),
    }
}

fn default_threads() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn cmd_sweep(a: &SweepArgs, command: &'static str) -> Result<()> {
    let default = ProblemName::Hyperclean;
    if command == "hyperclean" && a.problem.problem.is_some_and(|p| p != default) {
        return Err(Error::invalid("problem", "hyperclean always uses the hypercleaning problem"));
    }
    let is_hc = a.problem.name(default) == ProblemName::Hyperclean;
    let p = a.problem.build(default)?;
    let (d0, e0, est) = sweep_centre(p.as_ref(), is_hc, a)?;
    let base = SweepConfig::around(d0, e0, a.lambda);
    let cfg = SweepConfig {
        delta: Grid {
            lo: a.delta_lo.unwrap_or(base.delta.lo),
            hi: a.delta_hi.unwrap_or(base.delta.hi),
            n: a.delta_n,
        },
        eta: Grid {
            lo: a.eta_lo.unwrap_or(base.eta.lo),
            hi: a.eta_hi.unwrap_or(base.eta.hi),
            n: a.eta_n,
        },
        h: a.h.unwrap_or(base.h),
        n_steps: a.steps,
        scheme: a.scheme.into(),
        threads: a.threads.unwrap_or_else(default_threads),
        seed: a.problem.seed,
        x0: parse_x0(&a.x0)?,
        inner_scale: a.inner_scale,
        ..base
    };
    let cells = run_sweep(p.as_ref(), &cfg)?;

    let mut m = Metadata::new(command);
    a.problem.record(&mut m, default);
    if is_hc {
        a.est.record(&mut m);
    }
    push_sweep_meta(&mut m, &cfg);
    m.push_derived("delta0_hat", fmt_f64(d0)).push_derived("eta0_hat", fmt_f64(e0));
    if let Some(r) = &est {
        m.push_derived("L_hat", fmt_f64(r.l_hat)).push_derived("mu_hat", fmt_f64(r.mu_hat));
    }
    m.push_derived("diverged_cells", cells.iter().filter(|c| c.diverged).count());

    if command == "hyperclean" {
        let r = est.as_ref().expect("hyperclean always estimates");
        let est_path = a.estimate_out.clone().or_else(|| {
            a.out.as_ref().map(|o| {
                let mut s = o.as_os_str().to_owned();
                s.push(".estimate.csv");
                PathBuf::from(s)
            })
        });
        if let Some(path) = est_path {
            let mut em = Metadata::new("estimate");
            a.problem.record(&mut em, default);
            a.est.record(&mut em);
            write_estimate_csv(&path, &em, r)?;
        }
        if a.out.is_some() {
            print!("{r}");
        } else {
            eprint!("{r}");
        }
    }
    let mut out = open_out(a.out.as_deref())?;
    write_sweep_csv(&mut out, &m, &cells)?;
    out.flush()?;
    Ok(())
}

fn write_estimate_csv(path: &Path, m: &Metadata, r: &EstimateReport) -> Result<()> {
    let mut out = open_out(Some(path))?;
    m.write_to(&mut out)?;
    writeln!(out, "{}", EstimateReport::CSV_HEADER)?;
    writeln!(out, "{}", r.csv_row())?;
    out.flush()?;
    Ok(())
}

fn cmd_track(a: &TrackArgs) -> Result<()> {
    let cfg = TrackConfig {
        a: a.a,
        b: a.b,
        lambdas: parse_list(&a.lambdas)?,
        cases: a.case.parse::<CaseSelect>()?,
        horizon: a.horizon,
        h: a.h,
        scheme: a.scheme.into(),
        x0: a.x0,
        init: a.init.into(),
        seed: a.seed,
        alpha: a.alpha,
        beta: a.beta,
        delta_mult: a.delta_mult,
        eta_mult: a.eta_mult,
        use_exact_modulus: a.exact_modulus,
        ..TrackConfig::default()
    };
    let runs = run_track(&cfg)?;
    let mut m = Metadata::new("track");
    m.push("a", fmt_f64(a.a))
        .push("b", fmt_f64(a.b))
        .push("lambdas", cfg.lambdas.iter().map(|v| fmt_f64(*v)).collect::<Vec<_>>().join(","))
        .push("case", &a.case)
        .push("T", fmt_f64(a.horizon))
        .push("h", fmt_f64(a.h))
        .push("scheme", cfg.scheme.as_str())
        .push("x0", fmt_f64(a.x0))
        .push("init", cfg.init.as_str())
        .push("seed", a.seed)
        .push("alpha", fmt_f64(a.alpha))
        .push("beta", fmt_f64(a.beta))
        .push("delta-mult", fmt_f64(a.delta_mult))
        .push("eta-mult", fmt_f64(a.eta_mult))
        .push("exact-modulus", a.exact_modulus);
    let mut out = open_out(a.out.as_deref())?;
    m.write_to(&mut out)?;
    writeln!(out, "{}", TrackReport::CSV_HEADER)?;
    for r in &runs {
        writeln!(out, "{}", r.report.csv_row())?;
    }
    out.flush()?;
    Ok(())
}

fn cmd_estimate(a: &EstimateArgs) -> Result<()> {
    let p = a.problem.build(ProblemName::Hyperclean)?;
    let r = estimate(p.as_ref(), &a.est.options(a.problem.seed))?;
    print!("{r}");
    if let Some(path) = &a.csv {
        let mut m = Metadata::new("estimate");
        a.problem.record(&mut m, ProblemName::Hyperclean);
        a.est.record(&mut m);
        write_estimate_csv(path, &m, &r)?;
    }
    Ok(())
}

fn cmd_check_grad(a: &CheckGradArgs) -> Result<()> {
    let name = a.problem.name(ProblemName::QuadBilevel);
    let p = a.problem.build(ProblemName::QuadBilevel)?;
    let tol = a.tol.unwrap_or(if name == ProblemName::Hyperclean { 1e-5 } else { 1e-6 });
    let kind = default_flow(p.family(), 1.0, 10.0, 1.0, 1.0);
    let mut worst = 0.0_f64;
    let mut failed = Vec::new();
    for i in 0..a.points {
        let s = initial_state(p.as_ref(), &kind, InitMode::Random, None, a.problem.seed.wrapping_add(i as u64))?;
        let r = check_gradients(p.as_ref(), &s, a.fd_step);
        worst = worst.max(r.max_rel_err());
        println!("point {i:>3}  max_rel_err {}", fmt_f64(r.max_rel_err()));
        if !r.passed(tol) {
            failed.extend(
                r.failures(tol)
                    .into_iter()
                    .map(|f| format!("point {i}: {} rel {}", f.map, fmt_f64(f.max_rel_err))),
            );
        }
    }
    println!("worst {}  tol {}  {}", fmt_f64(worst), fmt_f64(tol), if failed.is_empty() { "PASS" } else { "FAIL" });
    if failed.is_empty() {
        Ok(())
    } else {
        for f in &failed {
            eprintln!("{f}");
        }
        Err(Error::GradCheck {
            failures: failed.len(),
        })
    }
}
