//! The Lyapunov function `W = Φ + αH_y + βH_z`, residuals, deviations,
//! per-state diagnostics and the discrete dissipation certificate.

use crate::error::{Error, Result};
use crate::flows::FlowState;
use crate::linalg;
use crate::problems::{self, Family, InnerSolveOptions, Problem};

#[derive(Debug, Clone)]
pub struct LyapunovSpec {
    pub family: Family,
    pub alpha: f64,
    /// Unused for minimax.
    pub beta: f64,
    /// Penalty parameter; bilevel only.
    pub lambda: f64,
    pub inner: InnerSolveOptions,
}

impl LyapunovSpec {
    pub fn minimax(alpha: f64) -> Self {
        Self {
            family: Family::Minimax,
            alpha,
            beta: 0.5,
            lambda: 0.0,
            inner: InnerSolveOptions::default(),
        }
    }

    pub fn bilevel(alpha: f64, beta: f64, lambda: f64) -> Self {
        Self {
            family: Family::Bilevel,
            alpha,
            beta,
            lambda,
            inner: InnerSolveOptions::default(),
        }
    }

    pub fn minminmax(alpha: f64, beta: f64) -> Self {
        Self {
            family: Family::MinMinMax,
            alpha,
            beta,
            lambda: 0.0,
            inner: InnerSolveOptions::default(),
        }
    }

    pub fn with_inner(mut self, inner: InnerSolveOptions) -> Self {
        self.inner = inner;
        self
    }

    pub fn validate(&self, p: &dyn Problem) -> Result<()> {
        if p.family() != self.family {
            return Err(Error::invalid(
                "family",
                format!(
                    "Lyapunov spec is {}, problem is {}",
                    self.family.as_str(),
                    p.family().as_str()
                ),
            ));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::invalid("alpha", "must lie in (0, 1)"));
        }
        if self.family != Family::Minimax && !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::invalid("beta", "must lie in (0, 1)"));
        }
        if self.family == Family::Bilevel {
            let c = p.constants();
            if !(self.lambda > 0.0 && self.lambda * c.mu > c.rho) {
                return Err(Error::invalid("lambda", "must satisfy λ > ρ/μ"));
            }
        }
        Ok(())
    }
}

/// Per-state Lyapunov quantities. `h_z` is the gap multiplied by `β` in `W`
/// (for bilevel it includes the factor `λ`).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub w: f64,
    pub grad_phi_sq: f64,
    pub r_y_sq: f64,
    pub r_z_sq: f64,
    pub d_y_sq: f64,
    pub d_z_sq: f64,
    /// Forward-difference slope of `W` to the next record (NaN on the last).
    pub w_dot_estimate: f64,
    pub phi: f64,
    pub h_y: f64,
    pub h_z: f64,
    /// `‖y − y°‖²` against the inner optimizer tracked by `y` (`y*`, or `y_λ*` for bilevel).
    pub y_track_sq: f64,
    /// `‖z − z°‖²` against `y*` (bilevel) or `z*` (min–min–max).
    pub z_track_sq: f64,
}

impl DiagnosticsRecord {
    pub const CSV_HEADER: &'static str = "t,W,grad_phi_sq,r_y_sq,r_z_sq,d_y_sq,d_z_sq";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            fmt_f64(self.t),
            fmt_f64(self.w),
            fmt_f64(self.grad_phi_sq),
            fmt_f64(self.r_y_sq),
            fmt_f64(self.r_z_sq),
            fmt_f64(self.d_y_sq),
            fmt_f64(self.d_z_sq)
        )
    }
}

/// Shortest round-trip representation, with `inf`/`-inf`/`nan` spelled out.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v == f64::INFINITY {
        "inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{v:?}")
    }
}

/// Envelope data at one outer point.
#[derive(Debug, Clone)]
pub struct Envelope {
    /// `F`, `𝓛_λ*` or `𝓛`.
    pub phi: f64,
    pub grad_phi: Vec<f64>,
    /// Optimizer tracked by `y`: `y*` (minimax, min–min–max) or `y_λ*` (bilevel).
    pub y_opt: Vec<f64>,
    /// Optimizer tracked by `z`: `y*` (bilevel) or `z*` (min–min–max).
    pub z_opt: Option<Vec<f64>>,
    /// `f(x, y°)` for minimax/min–min–max, `g*(x)` for bilevel.
    pub inner_value: f64,
    /// `g*(x)` for min–min–max.
    pub lower_value: f64,
}

pub fn envelope(spec: &LyapunovSpec, p: &dyn Problem, x: &[f64]) -> Result<Envelope> {
    let f = p.upper();
    let opts = &spec.inner;
    match spec.family {
        Family::Minimax => {
            let y = problems::upper_argopt(p, x, opts)?;
            let fv = f.value(x, &y);
            Ok(Envelope {
                phi: fv,
                grad_phi: f.grad_x(x, &y),
                y_opt: y,
                z_opt: None,
                inner_value: fv,
                lower_value: 0.0,
            })
        }
        Family::Bilevel => {
            let g = p.lower_or_err()?;
            let lambda = spec.lambda;
            let ys = problems::lower_argmin(p, x, opts)?;
            let yl = problems::penalized_argmin(p, x, lambda, &opts_warm(opts, &ys))?;
            let g_star = g.value(x, &ys);
            let phi = f.value(x, &yl) + lambda * (g.value(x, &yl) - g_star);
            let gl = g.grad_x(x, &yl);
            let gs = g.grad_x(x, &ys);
            let mut grad = f.grad_x(x, &yl);
            for i in 0..grad.len() {
                grad[i] += lambda * (gl[i] - gs[i]);
            }
            Ok(Envelope {
                phi,
                grad_phi: grad,
                y_opt: yl,
                z_opt: Some(ys),
                inner_value: g_star,
                lower_value: g_star,
            })
        }
        Family::MinMinMax => {
            let g = p.lower_or_err()?;
            let ys = problems::upper_argopt(p, x, opts)?;
            let zs = problems::lower_argmin(p, x, opts)?;
            let f_star = f.value(x, &ys);
            let g_star = g.value(x, &zs);
            Ok(Envelope {
                phi: f_star - g_star,
                grad_phi: linalg::sub(&f.grad_x(x, &ys), &g.grad_x(x, &zs)),
                y_opt: ys,
                z_opt: Some(zs),
                inner_value: f_star,
                lower_value: g_star,
            })
        }
    }
}

fn opts_warm(opts: &InnerSolveOptions, init: &[f64]) -> InnerSolveOptions {
    let mut o = opts.clone();
    if o.init.is_none() {
        o.init = Some(init.to_vec());
    }
    o
}

fn z_of(state: &FlowState) -> Result<&[f64]> {
    state.z.as_deref().ok_or(Error::Dimension {
        what: "z",
        expected: 1,
        got: 0,
    })
}

/// `(Φ, H_y, H_z)` with `W = Φ + αH_y + βH_z`.
fn components(
    spec: &LyapunovSpec,
    p: &dyn Problem,
    state: &FlowState,
    env: &Envelope,
) -> Result<(f64, f64, f64)> {
    let f = p.upper();
    let (x, y) = (&state.x[..], &state.y[..]);
    match spec.family {
        Family::Minimax => Ok((env.phi, env.phi - f.value(x, y), 0.0)),
        Family::Bilevel => {
            let g = p.lower_or_err()?;
            let z = z_of(state)?;
            let l = spec.lambda;
            let penalized = f.value(x, y) + l * (g.value(x, y) - env.inner_value);
            Ok((
                env.phi,
                penalized - env.phi,
                l * (g.value(x, z) - env.inner_value),
            ))
        }
        Family::MinMinMax => {
            let g = p.lower_or_err()?;
            let z = z_of(state)?;
            Ok((
                env.phi,
                f.value(x, y) - env.inner_value,
                g.value(x, z) - env.lower_value,
            ))
        }
    }
}

pub fn lyapunov_value(spec: &LyapunovSpec, p: &dyn Problem, state: &FlowState) -> Result<f64> {
    let env = envelope(spec, p, &state.x)?;
    let (phi, hy, hz) = components(spec, p, state, &env)?;
    Ok(phi + spec.alpha * hy + spec.beta * hz)
}

pub fn residuals(
    spec: &LyapunovSpec,
    p: &dyn Problem,
    state: &FlowState,
) -> Result<(Vec<f64>, Option<Vec<f64>>)> {
    let f = p.upper();
    let (x, y) = (&state.x[..], &state.y[..]);
    match spec.family {
        Family::Minimax => Ok((f.grad_u(x, y), None)),
        Family::Bilevel => {
            let g = p.lower_or_err()?;
            let z = z_of(state)?;
            let ry = linalg::axpy(&f.grad_u(x, y), spec.lambda, &g.grad_u(x, y));
            Ok((ry, Some(g.grad_u(x, z))))
        }
        Family::MinMinMax => {
            let g = p.lower_or_err()?;
            let z = z_of(state)?;
            Ok((f.grad_u(x, y), Some(g.grad_u(x, z))))
        }
    }
}

fn deviations_with(
    spec: &LyapunovSpec,
    p: &dyn Problem,
    state: &FlowState,
    env: &Envelope,
) -> Result<(Vec<f64>, Option<Vec<f64>>)> {
    let f = p.upper();
    let (x, y) = (&state.x[..], &state.y[..]);
    let yo = &env.y_opt[..];
    let dfy = linalg::sub(&f.grad_x(x, y), &f.grad_x(x, yo));
    match spec.family {
        Family::Minimax => Ok((dfy, None)),
        Family::Bilevel => {
            let g = p.lower_or_err()?;
            let z = z_of(state)?;
            let ys = env.z_opt.as_deref().unwrap_or_default();
            let dgy = linalg::sub(&g.grad_x(x, y), &g.grad_x(x, yo));
            let dy = linalg::axpy(&dfy, spec.lambda, &dgy);
            Ok((dy, Some(linalg::sub(&g.grad_x(x, z), &g.grad_x(x, ys)))))
        }
        Family::MinMinMax => {
            let g = p.lower_or_err()?;
            let z = z_of(state)?;
            let zs = env.z_opt.as_deref().unwrap_or_default();
            Ok((dfy, Some(linalg::sub(&g.grad_x(x, z), &g.grad_x(x, zs)))))
        }
    }
}

pub fn deviations(
    spec: &LyapunovSpec,
    p: &dyn Problem,
    state: &FlowState,
) -> Result<(Vec<f64>, Option<Vec<f64>>)> {
    let env = envelope(spec, p, &state.x)?;
    deviations_with(spec, p, state, &env)
}

/// All diagnostics at one state with a single envelope evaluation.
pub fn diagnostics(
    spec: &LyapunovSpec,
    p: &dyn Problem,
    state: &FlowState,
) -> Result<DiagnosticsRecord> {
    let env = envelope(spec, p, &state.x)?;
    let (phi, hy, hz) = components(spec, p, state, &env)?;
    let (ry, rz) = residuals(spec, p, state)?;
    let (dy, dz) = deviations_with(spec, p, state, &env)?;
    let sq = |v: &Option<Vec<f64>>| v.as_deref().map_or(0.0, linalg::norm_sq);
    let z_track_sq = match (&state.z, &env.z_opt) {
        (Some(z), Some(zo)) => linalg::norm_sq(&linalg::sub(z, zo)),
        _ => 0.0,
    };
    Ok(DiagnosticsRecord {
        t: state.t,
        w: phi + spec.alpha * hy + spec.beta * hz,
        grad_phi_sq: linalg::norm_sq(&env.grad_phi),
        r_y_sq: linalg::norm_sq(&ry),
        r_z_sq: sq(&rz),
        d_y_sq: linalg::norm_sq(&dy),
        d_z_sq: sq(&dz),
        w_dot_estimate: f64::NAN,
        phi,
        h_y: hy,
        h_z: hz,
        y_track_sq: linalg::norm_sq(&linalg::sub(&state.y, &env.y_opt)),
        z_track_sq,
    })
}

/// Fills `w_dot_estimate` with forward differences between consecutive records.
pub fn fill_w_dot(records: &mut [DiagnosticsRecord]) {
    for k in 0..records.len() {
        records[k].w_dot_estimate = match records.get(k + 1) {
            Some(next) if next.t > records[k].t => {
                (next.w - records[k].w) / (next.t - records[k].t)
            }
            _ => f64::NAN,
        };
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CertificateReport {
    pub checked: usize,
    pub violations: usize,
    pub violation_fraction: f64,
    /// Smallest `−(Δt·c₁/2)‖∇Φ_k‖² + slack − (W_{k+1} − W_k)`; negative on violation.
    pub worst_margin: f64,
}

impl CertificateReport {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// Checks `W_{k+1} − W_k ≤ −(Δt·c₁/2)‖∇Φ(x_k)‖² + 1e-9·(1 + |W_k|)` between
/// consecutive records. With strided records `Δt` spans the stride and the
/// left-endpoint gradient is used.
pub fn dissipation_certificate(records: &[DiagnosticsRecord], c1: f64) -> CertificateReport {
    let mut violations = 0;
    let mut worst = f64::INFINITY;
    let checked = records.len().saturating_sub(1);
    for pair in records.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        let dt = b.t - a.t;
        let slack = 1e-9 * (1.0 + a.w.abs());
        let margin = -(dt * c1 / 2.0) * a.grad_phi_sq + slack - (b.w - a.w);
        if !(margin >= 0.0) {
            violations += 1;
        }
        worst = worst.min(if margin.is_nan() { f64::NEG_INFINITY } else { margin });
    }
    CertificateReport {
        checked,
        violations,
        violation_fraction: if checked == 0 {
            0.0
        } else {
            violations as f64 / checked as f64
        },
        worst_margin: if checked == 0 { 0.0 } else { worst },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{make_quadratic_bilevel, make_quadratic_minimax, QuadraticMinMinMax};

    #[test]
    fn minimax_value_example() {
        let p = make_quadratic_minimax(1.0, 1.0).unwrap();
        let s = FlowState::new(vec![1.0], vec![0.0], None);
        let spec = LyapunovSpec::minimax(0.5);
        assert_eq!(lyapunov_value(&spec, &p, &s).unwrap(), 0.75);
        let (ry, rz) = residuals(&spec, &p, &s).unwrap();
        assert_eq!(ry, vec![1.0]);
        assert!(rz.is_none());
        let (dy, _) = deviations(&spec, &p, &s).unwrap();
        assert_eq!(dy, vec![-1.0]);
    }

    #[test]
    fn bilevel_zero_gap_state() {
        let p = make_quadratic_bilevel(0.5, 1.0);
        for lambda in [0.5, 3.0, 40.0] {
            let spec = LyapunovSpec::bilevel(0.5, 0.5, lambda);
            let x = 1.7;
            let yl = p.penalized_argmin_exact(&[x], lambda).unwrap();
            let s = FlowState::new(vec![x], yl, Some(vec![0.5 * x]));
            let d = diagnostics(&spec, &p, &s).unwrap();
            assert!((d.w - d.phi).abs() < 1e-14);
            assert!(d.r_y_sq < 1e-24 && d.r_z_sq == 0.0);
            assert!(d.d_y_sq < 1e-24 && d.d_z_sq == 0.0);
        }
    }

    #[test]
    fn bilevel_residual_and_deviation_examples() {
        let p = make_quadratic_bilevel(0.5, 1.0);
        let spec = LyapunovSpec::bilevel(0.5, 0.5, 10.0);
        let (ry, rz) = residuals(&spec, &p, &FlowState::new(vec![1.0], vec![1.0], Some(vec![1.0])))
            .unwrap();
        assert_eq!(ry, vec![5.0]);
        assert_eq!(rz, Some(vec![0.5]));
        let s = FlowState::new(vec![11.0], vec![11.0], Some(vec![11.0]));
        let (dy, _) = deviations(&spec, &p, &s).unwrap();
        assert!((dy[0] + 30.0).abs() < 1e-12);
        let (ry, _) = residuals(&spec, &p, &s).unwrap();
        assert!(dy[0].abs() <= 0.6 * ry[0].abs());
    }

    #[test]
    fn envelope_gradient_matches_penalized_partial() {
        let p = make_quadratic_bilevel(0.5, 1.0);
        let spec = LyapunovSpec::bilevel(0.5, 0.5, 10.0);
        let env = envelope(&spec, &p, &[11.0]).unwrap();
        assert!((env.grad_phi[0] - p.penalized_envelope_gradient(&[11.0], 10.0)[0]).abs() < 1e-10);
        assert!((env.grad_phi[0] - 2.5).abs() < 1e-12);
    }

    #[test]
    fn minminmax_value_example() {
        let q = QuadraticMinMinMax::default();
        let spec = LyapunovSpec::minminmax(0.5, 0.5);
        let s = FlowState::new(vec![2.0], vec![2.0], Some(vec![1.0]));
        assert_eq!(lyapunov_value(&spec, &q, &s).unwrap(), 1.0);
    }

    #[test]
    fn spec_validation() {
        let p = make_quadratic_bilevel(0.5, 1.0);
        assert!(LyapunovSpec::bilevel(0.5, 0.5, 10.0).validate(&p).is_ok());
        assert!(LyapunovSpec::bilevel(1.0, 0.5, 10.0).validate(&p).is_err());
        assert!(LyapunovSpec::bilevel(0.5, 0.0, 10.0).validate(&p).is_err());
        assert!(LyapunovSpec::bilevel(0.5, 0.5, 0.0).validate(&p).is_err());
        assert!(LyapunovSpec::minimax(0.5).validate(&p).is_err());
    }

    #[test]
    fn constant_trajectory_certificate_is_tight() {
        let rec = |t| DiagnosticsRecord {
            t,
            w: 2.0,
            ..Default::default()
        };
        let r = dissipation_certificate(&[rec(0.0), rec(0.1), rec(0.2)], 0.5);
        assert!(r.passed());
        assert_eq!(r.checked, 2);
        assert!((r.worst_margin - 3e-9).abs() < 1e-15);
    }

    #[test]
    fn increasing_w_is_flagged() {
        let a = DiagnosticsRecord {
            t: 0.0,
            w: 1.0,
            ..Default::default()
        };
        let b = DiagnosticsRecord {
            t: 0.1,
            w: 1.1,
            ..Default::default()
        };
        let r = dissipation_certificate(&[a, b], 0.5);
        assert_eq!(r.violations, 1);
        assert_eq!(r.violation_fraction, 1.0);
        assert!(r.worst_margin < 0.0);
    }

    #[test]
    fn formats_special_values() {
        assert_eq!(fmt_f64(f64::INFINITY), "inf");
        assert_eq!(fmt_f64(f64::NEG_INFINITY), "-inf");
        assert_eq!(fmt_f64(f64::NAN), "nan");
        assert_eq!(fmt_f64(0.1), "0.1");
        assert_eq!(fmt_f64(2.0), "2.0");
    }
}
