//! Central-difference verification of every declared gradient and
//! second-order product of an oracle.

use super::{Family, Objective, Problem};
use crate::flows::FlowState;
use crate::linalg;

#[derive(Debug, Clone)]
pub struct GradCheckEntry {
    pub map: &'static str,
    /// `max_i |a_i − d_i| / max(1, |a_i|, |d_i|)`
    pub max_rel_err: f64,
    pub max_abs_err: f64,
    /// False when either side produced a non-finite value.
    pub finite: bool,
}

impl GradCheckEntry {
    pub fn passed(&self, tol: f64) -> bool {
        self.finite && self.max_rel_err <= tol
    }
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub fd_step: f64,
    pub entries: Vec<GradCheckEntry>,
}

impl GradCheckReport {
    pub fn max_rel_err(&self) -> f64 {
        self.entries
            .iter()
            .map(|e| if e.finite { e.max_rel_err } else { f64::INFINITY })
            .fold(0.0, f64::max)
    }

    pub fn max_abs_err(&self) -> f64 {
        self.entries
            .iter()
            .map(|e| if e.finite { e.max_abs_err } else { f64::INFINITY })
            .fold(0.0, f64::max)
    }

    pub fn passed(&self, tol: f64) -> bool {
        self.entries.iter().all(|e| e.passed(tol))
    }

    pub fn failures(&self, tol: f64) -> Vec<&GradCheckEntry> {
        self.entries.iter().filter(|e| !e.passed(tol)).collect()
    }
}

fn compare(map: &'static str, analytic: &[f64], numeric: &[f64]) -> GradCheckEntry {
    let mut rel = 0.0f64;
    let mut abs = 0.0f64;
    let mut finite = analytic.len() == numeric.len();
    for (&a, &d) in analytic.iter().zip(numeric) {
        if !a.is_finite() || !d.is_finite() {
            finite = false;
            continue;
        }
        let e = (a - d).abs();
        abs = abs.max(e);
        rel = rel.max(e / 1f64.max(a.abs()).max(d.abs()));
    }
    GradCheckEntry {
        map,
        max_rel_err: rel,
        max_abs_err: abs,
        finite,
    }
}

fn fd_partial(dim: usize, eps: f64, mut eval: impl FnMut(usize, f64) -> f64) -> Vec<f64> {
    (0..dim)
        .map(|i| (eval(i, eps) - eval(i, -eps)) / (2.0 * eps))
        .collect()
}

fn bumped(v: &[f64], i: usize, d: f64) -> Vec<f64> {
    let mut out = v.to_vec();
    out[i] += d;
    out
}

/// Deterministic probe direction for the second-order products.
fn probe(n: usize, phase: f64) -> Vec<f64> {
    (0..n)
        .map(|i| ((i as f64 + 1.0) * 0.7 + phase).sin())
        .collect()
}

fn check_objective(
    entries: &mut Vec<GradCheckEntry>,
    names: [&'static str; 5],
    h: &dyn Objective,
    x: &[f64],
    u: &[f64],
    eps: f64,
) {
    let fx = fd_partial(x.len(), eps, |i, d| h.value(&bumped(x, i, d), u));
    entries.push(compare(names[0], &h.grad_x(x, u), &fx));
    let fu = fd_partial(u.len(), eps, |i, d| h.value(x, &bumped(u, i, d)));
    entries.push(compare(names[1], &h.grad_u(x, u), &fu));

    let v = probe(u.len(), 0.3);
    let w = probe(x.len(), 1.1);
    let along_u = |d: f64| linalg::axpy(u, d, &v);
    let along_x = |d: f64| linalg::axpy(x, d, &w);
    if let Some(hv) = h.hvp_uu(x, u, &v) {
        let fd = linalg::scale(
            &linalg::sub(&h.grad_u(x, &along_u(eps)), &h.grad_u(x, &along_u(-eps))),
            0.5 / eps,
        );
        entries.push(compare(names[2], &hv, &fd));
    }
    if let Some(jv) = h.jvp_xu(x, u, &v) {
        let fd = linalg::scale(
            &linalg::sub(&h.grad_x(x, &along_u(eps)), &h.grad_x(x, &along_u(-eps))),
            0.5 / eps,
        );
        entries.push(compare(names[3], &jv, &fd));
    }
    if let Some(jw) = h.jvp_ux(x, u, &w) {
        let fd = linalg::scale(
            &linalg::sub(&h.grad_u(&along_x(eps), u), &h.grad_u(&along_x(-eps), u)),
            0.5 / eps,
        );
        entries.push(compare(names[4], &jw, &fd));
    }
}

/// Compares each analytic map against central differences with step
/// `fd_step`. The lower objective is checked at `(x, y)` and, when the
/// point carries one, at `(x, z)`.
pub fn check_gradients(p: &dyn Problem, point: &FlowState, fd_step: f64) -> GradCheckReport {
    let mut entries = Vec::new();
    let (x, y) = (&point.x[..], &point.y[..]);
    check_objective(
        &mut entries,
        ["grad_f_x", "grad_f_y", "hvp_f_yy", "jvp_f_xy", "jvp_f_yx"],
        p.upper(),
        x,
        y,
        fd_step,
    );
    if let Some(g) = p.lower() {
        if p.family() == Family::Bilevel {
            check_objective(
                &mut entries,
                ["grad_g_x", "grad_g_y", "hvp_g_yy", "jvp_g_xy", "jvp_g_yx"],
                g,
                x,
                y,
                fd_step,
            );
        }
        if let Some(z) = point.z.as_deref() {
            check_objective(
                &mut entries,
                [
                    "grad_g_x@z",
                    "grad_g_z",
                    "hvp_g_zz",
                    "jvp_g_xz",
                    "jvp_g_zx",
                ],
                g,
                x,
                z,
                fd_step,
            );
        }
    }
    GradCheckReport { fd_step, entries }
}
