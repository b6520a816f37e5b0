//! Ergodic averages, trajectory tracking errors and the sweep cell metric.

use crate::error::{Error, Result};
use crate::linalg;
use crate::lyapunov::DiagnosticsRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Column {
    W,
    GradPhiSq,
    RYSq,
    RZSq,
    DYSq,
    DZSq,
    YTrackSq,
    ZTrackSq,
}

impl Column {
    fn get(self, r: &DiagnosticsRecord) -> f64 {
        match self {
            Column::W => r.w,
            Column::GradPhiSq => r.grad_phi_sq,
            Column::RYSq => r.r_y_sq,
            Column::RZSq => r.r_z_sq,
            Column::DYSq => r.d_y_sq,
            Column::DZSq => r.d_z_sq,
            Column::YTrackSq => r.y_track_sq,
            Column::ZTrackSq => r.z_track_sq,
        }
    }
}

/// Arithmetic mean of `column` over the records; the uniform-grid surrogate
/// of `E_{t~Unif[0,T]}`.
pub fn ergodic_mean(records: &[DiagnosticsRecord], column: Column) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::invalid("records", "ergodic mean of an empty trajectory"));
    }
    Ok(records.iter().map(|r| column.get(r)).sum::<f64>() / records.len() as f64)
}

/// Mean over the left endpoints `k = 0..N−1`, matching `(1/N) Σ_{k<N}`.
pub fn ergodic_mean_left(records: &[DiagnosticsRecord], column: Column) -> Result<f64> {
    let n = records.len().saturating_sub(1).max(1);
    ergodic_mean(&records[..n.min(records.len())], column)
}

/// `(W₀ − inf)/(c·T)`
pub fn ergodic_bound(w0: f64, inf: f64, c: f64, horizon: f64) -> f64 {
    (w0 - inf) / (c * horizon)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackReport {
    pub lambda: f64,
    pub case_label: String,
    pub sup_err: f64,
    pub avg_err: f64,
    pub rms_err: f64,
    pub bound: Option<f64>,
}

impl TrackReport {
    pub const CSV_HEADER: &'static str = "lambda,case,sup_err,avg_err,rms_err,bound";

    pub fn csv_row(&self) -> String {
        let f = crate::lyapunov::fmt_f64;
        format!(
            "{},{},{},{},{},{}",
            f(self.lambda),
            self.case_label,
            f(self.sup_err),
            f(self.avg_err),
            f(self.rms_err),
            self.bound.map_or_else(|| "nan".into(), f)
        )
    }
}

/// `(sup, avg, rms)` of `‖x_k − w_k‖` on a uniform grid of step `h`, with
/// trapezoid-rule time averages.
pub fn tracking_errors(x: &[Vec<f64>], w: &[Vec<f64>], h: f64) -> Result<(f64, f64, f64)> {
    if x.len() != w.len() {
        return Err(Error::Dimension {
            what: "trajectory length",
            expected: x.len(),
            got: w.len(),
        });
    }
    if x.is_empty() || !(h > 0.0) {
        return Err(Error::invalid("trajectory", "needs samples and h > 0"));
    }
    let e: Vec<f64> = x
        .iter()
        .zip(w)
        .map(|(a, b)| linalg::norm(&linalg::sub(a, b)))
        .collect();
    let sup = e.iter().cloned().fold(0.0, f64::max);
    if e.len() == 1 {
        return Ok((sup, e[0], e[0]));
    }
    let trap = |v: &dyn Fn(f64) -> f64| {
        let inner: f64 = e[1..e.len() - 1].iter().map(|&x| v(x)).sum();
        h * (0.5 * (v(e[0]) + v(e[e.len() - 1])) + inner)
    };
    let horizon = h * (e.len() - 1) as f64;
    let avg = trap(&|x| x) / horizon;
    let rms = (trap(&|x| x * x) / horizon).sqrt();
    Ok((sup, avg, rms))
}

/// `log10` of the mean squared outer gradient; `+∞` for diverged cells and
/// `−∞` when every gradient vanishes.
pub fn sweep_cell_metric(outer_grad_sq: &[f64], diverged: bool) -> f64 {
    if diverged {
        return f64::INFINITY;
    }
    if outer_grad_sq.is_empty() {
        return f64::NAN;
    }
    let mean = outer_grad_sq.iter().sum::<f64>() / outer_grad_sq.len() as f64;
    if !mean.is_finite() {
        return f64::INFINITY;
    }
    if mean == 0.0 {
        return f64::NEG_INFINITY;
    }
    mean.log10()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_column_mean() {
        let recs: Vec<_> = (0..7)
            .map(|k| DiagnosticsRecord {
                t: k as f64,
                grad_phi_sq: 2.5,
                ..Default::default()
            })
            .collect();
        assert_eq!(ergodic_mean(&recs, Column::GradPhiSq).unwrap(), 2.5);
        assert!(ergodic_mean(&[], Column::W).is_err());
    }

    #[test]
    fn tracking_metric_examples() {
        let w: Vec<Vec<f64>> = (0..11).map(|k| vec![(k as f64 * 0.1).sin()]).collect();
        assert_eq!(tracking_errors(&w, &w, 0.1).unwrap(), (0.0, 0.0, 0.0));
        let x: Vec<Vec<f64>> = w.iter().map(|v| vec![v[0] + 1.0]).collect();
        let (s, a, r) = tracking_errors(&x, &w, 0.1).unwrap();
        assert!((s - 1.0).abs() < 1e-15 && (a - 1.0).abs() < 1e-12 && (r - 1.0).abs() < 1e-12);
        assert!(tracking_errors(&x[..3], &w, 0.1).is_err());
    }

    #[test]
    fn sup_dominates_rms_dominates_nothing() {
        let w = vec![vec![0.0]; 5];
        let x: Vec<Vec<f64>> = [0.0, 3.0, 1.0, 0.5, 2.0].iter().map(|&v| vec![v]).collect();
        let (s, a, r) = tracking_errors(&x, &w, 0.5).unwrap();
        assert!(s >= r && r >= a && a >= 0.0);
    }

    #[test]
    fn cell_metric_sentinels() {
        assert_eq!(sweep_cell_metric(&[0.0, 0.0], false), f64::NEG_INFINITY);
        assert_eq!(sweep_cell_metric(&[1.0], true), f64::INFINITY);
        assert_eq!(sweep_cell_metric(&[10.0, 1000.0 - 10.0], false), (500f64).log10());
    }
}
