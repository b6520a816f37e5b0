//! Hypercleaning: learn one weight `w_i` per training example so that the
//! weighted, regularized logistic fit generalizes on a clean validation split.
//!
//! Outer variable `w ∈ R^{n_tr}`, inner variable `θ ∈ R^{d·K}` stored as `K`
//! rows of length `d`.

use super::{Dims, Family, Objective, Problem, ProblemConstants};
use crate::data::{self, Dataset, SplitDataset};
use crate::error::{Error, Result};
use crate::linalg;

#[derive(Debug, Clone, PartialEq)]
pub struct HypercleanConfig {
    pub rho_reg: f64,
    pub corrupt_frac: f64,
    pub split_frac: f64,
    pub seed: u64,
}

impl Default for HypercleanConfig {
    fn default() -> Self {
        Self {
            rho_reg: 0.05,
            corrupt_frac: 0.3,
            split_frac: 0.6,
            seed: 0,
        }
    }
}

pub fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

/// `H_i v` for the softmax cross-entropy Hessian of one example.
fn ce_hvp_into(theta: &[f64], x: &[f64], k: usize, v: &[f64], weight: f64, out: &mut [f64]) {
    let d = x.len();
    let (p, _) = data::softmax(&data::scores(theta, x, k));
    let a = data::scores(v, x, k);
    let pa = linalg::dot(&p, &a);
    for c in 0..k {
        let b = weight * p[c] * (a[c] - pa);
        linalg::axpy_in_place(&mut out[c * d..(c + 1) * d], b, x);
    }
}

/// `g(w, θ) = (1/n) Σ σ(w_i) ℓ(θ; x_i, ỹ_i) + (ρ/2)‖θ‖²`
#[derive(Debug, Clone)]
pub struct WeightedTrainLoss {
    train: Dataset,
    rho_reg: f64,
}

impl WeightedTrainLoss {
    fn inv_n(&self) -> f64 {
        1.0 / self.train.len() as f64
    }

    /// Per-example losses `ℓ_i(θ)` on the (corrupted) training labels.
    pub fn example_losses(&self, theta: &[f64]) -> Vec<f64> {
        let k = self.train.n_classes;
        (0..self.train.len())
            .map(|i| {
                let s = data::scores(theta, self.train.row(i), k);
                data::softmax(&s).1 - s[self.train.labels[i]]
            })
            .collect()
    }
}

impl Objective for WeightedTrainLoss {
    fn value(&self, w: &[f64], theta: &[f64]) -> f64 {
        let losses = self.example_losses(theta);
        let fit: f64 = w.iter().zip(&losses).map(|(&wi, l)| sigmoid(wi) * l).sum();
        fit * self.inv_n() + 0.5 * self.rho_reg * linalg::norm_sq(theta)
    }

    fn grad_x(&self, w: &[f64], theta: &[f64]) -> Vec<f64> {
        let inv_n = self.inv_n();
        w.iter()
            .zip(self.example_losses(theta))
            .map(|(&wi, l)| {
                let s = sigmoid(wi);
                inv_n * s * (1.0 - s) * l
            })
            .collect()
    }

    fn grad_u(&self, w: &[f64], theta: &[f64]) -> Vec<f64> {
        let inv_n = self.inv_n();
        let k = self.train.n_classes;
        let mut grad = linalg::scale(theta, self.rho_reg);
        for (i, &wi) in w.iter().enumerate() {
            data::logistic_loss_grad_into(
                theta,
                self.train.row(i),
                self.train.labels[i],
                inv_n * sigmoid(wi),
                k,
                &mut grad,
            );
        }
        grad
    }

    fn grads(&self, w: &[f64], theta: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let inv_n = self.inv_n();
        let k = self.train.n_classes;
        let d = self.train.n_features;
        let mut gu = linalg::scale(theta, self.rho_reg);
        let mut gx = Vec::with_capacity(w.len());
        for (i, &wi) in w.iter().enumerate() {
            let x = self.train.row(i);
            let label = self.train.labels[i];
            let sc = data::scores(theta, x, k);
            let (p, lse) = data::softmax(&sc);
            let s = sigmoid(wi);
            gx.push(inv_n * s * (1.0 - s) * (lse - sc[label]));
            let weight = inv_n * s;
            for c in 0..k {
                let coef = weight * (p[c] - if c == label { 1.0 } else { 0.0 });
                linalg::axpy_in_place(&mut gu[c * d..(c + 1) * d], coef, x);
            }
        }
        (gx, gu)
    }

    fn hvp_uu(&self, w: &[f64], theta: &[f64], v: &[f64]) -> Option<Vec<f64>> {
        let inv_n = self.inv_n();
        let k = self.train.n_classes;
        let mut out = linalg::scale(v, self.rho_reg);
        for (i, &wi) in w.iter().enumerate() {
            ce_hvp_into(theta, self.train.row(i), k, v, inv_n * sigmoid(wi), &mut out);
        }
        Some(out)
    }

    fn jvp_xu(&self, w: &[f64], theta: &[f64], v: &[f64]) -> Option<Vec<f64>> {
        let inv_n = self.inv_n();
        let k = self.train.n_classes;
        let out = w
            .iter()
            .enumerate()
            .map(|(i, &wi)| {
                let s = sigmoid(wi);
                let (_, gi) =
                    data::logistic_loss_grad(theta, self.train.row(i), self.train.labels[i], 1.0, k);
                inv_n * s * (1.0 - s) * linalg::dot(&gi, v)
            })
            .collect();
        Some(out)
    }

    fn jvp_ux(&self, w: &[f64], theta: &[f64], dw: &[f64]) -> Option<Vec<f64>> {
        let inv_n = self.inv_n();
        let k = self.train.n_classes;
        let mut out = vec![0.0; theta.len()];
        for (i, (&wi, &dwi)) in w.iter().zip(dw).enumerate() {
            let s = sigmoid(wi);
            data::logistic_loss_grad_into(
                theta,
                self.train.row(i),
                self.train.labels[i],
                inv_n * s * (1.0 - s) * dwi,
                k,
                &mut out,
            );
        }
        Some(out)
    }
}

/// `f(θ)`: mean validation cross-entropy, independent of `w`.
#[derive(Debug, Clone)]
pub struct ValidationLoss {
    val: Dataset,
}

impl ValidationLoss {
    pub fn accuracy(&self, theta: &[f64]) -> f64 {
        accuracy(&self.val, theta)
    }
}

pub fn accuracy(ds: &Dataset, theta: &[f64]) -> f64 {
    let k = ds.n_classes;
    let hits = (0..ds.len())
        .filter(|&i| {
            let s = data::scores(theta, ds.row(i), k);
            let best = (0..k)
                .max_by(|&a, &b| s[a].total_cmp(&s[b]))
                .unwrap_or(0);
            best == ds.labels[i]
        })
        .count();
    hits as f64 / ds.len() as f64
}

impl Objective for ValidationLoss {
    fn value(&self, _w: &[f64], theta: &[f64]) -> f64 {
        let k = self.val.n_classes;
        let inv_n = 1.0 / self.val.len() as f64;
        let mut scratch = vec![0.0; theta.len()];
        (0..self.val.len())
            .map(|i| {
                data::logistic_loss_grad_into(
                    theta,
                    self.val.row(i),
                    self.val.labels[i],
                    inv_n,
                    k,
                    &mut scratch,
                )
            })
            .sum()
    }

    fn grad_x(&self, w: &[f64], _theta: &[f64]) -> Vec<f64> {
        vec![0.0; w.len()]
    }

    fn grad_u(&self, _w: &[f64], theta: &[f64]) -> Vec<f64> {
        let k = self.val.n_classes;
        let inv_n = 1.0 / self.val.len() as f64;
        let mut grad = vec![0.0; theta.len()];
        for i in 0..self.val.len() {
            data::logistic_loss_grad_into(
                theta,
                self.val.row(i),
                self.val.labels[i],
                inv_n,
                k,
                &mut grad,
            );
        }
        grad
    }

    fn hvp_uu(&self, _w: &[f64], theta: &[f64], v: &[f64]) -> Option<Vec<f64>> {
        let k = self.val.n_classes;
        let inv_n = 1.0 / self.val.len() as f64;
        let mut out = vec![0.0; theta.len()];
        for i in 0..self.val.len() {
            ce_hvp_into(theta, self.val.row(i), k, v, inv_n, &mut out);
        }
        Some(out)
    }

    fn jvp_xu(&self, w: &[f64], _theta: &[f64], _v: &[f64]) -> Option<Vec<f64>> {
        Some(vec![0.0; w.len()])
    }

    fn jvp_ux(&self, _w: &[f64], theta: &[f64], _dw: &[f64]) -> Option<Vec<f64>> {
        Some(vec![0.0; theta.len()])
    }
}

#[derive(Debug, Clone)]
pub struct Hypercleaning {
    split: SplitDataset,
    config: HypercleanConfig,
    f: ValidationLoss,
    g: WeightedTrainLoss,
    constants: ProblemConstants,
}

/// Splits, corrupts and standardizes `data`, then builds the bilevel oracle.
pub fn make_hypercleaning(data: &Dataset, config: &HypercleanConfig) -> Result<Hypercleaning> {
    if !(config.rho_reg > 0.0) {
        return Err(Error::invalid("rho_reg", "must be > 0"));
    }
    if data.n_classes < 2 {
        return Err(Error::invalid("n_classes", "need at least 2 classes"));
    }
    let split = data::split_and_corrupt(data, config.split_frac, config.corrupt_frac, config.seed)?;
    let half_mean_sq = |ds: &Dataset| {
        0.5 * (0..ds.len()).map(|i| linalg::norm_sq(ds.row(i))).sum::<f64>() / ds.len() as f64
    };
    let n_tr = split.train.len() as f64;
    let row_sq: f64 = (0..split.train.len())
        .map(|i| linalg::norm_sq(split.train.row(i)))
        .sum();
    let constants = ProblemConstants {
        mu: config.rho_reg,
        rho: 0.0,
        l_fy: half_mean_sq(&split.val),
        l_gy: half_mean_sq(&split.train) + config.rho_reg,
        // Frobenius bound on ∇²_{wθ}g: σ'(·) ≤ 1/4 and ‖∇ℓ_i‖ ≤ √2‖x_i‖.
        l_gx: (2.0 * row_sq).sqrt() / (4.0 * n_tr),
        ..ProblemConstants::default()
    };
    Ok(Hypercleaning {
        f: ValidationLoss {
            val: split.val.clone(),
        },
        g: WeightedTrainLoss {
            train: split.train.clone(),
            rho_reg: config.rho_reg,
        },
        split,
        config: config.clone(),
        constants,
    })
}

impl Hypercleaning {
    pub fn split(&self) -> &SplitDataset {
        &self.split
    }

    pub fn config(&self) -> &HypercleanConfig {
        &self.config
    }

    pub fn n_train(&self) -> usize {
        self.split.train.len()
    }

    pub fn theta_dim(&self) -> usize {
        self.split.train.n_features * self.split.train.n_classes
    }

    pub fn train_loss(&self) -> &WeightedTrainLoss {
        &self.g
    }

    pub fn validation(&self) -> &ValidationLoss {
        &self.f
    }

    pub fn sample_weights(w: &[f64]) -> Vec<f64> {
        w.iter().map(|&v| sigmoid(v)).collect()
    }

    /// Fraction of corrupted examples whose outer weight was driven negative.
    pub fn corruption_recovery(&self, w: &[f64]) -> f64 {
        if self.split.corrupted.is_empty() {
            return 0.0;
        }
        let hits = self.split.corrupted.iter().filter(|&&i| w[i] < 0.0).count();
        hits as f64 / self.split.corrupted.len() as f64
    }

    pub fn with_mu(mut self, mu: f64) -> Self {
        self.constants.mu = mu;
        self
    }
}

impl Problem for Hypercleaning {
    fn name(&self) -> String {
        "hyperclean".into()
    }
    fn family(&self) -> Family {
        Family::Bilevel
    }
    fn dims(&self) -> Dims {
        let dy = self.theta_dim();
        Dims {
            x: self.n_train(),
            y: dy,
            z: dy,
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
    fn envelope_lower_bound(&self) -> Option<f64> {
        Some(0.0)
    }
}
