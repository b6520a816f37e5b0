//! Datasets for the hypercleaning problem: CSV I/O, synthetic Gaussian blobs,
//! seeded split/corruption, standardization and the multiclass logistic kernel.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::rng::SplitMix64;

/// Row-major feature matrix with integer class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Vec<f64>,
    pub labels: Vec<usize>,
    pub n_features: usize,
    pub n_classes: usize,
}

impl Dataset {
    pub fn new(
        features: Vec<f64>,
        labels: Vec<usize>,
        n_features: usize,
        n_classes: usize,
    ) -> Result<Self> {
        let ds = Self {
            features,
            labels,
            n_features,
            n_classes,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_features == 0 {
            return Err(Error::Data("dataset has no feature columns".into()));
        }
        if self.features.len() != self.labels.len() * self.n_features {
            return Err(Error::Data(format!(
                "feature buffer has {} entries, expected {} x {}",
                self.features.len(),
                self.labels.len(),
                self.n_features
            )));
        }
        if let Some((i, &l)) = self
            .labels
            .iter()
            .enumerate()
            .find(|(_, &l)| l >= self.n_classes)
        {
            return Err(Error::Data(format!(
                "row {i}: label {l} is not below n_classes = {}",
                self.n_classes
            )));
        }
        if let Some(k) = self.features.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!(
                "row {}, column f{}: non-finite feature",
                k / self.n_features,
                k % self.n_features
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.n_features..(i + 1) * self.n_features]
    }

    fn subset(&self, idx: &[usize]) -> Dataset {
        let mut features = Vec::with_capacity(idx.len() * self.n_features);
        for &i in idx {
            features.extend_from_slice(self.row(i));
        }
        Dataset {
            features,
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            n_features: self.n_features,
            n_classes: self.n_classes,
        }
    }

    /// Parses `f0,...,f{d-1},label` CSV. `n_classes` is `max label + 1`.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let header = rdr
            .headers()
            .map_err(|e| Error::Data(format!("line 1: {e}")))?
            .clone();
        let d = header.len().saturating_sub(1);
        if d == 0 || &header[d] != "label" {
            return Err(Error::Data(
                "line 1: header must be f0,...,f{d-1},label".into(),
            ));
        }
        for (j, name) in header.iter().take(d).enumerate() {
            if name != format!("f{j}") {
                return Err(Error::Data(format!(
                    "line 1, column {}: expected `f{j}`, found `{name}`",
                    j + 1
                )));
            }
        }
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| {
                let line = e.position().map_or(0, |p| p.line());
                Error::Data(format!("line {line}: {e}"))
            })?;
            let line = rec.position().map_or(0, |p| p.line());
            for j in 0..d {
                let v: f64 = rec[j].parse().map_err(|_| {
                    Error::Data(format!(
                        "line {line}, column {}: `{}` is not a number",
                        j + 1,
                        &rec[j]
                    ))
                })?;
                if !v.is_finite() {
                    return Err(Error::Data(format!(
                        "line {line}, column {}: non-finite feature",
                        j + 1
                    )));
                }
                features.push(v);
            }
            let l: usize = rec[d].parse().map_err(|_| {
                Error::Data(format!(
                    "line {line}, column {}: `{}` is not a class index",
                    d + 1,
                    &rec[d]
                ))
            })?;
            labels.push(l);
        }
        if labels.is_empty() {
            return Err(Error::Data("dataset has no rows".into()));
        }
        let n_classes = labels.iter().max().map_or(0, |m| m + 1);
        Dataset::new(features, labels, d, n_classes)
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::from_csv_reader(std::io::BufReader::new(file))
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let to_err = |e: csv::Error| Error::Data(e.to_string());
        let mut header: Vec<String> = (0..self.n_features).map(|j| format!("f{j}")).collect();
        header.push("label".into());
        w.write_record(&header).map_err(to_err)?;
        for i in 0..self.len() {
            let mut rec: Vec<String> = self.row(i).iter().map(|v| format!("{v:?}")).collect();
            rec.push(self.labels[i].to_string());
            w.write_record(&rec).map_err(to_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `K` unit-variance Gaussian clusters whose means lie on a radius-3 sphere
/// in random directions; example `i` has label `i mod K`.
pub fn synth_blobs(n: usize, d: usize, k: usize, seed: u64) -> Result<Dataset> {
    if k < 2 || n < k || d == 0 {
        return Err(Error::invalid("synth_blobs", "requires n >= K >= 2 and d >= 1"));
    }
    let mut rng = SplitMix64::with_stream(seed, 0);
    let mut means = Vec::with_capacity(k);
    for _ in 0..k {
        let mut m = rng.gaussian_vec(d, 1.0);
        let nm = crate::linalg::normalize(&mut m);
        if nm == 0.0 {
            m[0] = 1.0;
        }
        means.push(crate::linalg::scale(&m, 3.0));
    }
    let mut noise = SplitMix64::with_stream(seed, 1);
    let mut features = Vec::with_capacity(n * d);
    let labels: Vec<usize> = (0..n).map(|i| i % k).collect();
    for &l in &labels {
        for mj in &means[l] {
            features.push(mj + noise.gaussian());
        }
    }
    Dataset::new(features, labels, d, k)
}

/// Per-feature affine map `(v − mean)/std` estimated on the training split.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardization {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

pub const STD_FLOOR: f64 = 1e-8;

impl Standardization {
    pub fn fit(data: &Dataset) -> Self {
        let (n, d) = (data.len() as f64, data.n_features);
        let mut mean = vec![0.0; d];
        for i in 0..data.len() {
            for (m, v) in mean.iter_mut().zip(data.row(i)) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for i in 0..data.len() {
            for ((s, v), m) in var.iter_mut().zip(data.row(i)).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var.iter().map(|s| (s / n).sqrt().max(STD_FLOOR)).collect();
        Self { mean, std }
    }

    pub fn apply(&self, data: &mut Dataset) {
        let d = data.n_features;
        for (k, v) in data.features.iter_mut().enumerate() {
            let j = k % d;
            *v = (*v - self.mean[j]) / self.std[j];
        }
    }
}

/// Train/validation split with corrupted training labels. Validation labels stay clean.
#[derive(Debug, Clone)]
pub struct SplitDataset {
    /// Standardized training features with corrupted labels.
    pub train: Dataset,
    pub train_clean_labels: Vec<usize>,
    /// Training indices whose label was corrupted, in corruption order.
    pub corrupted: Vec<usize>,
    pub val: Dataset,
    pub standardization: Standardization,
}

impl SplitDataset {
    pub fn is_corrupted(&self) -> Vec<bool> {
        let mut mask = vec![false; self.train.len()];
        for &i in &self.corrupted {
            mask[i] = true;
        }
        mask
    }
}

/// Number of corrupted labels, `⌈frac·n⌉` (guarded against rounding of exact products).
pub fn corruption_count(frac: f64, n: usize) -> usize {
    let c = (frac * n as f64 - 1e-9).ceil().max(0.0) as usize;
    c.min(n)
}

/// Seeded split (`round(split_frac·n)` training rows), label corruption of
/// the first `⌈corrupt_frac·n_tr⌉` entries of a training permutation, then
/// standardization with training statistics.
pub fn split_and_corrupt(
    data: &Dataset,
    split_frac: f64,
    corrupt_frac: f64,
    seed: u64,
) -> Result<SplitDataset> {
    if !(split_frac > 0.0 && split_frac < 1.0) {
        return Err(Error::invalid("split_frac", "must lie in (0, 1)"));
    }
    if !(0.0..1.0).contains(&corrupt_frac) {
        return Err(Error::invalid("corrupt_frac", "must lie in [0, 1)"));
    }
    if data.n_classes < 2 {
        return Err(Error::invalid("n_classes", "need at least 2 classes"));
    }
    let n = data.len();
    let n_tr = (split_frac * n as f64).round() as usize;
    if n_tr == 0 || n_tr >= n {
        return Err(Error::Data(format!(
            "split {split_frac} of {n} rows leaves an empty train or validation set"
        )));
    }
    let perm = SplitMix64::with_stream(seed, 10).permutation(n);
    let mut train = data.subset(&perm[..n_tr]);
    let mut val = data.subset(&perm[n_tr..]);
    let clean = train.labels.clone();

    let mut rng = SplitMix64::with_stream(seed, 11);
    let order = rng.permutation(n_tr);
    let corrupted: Vec<usize> = order[..corruption_count(corrupt_frac, n_tr)].to_vec();
    let k = data.n_classes;
    for &i in &corrupted {
        let old = train.labels[i];
        let r = rng.below(k - 1);
        train.labels[i] = if r >= old { r + 1 } else { r };
    }

    let standardization = Standardization::fit(&train);
    standardization.apply(&mut train);
    standardization.apply(&mut val);
    Ok(SplitDataset {
        train,
        train_clean_labels: clean,
        corrupted,
        val,
        standardization,
    })
}

/// Class scores `s_k = Σ_j θ[k·d + j]·x_j`.
pub fn scores(theta: &[f64], x: &[f64], k: usize) -> Vec<f64> {
    let d = x.len();
    (0..k)
        .map(|c| crate::linalg::dot(&theta[c * d..(c + 1) * d], x))
        .collect()
}

/// Softmax probabilities and `log Σ exp`, stabilized by the row maximum.
pub fn softmax(scores: &[f64]) -> (Vec<f64>, f64) {
    let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = scores.iter().map(|s| (s - m).exp()).collect();
    let z: f64 = e.iter().sum();
    (e.iter().map(|v| v / z).collect(), m + z.ln())
}

/// Cross-entropy of one example and its gradient, both scaled by `weight`.
pub fn logistic_loss_grad(
    theta: &[f64],
    x: &[f64],
    label: usize,
    weight: f64,
    n_classes: usize,
) -> (f64, Vec<f64>) {
    let mut grad = vec![0.0; theta.len()];
    let loss = logistic_loss_grad_into(theta, x, label, weight, n_classes, &mut grad);
    (loss, grad)
}

/// As [`logistic_loss_grad`], accumulating `weight·∇ℓ` into `grad`.
pub fn logistic_loss_grad_into(
    theta: &[f64],
    x: &[f64],
    label: usize,
    weight: f64,
    n_classes: usize,
    grad: &mut [f64],
) -> f64 {
    let d = x.len();
    let s = scores(theta, x, n_classes);
    let (p, lse) = softmax(&s);
    if weight != 0.0 {
        for c in 0..n_classes {
            let coef = weight * (p[c] - if c == label { 1.0 } else { 0.0 });
            crate::linalg::axpy_in_place(&mut grad[c * d..(c + 1) * d], coef, x);
        }
    }
    weight * (lse - s[label])
}
