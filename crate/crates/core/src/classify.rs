//! Linear-kernel SVM baseline (one-vs-rest, primal subgradient descent) and
//! the confusion-matrix accuracy reporting.

use std::io::Write;

use rand::Rng;
use serde::Serialize;

use crate::data::LabeledSet;
use crate::error::{Error, Result};
use crate::rng::stage_rng;
use crate::tensor::Value;

/// Emotion class names in label order 0..=6, the row order of image reports.
pub const EMOTION_NAMES: [&str; 7] = [
    "angry", "disgust", "fear", "happy", "sad", "surprise", "neutral",
];

/// One-vs-rest linear SVM with the feature standardization fitted on its
/// training data.
#[derive(Debug, Clone, Serialize)]
pub struct LinearSvmModel {
    /// K×D weight matrix, one row per class.
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
    pub reg_lambda: f64,
    pub num_classes: usize,
    pub dim: usize,
    feat_mean: Vec<f64>,
    feat_std: Vec<f64>,
}

impl LinearSvmModel {
    fn standardize(&self, row: &[f64], out: &mut [f64]) {
        for ((o, v), (m, s)) in out
            .iter_mut()
            .zip(row)
            .zip(self.feat_mean.iter().zip(&self.feat_std))
        {
            *o = (v - m) / s;
        }
    }

    /// Raw one-vs-rest scores w_k·x̃ + b_k for one feature row.
    pub fn scores(&self, row: &[f64]) -> Result<Vec<f64>> {
        if row.len() != self.dim {
            return Err(Error::data(format!(
                "feature dimension {} does not match model dimension {}",
                row.len(),
                self.dim
            )));
        }
        let mut x = vec![0.0; self.dim];
        self.standardize(row, &mut x);
        Ok((0..self.num_classes)
            .map(|k| {
                let w = &self.weights[k * self.dim..(k + 1) * self.dim];
                w.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>() + self.biases[k]
            })
            .collect())
    }
}

/// Hinge objective: (λ/2)·Σ_k‖w_k‖² + mean over samples and classes of the
/// one-vs-rest hinge terms. Used for the monotonicity property.
fn hinge_objective(model: &LinearSvmModel, x: &[Vec<f64>], labels: &[usize]) -> f64 {
    let mut obj = 0.0;
    for (w, b) in model.weights.chunks_exact(model.dim).zip(&model.biases) {
        let sq = w.iter().map(|v| v * v).sum::<f64>() + b * b;
        obj += 0.5 * model.reg_lambda * sq;
    }
    let mut hinge = 0.0;
    for (xi, &label) in x.iter().zip(labels) {
        for k in 0..model.num_classes {
            let y = if k == label { 1.0 } else { -1.0 };
            let w = &model.weights[k * model.dim..(k + 1) * model.dim];
            let s = w.iter().zip(xi).map(|(a, b)| a * b).sum::<f64>() + model.biases[k];
            hinge += (1.0 - y * s).max(0.0);
        }
    }
    obj + hinge / x.len() as f64
}

/// Train a one-vs-rest linear SVM by deterministic stochastic subgradient
/// descent with step size 1/(λ·t) (bias unregularized). Features are
/// standardized to zero mean and unit variance first; the transform is
/// stored in the model.
pub fn svm_train(
    data: &LabeledSet,
    reg_lambda: f64,
    epochs: usize,
    seed: u64,
) -> Result<LinearSvmModel> {
    if reg_lambda <= 0.0 {
        return Err(Error::parameter("reg_lambda must be > 0"));
    }
    let hist = data.class_histogram();
    if hist.iter().filter(|&&c| c > 0).count() < 2 {
        return Err(Error::data(
            "svm_train needs at least two classes present in the data",
        ));
    }
    let (n, d, k) = (data.len(), data.dim(), data.num_classes());

    let mut mean = vec![0.0; d];
    for i in 0..n {
        for (m, v) in mean.iter_mut().zip(data.row(i)) {
            *m += v;
        }
    }
    for m in mean.iter_mut() {
        *m /= n as f64;
    }
    let mut std = vec![0.0; d];
    for i in 0..n {
        for ((s, v), m) in std.iter_mut().zip(data.row(i)).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    for s in std.iter_mut() {
        *s = (*s / n as f64).sqrt();
        if *s < 1e-12 {
            *s = 1.0;
        }
    }

    let x: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            data.row(i)
                .iter()
                .zip(mean.iter().zip(&std))
                .map(|(v, (m, s))| (v - m) / s)
                .collect()
        })
        .collect();

    let mut model = LinearSvmModel {
        weights: vec![0.0; k * d],
        biases: vec![0.0; k],
        reg_lambda,
        num_classes: k,
        dim: d,
        feat_mean: mean,
        feat_std: std,
    };

    // one independent Pegasos problem per class, deterministic merge order
    for class in 0..k {
        let mut rng = stage_rng(seed, &format!("svm-class-{class}"));
        let mut order: Vec<usize> = (0..n).collect();
        let w = &mut model.weights[class * d..(class + 1) * d];
        let b = &mut model.biases[class];
        let mut t = 0u64;
        for _ in 0..epochs {
            for i in 0..n.saturating_sub(1) {
                let j = rng.random_range(i..n);
                order.swap(i, j);
            }
            for &i in &order {
                t += 1;
                let eta = 1.0 / (reg_lambda * t as f64);
                let y = if data.labels()[i] == class { 1.0 } else { -1.0 };
                let margin =
                    y * (w.iter().zip(&x[i]).map(|(a, b)| a * b).sum::<f64>() + *b);
                // bias is treated as the weight of a constant feature and
                // shrinks with the rest; an unshrunk bias never recovers from
                // the huge 1/(λ·1) first step
                let shrink = 1.0 - eta * reg_lambda;
                for wv in w.iter_mut() {
                    *wv *= shrink;
                }
                *b *= shrink;
                if margin < 1.0 {
                    for (wv, xv) in w.iter_mut().zip(&x[i]) {
                        *wv += eta * y * xv;
                    }
                    *b += eta * y;
                }
            }
        }
    }
    Ok(model)
}

/// Hinge objective of a model on a labeled set, in the model's standardized
/// feature space.
pub fn svm_objective(model: &LinearSvmModel, data: &LabeledSet) -> Result<f64> {
    if data.dim() != model.dim {
        return Err(Error::data("feature dimension mismatch"));
    }
    let x: Vec<Vec<f64>> = (0..data.len())
        .map(|i| {
            let mut row = vec![0.0; model.dim];
            model.standardize(data.row(i), &mut row);
            row
        })
        .collect();
    Ok(hinge_objective(model, &x, data.labels()))
}

/// Argmax over one-vs-rest scores; ties break to the lowest class index.
pub fn svm_predict(model: &LinearSvmModel, features: &Value) -> Result<Vec<usize>> {
    let s = features.shape();
    if s.len() != 2 || s[1] != model.dim {
        return Err(Error::data(format!(
            "expected (n, {}) features, got {s:?}",
            model.dim
        )));
    }
    let mut out = Vec::with_capacity(s[0]);
    for i in 0..s[0] {
        let scores = model.scores(&features.data()[i * model.dim..(i + 1) * model.dim])?;
        let mut best = 0usize;
        for (k, v) in scores.iter().enumerate() {
            if *v > scores[best] {
                best = k;
            }
        }
        out.push(best);
    }
    Ok(out)
}

/// K×K true-by-predicted counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConfusionMatrix {
    pub num_classes: usize,
    pub counts: Vec<usize>,
}

impl ConfusionMatrix {
    pub fn count(&self, truth: usize, predicted: usize) -> usize {
        self.counts[truth * self.num_classes + predicted]
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    /// Diagonal sum over total.
    pub fn overall_accuracy(&self) -> f64 {
        let diag: usize = (0..self.num_classes).map(|k| self.count(k, k)).sum();
        diag as f64 / self.total() as f64
    }

    /// Diagonal over row sum per class; `None` for classes with no samples.
    pub fn per_class_accuracy(&self) -> Vec<Option<f64>> {
        (0..self.num_classes)
            .map(|k| {
                let row: usize = (0..self.num_classes).map(|j| self.count(k, j)).sum();
                if row == 0 {
                    None
                } else {
                    Some(self.count(k, k) as f64 / row as f64)
                }
            })
            .collect()
    }

    /// CSV export: header `true\pred_0..`, one row of counts per true class.
    pub fn to_csv(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let path = path.as_ref();
        let file =
            std::fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let mut w = std::io::BufWriter::new(file);
        let mut out = || -> std::io::Result<()> {
            let header: Vec<String> = (0..self.num_classes).map(|k| format!("pred_{k}")).collect();
            writeln!(w, "true,{}", header.join(","))?;
            for k in 0..self.num_classes {
                write!(w, "{k}")?;
                for j in 0..self.num_classes {
                    write!(w, ",{}", self.count(k, j))?;
                }
                writeln!(w)?;
            }
            w.flush()
        };
        out().map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn from_csv(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::data("empty confusion csv"))?;
        let k = header.split(',').count() - 1;
        let mut counts = Vec::with_capacity(k * k);
        for line in lines {
            if line.trim().is_empty() {
                continue;
            }
            for tok in line.split(',').skip(1) {
                counts.push(
                    tok.trim()
                        .parse::<usize>()
                        .map_err(|_| Error::data(format!("bad count {tok:?}")))?,
                );
            }
        }
        if counts.len() != k * k {
            return Err(Error::data("confusion csv is not square"));
        }
        Ok(Self {
            num_classes: k,
            counts,
        })
    }
}

/// Build the confusion matrix of predictions against ground truth.
pub fn evaluate(predictions: &[usize], truth: &[usize], num_classes: usize) -> Result<ConfusionMatrix> {
    if predictions.len() != truth.len() {
        return Err(Error::data(format!(
            "{} predictions for {} truths",
            predictions.len(),
            truth.len()
        )));
    }
    let mut counts = vec![0usize; num_classes * num_classes];
    for (&p, &t) in predictions.iter().zip(truth) {
        if p >= num_classes || t >= num_classes {
            return Err(Error::data(format!(
                "label pair ({t},{p}) outside 0..{num_classes}"
            )));
        }
        counts[t * num_classes + p] += 1;
    }
    Ok(ConfusionMatrix {
        num_classes,
        counts,
    })
}
