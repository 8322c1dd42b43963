//! Datasets: synthetic 2-D Gaussian mixtures, imbalance construction, domain
//! splitting for CycleGAN training, augmentation merging, and the
//! label,pixels CSV format used for 48×48 grayscale image sets.

use std::io::{BufRead, BufWriter, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{randn, rng_from_seed};
use crate::tensor::Value;

/// Three-class 2-D Gaussian mixture with a shared covariance. The defaults
/// produce the imbalanced toy problem: classes at [0,6], [6.5,7] and [2,2]
/// with 1000/1000/100 training points and 100 test points each.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GaussianSpec {
    pub means: Vec<[f64; 2]>,
    pub covariance: [[f64; 2]; 2],
    pub train_counts: Vec<usize>,
    pub test_counts: Vec<usize>,
}

impl Default for GaussianSpec {
    fn default() -> Self {
        Self {
            means: vec![[0.0, 6.0], [6.5, 7.0], [2.0, 2.0]],
            covariance: [[2.0, 1.0], [1.0, 2.0]],
            train_counts: vec![1000, 1000, 100],
            test_counts: vec![100, 100, 100],
        }
    }
}

/// Feature matrix with integer class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSet {
    features: Vec<f64>,
    dim: usize,
    labels: Vec<usize>,
    num_classes: usize,
}

impl LabeledSet {
    pub fn new(
        features: Vec<f64>,
        dim: usize,
        labels: Vec<usize>,
        num_classes: usize,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::data("feature dimension must be positive"));
        }
        if features.len() != labels.len() * dim {
            return Err(Error::data(format!(
                "{} feature values do not form {} rows of dimension {dim}",
                features.len(),
                labels.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::data(format!(
                "label {bad} out of range 0..{num_classes}"
            )));
        }
        Ok(Self {
            features,
            dim,
            labels,
            num_classes,
        })
    }

    pub fn empty(dim: usize, num_classes: usize) -> Self {
        Self {
            features: Vec::new(),
            dim,
            labels: Vec::new(),
            num_classes,
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    /// Features as an (n, dim) tensor value. Errors on an empty set.
    pub fn to_matrix(&self) -> Result<Value> {
        Value::new(vec![self.len(), self.dim], self.features.clone())
    }

    /// Rows selected by index, in the given order.
    pub fn select(&self, indices: &[usize]) -> LabeledSet {
        let mut features = Vec::with_capacity(indices.len() * self.dim);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            features.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        Self {
            features,
            dim: self.dim,
            labels,
            num_classes: self.num_classes,
        }
    }

    /// Per-class sample counts; sums to `len()`.
    pub fn class_histogram(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.num_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }
}

/// Unpaired sample pools for the reference domain R and target domain T.
/// No row correspondence is assumed.
#[derive(Debug, Clone)]
pub struct DomainPair {
    pub reference: Value,
    pub target: Value,
    pub reference_label: usize,
    pub target_label: usize,
}

fn cholesky2(cov: [[f64; 2]; 2]) -> Result<[[f64; 2]; 2]> {
    if (cov[0][1] - cov[1][0]).abs() > 1e-12 {
        return Err(Error::parameter(format!(
            "covariance must be symmetric, got {cov:?}"
        )));
    }
    let a = cov[0][0];
    let det = cov[0][0] * cov[1][1] - cov[0][1] * cov[1][0];
    if a <= 0.0 || det <= 0.0 {
        return Err(Error::parameter(format!(
            "covariance must be positive definite, got {cov:?}"
        )));
    }
    let l00 = a.sqrt();
    let l10 = cov[1][0] / l00;
    let l11 = (cov[1][1] - l10 * l10).sqrt();
    Ok([[l00, 0.0], [l10, l11]])
}

/// Draw the train and test sets of the toy problem via the Cholesky factor of
/// the shared covariance. Deterministic per seed.
pub fn sample_gaussians(spec: &GaussianSpec, seed: u64) -> Result<(LabeledSet, LabeledSet)> {
    let k = spec.means.len();
    if spec.train_counts.len() != k || spec.test_counts.len() != k {
        return Err(Error::parameter(format!(
            "need one train and one test count per class: {k} classes, {} train, {} test",
            spec.train_counts.len(),
            spec.test_counts.len()
        )));
    }
    if spec.train_counts.iter().chain(&spec.test_counts).any(|&c| c == 0) {
        return Err(Error::parameter("per-class counts must be positive"));
    }
    let chol = cholesky2(spec.covariance)?;
    let mut rng = rng_from_seed(seed);
    let mut draw = |counts: &[usize]| -> LabeledSet {
        let total: usize = counts.iter().sum();
        let mut features = Vec::with_capacity(total * 2);
        let mut labels = Vec::with_capacity(total);
        for (class, &count) in counts.iter().enumerate() {
            let mu = spec.means[class];
            for _ in 0..count {
                let z0 = randn(&mut rng);
                let z1 = randn(&mut rng);
                features.push(mu[0] + chol[0][0] * z0);
                features.push(mu[1] + chol[1][0] * z0 + chol[1][1] * z1);
                labels.push(class);
            }
        }
        LabeledSet {
            features,
            dim: 2,
            labels,
            num_classes: k,
        }
    };
    let train = draw(&spec.train_counts);
    let test = draw(&spec.test_counts);
    Ok((train, test))
}

/// Partition two classes out of a labeled set as unpaired CycleGAN domains.
pub fn split_domains(
    data: &LabeledSet,
    reference_label: usize,
    target_label: usize,
) -> Result<DomainPair> {
    if reference_label == target_label {
        return Err(Error::data(format!(
            "reference and target class are both {reference_label}"
        )));
    }
    let pick = |label: usize| -> Result<Value> {
        let rows: Vec<usize> = (0..data.len()).filter(|&i| data.labels[i] == label).collect();
        if rows.is_empty() {
            return Err(Error::data(format!("label {label} absent from data")));
        }
        let mut features = Vec::with_capacity(rows.len() * data.dim);
        for i in rows {
            features.extend_from_slice(data.row(i));
        }
        Value::new(vec![features.len() / data.dim, data.dim], features)
    };
    Ok(DomainPair {
        reference: pick(reference_label)?,
        target: pick(target_label)?,
        reference_label,
        target_label,
    })
}

/// Row-wise concatenation; class counts are additive.
pub fn merge_augmented(original: &LabeledSet, generated: &LabeledSet) -> Result<LabeledSet> {
    if generated.is_empty() {
        return Ok(original.clone());
    }
    if original.dim != generated.dim || original.num_classes != generated.num_classes {
        return Err(Error::data(format!(
            "cannot merge: dims {} vs {}, classes {} vs {}",
            original.dim, generated.dim, original.num_classes, generated.num_classes
        )));
    }
    let mut features = original.features.clone();
    features.extend_from_slice(&generated.features);
    let mut labels = original.labels.clone();
    labels.extend_from_slice(&generated.labels);
    Ok(LabeledSet {
        features,
        dim: original.dim,
        labels,
        num_classes: original.num_classes,
    })
}

/// Stratified subsampling without replacement: floor(fraction·count) rows per
/// class, deterministic per seed.
pub fn subsample_per_class(data: &LabeledSet, fraction: f64, seed: u64) -> Result<LabeledSet> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::parameter(format!(
            "fraction must be in (0, 1], got {fraction}"
        )));
    }
    let mut rng = rng_from_seed(seed);
    let mut selected = Vec::new();
    for class in 0..data.num_classes {
        let mut rows: Vec<usize> = (0..data.len()).filter(|&i| data.labels[i] == class).collect();
        let keep = (fraction * rows.len() as f64).floor() as usize;
        // Fisher-Yates prefix
        for i in 0..keep.min(rows.len().saturating_sub(1)) {
            let j = rng.random_range(i..rows.len());
            rows.swap(i, j);
        }
        selected.extend_from_slice(&rows[..keep]);
    }
    Ok(data.select(&selected))
}

/// Cap a set at `max` rows, stratified and deterministic. Keeps at least one
/// row of every class that has one.
pub fn stratified_cap(data: &LabeledSet, max: usize, seed: u64) -> Result<LabeledSet> {
    if data.len() <= max {
        return Ok(data.clone());
    }
    let fraction = max as f64 / data.len() as f64;
    subsample_per_class(data, fraction, seed)
}

/// Parse `label,pix0 pix1 ... pixN` rows into a labeled image set with pixels
/// affinely scaled from 0..255 to [−1, 1]. A single non-numeric header row is
/// skipped. Labels must lie in 0..=6.
pub fn load_image_csv(path: impl AsRef<Path>, expected_side: usize) -> Result<LabeledSet> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let reader = std::io::BufReader::new(file);
    let dim = expected_side * expected_side;
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path.display().to_string(), e))?;
        let row = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let Some((label_str, pixels_str)) = trimmed.split_once(',') else {
            return Err(Error::data(format!("row {row}: expected `label,pixels`")));
        };
        if idx == 0 && label_str.trim().parse::<i64>().is_err() {
            continue; // header
        }
        let label: i64 = label_str
            .trim()
            .parse()
            .map_err(|_| Error::data(format!("row {row}: bad label {label_str:?}")))?;
        if !(0..=6).contains(&label) {
            return Err(Error::data(format!(
                "row {row}: label {label} outside 0..=6"
            )));
        }
        let mut count = 0usize;
        for tok in pixels_str.split_whitespace() {
            let px: i64 = tok
                .parse()
                .map_err(|_| Error::data(format!("row {row}: bad pixel {tok:?}")))?;
            if !(0..=255).contains(&px) {
                return Err(Error::data(format!(
                    "row {row}: pixel {px} outside 0..=255"
                )));
            }
            features.push(px as f64 / 127.5 - 1.0);
            count += 1;
        }
        if count != dim {
            return Err(Error::data(format!(
                "row {row}: {count} pixels, expected {dim} ({expected_side}²)"
            )));
        }
        labels.push(label as usize);
    }
    LabeledSet::new(features, dim, labels, 7)
}

/// Inverse of `load_image_csv`: integer pixels are recovered exactly.
pub fn save_image_csv(data: &LabeledSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut w = BufWriter::new(file);
    let mut out = || -> std::io::Result<()> {
        writeln!(w, "emotion,pixels")?;
        for i in 0..data.len() {
            write!(w, "{},", data.labels[i])?;
            for (j, v) in data.row(i).iter().enumerate() {
                if j > 0 {
                    write!(w, " ")?;
                }
                write!(w, "{}", ((v + 1.0) * 127.5).round() as i64)?;
            }
            writeln!(w)?;
        }
        w.flush()
    };
    out().map_err(|e| Error::io(path.display().to_string(), e))
}

/// Toy point export, `x1,x2,label` rows.
pub fn save_points_csv(data: &LabeledSet, path: impl AsRef<Path>) -> Result<()> {
    if data.dim != 2 {
        return Err(Error::data(format!(
            "point export needs 2-D features, got dim {}",
            data.dim
        )));
    }
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut w = BufWriter::new(file);
    let mut out = || -> std::io::Result<()> {
        writeln!(w, "x1,x2,label")?;
        for i in 0..data.len() {
            let r = data.row(i);
            writeln!(w, "{},{},{}", r[0], r[1], data.labels[i])?;
        }
        w.flush()
    };
    out().map_err(|e| Error::io(path.display().to_string(), e))
}
