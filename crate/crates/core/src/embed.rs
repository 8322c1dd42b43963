//! Exact O(N²) t-SNE for manifold visualization, plus the silhouette score
//! used to compare cluster separation before and after augmentation.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::stage_rng;
use crate::tensor::Value;

/// t-SNE schedule. Defaults: perplexity 30, 1000 iterations, learning rate
/// 200, momentum 0.5 switching to 0.8 at iteration 250, early exaggeration
/// 12 for the first 250 iterations.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmbedConfig {
    pub perplexity: f64,
    pub iterations: usize,
    pub learning_rate: f64,
    pub momentum_initial: f64,
    pub momentum_final: f64,
    pub momentum_switch: usize,
    pub early_exaggeration: f64,
    pub exaggeration_iters: usize,
    pub seed: u64,
}

impl Default for EmbedConfig {
    fn default() -> Self {
        Self {
            perplexity: 30.0,
            iterations: 1000,
            learning_rate: 200.0,
            momentum_initial: 0.5,
            momentum_final: 0.8,
            momentum_switch: 250,
            early_exaggeration: 12.0,
            exaggeration_iters: 250,
            seed: 0,
        }
    }
}

impl EmbedConfig {
    pub fn validate(&self, n: usize) -> Result<()> {
        for (name, v) in [
            ("perplexity", self.perplexity),
            ("learning_rate", self.learning_rate),
            ("momentum_initial", self.momentum_initial),
            ("momentum_final", self.momentum_final),
            ("early_exaggeration", self.early_exaggeration),
        ] {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::parameter(format!("{name} must be positive")));
            }
        }
        if self.perplexity >= n as f64 / 3.0 {
            return Err(Error::parameter(format!(
                "perplexity {} must be below n/3 = {}",
                self.perplexity,
                n as f64 / 3.0
            )));
        }
        Ok(())
    }
}

/// 2-D embedding coordinates with the KL divergence before and after
/// optimization.
#[derive(Debug, Clone)]
pub struct Embedding {
    pub coordinates: Value,
    pub labels: Vec<usize>,
    pub initial_kl: f64,
    pub final_kl: f64,
}

fn pairwise_sq_distances(features: &Value) -> Vec<f64> {
    let (n, d) = (features.shape()[0], features.shape()[1]);
    let x = features.data();
    let mut dist = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let mut s = 0.0;
            for k in 0..d {
                let diff = x[i * d + k] - x[j * d + k];
                s += diff * diff;
            }
            dist[i * n + j] = s;
            dist[j * n + i] = s;
        }
    }
    dist
}

const PERPLEXITY_TOL: f64 = 1e-5;
const MAX_BISECTIONS: usize = 200;

/// Row-stochastic conditional distributions P(j|i): per-row Gaussian
/// bandwidths found by binary search so that 2^H(row) matches the requested
/// perplexity within 1e-5. Diagonal stays zero.
pub fn conditional_distributions(features: &Value, perplexity: f64) -> Result<Value> {
    let n = features.shape()[0];
    if n < 3 {
        return Err(Error::parameter(format!(
            "need at least 3 points, got {n}"
        )));
    }
    if features.shape().len() != 2 {
        return Err(Error::dimension(format!(
            "expected (n,d) features, got {:?}",
            features.shape()
        )));
    }
    let dist = pairwise_sq_distances(features);
    let mut p = vec![0.0; n * n];
    let target = perplexity.log2();

    for i in 0..n {
        let row_dist = &dist[i * n..(i + 1) * n];
        let mut beta = 1.0f64;
        let mut beta_min = f64::NEG_INFINITY;
        let mut beta_max = f64::INFINITY;
        let row = &mut p[i * n..(i + 1) * n];
        let mut converged = false;
        for _ in 0..MAX_BISECTIONS {
            let mut sum = 0.0;
            for (j, d2) in row_dist.iter().enumerate() {
                row[j] = if j == i { 0.0 } else { (-beta * d2).exp() };
                sum += row[j];
            }
            // entropy in bits of the normalized row
            let mut entropy = 0.0;
            if sum > 0.0 {
                for v in row.iter_mut() {
                    *v /= sum;
                    if *v > 1e-300 {
                        entropy -= *v * v.log2();
                    }
                }
            }
            if (entropy.exp2() - perplexity).abs() <= PERPLEXITY_TOL {
                converged = true;
                break;
            }
            if entropy > target {
                // too flat: narrow the kernel
                beta_min = beta;
                beta = if beta_max.is_finite() {
                    (beta + beta_max) / 2.0
                } else {
                    beta * 2.0
                };
            } else {
                beta_max = beta;
                beta = if beta_min.is_finite() {
                    (beta + beta_min) / 2.0
                } else {
                    beta / 2.0
                };
            }
        }
        if !converged {
            return Err(Error::numerical(format!(
                "perplexity search did not converge in {MAX_BISECTIONS} iterations for row {i}"
            )));
        }
    }
    Value::new(vec![n, n], p)
}

/// Symmetrized joint affinities P = (P(j|i) + P(i|j)) / 2N; sums to 1.
pub fn conditional_affinities(features: &Value, perplexity: f64) -> Result<Value> {
    let cond = conditional_distributions(features, perplexity)?;
    let n = cond.shape()[0];
    let c = cond.data();
    let mut joint = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            joint[i * n + j] = (c[i * n + j] + c[j * n + i]) / (2.0 * n as f64);
        }
    }
    Value::new(vec![n, n], joint)
}

/// Σ p·log(p/q) with the 0·log(0/q)=0 convention and q floored at 1e-12.
pub fn kl_divergence(p: &Value, q: &Value) -> f64 {
    debug_assert_eq!(p.numel(), q.numel());
    p.data()
        .iter()
        .zip(q.data())
        .map(|(&pv, &qv)| {
            if pv <= 0.0 {
                0.0
            } else {
                pv * (pv / qv.max(1e-12)).ln()
            }
        })
        .sum()
}

/// Student-t similarities of 2-D coordinates: unnormalized weights
/// w_ij = (1+‖y_i−y_j‖²)⁻¹ (diagonal 0) and their total sum.
fn student_t_weights(y: &[f64], n: usize) -> (Vec<f64>, f64) {
    let mut w = vec![0.0; n * n];
    let mut total = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let dx = y[2 * i] - y[2 * j];
            let dy = y[2 * i + 1] - y[2 * j + 1];
            let v = 1.0 / (1.0 + dx * dx + dy * dy);
            w[i * n + j] = v;
            w[j * n + i] = v;
            total += 2.0 * v;
        }
    }
    (w, total)
}

fn kl_from_weights(p: &[f64], w: &[f64], total: f64) -> f64 {
    p.iter()
        .zip(w)
        .map(|(&pv, &wv)| {
            if pv <= 0.0 {
                0.0
            } else {
                pv * (pv / (wv / total).max(1e-12)).ln()
            }
        })
        .sum()
}

/// Gradient descent on KL(P‖Q) with a Student-t Q, momentum and early
/// exaggeration per the config. Coordinates are re-centered to zero mean
/// every 50 iterations. Deterministic per seed.
pub fn tsne_run(features: &Value, labels: &[usize], config: &EmbedConfig) -> Result<Embedding> {
    let n = features.shape()[0];
    config.validate(n)?;
    if labels.len() != n {
        return Err(Error::data(format!(
            "{} labels for {n} feature rows",
            labels.len()
        )));
    }
    let p = conditional_affinities(features, config.perplexity)?;
    let p = p.data();

    let mut rng = stage_rng(config.seed, "tsne-init");
    let mut y = crate::rng::randn_vec(&mut rng, n * 2, 0.0, 1e-2);
    let mut velocity = vec![0.0; n * 2];

    let (w0, t0) = student_t_weights(&y, n);
    let initial_kl = kl_from_weights(p, &w0, t0);

    let mut grad = vec![0.0; n * 2];
    for iter in 1..=config.iterations {
        let exaggeration = if iter <= config.exaggeration_iters {
            config.early_exaggeration
        } else {
            1.0
        };
        let momentum = if iter <= config.momentum_switch {
            config.momentum_initial
        } else {
            config.momentum_final
        };

        let (w, total) = student_t_weights(&y, n);
        grad.iter_mut().for_each(|g| *g = 0.0);
        for i in 0..n {
            let mut gx = 0.0;
            let mut gy = 0.0;
            for j in 0..n {
                if i == j {
                    continue;
                }
                let wij = w[i * n + j];
                let qij = wij / total;
                let coeff = 4.0 * (exaggeration * p[i * n + j] - qij) * wij;
                gx += coeff * (y[2 * i] - y[2 * j]);
                gy += coeff * (y[2 * i + 1] - y[2 * j + 1]);
            }
            grad[2 * i] = gx;
            grad[2 * i + 1] = gy;
        }

        for k in 0..n * 2 {
            velocity[k] = momentum * velocity[k] - config.learning_rate * grad[k];
            y[k] += velocity[k];
        }

        if iter % 50 == 0 {
            let mut mean = [0.0f64; 2];
            for pt in y.chunks_exact(2) {
                mean[0] += pt[0];
                mean[1] += pt[1];
            }
            mean[0] /= n as f64;
            mean[1] /= n as f64;
            for pt in y.chunks_exact_mut(2) {
                pt[0] -= mean[0];
                pt[1] -= mean[1];
            }
        }

        for (k, v) in y.iter().enumerate() {
            if v.is_nan() {
                return Err(Error::numerical(format!(
                    "NaN coordinate for point {} at iteration {iter}",
                    k / 2
                )));
            }
        }
        if y.iter().any(|v| v.abs() >= 1e4) {
            return Err(Error::numerical(format!(
                "embedding diverged at iteration {iter}"
            )));
        }
    }

    let (wf, tf) = student_t_weights(&y, n);
    let final_kl = kl_from_weights(p, &wf, tf);
    Ok(Embedding {
        coordinates: Value::new(vec![n, 2], y)?,
        labels: labels.to_vec(),
        initial_kl,
        final_kl,
    })
}

/// Mean silhouette over all points and per-class means, computed with
/// Euclidean distances. Singleton points score 0.
pub fn silhouette(coordinates: &Value, labels: &[usize], num_classes: usize) -> (f64, Vec<Option<f64>>) {
    let n = coordinates.shape()[0];
    let d = coordinates.shape()[1];
    let x = coordinates.data();
    let mut counts = vec![0usize; num_classes];
    for &l in labels {
        counts[l] += 1;
    }
    let mut scores = vec![0.0; n];
    for i in 0..n {
        let mut sums = vec![0.0f64; num_classes];
        for j in 0..n {
            if i == j {
                continue;
            }
            let mut s = 0.0;
            for k in 0..d {
                let diff = x[i * d + k] - x[j * d + k];
                s += diff * diff;
            }
            sums[labels[j]] += s.sqrt();
        }
        let own = labels[i];
        if counts[own] <= 1 {
            scores[i] = 0.0;
            continue;
        }
        let a = sums[own] / (counts[own] - 1) as f64;
        let mut b = f64::INFINITY;
        for (c, &count) in counts.iter().enumerate() {
            if c != own && count > 0 {
                b = b.min(sums[c] / count as f64);
            }
        }
        scores[i] = if b.is_finite() && a.max(b) > 0.0 {
            (b - a) / a.max(b)
        } else {
            0.0
        };
    }
    let mean = scores.iter().sum::<f64>() / n as f64;
    let per_class = (0..num_classes)
        .map(|c| {
            if counts[c] == 0 {
                None
            } else {
                Some(
                    scores
                        .iter()
                        .zip(labels)
                        .filter(|(_, &l)| l == c)
                        .map(|(s, _)| s)
                        .sum::<f64>()
                        / counts[c] as f64,
                )
            }
        })
        .collect();
    (mean, per_class)
}

/// CSV export, `x,y,label` rows.
pub fn save_embedding_csv(embedding: &Embedding, path: impl AsRef<std::path::Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut w = std::io::BufWriter::new(file);
    let mut out = || -> std::io::Result<()> {
        writeln!(w, "x,y,label")?;
        for (pt, label) in embedding
            .coordinates
            .data()
            .chunks_exact(2)
            .zip(&embedding.labels)
        {
            writeln!(w, "{},{},{label}", pt[0], pt[1])?;
        }
        w.flush()
    };
    out().map_err(|e| Error::io(path.display().to_string(), e))
}
