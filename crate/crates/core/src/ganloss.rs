//! CycleGAN training objectives: least-squares adversarial losses for both
//! domains, the L1 cycle-consistency penalty, the combined weighted total,
//! and the saturating log-loss kept only for comparison.
//!
//! Discriminator outputs are raw scores (no sigmoid). The least-squares
//! split is the standard one: D minimizes (D(real)−1)² + D(fake)², G
//! minimizes (D(fake)−1)².

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Discriminator outputs on a batch of real and a batch of generated samples.
#[derive(Clone)]
pub struct BatchScores {
    pub real_scores: Tensor,
    pub fake_scores: Tensor,
}

/// Originals and their round-trip reconstructions for both domains.
#[derive(Clone)]
pub struct CycleBatch {
    pub originals_r: Tensor,
    pub reconstructed_r: Tensor,
    pub originals_t: Tensor,
    pub reconstructed_t: Tensor,
}

/// Weight of the cycle-consistency term in the total loss.
#[derive(Debug, Clone, Copy)]
pub struct LossWeights {
    pub lambda_cyc: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { lambda_cyc: 10.0 }
    }
}

/// Saturating log adversarial objective, E[log σ(real)] + E[log(1−σ(fake))].
///
/// Scores pass through a sigmoid internally so the log arguments stay in
/// (0,1). Never used in training; it exists to demonstrate the vanishing
/// gradient the least-squares loss avoids.
pub fn adv_log_loss(scores: &BatchScores) -> Result<Tensor> {
    let real = scores.real_scores.sigmoid().ln().mean();
    let fake = scores.fake_scores.sigmoid().sub_from_scalar(1.0).ln().mean();
    real.add(&fake)
}

/// Discriminator target: E[(D(real)−1)²] + E[D(fake)²].
pub fn lsgan_d_loss(scores: &BatchScores) -> Result<Tensor> {
    let real = scores.real_scores.add_scalar(-1.0).square().mean();
    let fake = scores.fake_scores.square().mean();
    real.add(&fake)
}

/// Generator target: E[(D(fake)−1)²].
pub fn lsgan_g_loss(fake_scores: &Tensor) -> Tensor {
    fake_scores.add_scalar(-1.0).square().mean()
}

/// E[‖F(G(r)) − r‖₁] + E[‖G(F(t)) − t‖₁], expectations as batch means over
/// the first axis, L1 over every remaining coordinate of each sample.
pub fn cycle_loss(batch: &CycleBatch) -> Result<Tensor> {
    let r = per_sample_l1_mean(&batch.reconstructed_r, &batch.originals_r)?;
    let t = per_sample_l1_mean(&batch.reconstructed_t, &batch.originals_t)?;
    r.add(&t)
}

fn per_sample_l1_mean(reconstructed: &Tensor, original: &Tensor) -> Result<Tensor> {
    if reconstructed.shape() != original.shape() {
        return Err(Error::dimension(format!(
            "cycle pair shapes differ: {:?} vs {:?}",
            reconstructed.shape(),
            original.shape()
        )));
    }
    let batch = original.shape()[0] as f64;
    Ok(reconstructed.sub(original)?.l1().mul_scalar(1.0 / batch))
}

/// L_R + L_T + λ·L_cyc.
pub fn total_loss(
    d_loss_r: &Tensor,
    d_loss_t: &Tensor,
    cyc: &Tensor,
    weights: &LossWeights,
) -> Result<Tensor> {
    for (name, t) in [("d_loss_r", d_loss_r), ("d_loss_t", d_loss_t), ("cyc", cyc)] {
        if t.numel() != 1 {
            return Err(Error::contract(format!(
                "total_loss expects scalar components, {name} has shape {:?}",
                t.shape()
            )));
        }
    }
    d_loss_r
        .add(d_loss_t)?
        .add(&cyc.mul_scalar(weights.lambda_cyc))
}
