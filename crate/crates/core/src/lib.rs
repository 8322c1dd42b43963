//! CycleGAN-based data augmentation for imbalanced classification.
//!
//! The crate trains a small CycleGAN with least-squares adversarial losses
//! and an L1 cycle-consistency penalty, uses its generator to synthesize
//! minority-class samples, and measures the effect on linear-SVM margins and
//! on t-SNE manifold structure. A from-scratch reverse-mode autodiff tensor
//! core ([`tensor`]) carries every network and loss.

pub mod classify;
pub mod data;
pub mod embed;
pub mod error;
pub mod experiment;
pub mod ganloss;
pub mod nets;
pub mod rng;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
