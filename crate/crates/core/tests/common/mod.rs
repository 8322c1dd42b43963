//! Shared fixtures for the integration suites.
#![allow(dead_code)]

use std::path::{Path, PathBuf};

use ganaug_core::data::{save_image_csv, LabeledSet};
use ganaug_core::rng::{randn_vec, stage_rng};

/// Unique scratch directory under the system temp dir.
pub fn temp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!(
        "ganaug-it-{tag}-{}-{:?}",
        std::process::id(),
        std::thread::current().id()
    ));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

/// Synthetic 48×48 grayscale image set in the `label,pixels` CSV format:
/// each class gets a distinct brightness band plus noise, so domains are
/// separable and translation is learnable at smoke scale.
pub fn write_image_csv(path: &Path, per_class: usize, seed: u64) -> LabeledSet {
    let mut rng = stage_rng(seed, "image-fixture");
    let side = 48;
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for class in 0..7usize {
        let base = class as f64 / 3.5 - 1.0 + 1.0 / 7.0;
        for _ in 0..per_class {
            let img = randn_vec(&mut rng, side * side, base, 0.15);
            // quantize through the pixel domain so save/load round-trips
            features.extend(
                img.iter()
                    .map(|v| (((v.clamp(-1.0, 1.0) + 1.0) * 127.5).round()) / 127.5 - 1.0),
            );
            labels.push(class);
        }
    }
    let set = LabeledSet::new(features, side * side, labels, 7).unwrap();
    save_image_csv(&set, path).unwrap();
    set
}
