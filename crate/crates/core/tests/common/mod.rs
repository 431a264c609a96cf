//! Fixture builders shared by the integration tests.
#![allow(dead_code)]

pub mod client;

use std::path::{Path, PathBuf};

use editqa::manifest::{synthetic_manifest, write_ratings, DatasetManifest, RatingRecord};
use editqa::seed;
use editqa::session::CalibrationReference;
use editqa::stats::QualityLevel;
use editqa::Dimension;
use rand::Rng;
use rand_distr::{Distribution, Normal};

pub fn write_manifest(dir: &Path, n_items: usize) -> (DatasetManifest, PathBuf) {
    let m = synthetic_manifest(n_items);
    let path = dir.join("manifest.json");
    std::fs::write(&path, m.to_json()).unwrap();
    (m, path)
}

/// Latent item quality in (15, 85), one value per item and dimension.
pub fn latent(manifest: &DatasetManifest, master: u64) -> Vec<[f64; 3]> {
    let mut rng = seed::rng(seed::derive_keyed(master, "latent", 0));
    manifest
        .items
        .iter()
        .map(|_| [(); 3].map(|_| rng.random_range(15.0..85.0)))
        .collect()
}

/// Every subject rates every item once with a personal bias and noise,
/// clipped to the 0..=100 scale.
pub fn full_ratings(manifest: &DatasetManifest, subjects: usize, noise: f64, master: u64) -> Vec<RatingRecord> {
    let truth = latent(manifest, master);
    let mut out = Vec::new();
    for s in 0..subjects {
        let mut rng = seed::rng(seed::derive_keyed(master, "subject", s as u64));
        let bias = rng.random_range(-8.0..8.0);
        let n = Normal::new(0.0, noise).unwrap();
        for (i, item) in manifest.items.iter().enumerate() {
            for d in Dimension::ALL {
                let v: f64 = (truth[i][d.index()] + bias + n.sample(&mut rng)).clamp(0.0, 100.0);
                out.push(RatingRecord {
                    subject_id: format!("s{s:02}"),
                    item_id: item.id.clone(),
                    dimension: d,
                    value: (v * 100.0).round() / 100.0,
                    presented_at: "2026-01-01T00:00:00Z".into(),
                    presentation_index: i as u64,
                    is_repeat: false,
                });
            }
        }
    }
    out
}

pub fn write_ratings_file(dir: &Path, records: &[RatingRecord]) -> PathBuf {
    let path = dir.join("ratings.csv");
    write_ratings(std::fs::File::create(&path).unwrap(), records).unwrap();
    path
}

/// Reference over the first `n` manifest items with deterministic levels.
pub fn calibration_reference(manifest: &DatasetManifest, n: usize) -> CalibrationReference {
    CalibrationReference::from_levels(manifest.items.iter().take(n).enumerate().map(|(k, item)| {
        let l = |j: usize| QualityLevel::from_index((k + j) % QualityLevel::COUNT).unwrap();
        (item.id.clone(), [l(0), l(1), l(2)])
    }))
}

pub fn write_calibration(dir: &Path, reference: &CalibrationReference) -> PathBuf {
    let path = dir.join("calibration.json");
    std::fs::write(&path, serde_json::to_string_pretty(reference).unwrap()).unwrap();
    path
}

/// Quiz answers that match the reference everywhere except `wrong` cells.
pub fn answers(reference: &CalibrationReference, wrong: usize) -> serde_json::Value {
    let mut out = serde_json::Map::new();
    let mut left = wrong;
    for item in &reference.items {
        let mut dims = serde_json::Map::new();
        for (d, &level) in &item.levels {
            let given = if left > 0 {
                left -= 1;
                QualityLevel::from_index((level as usize + 1) % QualityLevel::COUNT).unwrap()
            } else {
                level
            };
            dims.insert(d.as_str().into(), serde_json::json!(given));
        }
        out.insert(item.item_id.clone(), serde_json::Value::Object(dims));
    }
    serde_json::json!({ "answers": out })
}
