//! Seeded split trials, per-method leaderboards and report emission.

mod report;
mod splits;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::correlation::{metric_triple, CorrelationError, MetricTriple, PlccMapping, ScorePairSet};
use crate::manifest::{DatasetManifest, Predictions};
use crate::stats::{GroupBy, MosEntry};
use crate::Dimension;

pub use report::{emit_report, parse_report_csv, ReportFormat, ReportRow, CSV_HEADER};
pub use splits::{generate_splits, SplitPlan};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum HarnessError {
    #[error("need at least {needed} items for a {train}:{test} split, got {got}")]
    TooFewItems {
        got: usize,
        needed: usize,
        train: u32,
        test: u32,
    },
    #[error("invalid split ratio {0}:{1}")]
    InvalidRatio(u32, u32),
    #[error("{}missing predictions for {} item(s) ({dimension}): {}", method_prefix(.method), .items.len(), preview(.items))]
    MissingPrediction {
        method: Option<String>,
        dimension: Dimension,
        items: Vec<String>,
    },
    #[error("{}{dimension}: {source}", method_prefix(.method))]
    Metric {
        method: Option<String>,
        dimension: Dimension,
        #[source]
        source: CorrelationError,
    },
    #[error("no prediction sets supplied")]
    NoMethods,
}

fn method_prefix(m: &Option<String>) -> String {
    m.as_ref().map(|m| format!("method `{m}`: ")).unwrap_or_default()
}

fn preview(items: &[String]) -> String {
    const SHOWN: usize = 10;
    let mut s = items.iter().take(SHOWN).cloned().collect::<Vec<_>>().join(", ");
    if items.len() > SHOWN {
        s.push_str(", ...");
    }
    s
}

impl HarnessError {
    fn for_method(self, name: &str) -> Self {
        match self {
            HarnessError::MissingPrediction { dimension, items, .. } => HarnessError::MissingPrediction {
                method: Some(name.to_string()),
                dimension,
                items,
            },
            HarnessError::Metric { dimension, source, .. } => HarnessError::Metric {
                method: Some(name.to_string()),
                dimension,
                source,
            },
            other => other,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    /// (train, test) ratio units.
    pub ratio: (u32, u32),
    pub n_trials: usize,
    pub master_seed: u64,
    pub plcc_mapping: PlccMapping,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            ratio: (4, 1),
            n_trials: 10,
            master_seed: 0,
            plcc_mapping: PlccMapping::Linear,
        }
    }
}

/// Trial-averaged metrics of one method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub method_name: String,
    /// Indexed by [`Dimension::index`].
    pub per_dimension: [MetricTriple; 3],
    pub overall_average: MetricTriple,
    pub n_trials: usize,
    pub split_seeds: Vec<u64>,
    pub plcc_mapping: PlccMapping,
}

impl MetricReport {
    pub fn dimension(&self, d: Dimension) -> &MetricTriple {
        &self.per_dimension[d.index()]
    }
}

fn mean_triple(ts: &[MetricTriple]) -> MetricTriple {
    let n = ts.len() as f64;
    MetricTriple {
        srcc: ts.iter().map(|t| t.srcc).sum::<f64>() / n,
        plcc: ts.iter().map(|t| t.plcc).sum::<f64>() / n,
        krcc: ts.iter().map(|t| t.krcc).sum::<f64>() / n,
    }
}

/// MOS values of one dimension keyed by item id.
fn mos_lookup(mos: &[MosEntry], dimension: Dimension) -> HashMap<&str, f64> {
    mos.iter()
        .filter(|e| e.dimension == dimension)
        .map(|e| (e.item_id.as_str(), e.mos))
        .collect()
}

/// Distinct item ids carrying MOS in any dimension, sorted.
pub fn mos_items(mos: &[MosEntry]) -> Vec<String> {
    let set: BTreeSet<&str> = mos.iter().map(|e| e.item_id.as_str()).collect();
    set.into_iter().map(str::to_string).collect()
}

fn collect_pairs(
    predictions: &Predictions,
    reference: &HashMap<&str, f64>,
    items: &[String],
    dimension: Dimension,
) -> Result<(Vec<f64>, Vec<f64>), HarnessError> {
    let mut pred = Vec::with_capacity(items.len());
    let mut refs = Vec::with_capacity(items.len());
    let mut missing = Vec::new();
    for id in items {
        // items without MOS in this dimension are not scored
        let Some(&r) = reference.get(id.as_str()) else { continue };
        match predictions.get(id, dimension) {
            Some(p) => {
                pred.push(p);
                refs.push(r);
            }
            None => missing.push(id.clone()),
        }
    }
    if !missing.is_empty() {
        return Err(HarnessError::MissingPrediction {
            method: None,
            dimension,
            items: missing,
        });
    }
    Ok((pred, refs))
}

/// SRCC, PLCC and KRCC on the split's test items for one dimension.
pub fn evaluate_predictions(
    predictions: &Predictions,
    mos: &[MosEntry],
    split: &SplitPlan,
    dimension: Dimension,
    mapping: PlccMapping,
) -> Result<MetricTriple, HarnessError> {
    let reference = mos_lookup(mos, dimension);
    let (pred, refs) = collect_pairs(predictions, &reference, &split.test_items, dimension)?;
    let metric_err = |source| HarnessError::Metric {
        method: None,
        dimension,
        source,
    };
    let pairs = ScorePairSet::new(&pred, &refs).map_err(metric_err)?;
    metric_triple(&pairs, mapping).map_err(metric_err)
}

/// Runs every prediction set over `n_trials` shared splits and averages each
/// metric across trials. Reports come back sorted by method name.
pub fn run_benchmark(
    prediction_sets: &BTreeMap<String, Predictions>,
    mos: &[MosEntry],
    config: &BenchConfig,
) -> Result<Vec<MetricReport>, HarnessError> {
    if prediction_sets.is_empty() {
        return Err(HarnessError::NoMethods);
    }
    let items = mos_items(mos);
    let splits = generate_splits(&items, config.ratio, config.n_trials, config.master_seed)?;

    // every set must cover every item/dimension with MOS, not just the test folds
    for (name, preds) in prediction_sets {
        for dim in Dimension::ALL {
            let missing: Vec<String> = mos
                .iter()
                .filter(|e| e.dimension == dim && preds.get(&e.item_id, dim).is_none())
                .map(|e| e.item_id.clone())
                .collect();
            if !missing.is_empty() {
                return Err(HarnessError::MissingPrediction {
                    method: Some(name.clone()),
                    dimension: dim,
                    items: missing,
                });
            }
        }
    }

    let per_trial: Vec<Vec<[MetricTriple; 3]>> = splits
        .par_iter()
        .map(|split| {
            prediction_sets
                .iter()
                .map(|(name, preds)| {
                    let mut out = [MetricTriple {
                        srcc: 0.0,
                        plcc: 0.0,
                        krcc: 0.0,
                    }; 3];
                    for dim in Dimension::ALL {
                        out[dim.index()] = evaluate_predictions(preds, mos, split, dim, config.plcc_mapping)
                            .map_err(|e| e.for_method(name))?;
                    }
                    Ok(out)
                })
                .collect::<Result<Vec<_>, HarnessError>>()
        })
        .collect::<Result<_, _>>()?;

    let seeds: Vec<u64> = splits.iter().map(|s| s.seed).collect();
    Ok(prediction_sets
        .keys()
        .enumerate()
        .map(|(m, name)| {
            let per_dimension = Dimension::ALL.map(|d| {
                let trials: Vec<MetricTriple> = per_trial.iter().map(|t| t[m][d.index()]).collect();
                mean_triple(&trials)
            });
            MetricReport {
                method_name: name.clone(),
                overall_average: mean_triple(&per_dimension),
                per_dimension,
                n_trials: splits.len(),
                split_seeds: seeds.clone(),
                plcc_mapping: config.plcc_mapping,
            }
        })
        .collect())
}

/// Trial-averaged metrics restricted to one model or category group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupMetric {
    pub method_name: String,
    pub group: String,
    pub dimension: Dimension,
    pub metrics: MetricTriple,
    /// Trials in which the group's test fold was scoreable (≥ 3 pairs, non-constant).
    pub trials_used: usize,
}

/// Per-model or per-category breakdown on the same splits as [`run_benchmark`].
pub fn group_breakdown(
    prediction_sets: &BTreeMap<String, Predictions>,
    mos: &[MosEntry],
    manifest: &DatasetManifest,
    group_by: GroupBy,
    config: &BenchConfig,
) -> Result<Vec<GroupMetric>, HarnessError> {
    let index = manifest.index();
    let items = mos_items(mos);
    let splits = generate_splits(&items, config.ratio, config.n_trials, config.master_seed)?;
    let group_of = |id: &str| -> Option<(usize, String)> {
        let item = index.item(id)?;
        let model = index.model_position(&item.model)?;
        let cat = index.category_of(id)?;
        Some(match group_by {
            GroupBy::Model => (model, item.model.clone()),
            GroupBy::Category => (cat as usize, cat.to_string()),
            GroupBy::ModelCategory => (model * 8 + cat as usize, format!("{}/{}", item.model, cat)),
        })
    };

    let mut out = Vec::new();
    for (name, preds) in prediction_sets {
        for dim in Dimension::ALL {
            let reference = mos_lookup(mos, dim);
            let mut acc: BTreeMap<(usize, String), Vec<MetricTriple>> = BTreeMap::new();
            for split in &splits {
                let mut grouped: BTreeMap<(usize, String), Vec<String>> = BTreeMap::new();
                for id in &split.test_items {
                    if let Some(key) = group_of(id) {
                        grouped.entry(key).or_default().push(id.clone());
                    }
                }
                for (key, ids) in grouped {
                    let (p, r) = collect_pairs(preds, &reference, &ids, dim).map_err(|e| e.for_method(name))?;
                    let Ok(pairs) = ScorePairSet::new(&p, &r) else { continue };
                    if let Ok(t) = metric_triple(&pairs, config.plcc_mapping) {
                        acc.entry(key).or_default().push(t);
                    }
                }
            }
            out.extend(acc.into_iter().map(|((_, group), ts)| GroupMetric {
                method_name: name.clone(),
                group,
                dimension: dim,
                metrics: mean_triple(&ts),
                trials_used: ts.len(),
            }));
        }
    }
    Ok(out)
}
