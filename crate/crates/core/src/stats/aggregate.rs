use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::manifest::{Category, DatasetManifest};
use crate::Dimension;

use super::{MosEntry, StatsError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupBy {
    Model,
    Category,
    ModelCategory,
}

/// Mean and sample standard deviation of MOS within one group and dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupStat {
    pub model: Option<String>,
    pub category: Option<Category>,
    pub dimension: Dimension,
    pub count: usize,
    pub mean: f64,
    /// Sample standard deviation; 0 for singleton groups.
    pub stddev: f64,
}

impl GroupStat {
    pub fn label(&self) -> String {
        match (&self.model, self.category) {
            (Some(m), Some(c)) => format!("{m}/{c}"),
            (Some(m), None) => m.clone(),
            (None, Some(c)) => c.to_string(),
            (None, None) => String::new(),
        }
    }
}

/// Groups MOS by editing model, edit category, or both.
///
/// Rows are ordered by dimension, then manifest model order, then category order.
pub fn aggregate_scores(
    mos: &[MosEntry],
    manifest: &DatasetManifest,
    group_by: GroupBy,
) -> Result<Vec<GroupStat>, StatsError> {
    let index = manifest.index();
    // (dimension, model position, category) -> values
    let mut groups: BTreeMap<(Dimension, Option<usize>, Option<Category>), Vec<f64>> = BTreeMap::new();
    for e in mos {
        let item = index
            .item(&e.item_id)
            .ok_or_else(|| StatsError::UnknownItem(e.item_id.clone()))?;
        let model = index.model_position(&item.model);
        let category = index.category_of(&e.item_id);
        let key = match group_by {
            GroupBy::Model => (e.dimension, model, None),
            GroupBy::Category => (e.dimension, None, category),
            GroupBy::ModelCategory => (e.dimension, model, category),
        };
        groups.entry(key).or_default().push(e.mos);
    }
    Ok(groups
        .into_iter()
        .map(|((dimension, model, category), values)| {
            let n = values.len() as f64;
            let mean = values.iter().sum::<f64>() / n;
            let stddev = if values.len() > 1 {
                (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
            } else {
                0.0
            };
            GroupStat {
                model: model.map(|p| manifest.models[p].name.clone()),
                category,
                dimension,
                count: values.len(),
                mean,
                stddev,
            }
        })
        .collect())
}
