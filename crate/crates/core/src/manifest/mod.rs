//! Benchmark universe: source videos, edit prompts, editing models and edited
//! items, plus the ratings, predictions and MOS file formats.

mod ratings;
mod synthetic;
mod tables;

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use ratings::{
    ingest_ratings, ingest_records, read_ratings, write_ratings, IngestedRatings, RatingRecord, RatingsError,
    RATINGS_HEADER,
};
pub use synthetic::{synthetic_manifest, MODELS};
pub use tables::{
    read_mos, read_predictions, write_mos, write_predictions, Predictions, TableError, MOS_HEADER, PREDICTIONS_HEADER,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    AiGenerated,
    RealWorld,
}

/// The eight edit categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Color,
    Motion,
    Background,
    Object,
    MultiColor,
    MultiObject,
    StyleOilPainting,
    StyleInk,
}

impl Category {
    pub const ALL: [Category; 8] = [
        Category::Color,
        Category::Motion,
        Category::Background,
        Category::Object,
        Category::MultiColor,
        Category::MultiObject,
        Category::StyleOilPainting,
        Category::StyleInk,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Color => "color",
            Category::Motion => "motion",
            Category::Background => "background",
            Category::Object => "object",
            Category::MultiColor => "multi_color",
            Category::MultiObject => "multi_object",
            Category::StyleOilPainting => "style_oil_painting",
            Category::StyleInk => "style_ink",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceVideo {
    pub id: String,
    pub origin: Origin,
    pub duration_s: f64,
    pub fps: f64,
    /// (width, height) in pixels.
    pub resolution: (u32, u32),
    pub uri: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EditPrompt {
    pub id: String,
    pub category: Category,
    pub text: String,
    pub source_video_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EditingModel {
    pub name: String,
    pub year: String,
    pub zero_shot: bool,
    pub base_model: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EditedItem {
    pub id: String,
    pub model: String,
    pub prompt_id: String,
    pub source_video_id: String,
    pub uri: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawScale {
    pub min: f64,
    pub max: f64,
}

impl RawScale {
    pub fn contains(&self, v: f64) -> bool {
        v.is_finite() && self.min <= v && v <= self.max
    }
}

impl Default for RawScale {
    fn default() -> Self {
        let (min, max) = crate::stats::DEFAULT_RAW_SCALE;
        RawScale { min, max }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub sources: Vec<SourceVideo>,
    pub prompts: Vec<EditPrompt>,
    pub models: Vec<EditingModel>,
    pub items: Vec<EditedItem>,
    pub raw_scale: RawScale,
}

/// One violated manifest invariant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    Empty(&'static str),
    DuplicateId {
        set: &'static str,
        id: String,
    },
    DanglingReference {
        owner: String,
        field: &'static str,
        target: String,
    },
    DuplicateModelPrompt {
        model: String,
        prompt_id: String,
    },
    NonPositive {
        source: String,
        field: &'static str,
    },
    InvalidRawScale,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Empty(set) => write!(f, "`{set}` is empty"),
            Violation::DuplicateId { set, id } => write!(f, "duplicate id `{id}` in `{set}`"),
            Violation::DanglingReference { owner, field, target } => {
                write!(f, "`{owner}` references unknown {field} `{target}`")
            }
            Violation::DuplicateModelPrompt { model, prompt_id } => {
                write!(f, "model `{model}` has more than one item for prompt `{prompt_id}`")
            }
            Violation::NonPositive { source, field } => {
                write!(f, "source `{source}` has non-positive {field}")
            }
            Violation::InvalidRawScale => f.write_str("raw_scale must satisfy min < max"),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ManifestError {
    #[error("cannot read manifest {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("manifest parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("manifest integrity check failed:\n{}", format_violations(.0))]
    Integrity(Vec<Violation>),
}

fn format_violations(v: &[Violation]) -> String {
    v.iter().map(|x| format!("  - {x}")).collect::<Vec<_>>().join("\n")
}

impl DatasetManifest {
    /// Every violated invariant; empty iff the manifest is valid.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        for (name, empty) in [
            ("sources", self.sources.is_empty()),
            ("prompts", self.prompts.is_empty()),
            ("models", self.models.is_empty()),
            ("items", self.items.is_empty()),
        ] {
            if empty {
                out.push(Violation::Empty(name));
            }
        }
        if !(self.raw_scale.min.is_finite() && self.raw_scale.max.is_finite())
            || self.raw_scale.min >= self.raw_scale.max
        {
            out.push(Violation::InvalidRawScale);
        }

        let sources = unique_ids(&mut out, "sources", self.sources.iter().map(|s| s.id.as_str()));
        let prompts = unique_ids(&mut out, "prompts", self.prompts.iter().map(|p| p.id.as_str()));
        let models = unique_ids(&mut out, "models", self.models.iter().map(|m| m.name.as_str()));
        unique_ids(&mut out, "items", self.items.iter().map(|i| i.id.as_str()));

        for s in &self.sources {
            if !(s.duration_s > 0.0) {
                out.push(Violation::NonPositive {
                    source: s.id.clone(),
                    field: "duration_s",
                });
            }
            if !(s.fps > 0.0) {
                out.push(Violation::NonPositive {
                    source: s.id.clone(),
                    field: "fps",
                });
            }
        }
        for p in &self.prompts {
            if !sources.contains(p.source_video_id.as_str()) {
                out.push(Violation::DanglingReference {
                    owner: p.id.clone(),
                    field: "source_video_id",
                    target: p.source_video_id.clone(),
                });
            }
        }
        let mut pairs = HashSet::new();
        for item in &self.items {
            for (field, target, known) in [
                ("model", &item.model, &models),
                ("prompt_id", &item.prompt_id, &prompts),
                ("source_video_id", &item.source_video_id, &sources),
            ] {
                if !known.contains(target.as_str()) {
                    out.push(Violation::DanglingReference {
                        owner: item.id.clone(),
                        field,
                        target: target.clone(),
                    });
                }
            }
            if !pairs.insert((item.model.as_str(), item.prompt_id.as_str())) {
                out.push(Violation::DuplicateModelPrompt {
                    model: item.model.clone(),
                    prompt_id: item.prompt_id.clone(),
                });
            }
        }
        out
    }

    pub fn from_json(text: &str) -> Result<Self, ManifestError> {
        let manifest: DatasetManifest = serde_json::from_str(text).map_err(|e| ManifestError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        let violations = manifest.validate();
        if violations.is_empty() {
            Ok(manifest)
        } else {
            Err(ManifestError::Integrity(violations))
        }
    }

    /// Pretty JSON with fields in declaration order and a trailing newline.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serialises");
        s.push('\n');
        s
    }

    pub fn categories(&self) -> Vec<Category> {
        let mut cats: Vec<Category> = self.prompts.iter().map(|p| p.category).collect();
        cats.sort();
        cats.dedup();
        cats
    }

    pub fn index(&self) -> ManifestIndex<'_> {
        ManifestIndex::new(self)
    }
}

/// Loads and fully validates a manifest; integrity violations are rejected, not repaired.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest, ManifestError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ManifestError::Io {
        path: path.display().to_string(),
        source,
    })?;
    DatasetManifest::from_json(&text)
}

fn unique_ids<'a>(out: &mut Vec<Violation>, set: &'static str, ids: impl Iterator<Item = &'a str>) -> HashSet<&'a str> {
    let mut seen = HashSet::new();
    for id in ids {
        if !seen.insert(id) {
            out.push(Violation::DuplicateId {
                set,
                id: id.to_string(),
            });
        }
    }
    seen
}

/// Hash lookups over a validated manifest.
#[derive(Debug)]
pub struct ManifestIndex<'a> {
    pub manifest: &'a DatasetManifest,
    items: HashMap<&'a str, &'a EditedItem>,
    prompts: HashMap<&'a str, &'a EditPrompt>,
    sources: HashMap<&'a str, &'a SourceVideo>,
    model_order: HashMap<&'a str, usize>,
    item_order: HashMap<&'a str, usize>,
}

impl<'a> ManifestIndex<'a> {
    fn new(m: &'a DatasetManifest) -> Self {
        Self {
            manifest: m,
            items: m.items.iter().map(|i| (i.id.as_str(), i)).collect(),
            prompts: m.prompts.iter().map(|p| (p.id.as_str(), p)).collect(),
            sources: m.sources.iter().map(|s| (s.id.as_str(), s)).collect(),
            model_order: m.models.iter().enumerate().map(|(k, x)| (x.name.as_str(), k)).collect(),
            item_order: m.items.iter().enumerate().map(|(k, x)| (x.id.as_str(), k)).collect(),
        }
    }

    pub fn item(&self, id: &str) -> Option<&'a EditedItem> {
        self.items.get(id).copied()
    }

    pub fn prompt(&self, id: &str) -> Option<&'a EditPrompt> {
        self.prompts.get(id).copied()
    }

    pub fn source(&self, id: &str) -> Option<&'a SourceVideo> {
        self.sources.get(id).copied()
    }

    pub fn category_of(&self, item_id: &str) -> Option<Category> {
        self.item(item_id)
            .and_then(|i| self.prompt(&i.prompt_id))
            .map(|p| p.category)
    }

    pub fn model_position(&self, model: &str) -> Option<usize> {
        self.model_order.get(model).copied()
    }

    pub fn item_position(&self, item_id: &str) -> Option<usize> {
        self.item_order.get(item_id).copied()
    }
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    pub use super::MODELS;

    pub fn minimal() -> DatasetManifest {
        DatasetManifest {
            sources: vec![SourceVideo {
                id: "src0".into(),
                origin: Origin::RealWorld,
                duration_s: 4.0,
                fps: 24.0,
                resolution: (854, 480),
                uri: "file:///videos/src0.mp4".into(),
            }],
            prompts: vec![EditPrompt {
                id: "p0".into(),
                category: Category::Color,
                text: "make the car red".into(),
                source_video_id: "src0".into(),
            }],
            models: vec![EditingModel {
                name: "RAVE".into(),
                year: "23.12".into(),
                zero_shot: true,
                base_model: "SD 1-5".into(),
            }],
            items: vec![EditedItem {
                id: "item0".into(),
                model: "RAVE".into(),
                prompt_id: "p0".into(),
                source_video_id: "src0".into(),
                uri: "file:///edits/item0.mp4".into(),
            }],
            raw_scale: RawScale::default(),
        }
    }
}
