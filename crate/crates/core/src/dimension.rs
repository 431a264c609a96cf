use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// The three rated evaluation dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dimension {
    VideoQuality,
    EditingAlignment,
    StructuralConsistency,
}

impl Dimension {
    pub const ALL: [Dimension; 3] = [
        Dimension::VideoQuality,
        Dimension::EditingAlignment,
        Dimension::StructuralConsistency,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Dimension::VideoQuality => "video_quality",
            Dimension::EditingAlignment => "editing_alignment",
            Dimension::StructuralConsistency => "structural_consistency",
        }
    }

    /// Title-case name used in human-readable tables.
    pub fn title(self) -> &'static str {
        match self {
            Dimension::VideoQuality => "Video Quality",
            Dimension::EditingAlignment => "Editing Alignment",
            Dimension::StructuralConsistency => "Structural Consistency",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown dimension `{0}` (expected video_quality, editing_alignment or structural_consistency)")]
pub struct ParseDimensionError(pub String);

impl FromStr for Dimension {
    type Err = ParseDimensionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "video_quality" => Ok(Dimension::VideoQuality),
            "editing_alignment" => Ok(Dimension::EditingAlignment),
            "structural_consistency" => Ok(Dimension::StructuralConsistency),
            other => Err(ParseDimensionError(other.to_string())),
        }
    }
}
