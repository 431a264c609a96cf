//! Instruction-target strings for the two fine-tuning stages.

use crate::stats::{discretize, QualityLevel, StatsError};
use crate::Dimension;

pub fn dimension_phrase(dimension: Dimension) -> &'static str {
    match dimension {
        Dimension::VideoQuality => "quality",
        Dimension::EditingAlignment => "editing alignment",
        Dimension::StructuralConsistency => "structural consistency",
    }
}

fn level(score: f64, min_mos: f64, max_mos: f64) -> Result<QualityLevel, StatsError> {
    discretize(score, min_mos, max_mos, QualityLevel::COUNT)
}

/// `The {phrase} of this video is {level}.`
pub fn label_stage1(score: f64, min_mos: f64, max_mos: f64, dimension: Dimension) -> Result<String, StatsError> {
    let level = level(score, min_mos, max_mos)?;
    Ok(format!("The {} of this video is {level}.", dimension_phrase(dimension)))
}

/// Stage-1 label followed by the listed distortion tags, if any.
pub fn label_stage1_with_distortions(
    score: f64,
    min_mos: f64,
    max_mos: f64,
    dimension: Dimension,
    distortions: &[&str],
) -> Result<String, StatsError> {
    let base = label_stage1(score, min_mos, max_mos, dimension)?;
    if distortions.is_empty() {
        return Ok(base);
    }
    Ok(format!("{base} Observed distortions: {}.", distortions.join(", ")))
}

/// `The {phrase} of this video is {level} (XX.XX).`
///
/// The score is printed with two decimals; exact binary ties round to even.
pub fn label_stage2(score: f64, min_mos: f64, max_mos: f64, dimension: Dimension) -> Result<String, StatsError> {
    let level = level(score, min_mos, max_mos)?;
    Ok(format!(
        "The {} of this video is {level} ({score:.2}).",
        dimension_phrase(dimension)
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stage_two_reference_string() {
        let s = label_stage2(49.33, 20.0, 95.0, Dimension::VideoQuality).unwrap();
        assert_eq!(s, "The quality of this video is poor (49.33).");
        assert_eq!(
            label_stage1(49.33, 20.0, 95.0, Dimension::VideoQuality).unwrap(),
            "The quality of this video is poor."
        );
    }

    #[test]
    fn padding_and_ties() {
        let s = label_stage2(50.0, 20.0, 95.0, Dimension::EditingAlignment).unwrap();
        assert_eq!(s, "The editing alignment of this video is fair (50.00).");
        assert!(label_stage2(20.125, 20.0, 95.0, Dimension::VideoQuality)
            .unwrap()
            .ends_with("(20.12)."));
        assert!(label_stage2(20.375, 20.0, 95.0, Dimension::VideoQuality)
            .unwrap()
            .ends_with("(20.38)."));
    }

    #[test]
    fn extremes_and_coverage() {
        let d = Dimension::StructuralConsistency;
        assert_eq!(
            label_stage1(20.0, 20.0, 95.0, d).unwrap(),
            "The structural consistency of this video is bad."
        );
        assert!(label_stage1(95.0, 20.0, 95.0, d).unwrap().ends_with("excellent."));
        let seen: Vec<String> = [25.0, 40.0, 55.0, 70.0, 90.0]
            .iter()
            .map(|&s| label_stage1(s, 20.0, 95.0, d).unwrap())
            .collect();
        for (lvl, text) in QualityLevel::ALL.iter().zip(&seen) {
            assert!(text.ends_with(&format!("is {lvl}.")));
        }
        assert!(label_stage1(19.0, 20.0, 95.0, d).is_err());
    }

    #[test]
    fn stage_two_contains_stage_one() {
        let mut x = 20.0;
        while x <= 95.0 {
            for d in Dimension::ALL {
                let one = label_stage1(x, 20.0, 95.0, d).unwrap();
                let two = label_stage2(x, 20.0, 95.0, d).unwrap();
                let open = two.rfind(" (").unwrap();
                assert_eq!(format!("{}.", &two[..open]), one);
            }
            x += 0.37;
        }
    }

    #[test]
    fn distortion_suffix() {
        let s = label_stage1_with_distortions(30.0, 20.0, 95.0, Dimension::VideoQuality, &["blur", "noise"]).unwrap();
        assert_eq!(
            s,
            "The quality of this video is bad. Observed distortions: blur, noise."
        );
        let plain = label_stage1_with_distortions(30.0, 20.0, 95.0, Dimension::VideoQuality, &[]).unwrap();
        assert_eq!(plain, "The quality of this video is bad.");
    }
}
