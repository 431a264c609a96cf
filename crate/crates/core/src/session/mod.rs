//! Rating-session protocol: calibration gate, randomized schedules with hidden
//! repeats, durable rating capture and repeat-reliability screening.

mod log;
pub mod server;
mod store;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use rand::seq::{index, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::manifest::{DatasetManifest, RawScale};
use crate::seed;
use crate::stats::QualityLevel;
use crate::Dimension;

pub use store::{NextPresentation, Phase, SessionStatus, SessionStore, SubmitAck};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionConfig {
    pub calibration_size: usize,
    pub calibration_threshold: f64,
    pub presentations_per_session: usize,
    pub hidden_repeats: usize,
    pub min_repeat_gap: usize,
    pub raw_scale: RawScale,
    pub rng_seed: u64,
    /// Ungated practice presentations per edit category.
    pub training_per_category: usize,
    /// Mean absolute repeat difference (raw units) above which a subject is flagged.
    pub repeat_flag_threshold: f64,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            calibration_size: 35,
            calibration_threshold: 0.85,
            presentations_per_session: 480,
            hidden_repeats: 24,
            min_repeat_gap: 20,
            raw_scale: RawScale::default(),
            rng_seed: 0,
            training_per_category: 10,
            repeat_flag_threshold: 15.0,
        }
    }
}

impl SessionConfig {
    pub fn validate(&self) -> Result<(), SessionError> {
        let bad = |m: String| Err(SessionError::InvalidConfig(m));
        if self.presentations_per_session == 0 {
            return bad("presentations_per_session must be positive".into());
        }
        if self.hidden_repeats >= self.presentations_per_session {
            return bad(format!(
                "hidden_repeats ({}) must be below presentations_per_session ({})",
                self.hidden_repeats, self.presentations_per_session
            ));
        }
        if self.min_repeat_gap == 0 {
            return bad("min_repeat_gap must be at least 1".into());
        }
        if !(self.calibration_threshold > 0.0 && self.calibration_threshold <= 1.0) {
            return bad(format!(
                "calibration_threshold {} outside (0, 1]",
                self.calibration_threshold
            ));
        }
        if self.calibration_size == 0 {
            return bad("calibration_size must be positive".into());
        }
        if !(self.raw_scale.min < self.raw_scale.max) {
            return bad("raw_scale.min must be below raw_scale.max".into());
        }
        if !(self.repeat_flag_threshold >= 0.0) {
            return bad("repeat_flag_threshold must be non-negative".into());
        }
        Ok(())
    }

    pub fn unique_items(&self) -> usize {
        self.presentations_per_session - self.hidden_repeats
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionState {
    Calibrating,
    Training,
    Scoring,
    Complete,
    FailedCalibration,
}

impl SessionState {
    pub fn as_str(self) -> &'static str {
        match self {
            SessionState::Calibrating => "calibrating",
            SessionState::Training => "training",
            SessionState::Scoring => "scoring",
            SessionState::Complete => "complete",
            SessionState::FailedCalibration => "failed_calibration",
        }
    }
}

impl fmt::Display for SessionState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Presentation {
    pub slot_index: usize,
    pub item_id: String,
    pub is_repeat: bool,
    pub original_slot: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSchedule {
    pub session_id: String,
    pub subject_id: String,
    pub presentations: Vec<Presentation>,
    pub state: SessionState,
}

impl SessionSchedule {
    /// Every broken schedule invariant, empty when the schedule is valid.
    pub fn violations(&self, config: &SessionConfig) -> Vec<String> {
        let mut out = Vec::new();
        let p = &self.presentations;
        if p.len() != config.presentations_per_session {
            out.push(format!(
                "{} presentations, expected {}",
                p.len(),
                config.presentations_per_session
            ));
        }
        let repeats = p.iter().filter(|x| x.is_repeat).count();
        if repeats != config.hidden_repeats {
            out.push(format!("{repeats} repeats, expected {}", config.hidden_repeats));
        }
        let mut unique = BTreeSet::new();
        let mut originals = BTreeSet::new();
        for (k, x) in p.iter().enumerate() {
            if x.slot_index != k {
                out.push(format!("slot {k} carries index {}", x.slot_index));
            }
            match (x.is_repeat, x.original_slot) {
                (false, None) => {
                    if !unique.insert(x.item_id.as_str()) {
                        out.push(format!("item {} presented twice without repeat flag", x.item_id));
                    }
                }
                (true, Some(o)) => {
                    if o >= p.len() || p[o].is_repeat || p[o].item_id != x.item_id {
                        out.push(format!("slot {k} points at invalid original {o}"));
                    } else if k < o + config.min_repeat_gap {
                        out.push(format!("slot {k} repeats slot {o} with gap {}", k as i64 - o as i64));
                    }
                    if !originals.insert(o) {
                        out.push(format!("slot {o} repeated more than once"));
                    }
                }
                _ => out.push(format!("slot {k} has inconsistent repeat fields")),
            }
        }
        out
    }
}

/// Expert five-level judgments for the calibration quiz. An item may cover a
/// subset of the dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationReference {
    pub items: Vec<CalibrationItem>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationItem {
    pub item_id: String,
    pub levels: BTreeMap<Dimension, QualityLevel>,
}

impl CalibrationReference {
    pub fn load(path: &Path) -> Result<Self, SessionError> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| SessionError::InvalidConfig(format!("{}: {e}", path.display())))
    }

    pub fn item_ids(&self) -> impl Iterator<Item = &str> {
        self.items.iter().map(|i| i.item_id.as_str())
    }

    /// Reference built from per-item MOS-derived levels, one entry per item
    /// with all three dimensions.
    pub fn from_levels(levels: impl IntoIterator<Item = (String, [QualityLevel; 3])>) -> Self {
        let items = levels
            .into_iter()
            .map(|(item_id, l)| CalibrationItem {
                item_id,
                levels: Dimension::ALL.into_iter().zip(l).collect(),
            })
            .collect();
        Self { items }
    }
}

/// A subject's quiz answers, keyed by item then dimension.
pub type CalibrationAnswers = BTreeMap<String, BTreeMap<Dimension, QualityLevel>>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationOutcome {
    pub passed: bool,
    pub match_rate: f64,
}

/// Fraction of reference (item, dimension) cells answered with the expert
/// level; passes when it reaches `threshold`.
pub fn evaluate_calibration(
    answers: &CalibrationAnswers,
    reference: &CalibrationReference,
    threshold: f64,
) -> Result<CalibrationOutcome, SessionError> {
    let mut missing = Vec::new();
    let (mut matched, mut total) = (0usize, 0usize);
    for item in &reference.items {
        for (&dim, &expert) in &item.levels {
            total += 1;
            match answers.get(&item.item_id).and_then(|a| a.get(&dim)) {
                Some(&given) => matched += usize::from(given == expert),
                None => missing.push((item.item_id.clone(), dim)),
            }
        }
    }
    if !missing.is_empty() {
        return Err(SessionError::IncompleteAnswers(missing));
    }
    if total == 0 {
        return Err(SessionError::InvalidConfig("calibration reference is empty".into()));
    }
    let match_rate = matched as f64 / total as f64;
    Ok(CalibrationOutcome {
        passed: match_rate >= threshold,
        match_rate,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeatReliability {
    pub subject_id: String,
    /// Per dimension; absent when no repeat pair has both ratings.
    pub mean_abs_repeat_diff: BTreeMap<Dimension, f64>,
    pub pairs: usize,
    pub flagged: bool,
}

/// Mean |original − repeat| per dimension over pairs where both slots are rated.
pub fn repeat_reliability(
    schedule: &SessionSchedule,
    ratings: &[Option<[f64; 3]>],
    flag_threshold: f64,
) -> RepeatReliability {
    let mut sums = [0.0; 3];
    let mut pairs = 0;
    for p in &schedule.presentations {
        let Some(orig) = p.original_slot else { continue };
        let (Some(Some(a)), Some(Some(b))) = (ratings.get(orig), ratings.get(p.slot_index)) else {
            continue;
        };
        pairs += 1;
        for d in 0..3 {
            sums[d] += (a[d] - b[d]).abs();
        }
    }
    let mean_abs_repeat_diff: BTreeMap<Dimension, f64> = if pairs == 0 {
        BTreeMap::new()
    } else {
        Dimension::ALL
            .into_iter()
            .map(|d| (d, sums[d.index()] / pairs as f64))
            .collect()
    };
    let flagged = mean_abs_repeat_diff.values().any(|&m| m > flag_threshold);
    RepeatReliability {
        subject_id: schedule.subject_id.clone(),
        mean_abs_repeat_diff,
        pairs,
        flagged,
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SessionError {
    #[error("invalid session configuration: {0}")]
    InvalidConfig(String),
    #[error("only {available} eligible items, schedule needs {needed}")]
    InsufficientItems { needed: usize, available: usize },
    #[error("calibration answers missing for {} cells (first: {:?})", .0.len(), .0.first())]
    IncompleteAnswers(Vec<(String, Dimension)>),
    #[error("slot {got} is not the current slot {expected}")]
    OutOfOrderSlot { expected: usize, got: usize },
    #[error("{dimension} score {value} outside [{min}, {max}]")]
    OutOfScale {
        dimension: Dimension,
        value: f64,
        min: f64,
        max: f64,
    },
    #[error("session is {state}")]
    SessionNotActive { state: SessionState },
    #[error("session is not complete")]
    SessionIncomplete,
    #[error("unknown session `{0}`")]
    UnknownSession(String),
    #[error("item `{0}` is not in the manifest")]
    UnknownItem(String),
    #[error("invalid subject id `{0}`")]
    InvalidSubject(String),
    #[error("session log line {line}: {message}")]
    LogCorrupt { line: usize, message: String },
    #[error("session log event group {unit} does not apply: {message}")]
    LogReplay { unit: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) fn valid_subject_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 128 && id.bytes().all(|b| b.is_ascii_alphanumeric() || b"-_.@".contains(&b))
}

pub(crate) fn session_id_for(config: &SessionConfig, subject_id: &str, ordinal: u64) -> String {
    format!(
        "{:016x}",
        seed::derive_keyed(config.rng_seed, &format!("session-id/{subject_id}"), ordinal)
    )
}

/// Schedule for a subject's first session, drawn from every manifest item.
pub fn create_session(
    subject_id: &str,
    manifest: &DatasetManifest,
    config: &SessionConfig,
) -> Result<SessionSchedule, SessionError> {
    let pool: Vec<&str> = manifest.items.iter().map(|i| i.id.as_str()).collect();
    build_schedule(subject_id, 0, &pool, config)
}

/// Uniform shuffle of the eligible pool plus uniformly placed repeat slots.
/// Deterministic in `(rng_seed, subject_id, ordinal)` and independent of the
/// pool's order.
pub(crate) fn build_schedule(
    subject_id: &str,
    ordinal: u64,
    pool: &[&str],
    config: &SessionConfig,
) -> Result<SessionSchedule, SessionError> {
    config.validate()?;
    if !valid_subject_id(subject_id) {
        return Err(SessionError::InvalidSubject(subject_id.to_string()));
    }
    let mut pool: Vec<&str> = pool.to_vec();
    pool.sort_unstable();
    pool.dedup();
    let unique = config.unique_items();
    if pool.len() < unique {
        return Err(SessionError::InsufficientItems {
            needed: unique,
            available: pool.len(),
        });
    }
    let mut rng = seed::rng(seed::derive_keyed(config.rng_seed, subject_id, ordinal));
    pool.shuffle(&mut rng);
    pool.truncate(unique);

    let n = config.presentations_per_session;
    let originals = place_repeats(n, config.hidden_repeats, config.min_repeat_gap, &mut rng)?;
    let mut items = pool.into_iter();
    let mut presentations: Vec<Presentation> = Vec::with_capacity(n);
    for (slot, original) in originals.into_iter().enumerate() {
        let p = match original {
            Some(o) => Presentation {
                slot_index: slot,
                item_id: presentations[o].item_id.clone(),
                is_repeat: true,
                original_slot: Some(o),
            },
            None => Presentation {
                slot_index: slot,
                item_id: items.next().expect("unique count checked").to_string(),
                is_repeat: false,
                original_slot: None,
            },
        };
        presentations.push(p);
    }
    Ok(SessionSchedule {
        session_id: session_id_for(config, subject_id, ordinal),
        subject_id: subject_id.to_string(),
        presentations,
        state: SessionState::Calibrating,
    })
}

/// For each slot, the original slot it repeats (if any). Repeat positions are
/// a uniform draw among position sets that admit a gap-respecting assignment;
/// originals are then drawn uniformly from the eligible earlier slots.
fn place_repeats(n: usize, r: usize, gap: usize, rng: &mut impl Rng) -> Result<Vec<Option<usize>>, SessionError> {
    let mut originals = vec![None; n];
    if r == 0 {
        return Ok(originals);
    }
    let infeasible =
        || SessionError::InvalidConfig(format!("{r} repeats with gap {gap} do not fit in {n} presentations"));
    if n <= gap || n - gap < r {
        return Err(infeasible());
    }
    const ATTEMPTS: usize = 10_000;
    for _ in 0..ATTEMPTS {
        let mut slots: Vec<usize> = index::sample(rng, n - gap, r).into_iter().map(|i| i + gap).collect();
        slots.sort_unstable();
        let is_repeat = {
            let mut v = vec![false; n];
            slots.iter().for_each(|&s| v[s] = true);
            v
        };
        // prefix[k] = non-repeat slots among 0..k
        let mut prefix = vec![0usize; n + 1];
        for k in 0..n {
            prefix[k + 1] = prefix[k] + usize::from(!is_repeat[k]);
        }
        if !slots.iter().enumerate().all(|(k, &s)| prefix[s - gap + 1] > k) {
            continue;
        }
        let mut used = vec![false; n];
        for &s in &slots {
            let eligible: Vec<usize> = (0..=s - gap).filter(|&o| !is_repeat[o] && !used[o]).collect();
            let o = eligible[rng.random_range(0..eligible.len())];
            used[o] = true;
            originals[s] = Some(o);
        }
        return Ok(originals);
    }
    Err(infeasible())
}
