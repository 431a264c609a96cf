use std::collections::{HashMap, HashSet};
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use rand::seq::{IndexedRandom, SliceRandom};
use serde::{Deserialize, Serialize};

use super::log::{Event, EventLog};
use super::{
    build_schedule, evaluate_calibration, repeat_reliability, session_id_for, valid_subject_id, CalibrationAnswers,
    CalibrationOutcome, CalibrationReference, RepeatReliability, SessionConfig, SessionError, SessionSchedule,
    SessionState,
};
use crate::manifest::{write_ratings, DatasetManifest, RatingRecord, RatingsError};
use crate::seed;
use crate::Dimension;

/// Which part of the protocol a presentation belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Calibration,
    Training,
    Scoring,
}

/// What a client is shown; never reveals repeat status.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NextPresentation {
    pub slot_index: usize,
    pub item_id: String,
    pub source_uri: String,
    pub edited_uri: String,
    pub prompt_text: String,
    pub phase: Phase,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubmitAck {
    pub accepted: bool,
    pub next_state: SessionState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionStatus {
    pub session_id: String,
    pub subject_id: String,
    pub state: SessionState,
    pub training_done: usize,
    pub training_total: usize,
    pub scored: usize,
    pub presentations: usize,
    pub calibration: Option<CalibrationOutcome>,
}

struct Session {
    schedule: SessionSchedule,
    training: Vec<String>,
    training_done: usize,
    /// Scored slots in order; `(values, presented_at)`.
    ratings: Vec<([f64; 3], String)>,
    calibration: Option<CalibrationOutcome>,
    served_at: Option<String>,
}

impl Session {
    fn state(&self) -> SessionState {
        self.schedule.state
    }
}

type Clock = Box<dyn Fn() -> String + Send + Sync>;

fn utc_now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

/// All live sessions plus their durable log.
pub struct SessionStore {
    config: SessionConfig,
    manifest: Arc<DatasetManifest>,
    reference: CalibrationReference,
    calibration_items: HashSet<String>,
    sessions: Vec<Session>,
    by_id: HashMap<String, usize>,
    log: Option<EventLog>,
    clock: Clock,
}

impl SessionStore {
    /// Builds the store, replaying `log_path` if it exists. Without a log path
    /// nothing survives a restart.
    pub fn open(
        config: SessionConfig,
        manifest: Arc<DatasetManifest>,
        reference: CalibrationReference,
        log_path: Option<&Path>,
    ) -> Result<Self, SessionError> {
        config.validate()?;
        if reference.items.len() != config.calibration_size {
            return Err(SessionError::InvalidConfig(format!(
                "calibration reference has {} items, calibration_size is {}",
                reference.items.len(),
                config.calibration_size
            )));
        }
        let scale = manifest.raw_scale;
        if config.raw_scale.min < scale.min || config.raw_scale.max > scale.max {
            return Err(SessionError::InvalidConfig(format!(
                "session scale [{}, {}] exceeds manifest scale [{}, {}]",
                config.raw_scale.min, config.raw_scale.max, scale.min, scale.max
            )));
        }
        let index = manifest.index();
        for id in reference.item_ids() {
            if index.item(id).is_none() {
                return Err(SessionError::UnknownItem(id.to_string()));
            }
        }
        let calibration_items = reference.item_ids().map(str::to_string).collect();
        let mut store = Self {
            config,
            manifest,
            reference,
            calibration_items,
            sessions: Vec::new(),
            by_id: HashMap::new(),
            log: None,
            clock: Box::new(utc_now),
        };
        if let Some(path) = log_path {
            let (log, units) = EventLog::open(path)?;
            store.replay(units)?;
            log::info!(
                "replayed {} sessions from {}",
                store.sessions.len(),
                log.path().display()
            );
            store.log = Some(log);
        }
        Ok(store)
    }

    /// Rebuilds state from an existing log without writing to it; new
    /// mutations are not persisted.
    pub fn open_read_only(
        config: SessionConfig,
        manifest: Arc<DatasetManifest>,
        reference: CalibrationReference,
        log_path: &Path,
    ) -> Result<Self, SessionError> {
        let mut store = Self::open(config, manifest, reference, None)?;
        store.replay(EventLog::read_units(log_path)?)?;
        Ok(store)
    }

    fn replay(&mut self, units: Vec<Vec<Event>>) -> Result<(), SessionError> {
        for (k, unit) in units.into_iter().enumerate() {
            self.apply(unit).map_err(|e| SessionError::LogReplay {
                unit: k + 1,
                message: e.to_string(),
            })?;
        }
        Ok(())
    }

    /// Replaces the timestamp source (tests use a fixed clock).
    pub fn with_clock(mut self, clock: impl Fn() -> String + Send + Sync + 'static) -> Self {
        self.clock = Box::new(clock);
        self
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn manifest(&self) -> &DatasetManifest {
        &self.manifest
    }

    pub fn session_ids(&self) -> Vec<String> {
        self.sessions.iter().map(|s| s.schedule.session_id.clone()).collect()
    }

    pub fn schedule(&self, session_id: &str) -> Result<&SessionSchedule, SessionError> {
        Ok(&self.get(session_id)?.schedule)
    }

    fn get(&self, id: &str) -> Result<&Session, SessionError> {
        self.by_id
            .get(id)
            .map(|&k| &self.sessions[k])
            .ok_or_else(|| SessionError::UnknownSession(id.to_string()))
    }

    fn get_mut(&mut self, id: &str) -> Result<&mut Session, SessionError> {
        match self.by_id.get(id) {
            Some(&k) => Ok(&mut self.sessions[k]),
            None => Err(SessionError::UnknownSession(id.to_string())),
        }
    }

    fn commit(&mut self, unit: Vec<Event>) -> Result<(), SessionError> {
        if let Some(log) = self.log.as_mut() {
            log.append(&unit)?;
        }
        self.apply(unit)
    }

    /// The single transition function shared by live requests and replay.
    fn apply(&mut self, unit: Vec<Event>) -> Result<(), SessionError> {
        for event in unit {
            match event {
                Event::SessionCreated {
                    session_id,
                    subject_id,
                    presentations,
                    training,
                    ..
                } => {
                    if self.by_id.contains_key(&session_id) {
                        return Err(SessionError::InvalidConfig(format!("duplicate session {session_id}")));
                    }
                    self.by_id.insert(session_id.clone(), self.sessions.len());
                    self.sessions.push(Session {
                        schedule: SessionSchedule {
                            session_id,
                            subject_id,
                            presentations,
                            state: SessionState::Calibrating,
                        },
                        training,
                        training_done: 0,
                        ratings: Vec::new(),
                        calibration: None,
                        served_at: None,
                    });
                }
                Event::Calibration {
                    session_id,
                    passed,
                    match_rate,
                } => {
                    let s = self.get_mut(&session_id)?;
                    s.calibration = Some(CalibrationOutcome { passed, match_rate });
                    s.schedule.state = if !passed {
                        SessionState::FailedCalibration
                    } else if s.training.is_empty() {
                        SessionState::Scoring
                    } else {
                        SessionState::Training
                    };
                }
                Event::Training { session_id, .. } => {
                    let s = self.get_mut(&session_id)?;
                    s.training_done += 1;
                    s.served_at = None;
                    if s.training_done == s.training.len() {
                        s.schedule.state = SessionState::Scoring;
                    }
                }
                Event::Rating {
                    session_id,
                    dimension,
                    value,
                    presented_at,
                    ..
                } => {
                    let s = self.get_mut(&session_id)?;
                    if dimension == Dimension::VideoQuality {
                        s.ratings.push(([0.0; 3], presented_at));
                    }
                    let slot = s.ratings.last_mut().expect("triples start with video_quality");
                    slot.0[dimension.index()] = value;
                    if dimension == Dimension::StructuralConsistency {
                        s.served_at = None;
                        if s.ratings.len() == s.schedule.presentations.len() {
                            s.schedule.state = SessionState::Complete;
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Starts a new session for `subject_id`. Items the subject already has in
    /// an earlier (not failed) session and calibration items are excluded.
    pub fn create(&mut self, subject_id: &str) -> Result<SessionStatus, SessionError> {
        if !valid_subject_id(subject_id) {
            return Err(SessionError::InvalidSubject(subject_id.to_string()));
        }
        let earlier: Vec<&Session> = self
            .sessions
            .iter()
            .filter(|s| s.schedule.subject_id == subject_id)
            .collect();
        let ordinal = earlier.len() as u64;
        let mut taken: HashSet<&str> = self.calibration_items.iter().map(String::as_str).collect();
        for s in earlier.iter().filter(|s| s.state() != SessionState::FailedCalibration) {
            taken.extend(s.schedule.presentations.iter().map(|p| p.item_id.as_str()));
        }
        let pool: Vec<&str> = self
            .manifest
            .items
            .iter()
            .map(|i| i.id.as_str())
            .filter(|id| !taken.contains(id))
            .collect();
        let schedule = build_schedule(subject_id, ordinal, &pool, &self.config)?;
        debug_assert_eq!(schedule.session_id, session_id_for(&self.config, subject_id, ordinal));
        let training = self.training_items(subject_id, ordinal);
        let id = schedule.session_id.clone();
        self.commit(vec![Event::SessionCreated {
            session_id: id.clone(),
            subject_id: subject_id.to_string(),
            ordinal,
            presentations: schedule.presentations,
            training,
        }])?;
        self.status(&id)
    }

    /// `training_per_category` practice items from each edit category, shuffled.
    fn training_items(&self, subject_id: &str, ordinal: u64) -> Vec<String> {
        let mut rng = seed::rng(seed::derive_keyed(
            self.config.rng_seed,
            &format!("training/{subject_id}"),
            ordinal,
        ));
        let index = self.manifest.index();
        let mut out = Vec::new();
        for category in self.manifest.categories() {
            let candidates: Vec<&str> = self
                .manifest
                .items
                .iter()
                .map(|i| i.id.as_str())
                .filter(|id| index.category_of(id) == Some(category) && !self.calibration_items.contains(*id))
                .collect();
            let k = self.config.training_per_category.min(candidates.len());
            out.extend(candidates.choose_multiple(&mut rng, k).map(|s| s.to_string()));
        }
        out.shuffle(&mut rng);
        out
    }

    pub fn status(&self, session_id: &str) -> Result<SessionStatus, SessionError> {
        let s = self.get(session_id)?;
        Ok(SessionStatus {
            session_id: s.schedule.session_id.clone(),
            subject_id: s.schedule.subject_id.clone(),
            state: s.state(),
            training_done: s.training_done,
            training_total: s.training.len(),
            scored: s.ratings.len(),
            presentations: s.schedule.presentations.len(),
            calibration: s.calibration,
        })
    }

    fn view(&self, item_id: &str, slot_index: usize, phase: Phase) -> Result<NextPresentation, SessionError> {
        let index = self.manifest.index();
        let item = index
            .item(item_id)
            .ok_or_else(|| SessionError::UnknownItem(item_id.to_string()))?;
        let source = index
            .source(&item.source_video_id)
            .map(|s| s.uri.clone())
            .unwrap_or_default();
        let prompt = index
            .prompt(&item.prompt_id)
            .map(|p| p.text.clone())
            .unwrap_or_default();
        Ok(NextPresentation {
            slot_index,
            item_id: item.id.clone(),
            source_uri: source,
            edited_uri: item.uri.clone(),
            prompt_text: prompt,
            phase,
        })
    }

    /// The calibration quiz, in reference order.
    pub fn calibration_items(&self, session_id: &str) -> Result<Vec<NextPresentation>, SessionError> {
        self.get(session_id)?;
        self.reference
            .item_ids()
            .enumerate()
            .map(|(k, id)| self.view(id, k, Phase::Calibration))
            .collect()
    }

    pub fn submit_calibration(
        &mut self,
        session_id: &str,
        answers: &CalibrationAnswers,
    ) -> Result<CalibrationOutcome, SessionError> {
        let state = self.get(session_id)?.state();
        if state != SessionState::Calibrating {
            return Err(SessionError::SessionNotActive { state });
        }
        let outcome = evaluate_calibration(answers, &self.reference, self.config.calibration_threshold)?;
        self.commit(vec![Event::Calibration {
            session_id: session_id.to_string(),
            passed: outcome.passed,
            match_rate: outcome.match_rate,
        }])?;
        Ok(outcome)
    }

    /// The presentation the client should show now.
    pub fn next(&mut self, session_id: &str) -> Result<NextPresentation, SessionError> {
        let now = (self.clock)();
        let s = self.get(session_id)?;
        let (item, slot, phase) = match s.state() {
            SessionState::Training => (s.training[s.training_done].clone(), s.training_done, Phase::Training),
            SessionState::Scoring => {
                let k = s.ratings.len();
                (s.schedule.presentations[k].item_id.clone(), k, Phase::Scoring)
            }
            state => return Err(SessionError::SessionNotActive { state }),
        };
        let view = self.view(&item, slot, phase)?;
        let s = self.get_mut(session_id)?;
        if s.served_at.is_none() {
            s.served_at = Some(now);
        }
        Ok(view)
    }

    /// Records the three scores for the current slot. The scoring-phase
    /// rating is on disk before this returns.
    pub fn submit(&mut self, session_id: &str, slot_index: usize, scores: [f64; 3]) -> Result<SubmitAck, SessionError> {
        let scale = self.config.raw_scale;
        let now = (self.clock)();
        let s = self.get(session_id)?;
        let expected = match s.state() {
            SessionState::Training => s.training_done,
            SessionState::Scoring => s.ratings.len(),
            state => return Err(SessionError::SessionNotActive { state }),
        };
        if slot_index != expected {
            return Err(SessionError::OutOfOrderSlot {
                expected,
                got: slot_index,
            });
        }
        for d in Dimension::ALL {
            let value = scores[d.index()];
            if !(value.is_finite() && scale.contains(value)) {
                return Err(SessionError::OutOfScale {
                    dimension: d,
                    value,
                    min: scale.min,
                    max: scale.max,
                });
            }
        }
        let unit = if s.state() == SessionState::Training {
            vec![Event::Training {
                session_id: session_id.to_string(),
                step: slot_index,
            }]
        } else {
            let p = &s.schedule.presentations[slot_index];
            let presented_at = s.served_at.clone().unwrap_or(now);
            Dimension::ALL
                .iter()
                .map(|&d| Event::Rating {
                    session_id: session_id.to_string(),
                    slot_index,
                    subject_id: s.schedule.subject_id.clone(),
                    item_id: p.item_id.clone(),
                    dimension: d,
                    value: scores[d.index()],
                    presented_at: presented_at.clone(),
                    presentation_index: slot_index as u64,
                    is_repeat: p.is_repeat,
                })
                .collect()
        };
        self.commit(unit)?;
        Ok(SubmitAck {
            accepted: true,
            next_state: self.get(session_id)?.state(),
        })
    }

    pub fn repeat_reliability(&self, session_id: &str) -> Result<RepeatReliability, SessionError> {
        let s = self.get(session_id)?;
        if s.state() != SessionState::Complete {
            return Err(SessionError::SessionIncomplete);
        }
        let ratings: Vec<Option<[f64; 3]>> = s.ratings.iter().map(|(v, _)| Some(*v)).collect();
        Ok(repeat_reliability(
            &s.schedule,
            &ratings,
            self.config.repeat_flag_threshold,
        ))
    }

    /// Ratings of completed sessions, in creation, slot and dimension order.
    pub fn export_records(&self) -> Vec<RatingRecord> {
        let mut out = Vec::new();
        for s in self.sessions.iter().filter(|s| s.state() == SessionState::Complete) {
            for (p, (values, at)) in s.schedule.presentations.iter().zip(&s.ratings) {
                for d in Dimension::ALL {
                    out.push(RatingRecord {
                        subject_id: s.schedule.subject_id.clone(),
                        item_id: p.item_id.clone(),
                        dimension: d,
                        value: values[d.index()],
                        presented_at: at.clone(),
                        presentation_index: p.slot_index as u64,
                        is_repeat: p.is_repeat,
                    });
                }
            }
        }
        out
    }

    pub fn export<W: Write>(&self, writer: W) -> Result<(), RatingsError> {
        write_ratings(writer, &self.export_records())
    }

    /// Flushes the log to stable storage.
    pub fn sync(&self) -> std::io::Result<()> {
        self.log.as_ref().map_or(Ok(()), EventLog::sync)
    }
}
