//! Line-delimited session event log.
//!
//! Every state change is one JSON object per line. A scoring submission is
//! three consecutive `rating` lines (one per dimension) written with a single
//! `write` and synced before the submission is acknowledged. On open, a torn
//! tail (an unterminated line or an incomplete rating triple) is truncated.

use std::fs::{File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Presentation, SessionError};
use crate::Dimension;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub(crate) enum Event {
    SessionCreated {
        session_id: String,
        subject_id: String,
        ordinal: u64,
        presentations: Vec<Presentation>,
        training: Vec<String>,
    },
    Calibration {
        session_id: String,
        passed: bool,
        match_rate: f64,
    },
    Training {
        session_id: String,
        step: usize,
    },
    Rating {
        session_id: String,
        slot_index: usize,
        subject_id: String,
        item_id: String,
        dimension: Dimension,
        value: f64,
        presented_at: String,
        presentation_index: u64,
        is_repeat: bool,
    },
}

pub(crate) struct EventLog {
    path: PathBuf,
    file: File,
}

impl EventLog {
    /// Opens (creating if needed) the log, truncates a torn tail and returns
    /// the committed events grouped into atomic units.
    pub(crate) fn open(path: &Path) -> Result<(Self, Vec<Vec<Event>>), SessionError> {
        let bytes = match std::fs::read(path) {
            Ok(b) => b,
            Err(e) if e.kind() == io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(e.into()),
        };
        let (units, committed) = parse_units(&bytes)?;
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        if committed < bytes.len() {
            log::warn!(
                "{}: dropping {} bytes of unacknowledged tail",
                path.display(),
                bytes.len() - committed
            );
            file.set_len(committed as u64)?;
            file.sync_all()?;
        }
        Ok((
            Self {
                path: path.to_path_buf(),
                file,
            },
            units,
        ))
    }

    /// Committed units without touching the file; a torn tail is ignored.
    pub(crate) fn read_units(path: &Path) -> Result<Vec<Vec<Event>>, SessionError> {
        let bytes = std::fs::read(path)?;
        Ok(parse_units(&bytes)?.0)
    }

    pub(crate) fn path(&self) -> &Path {
        &self.path
    }

    /// Writes one atomic unit and syncs it to disk.
    pub(crate) fn append(&mut self, unit: &[Event]) -> io::Result<()> {
        let mut buf = Vec::new();
        for e in unit {
            serde_json::to_writer(&mut buf, e).map_err(io::Error::other)?;
            buf.push(b'\n');
        }
        self.file.write_all(&buf)?;
        self.file.sync_data()
    }

    pub(crate) fn sync(&self) -> io::Result<()> {
        self.file.sync_all()
    }
}

/// Splits the log into units and returns the byte length of the committed
/// prefix. Damage anywhere but the tail is an error.
fn parse_units(bytes: &[u8]) -> Result<(Vec<Vec<Event>>, usize), SessionError> {
    let mut units = Vec::new();
    let mut pending: Vec<Event> = Vec::new();
    let mut committed = 0;
    let mut offset = 0;
    let mut line_no = 0;
    while offset < bytes.len() {
        line_no += 1;
        let Some(rel) = bytes[offset..].iter().position(|&b| b == b'\n') else {
            break; // unterminated tail
        };
        let line = &bytes[offset..offset + rel];
        let end = offset + rel + 1;
        let event: Event = match serde_json::from_slice(line) {
            Ok(e) => e,
            Err(e) => {
                if end == bytes.len() {
                    break;
                }
                return Err(SessionError::LogCorrupt {
                    line: line_no,
                    message: e.to_string(),
                });
            }
        };
        offset = end;
        match event {
            Event::Rating { .. } => {
                pending.push(event);
                if pending.len() == Dimension::ALL.len() {
                    check_triple(&pending, line_no)?;
                    units.push(std::mem::take(&mut pending));
                    committed = offset;
                }
            }
            other => {
                if !pending.is_empty() {
                    return Err(SessionError::LogCorrupt {
                        line: line_no,
                        message: "incomplete rating group before another event".into(),
                    });
                }
                units.push(vec![other]);
                committed = offset;
            }
        }
    }
    Ok((units, committed))
}

fn check_triple(unit: &[Event], line: usize) -> Result<(), SessionError> {
    let key = |e: &Event| match e {
        Event::Rating {
            session_id,
            slot_index,
            dimension,
            ..
        } => (session_id.clone(), *slot_index, *dimension),
        _ => unreachable!("only ratings are grouped"),
    };
    let keys: Vec<_> = unit.iter().map(key).collect();
    let same_slot = keys.iter().all(|k| k.0 == keys[0].0 && k.1 == keys[0].1);
    let dims_ok = keys.iter().map(|k| k.2).eq(Dimension::ALL);
    if same_slot && dims_ok {
        Ok(())
    } else {
        Err(SessionError::LogCorrupt {
            line,
            message: "malformed rating group".into(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rating(slot: usize, d: Dimension) -> Event {
        Event::Rating {
            session_id: "s".into(),
            slot_index: slot,
            subject_id: "u".into(),
            item_id: "i".into(),
            dimension: d,
            value: 1.5,
            presented_at: "t".into(),
            presentation_index: slot as u64,
            is_repeat: false,
        }
    }

    fn triple(slot: usize) -> Vec<Event> {
        Dimension::ALL.iter().map(|&d| rating(slot, d)).collect()
    }

    #[test]
    fn torn_tails_are_truncated() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.jsonl");
        {
            let (mut log, units) = EventLog::open(&path).unwrap();
            assert!(units.is_empty());
            log.append(&[Event::Training {
                session_id: "s".into(),
                step: 0,
            }])
            .unwrap();
            log.append(&triple(0)).unwrap();
        }
        let good_len = std::fs::metadata(&path).unwrap().len();
        // half a triple plus a partial line
        let mut extra = Vec::new();
        for e in &triple(1)[..2] {
            serde_json::to_writer(&mut extra, e).unwrap();
            extra.push(b'\n');
        }
        extra.extend_from_slice(b"{\"event\":\"rat");
        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        f.write_all(&extra).unwrap();
        drop(f);

        let (mut log, units) = EventLog::open(&path).unwrap();
        assert_eq!(units.len(), 2);
        assert_eq!(units[1], triple(0));
        assert_eq!(std::fs::metadata(&path).unwrap().len(), good_len);
        log.append(&triple(1)).unwrap();
        drop(log);
        let (_, units) = EventLog::open(&path).unwrap();
        assert_eq!(units.len(), 3);
    }

    #[test]
    fn damage_in_the_middle_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.jsonl");
        std::fs::write(
            &path,
            "not json\n{\"event\":\"training\",\"session_id\":\"s\",\"step\":0}\n",
        )
        .unwrap();
        assert!(matches!(
            EventLog::open(&path),
            Err(SessionError::LogCorrupt { line: 1, .. })
        ));
    }
}
