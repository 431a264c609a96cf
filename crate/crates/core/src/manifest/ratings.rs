use std::collections::{BTreeSet, HashMap, HashSet};
use std::io::{Read, Write};
use std::path::Path;

use crate::stats::RatingMatrix;
use crate::Dimension;

use super::DatasetManifest;

pub const RATINGS_HEADER: [&str; 7] = [
    "subject_id",
    "item_id",
    "dimension",
    "value",
    "presented_at",
    "presentation_index",
    "is_repeat",
];

/// One raw subjective score.
#[derive(Debug, Clone, PartialEq)]
pub struct RatingRecord {
    pub subject_id: String,
    pub item_id: String,
    pub dimension: Dimension,
    pub value: f64,
    pub presented_at: String,
    pub presentation_index: u64,
    pub is_repeat: bool,
}

#[derive(Debug, thiserror::Error)]
pub enum RatingsError {
    #[error("ratings I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("ratings parse error at line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("line {line}: unknown item `{item_id}`")]
    UnknownItem { line: u64, item_id: String },
    #[error("line {line}: value {value} outside raw scale [{min}, {max}]")]
    OutOfScale { line: u64, value: f64, min: f64, max: f64 },
    #[error("line {line}: duplicate rating by `{subject_id}` for `{item_id}` ({dimension}) not marked as a repeat")]
    DuplicateRating {
        line: u64,
        subject_id: String,
        item_id: String,
        dimension: Dimension,
    },
}

fn csv_err(e: csv::Error) -> RatingsError {
    let line = e.position().map_or(0, |p| p.line());
    RatingsError::Parse {
        line,
        message: e.to_string(),
    }
}

/// Parses a ratings file without manifest checks. Line numbers are 1-based
/// file lines (the header is line 1).
pub fn read_ratings<R: Read>(reader: R) -> Result<Vec<(u64, RatingRecord)>, RatingsError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers().map_err(csv_err)?.clone();
    if headers.iter().ne(RATINGS_HEADER.iter().copied()) {
        return Err(RatingsError::Parse {
            line: 1,
            message: format!("expected header `{}`", RATINGS_HEADER.join(",")),
        });
    }
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(csv_err)?;
        let line = row.position().map_or(0, |p| p.line());
        let bad = |message: String| RatingsError::Parse { line, message };
        let dimension: Dimension = row[2]
            .parse()
            .map_err(|e: crate::ParseDimensionError| bad(e.to_string()))?;
        let value: f64 = row[3]
            .parse()
            .map_err(|_| bad(format!("value `{}` is not a number", &row[3])))?;
        let presentation_index: u64 = row[5]
            .parse()
            .map_err(|_| bad(format!("presentation_index `{}` is not an integer", &row[5])))?;
        let is_repeat = match &row[6] {
            "0" => false,
            "1" => true,
            other => return Err(bad(format!("is_repeat must be 0 or 1, got `{other}`"))),
        };
        out.push((
            line,
            RatingRecord {
                subject_id: row[0].to_string(),
                item_id: row[1].to_string(),
                dimension,
                value,
                presented_at: row[4].to_string(),
                presentation_index,
                is_repeat,
            },
        ));
    }
    Ok(out)
}

pub fn write_ratings<'a, W: Write>(
    writer: W,
    records: impl IntoIterator<Item = &'a RatingRecord>,
) -> Result<(), RatingsError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(RATINGS_HEADER).map_err(csv_err)?;
    for r in records {
        w.write_record([
            r.subject_id.as_str(),
            r.item_id.as_str(),
            r.dimension.as_str(),
            &r.value.to_string(),
            r.presented_at.as_str(),
            &r.presentation_index.to_string(),
            if r.is_repeat { "1" } else { "0" },
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Validated ratings: the records as read, plus one matrix per dimension.
#[derive(Debug, Clone)]
pub struct IngestedRatings {
    pub records: Vec<RatingRecord>,
    matrices: Vec<RatingMatrix>,
}

impl IngestedRatings {
    pub fn matrix(&self, dimension: Dimension) -> &RatingMatrix {
        &self.matrices[dimension.index()]
    }

    pub fn matrices(&self) -> &[RatingMatrix] {
        &self.matrices
    }

    /// Grid cells plus repeat observations over all dimensions; always equals
    /// `records.len()`.
    pub fn observation_count(&self) -> usize {
        self.matrices.iter().map(RatingMatrix::observation_count).sum()
    }
}

/// Validates records against the manifest and builds the per-dimension matrices.
///
/// Items appear in manifest order, subjects in lexicographic order. The first
/// non-repeat rating of a (subject, item, dimension) cell fills the grid; rows
/// flagged `is_repeat` are kept as repeat observations.
pub fn ingest_records(
    records: Vec<(u64, RatingRecord)>,
    manifest: &DatasetManifest,
) -> Result<IngestedRatings, RatingsError> {
    let index = manifest.index();
    let scale = manifest.raw_scale;
    let mut items: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); 3];
    let mut subjects: Vec<BTreeSet<&str>> = vec![BTreeSet::new(); 3];
    let mut seen = HashSet::new();
    for (line, r) in &records {
        let Some(pos) = index.item_position(&r.item_id) else {
            return Err(RatingsError::UnknownItem {
                line: *line,
                item_id: r.item_id.clone(),
            });
        };
        if !scale.contains(r.value) {
            return Err(RatingsError::OutOfScale {
                line: *line,
                value: r.value,
                min: scale.min,
                max: scale.max,
            });
        }
        if !r.is_repeat && !seen.insert((r.subject_id.as_str(), r.item_id.as_str(), r.dimension)) {
            return Err(RatingsError::DuplicateRating {
                line: *line,
                subject_id: r.subject_id.clone(),
                item_id: r.item_id.clone(),
                dimension: r.dimension,
            });
        }
        items[r.dimension.index()].insert(pos);
        subjects[r.dimension.index()].insert(r.subject_id.as_str());
    }

    let mut matrices = Vec::with_capacity(3);
    for dim in Dimension::ALL {
        let d = dim.index();
        let item_ids: Vec<String> = items[d].iter().map(|&p| manifest.items[p].id.clone()).collect();
        let subject_ids: Vec<String> = subjects[d].iter().map(|s| s.to_string()).collect();
        let item_pos: HashMap<&str, usize> = item_ids.iter().enumerate().map(|(k, id)| (id.as_str(), k)).collect();
        let subj_pos: HashMap<&str, usize> = subject_ids.iter().enumerate().map(|(k, id)| (id.as_str(), k)).collect();
        let mut m = RatingMatrix::new(dim, item_ids.clone(), subject_ids.clone());
        for (_, r) in records.iter().filter(|(_, r)| r.dimension == dim) {
            let (i, s) = (item_pos[r.item_id.as_str()], subj_pos[r.subject_id.as_str()]);
            if r.is_repeat {
                m.push_repeat(i, s, r.value);
            } else {
                m.set(i, s, Some(r.value));
            }
        }
        matrices.push(m);
    }
    Ok(IngestedRatings {
        records: records.into_iter().map(|(_, r)| r).collect(),
        matrices,
    })
}

/// Reads and validates a ratings file.
pub fn ingest_ratings(path: impl AsRef<Path>, manifest: &DatasetManifest) -> Result<IngestedRatings, RatingsError> {
    let file = std::fs::File::open(path)?;
    let records = read_ratings(std::io::BufReader::new(file))?;
    ingest_records(records, manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifest::fixtures::minimal;

    const HEADER: &str = "subject_id,item_id,dimension,value,presented_at,presentation_index,is_repeat\n";

    fn ingest_str(body: &str) -> Result<IngestedRatings, RatingsError> {
        let recs = read_ratings(format!("{HEADER}{body}").as_bytes())?;
        ingest_records(recs, &minimal())
    }

    #[test]
    fn one_rating_per_dimension() {
        let r = ingest_str(
            "s1,item0,video_quality,55,t,0,0\n\
             s1,item0,editing_alignment,60.5,t,0,0\n\
             s1,item0,structural_consistency,70,t,0,0\n",
        )
        .unwrap();
        for d in Dimension::ALL {
            assert_eq!(r.matrix(d).present_cells(), 1);
        }
        assert_eq!(r.matrix(Dimension::EditingAlignment).get(0, 0), Some(60.5));
        assert_eq!(r.observation_count(), r.records.len());
    }

    #[test]
    fn out_of_scale_and_unknown_item() {
        assert!(matches!(
            ingest_str("s1,item0,video_quality,100.5,t,0,0\n"),
            Err(RatingsError::OutOfScale { line: 2, .. })
        ));
        assert!(matches!(
            ingest_str("s1,ghost,video_quality,10,t,0,0\n"),
            Err(RatingsError::UnknownItem { line: 2, .. })
        ));
    }

    #[test]
    fn duplicates_unless_repeat() {
        assert!(matches!(
            ingest_str("s1,item0,video_quality,10,t,0,0\ns1,item0,video_quality,12,t,1,0\n"),
            Err(RatingsError::DuplicateRating { line: 3, .. })
        ));
        let r = ingest_str("s1,item0,video_quality,10,t,0,0\ns1,item0,video_quality,12,t,30,1\n").unwrap();
        let m = r.matrix(Dimension::VideoQuality);
        assert_eq!(m.present_cells(), 1);
        assert_eq!(m.observation_count(), 2);
        assert_eq!(m.get(0, 0), Some(10.0));
    }

    #[test]
    fn malformed_rows_are_typed_errors() {
        for body in [
            "s1,item0,sharpness,10,t,0,0\n",
            "s1,item0,video_quality,ten,t,0,0\n",
            "s1,item0,video_quality,10,t,-1,0\n",
            "s1,item0,video_quality,10,t,0,yes\n",
            "s1,item0,video_quality\n",
        ] {
            assert!(
                matches!(ingest_str(body), Err(RatingsError::Parse { line: 2, .. })),
                "{body}"
            );
        }
        let err = read_ratings("a,b,c\n".as_bytes()).unwrap_err();
        assert!(matches!(err, RatingsError::Parse { line: 1, .. }));
    }

    #[test]
    fn write_then_read_is_lossless() {
        let recs = vec![RatingRecord {
            subject_id: "s,1".into(),
            item_id: "item0".into(),
            dimension: Dimension::StructuralConsistency,
            value: 0.1 + 0.2,
            presented_at: "2026-01-01T00:00:00Z".into(),
            presentation_index: 7,
            is_repeat: true,
        }];
        let mut buf = Vec::new();
        write_ratings(&mut buf, &recs).unwrap();
        let back: Vec<RatingRecord> = read_ratings(buf.as_slice())
            .unwrap()
            .into_iter()
            .map(|(_, r)| r)
            .collect();
        assert_eq!(back, recs);
    }
}
