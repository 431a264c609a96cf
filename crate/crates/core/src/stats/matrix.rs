use crate::Dimension;

use super::StatsError;

/// A repeated presentation of an item to the same subject.
///
/// Repeats never enter the grid; they are kept so that ingestion stays lossless
/// and intra-rater reliability can be measured.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RepeatObservation {
    pub item: usize,
    pub subject: usize,
    pub value: f64,
}

/// Item-by-subject grid of optional raw ratings for one dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct RatingMatrix {
    dimension: Dimension,
    item_ids: Vec<String>,
    subject_ids: Vec<String>,
    // item-major: values[item * n_subjects + subject]
    values: Vec<Option<f64>>,
    repeats: Vec<RepeatObservation>,
}

impl RatingMatrix {
    /// Empty grid with every cell absent.
    pub fn new(dimension: Dimension, item_ids: Vec<String>, subject_ids: Vec<String>) -> Self {
        let cells = item_ids.len() * subject_ids.len();
        Self {
            dimension,
            item_ids,
            subject_ids,
            values: vec![None; cells],
            repeats: Vec::new(),
        }
    }

    /// Builds a grid from rows (one per item) of optional values.
    pub fn from_rows(
        dimension: Dimension,
        item_ids: Vec<String>,
        subject_ids: Vec<String>,
        rows: &[Vec<Option<f64>>],
    ) -> Result<Self, StatsError> {
        if rows.len() != item_ids.len() {
            return Err(StatsError::Shape(format!(
                "{} rows for {} items",
                rows.len(),
                item_ids.len()
            )));
        }
        let mut m = Self::new(dimension, item_ids, subject_ids);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != m.n_subjects() {
                return Err(StatsError::Shape(format!(
                    "row {i} has {} cells, expected {}",
                    row.len(),
                    m.n_subjects()
                )));
            }
            for (s, v) in row.iter().enumerate() {
                m.set(i, s, *v);
            }
        }
        Ok(m)
    }

    /// Complete grid with generated ids `item{i}` / `subject{s}`.
    pub fn from_complete(dimension: Dimension, rows: &[Vec<f64>]) -> Result<Self, StatsError> {
        let n_subjects = rows.first().map_or(0, Vec::len);
        let items = (0..rows.len()).map(|i| format!("item{i}")).collect();
        let subjects = (0..n_subjects).map(|s| format!("subject{s}")).collect();
        let rows: Vec<Vec<Option<f64>>> = rows.iter().map(|r| r.iter().copied().map(Some).collect()).collect();
        Self::from_rows(dimension, items, subjects, &rows)
    }

    pub fn dimension(&self) -> Dimension {
        self.dimension
    }

    pub fn item_ids(&self) -> &[String] {
        &self.item_ids
    }

    pub fn subject_ids(&self) -> &[String] {
        &self.subject_ids
    }

    pub fn n_items(&self) -> usize {
        self.item_ids.len()
    }

    pub fn n_subjects(&self) -> usize {
        self.subject_ids.len()
    }

    pub fn get(&self, item: usize, subject: usize) -> Option<f64> {
        self.values[item * self.n_subjects() + subject]
    }

    pub fn set(&mut self, item: usize, subject: usize, value: Option<f64>) {
        let n = self.n_subjects();
        self.values[item * n + subject] = value;
    }

    pub fn push_repeat(&mut self, item: usize, subject: usize, value: f64) {
        self.repeats.push(RepeatObservation { item, subject, value });
    }

    pub fn repeats(&self) -> &[RepeatObservation] {
        &self.repeats
    }

    /// Present ratings of one subject, in item order.
    pub fn subject_values(&self, subject: usize) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_items()).filter_map(move |i| self.get(i, subject))
    }

    pub fn present_cells(&self) -> usize {
        self.values.iter().filter(|v| v.is_some()).count()
    }

    /// Grid cells plus repeat observations.
    pub fn observation_count(&self) -> usize {
        self.present_cells() + self.repeats.len()
    }

    /// Copy without the named subjects. Repeats of dropped subjects go too.
    pub fn without_subjects(&self, excluded: &[String]) -> RatingMatrix {
        let keep: Vec<usize> = (0..self.n_subjects())
            .filter(|&s| !excluded.contains(&self.subject_ids[s]))
            .collect();
        let mut out = RatingMatrix::new(
            self.dimension,
            self.item_ids.clone(),
            keep.iter().map(|&s| self.subject_ids[s].clone()).collect(),
        );
        for i in 0..self.n_items() {
            for (new_s, &s) in keep.iter().enumerate() {
                out.set(i, new_s, self.get(i, s));
            }
        }
        for r in &self.repeats {
            if let Some(new_s) = keep.iter().position(|&s| s == r.subject) {
                out.push_repeat(r.item, new_s, r.value);
            }
        }
        out
    }

    /// Mean |original − repeat| per subject over repeats whose original cell
    /// is present; `None` for subjects without such a pair.
    pub fn repeat_deviation(&self) -> Vec<Option<f64>> {
        let mut acc = vec![(0.0, 0usize); self.n_subjects()];
        for r in &self.repeats {
            if let Some(orig) = self.get(r.item, r.subject) {
                acc[r.subject].0 += (orig - r.value).abs();
                acc[r.subject].1 += 1;
            }
        }
        acc.into_iter()
            .map(|(sum, n)| (n > 0).then(|| sum / n as f64))
            .collect()
    }

    /// The grid as dense rows, or every missing (item, subject) cell.
    pub fn complete_rows(&self) -> Result<Vec<Vec<f64>>, StatsError> {
        let mut missing = Vec::new();
        let mut rows = Vec::with_capacity(self.n_items());
        for i in 0..self.n_items() {
            let mut row = Vec::with_capacity(self.n_subjects());
            for s in 0..self.n_subjects() {
                match self.get(i, s) {
                    Some(v) => row.push(v),
                    None => missing.push((self.item_ids[i].clone(), self.subject_ids[s].clone())),
                }
            }
            rows.push(row);
        }
        if missing.is_empty() {
            Ok(rows)
        } else {
            Err(StatsError::IncompleteGrid(missing))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn without_subjects_keeps_cells_aligned() {
        let mut m = RatingMatrix::from_rows(
            Dimension::VideoQuality,
            vec!["a".into(), "b".into()],
            vec!["s1".into(), "s2".into(), "s3".into()],
            &[vec![Some(1.0), None, Some(3.0)], vec![Some(4.0), Some(5.0), Some(6.0)]],
        )
        .unwrap();
        m.push_repeat(0, 2, 3.5);
        m.push_repeat(1, 1, 5.5);
        let r = m.without_subjects(&["s2".to_string()]);
        assert_eq!(r.subject_ids(), ["s1", "s3"]);
        assert_eq!(r.get(0, 1), Some(3.0));
        assert_eq!(r.get(1, 0), Some(4.0));
        assert_eq!(
            r.repeats(),
            [RepeatObservation {
                item: 0,
                subject: 1,
                value: 3.5
            }]
        );
        assert_eq!(m.present_cells(), 5);
        assert_eq!(m.observation_count(), 7);
        assert_eq!(m.repeat_deviation(), vec![None, Some(0.5), Some(0.5)]);
    }

    #[test]
    fn complete_rows_lists_every_gap() {
        let m = RatingMatrix::from_rows(
            Dimension::VideoQuality,
            vec!["a".into(), "b".into()],
            vec!["s1".into(), "s2".into()],
            &[vec![None, Some(1.0)], vec![Some(2.0), None]],
        )
        .unwrap();
        match m.complete_rows() {
            Err(StatsError::IncompleteGrid(cells)) => {
                assert_eq!(cells, vec![("a".into(), "s1".into()), ("b".into(), "s2".into())])
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
