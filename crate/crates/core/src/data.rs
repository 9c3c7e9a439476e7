//! Longitudinal datasets: validation, CSV ingestion and export, and response
//! standardization.

use std::collections::{BTreeMap, HashSet};
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// One subject's irregularly timed measurements.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectRecord<T> {
    pub id: String,
    pub times: Vec<T>,
    pub values: Vec<T>,
}

impl<T: Scalar> SubjectRecord<T> {
    pub fn new(id: impl Into<String>, times: Vec<T>, values: Vec<T>) -> Self {
        Self {
            id: id.into(),
            times,
            values,
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    fn validate(&self) -> Result<()> {
        if self.times.len() != self.values.len() {
            return Err(Error::Data(format!(
                "subject {}: {} times but {} values",
                self.id,
                self.times.len(),
                self.values.len()
            )));
        }
        if self.times.is_empty() {
            return Err(Error::Data(format!(
                "subject {} has no observations",
                self.id
            )));
        }
        if self
            .times
            .iter()
            .chain(&self.values)
            .any(|x| !x.is_finite_value())
        {
            return Err(Error::Data(format!(
                "subject {} has non-finite entries",
                self.id
            )));
        }
        if let Some(w) = self.times.windows(2).find(|w| !(w[0] < w[1])) {
            return Err(Error::Data(format!(
                "subject {}: times not strictly increasing ({} then {})",
                self.id, w[0], w[1]
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LongitudinalDataset<T> {
    subjects: Vec<SubjectRecord<T>>,
}

impl<T: Scalar> LongitudinalDataset<T> {
    pub fn from_subjects(subjects: Vec<SubjectRecord<T>>) -> Result<Self> {
        let mut seen = HashSet::new();
        for s in &subjects {
            s.validate()?;
            if !seen.insert(s.id.as_str()) {
                return Err(Error::Data(format!("duplicate subject id {}", s.id)));
            }
        }
        Ok(Self { subjects })
    }

    pub fn subjects(&self) -> &[SubjectRecord<T>] {
        &self.subjects
    }

    pub fn n_subjects(&self) -> usize {
        self.subjects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subjects.is_empty()
    }

    /// Total observation count `N`.
    pub fn n_observations(&self) -> usize {
        self.subjects.iter().map(|s| s.len()).sum()
    }

    pub fn visit_counts(&self) -> Vec<usize> {
        self.subjects.iter().map(|s| s.len()).collect()
    }

    pub fn ids(&self) -> Vec<&str> {
        self.subjects.iter().map(|s| s.id.as_str()).collect()
    }

    pub fn pooled_times(&self) -> Vec<T> {
        self.subjects
            .iter()
            .flat_map(|s| s.times.iter().copied())
            .collect()
    }

    pub fn pooled_values(&self) -> Vec<T> {
        self.subjects
            .iter()
            .flat_map(|s| s.values.iter().copied())
            .collect()
    }

    /// `(min t, max t)` over all subjects.
    pub fn time_range(&self) -> Option<(T, T)> {
        let mut it = self.subjects.iter().flat_map(|s| s.times.iter().copied());
        let first = it.next()?;
        Some(it.fold((first, first), |(lo, hi), t| (lo.min(t), hi.max(t))))
    }

    /// Sorted distinct pooled time values.
    pub fn distinct_times(&self) -> Vec<T> {
        let mut t = self.pooled_times();
        t.sort_by(|a, b| a.partial_cmp(b).expect("finite times"));
        t.dedup();
        t
    }

    /// Subjects with at least `min_visits` observations.
    pub fn filter_min_visits(&self, min_visits: usize) -> Result<Self> {
        if min_visits == 0 {
            return Err(Error::Config("min_visits must be at least 1".into()));
        }
        let subjects: Vec<_> = self
            .subjects
            .iter()
            .filter(|s| s.len() >= min_visits)
            .cloned()
            .collect();
        if subjects.is_empty() && !self.subjects.is_empty() {
            log::warn!("no subject has {min_visits} or more visits; dataset is now empty");
        }
        Ok(Self { subjects })
    }

    /// Returns a copy with every value mapped through `f`.
    pub fn map_values(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            subjects: self
                .subjects
                .iter()
                .map(|s| SubjectRecord {
                    id: s.id.clone(),
                    times: s.times.clone(),
                    values: s.values.iter().map(|&v| f(v)).collect(),
                })
                .collect(),
        }
    }

    /// Centers and scales pooled responses to mean 0 and sample sd 1 (divisor `N - 1`).
    pub fn standardize(&self) -> Result<(Self, StandardizationRecord<T>)> {
        let values = self.pooled_values();
        if values.len() < 2 {
            return Err(Error::Degenerate(
                "standardization needs at least two observations".into(),
            ));
        }
        let n = T::from_usize_lossy(values.len());
        let mean = values.iter().fold(T::zero(), |a, &v| a + v) / n;
        let ss = values
            .iter()
            .fold(T::zero(), |a, &v| a + (v - mean) * (v - mean));
        let sd = (ss / (n - T::one())).sqrt();
        if !(sd > T::zero()) {
            return Err(Error::Degenerate("responses are constant".into()));
        }
        let rec = StandardizationRecord { mean, sd };
        Ok((self.map_values(|v| rec.forward(v)), rec))
    }

    pub fn to_f64(&self) -> LongitudinalDataset<f64> {
        LongitudinalDataset {
            subjects: self
                .subjects
                .iter()
                .map(|s| SubjectRecord {
                    id: s.id.clone(),
                    times: s.times.iter().map(|t| t.as_f64()).collect(),
                    values: s.values.iter().map(|v| v.as_f64()).collect(),
                })
                .collect(),
        }
    }

    pub fn from_f64(ds: &LongitudinalDataset<f64>) -> Self {
        Self {
            subjects: ds
                .subjects
                .iter()
                .map(|s| SubjectRecord {
                    id: s.id.clone(),
                    times: s.times.iter().map(|&t| T::lit(t)).collect(),
                    values: s.values.iter().map(|&v| T::lit(v)).collect(),
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StandardizationRecord<T> {
    pub mean: T,
    pub sd: T,
}

impl<T: Scalar> StandardizationRecord<T> {
    pub fn forward(&self, v: T) -> T {
        (v - self.mean) / self.sd
    }

    pub fn back(&self, z: T) -> T {
        z * self.sd + self.mean
    }

    /// Maps a standard error on the standardized scale back to response units.
    pub fn back_scale(&self, se: T) -> T {
        se * self.sd
    }
}

/// Column names used when reading a CSV.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsvColumns {
    pub id: String,
    pub time: String,
    pub value: String,
}

impl Default for CsvColumns {
    fn default() -> Self {
        Self {
            id: "id".into(),
            time: "time".into(),
            value: "value".into(),
        }
    }
}

pub fn load_csv<T: Scalar>(
    path: impl AsRef<Path>,
    columns: &CsvColumns,
) -> Result<LongitudinalDataset<T>> {
    let file = std::fs::File::open(path)?;
    read_csv(file, columns)
}

/// Reads `id,time,value` rows (any order), grouping by id and sorting by time.
/// Subjects keep the order in which their id first appears.
pub fn read_csv<T: Scalar, R: Read>(
    reader: R,
    columns: &CsvColumns,
) -> Result<LongitudinalDataset<T>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Data(format!("missing column '{name}'")))
    };
    let (ci, ct, cv) = (col(&columns.id)?, col(&columns.time)?, col(&columns.value)?);

    let mut order: Vec<String> = Vec::new();
    let mut rows: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = rec.position().map(|p| p.line() as usize).unwrap_or(k + 2);
        let field = |c: usize| rec.get(c).unwrap_or("");
        let parse = |c: usize, what: &str| -> Result<f64> {
            let s = field(c);
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::CsvRow {
                    row,
                    message: format!("non-numeric {what} '{s}'"),
                })
        };
        let id = field(ci).to_string();
        if id.is_empty() {
            return Err(Error::CsvRow {
                row,
                message: "empty id".into(),
            });
        }
        let t = parse(ct, "time")?;
        let v = parse(cv, "value")?;
        let entry = rows.entry(id.clone()).or_insert_with(|| {
            order.push(id.clone());
            Vec::new()
        });
        entry.push((t, v));
    }

    let mut subjects = Vec::with_capacity(order.len());
    for id in order {
        let mut obs = rows.remove(&id).expect("id recorded");
        obs.sort_by(|a, b| a.0.total_cmp(&b.0));
        if let Some(w) = obs.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(Error::Data(format!(
                "duplicate observation for subject {id} at time {}",
                w[0].0
            )));
        }
        subjects.push(SubjectRecord::new(
            id,
            obs.iter().map(|o| T::lit(o.0)).collect(),
            obs.iter().map(|o| T::lit(o.1)).collect(),
        ));
    }
    LongitudinalDataset::from_subjects(subjects)
}

pub fn write_csv<T: Scalar, W: Write>(dataset: &LongitudinalDataset<T>, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["id", "time", "value"])?;
    for s in dataset.subjects() {
        for (t, v) in s.times.iter().zip(&s.values) {
            w.write_record([s.id.clone(), format_f64(t.as_f64()), format_f64(v.as_f64())])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn save_csv<T: Scalar>(dataset: &LongitudinalDataset<T>, path: impl AsRef<Path>) -> Result<()> {
    write_csv(dataset, std::fs::File::create(path)?)
}

/// Shortest representation that parses back to the same `f64`.
pub(crate) fn format_f64(x: f64) -> String {
    format!("{x:?}")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Result<LongitudinalDataset<f64>> {
        read_csv(s.as_bytes(), &CsvColumns::default())
    }

    #[test]
    fn groups_rows_by_id() {
        let ds = parse("id,time,value\ns1,0,1.0\ns1,6,1.5\ns2,0,0.9\n").unwrap();
        assert_eq!(ds.n_subjects(), 2);
        assert_eq!(ds.visit_counts(), vec![2, 1]);
        assert_eq!(ds.n_observations(), 3);
    }

    #[test]
    fn row_order_does_not_matter() {
        let a = parse("id,time,value\ns1,0,1.0\ns1,6,1.5\ns2,0,0.9\n").unwrap();
        let b = parse("id,time,value\ns1,6,1.5\ns1,0,1.0\ns2,0,0.9\n").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn duplicate_time_rejected() {
        let err = parse("id,time,value\ns1,0,1.0\ns1,0,1.5\n").unwrap_err();
        assert!(err.to_string().contains("duplicate"), "{err}");
    }

    #[test]
    fn non_numeric_cell_reports_row() {
        match parse("id,time,value\ns1,0,1.0\ns1,x,1.5\n") {
            Err(Error::CsvRow { row, .. }) => assert_eq!(row, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn custom_columns() {
        let cols = CsvColumns {
            id: "RID".into(),
            time: "month".into(),
            value: "score".into(),
        };
        let ds: LongitudinalDataset<f64> =
            read_csv("score,RID,month\n2.0,a,0\n3.0,a,6\n".as_bytes(), &cols).unwrap();
        assert_eq!(ds.subjects()[0].times, vec![0.0, 6.0]);
        assert_eq!(ds.subjects()[0].values, vec![2.0, 3.0]);
    }

    #[test]
    fn csv_round_trip() {
        let ds = parse("id,time,value\na,0,0.1\na,0.3,-2.5e-7\nb,1,3.25\n").unwrap();
        let mut buf = Vec::new();
        write_csv(&ds, &mut buf).unwrap();
        let back = parse(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(ds, back);
    }

    #[test]
    fn standardize_two_values() {
        let ds = LongitudinalDataset::from_subjects(vec![SubjectRecord::new(
            "a",
            vec![0.0, 1.0],
            vec![0.0, 2.0],
        )])
        .unwrap();
        let (z, rec) = ds.standardize().unwrap();
        assert!((rec.sd - 2f64.sqrt()).abs() < 1e-15);
        assert!((z.subjects()[0].values[0] + 0.7071067811865475).abs() < 1e-12);
        assert!((z.subjects()[0].values[1] - 0.7071067811865475).abs() < 1e-12);
        assert_eq!(z.subjects()[0].times, ds.subjects()[0].times);
        let back = z.map_values(|v| rec.back(v));
        assert!((back.subjects()[0].values[1] - 2.0).abs() < 1e-12);

        let (zz, _) = z.standardize().unwrap();
        for (x, y) in zz.pooled_values().iter().zip(z.pooled_values()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn standardize_constant_fails() {
        let ds = LongitudinalDataset::from_subjects(vec![SubjectRecord::new(
            "a",
            vec![0.0, 1.0],
            vec![3.0, 3.0],
        )])
        .unwrap();
        assert!(matches!(ds.standardize(), Err(Error::Degenerate(_))));
    }

    #[test]
    fn filter_by_visit_count() {
        let mk = |id: &str, m: usize| {
            SubjectRecord::new(id, (0..m).map(|j| j as f64).collect(), vec![0.0; m])
        };
        let ds =
            LongitudinalDataset::from_subjects(vec![mk("a", 3), mk("b", 4), mk("c", 5)]).unwrap();
        assert_eq!(ds.filter_min_visits(4).unwrap().ids(), vec!["b", "c"]);
        assert_eq!(ds.filter_min_visits(1).unwrap(), ds);
        assert!(ds.filter_min_visits(9).unwrap().is_empty());
        assert!(ds.filter_min_visits(0).is_err());
    }

    #[test]
    fn invariants_enforced() {
        let dup = LongitudinalDataset::from_subjects(vec![
            SubjectRecord::new("a", vec![0.0], vec![1.0]),
            SubjectRecord::new("a", vec![1.0], vec![1.0]),
        ]);
        assert!(dup.is_err());
        let unsorted = LongitudinalDataset::from_subjects(vec![SubjectRecord::new(
            "a",
            vec![1.0, 0.0],
            vec![1.0, 1.0],
        )]);
        assert!(unsorted.is_err());
    }
}
