//! Labeled datasets with protected groups, CSV ingestion, and one-hot
//! encoding of categorical feature columns.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("missing column: {0}")]
    MissingColumn(String),
    #[error("unparseable cell at row {row}, column {column}: {value:?}")]
    UnparseableCell {
        row: usize,
        column: String,
        value: String,
    },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("unknown group: {0}")]
    UnknownGroup(String),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// One labeled example. `group_ids` indexes into the dataset's `groups`
/// list; it may be empty (neither group) or hold several entries (groups
/// overlap).
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub features: Vec<f64>,
    /// Binary label in {0,1}.
    pub label: u8,
    /// Sorted, deduplicated indices into [`LabeledDataset::groups`].
    pub group_ids: Vec<usize>,
}

impl Example {
    pub fn in_group(&self, g: usize) -> bool {
        self.group_ids.binary_search(&g).is_ok()
    }
}

/// In-memory dataset. Immutable after construction; share freely across
/// workers.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub examples: Vec<Example>,
    pub feature_names: Vec<String>,
    pub groups: Vec<String>,
}

/// How the protected column maps rows to groups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSpec {
    pub protected_column: String,
    pub group_values: Vec<String>,
    pub augment_with_others: bool,
}

/// Encoding applied per feature column during ingestion. Kept so a second
/// file can be encoded against the same one-hot layout; an unseen
/// categorical value maps to the all-zero block.
#[derive(Debug, Clone, PartialEq)]
pub enum ColumnEncoding {
    Numeric,
    /// Sorted distinct values observed at ingest time.
    OneHot(Vec<String>),
}

impl LabeledDataset {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.feature_names.len()
    }

    pub fn group_index(&self, name: &str) -> Option<usize> {
        self.groups.iter().position(|g| g == name)
    }

    /// Per-group member counts. Overlap means the counts may sum past N.
    pub fn group_counts(&self) -> Vec<(String, usize)> {
        let mut counts = vec![0usize; self.groups.len()];
        for ex in &self.examples {
            for &g in &ex.group_ids {
                counts[g] += 1;
            }
        }
        self.groups.iter().cloned().zip(counts).collect()
    }

    /// |{i : g ∈ group_ids_i}| / N.
    pub fn empirical_group_frequency(&self, group: &str) -> Result<f64, DataError> {
        let g = self
            .group_index(group)
            .ok_or_else(|| DataError::UnknownGroup(group.to_string()))?;
        let n = self.examples.len();
        if n == 0 {
            return Err(DataError::EmptyDataset);
        }
        let count = self.examples.iter().filter(|ex| ex.in_group(g)).count();
        Ok(count as f64 / n as f64)
    }

    /// Select a subset of the dataset by example index.
    pub fn subset(&self, indices: &[usize]) -> LabeledDataset {
        LabeledDataset {
            examples: indices.iter().map(|&i| self.examples[i].clone()).collect(),
            feature_names: self.feature_names.clone(),
            groups: self.groups.clone(),
        }
    }

    /// Write the dataset back out as CSV: feature columns, a `label`
    /// column holding `1`/`0`, and a `protected` column holding the single
    /// group name (empty when the example is in no group). Fails on
    /// overlapping membership since one column cannot carry it.
    pub fn write_csv(&self, path: &Path) -> Result<(), DataError> {
        let mut out = String::new();
        for name in &self.feature_names {
            write!(out, "{},", name).unwrap();
        }
        out.push_str("label,protected\n");
        for (row, ex) in self.examples.iter().enumerate() {
            if ex.group_ids.len() > 1 {
                return Err(DataError::UnparseableCell {
                    row,
                    column: "protected".into(),
                    value: "overlapping group membership".into(),
                });
            }
            for f in &ex.features {
                write!(out, "{},", f).unwrap();
            }
            let group = ex
                .group_ids
                .first()
                .map(|&g| self.groups[g].as_str())
                .unwrap_or("");
            writeln!(out, "{},{}", ex.label, group).unwrap();
        }
        std::fs::write(path, out)?;
        Ok(())
    }
}

/// Ingestion parameters beyond the column lists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestOptions {
    pub label_column: String,
    pub positive_label: String,
    /// When set, rows whose label is neither the positive nor this value
    /// are rejected. When unset, any other label value maps to 0.
    pub negative_label: Option<String>,
}

/// Read an RFC-4180 CSV with header into a [`LabeledDataset`].
///
/// Categorical feature columns (any cell fails to parse as a real) are
/// one-hot expanded in sorted value order; numeric columns pass through.
/// The protected column never enters the features; it only drives group
/// membership. Missing (empty) cells are rejected.
pub fn ingest_csv(
    path: &Path,
    opts: &IngestOptions,
    group_spec: &GroupSpec,
    feature_columns: &[String],
) -> Result<(LabeledDataset, Vec<ColumnEncoding>), DataError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let headers: Vec<String> = reader.headers()?.iter().map(|s| s.to_string()).collect();

    let col = |name: &str| -> Result<usize, DataError> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| DataError::MissingColumn(name.to_string()))
    };
    let label_idx = col(&opts.label_column)?;
    let protected_idx = col(&group_spec.protected_column)?;
    let feature_idx: Vec<usize> = feature_columns
        .iter()
        .map(|c| col(c))
        .collect::<Result<_, _>>()?;

    let rows: Vec<csv::StringRecord> = reader.records().collect::<Result<_, _>>()?;
    if rows.is_empty() {
        return Err(DataError::EmptyDataset);
    }

    // First pass: decide numeric vs categorical per feature column.
    let mut encodings = Vec::with_capacity(feature_idx.len());
    for (fi, &ci) in feature_idx.iter().enumerate() {
        let mut numeric = true;
        let mut values = BTreeSet::new();
        for (row, rec) in rows.iter().enumerate() {
            let cell = rec.get(ci).unwrap_or("").trim();
            if cell.is_empty() {
                return Err(DataError::UnparseableCell {
                    row,
                    column: feature_columns[fi].clone(),
                    value: String::new(),
                });
            }
            if cell.parse::<f64>().is_err() {
                numeric = false;
            }
            values.insert(cell.to_string());
        }
        if numeric {
            encodings.push(ColumnEncoding::Numeric);
        } else {
            encodings.push(ColumnEncoding::OneHot(values.into_iter().collect()));
        }
    }

    let mut feature_names = Vec::new();
    for (fi, enc) in encodings.iter().enumerate() {
        match enc {
            ColumnEncoding::Numeric => feature_names.push(feature_columns[fi].clone()),
            ColumnEncoding::OneHot(values) => {
                for v in values {
                    feature_names.push(format!("{}={}", feature_columns[fi], v));
                }
            }
        }
    }

    let groups = group_spec.group_values.clone();
    let mut examples = Vec::with_capacity(rows.len());
    for (row, rec) in rows.iter().enumerate() {
        let label_cell = rec.get(label_idx).unwrap_or("").trim().to_string();
        let label = if label_cell == opts.positive_label {
            1
        } else {
            match &opts.negative_label {
                Some(neg) if label_cell != *neg => {
                    return Err(DataError::UnparseableCell {
                        row,
                        column: opts.label_column.clone(),
                        value: label_cell,
                    })
                }
                _ if label_cell.is_empty() => {
                    return Err(DataError::UnparseableCell {
                        row,
                        column: opts.label_column.clone(),
                        value: label_cell,
                    })
                }
                _ => 0,
            }
        };

        let mut features = Vec::with_capacity(feature_names.len());
        for (fi, &ci) in feature_idx.iter().enumerate() {
            let cell = rec.get(ci).unwrap_or("").trim();
            encode_cell(cell, &encodings[fi], row, &feature_columns[fi], &mut features)?;
        }

        let protected = rec.get(protected_idx).unwrap_or("").trim();
        let group_ids: Vec<usize> = groups
            .iter()
            .enumerate()
            .filter(|(_, v)| v.as_str() == protected)
            .map(|(i, _)| i)
            .collect();

        examples.push(Example {
            features,
            label,
            group_ids,
        });
    }

    Ok((
        LabeledDataset {
            examples,
            feature_names,
            groups,
        },
        encodings,
    ))
}

/// Encode one cell under a previously derived column encoding. An unseen
/// categorical value maps to the all-zero one-hot block.
pub fn encode_cell(
    cell: &str,
    encoding: &ColumnEncoding,
    row: usize,
    column: &str,
    out: &mut Vec<f64>,
) -> Result<(), DataError> {
    match encoding {
        ColumnEncoding::Numeric => {
            let v = cell.parse::<f64>().map_err(|_| DataError::UnparseableCell {
                row,
                column: column.to_string(),
                value: cell.to_string(),
            })?;
            out.push(v);
        }
        ColumnEncoding::OneHot(values) => {
            let hit = values.iter().position(|v| v == cell);
            for i in 0..values.len() {
                out.push(if hit == Some(i) { 1.0 } else { 0.0 });
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_tmp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    fn opts() -> IngestOptions {
        IngestOptions {
            label_column: "y".into(),
            positive_label: "1".into(),
            negative_label: None,
        }
    }

    fn spec() -> GroupSpec {
        GroupSpec {
            protected_column: "sex".into(),
            group_values: vec!["M".into(), "F".into()],
            augment_with_others: false,
        }
    }

    #[test]
    fn one_hot_expands_categorical() {
        let f = write_tmp("color,sex,y\nred,M,1\nblue,F,0\nred,M,1\nblue,F,0\n");
        let (ds, enc) =
            ingest_csv(f.path(), &opts(), &spec(), &["color".to_string()]).unwrap();
        assert_eq!(ds.len(), 4);
        assert_eq!(ds.dim(), 2);
        assert_eq!(ds.feature_names, vec!["color=blue", "color=red"]);
        assert_eq!(ds.examples[0].features, vec![0.0, 1.0]);
        assert!(matches!(enc[0], ColumnEncoding::OneHot(_)));
    }

    #[test]
    fn numeric_columns_pass_through() {
        let f = write_tmp("x,sex,y\n1.5,M,1\n-2.0,F,0\n");
        let (ds, enc) = ingest_csv(f.path(), &opts(), &spec(), &["x".to_string()]).unwrap();
        assert_eq!(ds.examples[0].features, vec![1.5]);
        assert_eq!(ds.examples[1].features, vec![-2.0]);
        assert!(matches!(enc[0], ColumnEncoding::Numeric));
    }

    #[test]
    fn protected_column_excluded_and_drives_groups() {
        let f = write_tmp("x,sex,y\n1,M,1\n2,F,0\n3,other,1\n");
        let (ds, _) = ingest_csv(f.path(), &opts(), &spec(), &["x".to_string()]).unwrap();
        assert_eq!(ds.examples[0].group_ids, vec![0]);
        assert_eq!(ds.examples[1].group_ids, vec![1]);
        assert!(ds.examples[2].group_ids.is_empty());
        assert_eq!(ds.dim(), 1);
    }

    #[test]
    fn missing_column_rejected() {
        let f = write_tmp("x,sex,y\n1,M,1\n");
        let err = ingest_csv(f.path(), &opts(), &spec(), &["nope".to_string()]).unwrap_err();
        assert!(matches!(err, DataError::MissingColumn(_)));
    }

    #[test]
    fn empty_cell_rejected() {
        let f = write_tmp("x,sex,y\n1,M,1\n,F,0\n");
        let err = ingest_csv(f.path(), &opts(), &spec(), &["x".to_string()]).unwrap_err();
        assert!(matches!(err, DataError::UnparseableCell { row: 1, .. }));
    }

    #[test]
    fn undeclared_label_rejected_when_negative_declared() {
        let mut o = opts();
        o.negative_label = Some("0".into());
        let f = write_tmp("x,sex,y\n1,M,1\n2,F,maybe\n");
        let err = ingest_csv(f.path(), &o, &spec(), &["x".to_string()]).unwrap_err();
        assert!(matches!(err, DataError::UnparseableCell { row: 1, .. }));
    }

    #[test]
    fn empty_file_rejected() {
        let f = write_tmp("x,sex,y\n");
        let err = ingest_csv(f.path(), &opts(), &spec(), &["x".to_string()]).unwrap_err();
        assert!(matches!(err, DataError::EmptyDataset));
    }

    #[test]
    fn group_counts_with_overlap() {
        // 3 examples in A, 2 in B, 1 in both -> {A:4, B:3}
        let ds = LabeledDataset {
            examples: vec![
                Example { features: vec![], label: 0, group_ids: vec![0] },
                Example { features: vec![], label: 0, group_ids: vec![0] },
                Example { features: vec![], label: 0, group_ids: vec![0] },
                Example { features: vec![], label: 0, group_ids: vec![1] },
                Example { features: vec![], label: 0, group_ids: vec![1] },
                Example { features: vec![], label: 0, group_ids: vec![0, 1] },
            ],
            feature_names: vec![],
            groups: vec!["A".into(), "B".into()],
        };
        let counts = ds.group_counts();
        assert_eq!(counts, vec![("A".to_string(), 4), ("B".to_string(), 3)]);
    }

    #[test]
    fn group_counts_all_empty() {
        let ds = LabeledDataset {
            examples: vec![Example { features: vec![], label: 0, group_ids: vec![] }],
            feature_names: vec![],
            groups: vec!["A".into()],
        };
        assert_eq!(ds.group_counts(), vec![("A".to_string(), 0)]);
    }

    #[test]
    fn group_frequency_values() {
        let mut examples = Vec::new();
        for i in 0..8 {
            examples.push(Example {
                features: vec![],
                label: 0,
                group_ids: if i < 2 { vec![0] } else { vec![] },
            });
        }
        let ds = LabeledDataset {
            examples,
            feature_names: vec![],
            groups: vec!["g".into(), "h".into()],
        };
        assert_eq!(ds.empirical_group_frequency("g").unwrap(), 0.25);
        assert_eq!(ds.empirical_group_frequency("h").unwrap(), 0.0);
        assert!(matches!(
            ds.empirical_group_frequency("zzz"),
            Err(DataError::UnknownGroup(_))
        ));
    }

    #[test]
    fn csv_round_trip() {
        let f = write_tmp("x,z,sex,y\n1.25,0.5,M,1\n2,1.5,F,0\n3,-1,M,0\n");
        let (ds, _) =
            ingest_csv(f.path(), &opts(), &spec(), &["x".to_string(), "z".to_string()])
                .unwrap();
        let out = tempfile::NamedTempFile::new().unwrap();
        ds.write_csv(out.path()).unwrap();
        let o = IngestOptions {
            label_column: "label".into(),
            positive_label: "1".into(),
            negative_label: None,
        };
        let s = GroupSpec {
            protected_column: "protected".into(),
            group_values: vec!["M".into(), "F".into()],
            augment_with_others: false,
        };
        let (ds2, _) =
            ingest_csv(out.path(), &o, &s, &["x".to_string(), "z".to_string()]).unwrap();
        assert_eq!(ds.examples, ds2.examples);
    }

    #[test]
    fn disjoint_exhaustive_frequencies_sum_to_one() {
        let f = write_tmp("x,sex,y\n1,M,1\n2,F,0\n3,M,1\n4,F,1\n");
        let (ds, _) = ingest_csv(f.path(), &opts(), &spec(), &["x".to_string()]).unwrap();
        let total: f64 = ds
            .groups
            .clone()
            .iter()
            .map(|g| ds.empirical_group_frequency(g).unwrap())
            .sum();
        assert!((total - 1.0).abs() < 1e-12);
    }
}
