//! Tabular dataset ingestion: CSV parsing, deterministic train/test
//! splitting, and per-feature min-max normalization with train-only
//! statistics.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum DataError {
    #[error("csv parse error at line {line}, column {column}: `{cell}` is not a number")]
    Parse { line: usize, column: usize, cell: String },
    #[error("ragged rows: line {line} has {got} columns, expected {expected}")]
    RaggedRows { line: usize, got: usize, expected: usize },
    #[error("no data rows in file")]
    EmptyFile,
    #[error("io error: {0}")]
    Io(String),
    #[error("too few rows to split: {0}")]
    TooFewRows(usize),
    #[error("invalid test fraction {0}, must be in (0,1)")]
    BadFraction(f64),
    #[error("target column {0} out of range (table has {1} columns)")]
    BadTargetColumn(usize, usize),
}

/// Parsed numeric table, before any normalization or feature/target split.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    pub rows: Vec<Vec<f64>>,
    pub n_cols: usize,
}

/// One normalized row: features and targets, all in `[0,1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: Vec<f64>,
    pub target: Vec<f64>,
}

/// Per-raw-column normalization statistics, recorded from the training rows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColumnNorm {
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub rows: Vec<Sample>,
    pub n_features: usize,
    pub n_targets: usize,
    /// Raw-column order, features and targets interleaved as in the file.
    pub norms: Vec<ColumnNorm>,
    /// 0-based raw-column indices of the targets.
    pub target_columns: Vec<usize>,
}

impl Dataset {
    /// Inverse of the min-max map for one raw column.
    pub fn denormalize(&self, column: usize, value: f64) -> f64 {
        let ColumnNorm { min, max } = self.norms[column];
        if max > min {
            min + value * (max - min)
        } else {
            min
        }
    }
}

/// Loads a numeric CSV. A single header row is auto-detected: if the first
/// row has any non-numeric cell it is skipped, every later row must parse.
pub fn load_csv(path: &Path) -> Result<RawTable, DataError> {
    let text = std::fs::read_to_string(path).map_err(|e| DataError::Io(e.to_string()))?;
    parse_csv(&text)
}

pub fn parse_csv(text: &str) -> Result<RawTable, DataError> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut n_cols = 0usize;
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        let mut parsed = Vec::with_capacity(cells.len());
        let mut failed: Option<(usize, String)> = None;
        for (c, cell) in cells.iter().enumerate() {
            match cell.parse::<f64>() {
                Ok(v) => parsed.push(v),
                Err(_) => {
                    failed = Some((c, cell.to_string()));
                    break;
                }
            }
        }
        if let Some((column, cell)) = failed {
            if lineno == 1 {
                continue; // header row
            }
            return Err(DataError::Parse { line: lineno, column, cell });
        }
        if rows.is_empty() {
            n_cols = parsed.len();
        } else if parsed.len() != n_cols {
            return Err(DataError::RaggedRows { line: lineno, got: parsed.len(), expected: n_cols });
        }
        rows.push(parsed);
    }
    if rows.is_empty() {
        return Err(DataError::EmptyFile);
    }
    Ok(RawTable { rows, n_cols })
}

/// Seeded permutation split. Test size is `floor(n * test_fraction)`; the
/// same seed must be reused across experiment arms so all runs see the same
/// split.
pub fn split(table: &RawTable, test_fraction: f64, seed: u64) -> Result<(RawTable, RawTable), DataError> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(DataError::BadFraction(test_fraction));
    }
    let n = table.rows.len();
    if n < 4 {
        return Err(DataError::TooFewRows(n));
    }
    let n_test = (n as f64 * test_fraction).floor() as usize;
    let mut indices: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    indices.shuffle(&mut rng);
    let take = |ix: &[usize]| RawTable {
        rows: ix.iter().map(|&i| table.rows[i].clone()).collect(),
        n_cols: table.n_cols,
    };
    Ok((take(&indices[n_test..]), take(&indices[..n_test])))
}

/// Min-max normalizes both tables with statistics from `train` only, and
/// splits columns into features and targets. Constant columns map to 0; test
/// values are clipped into `[0,1]`. Targets are normalized too, since
/// predictions live in concentration space.
pub fn normalize(
    train: &RawTable,
    test: &RawTable,
    target_columns: &[usize],
) -> Result<(Dataset, Dataset), DataError> {
    if train.rows.is_empty() {
        return Err(DataError::EmptyFile);
    }
    let n_cols = train.n_cols;
    for &t in target_columns {
        if t >= n_cols {
            return Err(DataError::BadTargetColumn(t, n_cols));
        }
    }
    let targets: Vec<usize> = if target_columns.is_empty() {
        vec![n_cols - 1]
    } else {
        target_columns.to_vec()
    };

    let mut norms = Vec::with_capacity(n_cols);
    for c in 0..n_cols {
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        for row in &train.rows {
            min = min.min(row[c]);
            max = max.max(row[c]);
        }
        norms.push(ColumnNorm { min, max });
    }

    let feature_cols: Vec<usize> = (0..n_cols).filter(|c| !targets.contains(c)).collect();
    let build = |table: &RawTable, clip: bool| -> Vec<Sample> {
        table
            .rows
            .iter()
            .map(|row| {
                let scale = |c: usize| {
                    let ColumnNorm { min, max } = norms[c];
                    let v = if max > min { (row[c] - min) / (max - min) } else { 0.0 };
                    if clip {
                        v.clamp(0.0, 1.0)
                    } else {
                        v
                    }
                };
                Sample {
                    features: feature_cols.iter().map(|&c| scale(c)).collect(),
                    target: targets.iter().map(|&c| scale(c)).collect(),
                }
            })
            .collect()
    };

    let make = |rows: Vec<Sample>| Dataset {
        rows,
        n_features: feature_cols.len(),
        n_targets: targets.len(),
        norms: norms.clone(),
        target_columns: targets.clone(),
    };
    Ok((make(build(train, false)), make(build(test, true))))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(rows: Vec<Vec<f64>>) -> RawTable {
        let n_cols = rows[0].len();
        RawTable { rows, n_cols }
    }

    #[test]
    fn parses_plain_numeric_csv() {
        let t = parse_csv("1,2\n3,4\n5,6\n").unwrap();
        assert_eq!(t.rows.len(), 3);
        assert_eq!(t.n_cols, 2);
    }

    #[test]
    fn header_row_is_skipped() {
        let t = parse_csv("a,b\n1,2\n3,4\n").unwrap();
        assert_eq!(t.rows, vec![vec![1.0, 2.0], vec![3.0, 4.0]]);
    }

    #[test]
    fn bad_cell_names_line_and_column() {
        let err = parse_csv("1,2\n3,oops\n").unwrap_err();
        assert_eq!(
            err,
            DataError::Parse { line: 2, column: 1, cell: "oops".into() }
        );
    }

    #[test]
    fn ragged_rows_detected() {
        let err = parse_csv("1,2\n3,4,5\n").unwrap_err();
        assert!(matches!(err, DataError::RaggedRows { line: 2, .. }));
    }

    #[test]
    fn empty_file_is_an_error() {
        assert_eq!(parse_csv("\n\n"), Err(DataError::EmptyFile));
    }

    #[test]
    fn split_sizes_match_floor_rule() {
        let rows: Vec<Vec<f64>> = (0..506).map(|i| vec![i as f64, 0.0]).collect();
        let (train, test) = split(&table(rows), 0.25, 7).unwrap();
        assert_eq!(test.rows.len(), 126);
        assert_eq!(train.rows.len(), 380);
    }

    #[test]
    fn split_is_deterministic_and_disjoint() {
        let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64]).collect();
        let t = table(rows);
        let (tr1, te1) = split(&t, 0.25, 3).unwrap();
        let (tr2, te2) = split(&t, 0.25, 3).unwrap();
        assert_eq!(tr1, tr2);
        assert_eq!(te1, te2);
        let mut all: Vec<f64> = tr1.rows.iter().chain(&te1.rows).map(|r| r[0]).collect();
        all.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(all, (0..20).map(|i| i as f64).collect::<Vec<_>>());
    }

    #[test]
    fn split_rejects_tiny_tables() {
        let t = table(vec![vec![1.0], vec![2.0], vec![3.0]]);
        assert_eq!(split(&t, 0.25, 0), Err(DataError::TooFewRows(3)));
    }

    #[test]
    fn minmax_normalization_basic() {
        let train = table(vec![vec![2.0, 1.0], vec![4.0, 1.0], vec![6.0, 1.0]]);
        let test = table(vec![vec![8.0, 1.0]]);
        let (tr, te) = normalize(&train, &test, &[1]).unwrap();
        let col0: Vec<f64> = tr.rows.iter().map(|r| r.features[0]).collect();
        assert_eq!(col0, vec![0.0, 0.5, 1.0]);
        // constant target column maps to 0
        assert!(tr.rows.iter().all(|r| r.target[0] == 0.0));
        // test value above train max clips to 1
        assert_eq!(te.rows[0].features[0], 1.0);
    }

    #[test]
    fn denormalize_round_trips() {
        let train = table(vec![vec![2.0, 10.0], vec![4.0, 30.0], vec![6.0, 50.0]]);
        let (tr, _) = normalize(&train, &train, &[1]).unwrap();
        for (row, raw) in tr.rows.iter().zip(&train.rows) {
            assert!((tr.denormalize(0, row.features[0]) - raw[0]).abs() <= 1e-12);
            assert!((tr.denormalize(1, row.target[0]) - raw[1]).abs() <= 1e-12);
        }
    }

    #[test]
    fn default_target_is_last_column() {
        let train = table(vec![vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]);
        let (tr, _) = normalize(&train, &train, &[]).unwrap();
        assert_eq!(tr.n_features, 2);
        assert_eq!(tr.target_columns, vec![2]);
    }
}
