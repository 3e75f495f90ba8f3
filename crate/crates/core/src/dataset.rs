//! Labeled data ingestion: LIBSVM sparse text, headerless numeric CSV,
//! one-vs-all binarization and stratified splitting.
//!
//! Features are always held densely; only class moments are consumed
//! downstream, so datasets of a few hundred thousand rows fit comfortably.

use std::fmt::Write as _;
use std::io::{BufRead, Read};

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Multi-class labeled samples, one row per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: DMatrix<f64>,
    labels: Vec<i64>,
}

impl Dataset {
    pub fn new(features: DMatrix<f64>, labels: Vec<i64>) -> Result<Self> {
        if labels.len() != features.nrows() {
            return Err(Error::DimensionMismatch {
                expected: features.nrows(),
                found: labels.len(),
            });
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("feature values must be finite"));
        }
        Ok(Self { features, labels })
    }

    pub fn features(&self) -> &DMatrix<f64> {
        &self.features
    }

    pub fn labels(&self) -> &[i64] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.ncols()
    }

    /// Distinct labels in ascending order.
    pub fn classes(&self) -> Vec<i64> {
        let mut classes = self.labels.clone();
        classes.sort_unstable();
        classes.dedup();
        classes
    }

    /// Zero-pads (or rejects truncating) the feature dimension.
    pub fn with_feature_dim(self, dim: usize) -> Result<Self> {
        let current = self.feature_dim();
        if dim < current {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: current,
            });
        }
        let n = self.len();
        let features = self.features.resize(n, dim, 0.0);
        Ok(Self {
            features,
            labels: self.labels,
        })
    }
}

/// Samples labeled +1 / -1.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryDataset {
    features: DMatrix<f64>,
    labels: Vec<i8>,
    n_pos: usize,
    n_neg: usize,
}

impl BinaryDataset {
    pub fn new(features: DMatrix<f64>, labels: Vec<i8>) -> Result<Self> {
        if labels.len() != features.nrows() {
            return Err(Error::DimensionMismatch {
                expected: features.nrows(),
                found: labels.len(),
            });
        }
        if let Some(bad) = labels.iter().find(|&&l| l != 1 && l != -1) {
            return Err(Error::invalid(format!(
                "binary label must be +1 or -1, got {bad}"
            )));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("feature values must be finite"));
        }
        let n_pos = labels.iter().filter(|&&l| l == 1).count();
        let n_neg = labels.len() - n_pos;
        Ok(Self {
            features,
            labels,
            n_pos,
            n_neg,
        })
    }

    pub fn features(&self) -> &DMatrix<f64> {
        &self.features
    }

    pub fn labels(&self) -> &[i8] {
        &self.labels
    }

    pub fn n_pos(&self) -> usize {
        self.n_pos
    }

    pub fn n_neg(&self) -> usize {
        self.n_neg
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.ncols()
    }

    /// Positive-class proportion; `None` for an empty dataset.
    pub fn positive_fraction(&self) -> Option<f64> {
        (!self.is_empty()).then(|| self.n_pos as f64 / self.len() as f64)
    }

    /// Rows belonging to one class, in dataset order.
    pub fn class_rows(&self, label: i8) -> DMatrix<f64> {
        let idx: Vec<usize> = (0..self.len())
            .filter(|&i| self.labels[i] == label)
            .collect();
        self.select(&idx).features
    }

    /// Sub-dataset of the given row indices, in the given order.
    pub fn select(&self, indices: &[usize]) -> BinaryDataset {
        let features = self.features.select_rows(indices);
        let labels: Vec<i8> = indices.iter().map(|&i| self.labels[i]).collect();
        let n_pos = labels.iter().filter(|&&l| l == 1).count();
        let n_neg = labels.len() - n_pos;
        BinaryDataset {
            features,
            labels,
            n_pos,
            n_neg,
        }
    }

    /// Fails unless both classes are present.
    pub fn require_both_classes(&self) -> Result<()> {
        if self.n_pos == 0 || self.n_neg == 0 {
            return Err(Error::DegenerateData(format!(
                "need both classes, have {} positive and {} negative samples",
                self.n_pos, self.n_neg
            )));
        }
        Ok(())
    }
}

fn parse_label(token: &str, line: usize) -> Result<i64> {
    if let Ok(v) = token.parse::<i64>() {
        return Ok(v);
    }
    match token.parse::<f64>() {
        Ok(v) if v.is_finite() && v.fract() == 0.0 && v.abs() < 9.0e15 => Ok(v as i64),
        _ => Err(Error::parse(
            line,
            format!("label `{token}` is not an integer"),
        )),
    }
}

fn parse_value(token: &str, line: usize) -> Result<f64> {
    match token.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        Ok(_) => Err(Error::parse(line, format!("non-finite value `{token}`"))),
        Err(_) => Err(Error::parse(line, format!("non-numeric value `{token}`"))),
    }
}

/// Parses LIBSVM sparse text: `<label> <index>:<value> ...` with 1-based,
/// strictly increasing indices. Absent entries are 0.0; the feature
/// dimension is the largest index seen. Blank lines and `#` comments are
/// skipped.
pub fn parse_sparse<R: Read>(reader: R) -> Result<Dataset> {
    let reader = std::io::BufReader::new(reader);
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut labels = Vec::new();
    let mut dim = 0usize;

    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line?;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut tokens = content.split_whitespace();
        let label = parse_label(tokens.next().unwrap_or_default(), lineno)?;
        let mut entries = Vec::new();
        let mut last = 0usize;
        for token in tokens {
            let (idx, val) = token.split_once(':').ok_or_else(|| {
                Error::parse(lineno, format!("expected `index:value`, got `{token}`"))
            })?;
            let idx: usize = idx
                .parse()
                .map_err(|_| Error::parse(lineno, format!("invalid index `{idx}`")))?;
            if idx == 0 {
                return Err(Error::parse(lineno, "indices are 1-based"));
            }
            if idx == last {
                return Err(Error::parse(lineno, format!("duplicate index {idx}")));
            }
            if idx < last {
                return Err(Error::parse(
                    lineno,
                    format!("index {idx} follows {last}; indices must increase"),
                ));
            }
            last = idx;
            entries.push((idx, parse_value(val, lineno)?));
        }
        dim = dim.max(last);
        rows.push(entries);
        labels.push(label);
    }

    let mut features = DMatrix::zeros(rows.len(), dim);
    for (r, entries) in rows.iter().enumerate() {
        for &(idx, val) in entries {
            features[(r, idx - 1)] = val;
        }
    }
    Dataset::new(features, labels)
}

/// Writes a dataset in LIBSVM sparse form with shortest round-trip decimals.
///
/// Zeros are omitted, except that a trailing all-zero column is pinned by an
/// explicit `d:0` on the first row so the dimension survives a reparse.
pub fn write_sparse(dataset: &Dataset) -> String {
    let x = dataset.features();
    let dim = x.ncols();
    let last_col_empty = dim > 0 && x.column(dim - 1).iter().all(|&v| v == 0.0);
    let mut out = String::new();
    for r in 0..x.nrows() {
        write!(out, "{}", dataset.labels()[r]).unwrap();
        for c in 0..dim {
            let v = x[(r, c)];
            if v != 0.0 {
                write!(out, " {}:{}", c + 1, v).unwrap();
            }
        }
        if r == 0 && last_col_empty {
            write!(out, " {dim}:0").unwrap();
        }
        out.push('\n');
    }
    out
}

/// Parses a headerless numeric CSV. `label_column` holds integer labels;
/// all other columns become features in their original order.
pub fn parse_csv<R: Read>(reader: R, label_column: usize) -> Result<Dataset> {
    let mut csv_reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut width: Option<usize> = None;
    for (i, record) in csv_reader.records().enumerate() {
        let lineno = i + 1;
        let record = record.map_err(|e| Error::parse(lineno, e.to_string()))?;
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        match width {
            None => {
                if label_column >= record.len() {
                    return Err(Error::parse(
                        lineno,
                        format!(
                            "label column {label_column} out of range for {} columns",
                            record.len()
                        ),
                    ));
                }
                width = Some(record.len());
            }
            Some(w) if w != record.len() => {
                return Err(Error::parse(
                    lineno,
                    format!("expected {w} columns, found {}", record.len()),
                ));
            }
            _ => {}
        }
        for (c, cell) in record.iter().enumerate() {
            if c == label_column {
                labels.push(parse_label(cell, lineno)?);
            } else {
                values.push(parse_value(cell, lineno)?);
            }
        }
    }
    let ncols = width.map_or(0, |w| w - 1);
    let features = DMatrix::from_row_slice(labels.len(), ncols, &values);
    Dataset::new(features, labels)
}

/// Maps `positive_label` to +1 and every other label to -1.
pub fn binarize_one_vs_all(dataset: &Dataset, positive_label: i64) -> Result<BinaryDataset> {
    if !dataset.labels().contains(&positive_label) {
        return Err(Error::invalid(format!(
            "positive label {positive_label} does not occur in the dataset"
        )));
    }
    let labels = dataset
        .labels()
        .iter()
        .map(|&l| if l == positive_label { 1 } else { -1 })
        .collect();
    BinaryDataset::new(dataset.features().clone(), labels)
}

/// Number of training samples drawn from a class of `n` samples.
///
/// Rounds up so a minority class always contributes to training.
pub fn train_share(n: usize, train_fraction: f64) -> usize {
    let raw = train_fraction * n as f64;
    // guard against 0.7 * 10 = 7.000000000000001
    let share = (raw - 1e-9).ceil().max(0.0) as usize;
    share.min(n)
}

/// Stratified, seeded train/test split. Each class is shuffled with a
/// ChaCha8 stream seeded by `seed`; within each part rows keep their
/// original relative order.
pub fn split(
    dataset: &BinaryDataset,
    train_fraction: f64,
    seed: u64,
) -> Result<(BinaryDataset, BinaryDataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::invalid(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    dataset.require_both_classes()?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for class in [1i8, -1] {
        let mut idx: Vec<usize> = (0..dataset.len())
            .filter(|&i| dataset.labels()[i] == class)
            .collect();
        idx.shuffle(&mut rng);
        let k = train_share(idx.len(), train_fraction);
        train.extend_from_slice(&idx[..k]);
        test.extend_from_slice(&idx[k..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((dataset.select(&train), dataset.select(&test)))
}

/// Reads a file, choosing CSV for `.csv` paths and LIBSVM otherwise.
pub fn load_path(path: &std::path::Path, label_column: usize) -> Result<Dataset> {
    let file = std::fs::File::open(path)?;
    let is_csv = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    if is_csv {
        parse_csv(file, label_column)
    } else {
        parse_sparse(file)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sparse(s: &str) -> Result<Dataset> {
        parse_sparse(s.as_bytes())
    }

    #[test]
    fn sparse_fills_absent_indices() {
        let d = sparse("1 1:0.5 3:2.0\n").unwrap();
        assert_eq!(d.labels(), &[1]);
        assert_eq!(d.feature_dim(), 3);
        assert_eq!(
            d.features().row(0).iter().copied().collect::<Vec<_>>(),
            vec![0.5, 0.0, 2.0]
        );
    }

    #[test]
    fn sparse_dim_is_max_index() {
        let d = sparse("2 2:1\n1 4:1\n").unwrap();
        assert_eq!(d.feature_dim(), 4);
        assert_eq!(
            d.features().row(0).iter().copied().collect::<Vec<_>>(),
            vec![0.0, 1.0, 0.0, 0.0]
        );
        assert_eq!(
            d.features().row(1).iter().copied().collect::<Vec<_>>(),
            vec![0.0, 0.0, 0.0, 1.0]
        );
    }

    #[test]
    fn sparse_empty_stream() {
        let d = sparse("").unwrap();
        assert!(d.is_empty());
        let b = BinaryDataset::new(DMatrix::zeros(0, 0), vec![]).unwrap();
        assert!(b.require_both_classes().is_err());
    }

    #[test]
    fn sparse_errors_carry_line_numbers() {
        match sparse("1 1:1\n1 2:x\n") {
            Err(Error::Parse { line: 2, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            sparse("1 2:1 2:3"),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(matches!(sparse("1 3:1 2:3"), Err(Error::Parse { .. })));
        assert!(matches!(sparse("1 0:1"), Err(Error::Parse { .. })));
        assert!(matches!(sparse("1 garbage"), Err(Error::Parse { .. })));
        assert!(matches!(sparse("abc 1:1"), Err(Error::Parse { .. })));
    }

    #[test]
    fn sparse_accepts_crlf_and_signed_labels() {
        let d = sparse("+1 1:1\r\n-1 2:1\r\n").unwrap();
        assert_eq!(d.labels(), &[1, -1]);
        assert_eq!(d.feature_dim(), 2);
    }

    #[test]
    fn write_sparse_keeps_trailing_zero_column() {
        let d = sparse("1 1:1 3:0\n2 2:0.25\n").unwrap();
        let again = sparse(&write_sparse(&d)).unwrap();
        assert_eq!(d, again);
    }

    #[test]
    fn csv_basic() {
        let d = parse_csv("0,1.0,2.0\n1,3.0,4.0".as_bytes(), 0).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.feature_dim(), 2);
        assert_eq!(d.labels(), &[0, 1]);
        assert_eq!(d.features()[(1, 0)], 3.0);
    }

    #[test]
    fn csv_single_row_and_last_label_column() {
        let d = parse_csv("1.5,2.5,7\n".as_bytes(), 2).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d.labels(), &[7]);
        assert_eq!(
            d.features().row(0).iter().copied().collect::<Vec<_>>(),
            vec![1.5, 2.5]
        );
    }

    #[test]
    fn csv_rejects_header_ragged_and_text() {
        assert!(matches!(
            parse_csv("label,a,b\n0,1,2".as_bytes(), 0),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(matches!(
            parse_csv("0,1,2\n1,2".as_bytes(), 0),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(matches!(
            parse_csv("0,1,x".as_bytes(), 0),
            Err(Error::Parse { .. })
        ));
        assert!(matches!(
            parse_csv("0.5,1".as_bytes(), 0),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn binarize_maps_labels() {
        let d = Dataset::new(DMatrix::zeros(4, 1), vec![1, 2, 3, 1]).unwrap();
        let b = binarize_one_vs_all(&d, 1).unwrap();
        assert_eq!(b.labels(), &[1, -1, -1, 1]);
        assert_eq!(b.n_pos(), 2);
        assert_eq!(b.n_neg(), 2);
        assert!(binarize_one_vs_all(&d, 9).is_err());
    }

    #[test]
    fn binarize_single_class_is_degenerate() {
        let d = Dataset::new(DMatrix::zeros(3, 1), vec![5, 5, 5]).unwrap();
        let b = binarize_one_vs_all(&d, 5).unwrap();
        assert_eq!(b.n_neg(), 0);
        assert!(b.require_both_classes().is_err());
    }

    #[test]
    fn binarize_identity_on_binary_labels() {
        let d = Dataset::new(DMatrix::zeros(3, 1), vec![1, -1, 1]).unwrap();
        let b = binarize_one_vs_all(&d, 1).unwrap();
        assert_eq!(b.labels(), &[1, -1, 1]);
    }

    fn binary(n_pos: usize, n_neg: usize) -> BinaryDataset {
        let n = n_pos + n_neg;
        let x = DMatrix::from_fn(n, 2, |i, j| (i * 2 + j) as f64);
        let mut labels = vec![1i8; n_pos];
        labels.extend(std::iter::repeat_n(-1i8, n_neg));
        BinaryDataset::new(x, labels).unwrap()
    }

    #[test]
    fn split_balanced_halves() {
        let (train, test) = split(&binary(10, 10), 0.5, 3).unwrap();
        assert_eq!((train.n_pos(), train.n_neg()), (5, 5));
        assert_eq!((test.n_pos(), test.n_neg()), (5, 5));
    }

    #[test]
    fn split_is_deterministic_per_seed() {
        let d = binary(13, 29);
        let a = split(&d, 0.6, 11).unwrap();
        let b = split(&d, 0.6, 11).unwrap();
        assert_eq!(a, b);
        let c = split(&d, 0.6, 12).unwrap();
        assert_ne!(a.0, c.0);
    }

    #[test]
    fn split_keeps_minority_in_training() {
        let (train, _) = split(&binary(1, 100), 0.5, 0).unwrap();
        assert_eq!(train.n_pos(), 1);
        assert_eq!(train.n_neg(), 50);
    }

    #[test]
    fn train_share_rounding_rule_enumerated() {
        // brute force: the smallest k with k >= f*n (up to float noise), never zero for n >= 1
        for n in 1..60usize {
            for f in [0.1, 0.25, 0.3, 0.5, 0.678, 0.7, 0.9] {
                let k = train_share(n, f);
                let expected = (0..=n).find(|&k| k as f64 + 1e-9 >= f * n as f64).unwrap();
                assert_eq!(k, expected, "n={n} f={f}");
                assert!(k >= 1);
            }
        }
        assert_eq!(train_share(10, 0.7), 7);
    }

    #[test]
    fn split_rejects_bad_fraction() {
        let d = binary(4, 4);
        assert!(split(&d, 0.0, 0).is_err());
        assert!(split(&d, 1.0, 0).is_err());
        assert!(split(&binary(4, 0), 0.5, 0).is_err());
    }
}
