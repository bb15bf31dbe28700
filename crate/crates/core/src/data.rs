//! Dataset model, CSV ingestion and fold assignment.

use std::collections::HashSet;
use std::io::Read;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Numeric design matrix `x` (n × p), response `y` and one name per column.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: DMatrix<f64>,
    y: DVector<f64>,
    feature_names: Vec<String>,
}

impl Dataset {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>, feature_names: Vec<String>) -> Result<Self> {
        let (n, p) = x.shape();
        if n < 2 {
            return Err(Error::invalid(format!("dataset needs at least 2 rows, got {n}")));
        }
        if p < 1 {
            return Err(Error::invalid("dataset needs at least one feature column"));
        }
        if y.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: y.len(),
            });
        }
        if feature_names.len() != p {
            return Err(Error::DimensionMismatch {
                expected: p,
                got: feature_names.len(),
            });
        }
        let mut seen = HashSet::new();
        for name in &feature_names {
            if !seen.insert(name.as_str()) {
                return Err(Error::invalid(format!("duplicate feature name \"{name}\"")));
            }
        }
        if let Some(pos) = x.iter().position(|v| !v.is_finite()) {
            // column-major storage
            return Err(Error::invalid(format!(
                "non-finite value at row {}, column \"{}\"",
                pos % n + 1,
                feature_names[pos / n]
            )));
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite response at row {}", i + 1)));
        }
        Ok(Self { x, y, feature_names })
    }

    /// Dataset with generated names `X1..Xp`.
    pub fn from_xy(x: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        let names = default_feature_names(x.ncols());
        Self::new(x, y, names)
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn column(&self, j: usize) -> DVector<f64> {
        self.x.column(j).into_owned()
    }

    /// Design matrix with column `j` removed (the conditioning set X₋ⱼ).
    pub fn without_column(&self, j: usize) -> DMatrix<f64> {
        self.x.clone().remove_column(j)
    }

    /// Same dataset with a different response vector.
    pub fn with_response(&self, y: DVector<f64>) -> Result<Self> {
        Self::new(self.x.clone(), y, self.feature_names.clone())
    }

    /// Z-scores every feature column. Constant columns are centered only.
    pub fn standardized(&self) -> Self {
        let mut x = self.x.clone();
        let n = x.nrows() as f64;
        for mut col in x.column_iter_mut() {
            let mean = col.sum() / n;
            col.add_scalar_mut(-mean);
            let sd = (col.norm_squared() / n).sqrt();
            if sd > 0.0 {
                col /= sd;
            }
        }
        Self {
            x,
            y: self.y.clone(),
            feature_names: self.feature_names.clone(),
        }
    }
}

pub fn default_feature_names(p: usize) -> Vec<String> {
    (1..=p).map(|i| format!("X{i}")).collect()
}

/// Loads a comma-separated file with a header row. The response is the last
/// column unless `target` names another one.
pub fn load_csv(path: impl AsRef<Path>, target: Option<&str>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, target)
}

pub fn read_csv<R: Read>(reader: R, target: Option<&str>) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::Csv(e.to_string()))?
        .iter()
        .map(str::to_owned)
        .collect();
    if header.len() < 2 {
        return Err(Error::invalid("csv needs at least one feature column and a response column"));
    }
    let mut seen = HashSet::new();
    for h in &header {
        if !seen.insert(h.as_str()) {
            return Err(Error::invalid(format!("duplicate header name \"{h}\"")));
        }
    }
    let target_idx = match target {
        Some(name) => header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::invalid(format!("target column \"{name}\" not found")))?,
        None => header.len() - 1,
    };

    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| Error::Csv(format!("row {row}: {e}")))?;
        if record.len() != header.len() {
            return Err(Error::Csv(format!(
                "row {row}: expected {} fields, found {}",
                header.len(),
                record.len()
            )));
        }
        let mut values = Vec::with_capacity(header.len());
        for (cell, column) in record.iter().zip(&header) {
            values.push(parse_cell(cell, row, column)?);
        }
        rows.push(values);
    }
    if rows.len() < 2 {
        return Err(Error::invalid(format!(
            "fewer than 2 rows (found {})",
            rows.len()
        )));
    }

    let n = rows.len();
    let p = header.len() - 1;
    let feature_cols: Vec<usize> = (0..header.len()).filter(|&c| c != target_idx).collect();
    let x = DMatrix::from_fn(n, p, |i, j| rows[i][feature_cols[j]]);
    let y = DVector::from_fn(n, |i, _| rows[i][target_idx]);
    let names = feature_cols.iter().map(|&c| header[c].clone()).collect();
    Dataset::new(x, y, names)
}

fn parse_cell(cell: &str, row: usize, column: &str) -> Result<f64> {
    let err = |message: &str| Error::Cell {
        row,
        column: column.to_owned(),
        message: message.to_owned(),
    };
    if cell.is_empty() {
        return Err(err("missing value"));
    }
    let value: f64 = cell
        .parse()
        .map_err(|_| err(&format!("non-numeric value \"{cell}\"")))?;
    if !value.is_finite() {
        return Err(err(&format!("non-finite value \"{cell}\"")));
    }
    Ok(value)
}

/// Assignment of each row to one of `k` folds; `k = 1` means no splitting.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldAssignment {
    fold_of: Vec<usize>,
    k: usize,
}

impl FoldAssignment {
    /// Everything in fold 0.
    pub fn single(n: usize) -> Self {
        Self {
            fold_of: vec![0; n],
            k: 1,
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.fold_of.len()
    }

    pub fn fold_of(&self) -> &[usize] {
        &self.fold_of
    }

    pub fn members(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_of.len())
            .filter(|&i| self.fold_of[i] == fold)
            .collect()
    }

    pub fn complement(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_of.len())
            .filter(|&i| self.fold_of[i] != fold)
            .collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in &self.fold_of {
            sizes[f] += 1;
        }
        sizes
    }
}

/// Balanced random split of `0..n` into `k` folds (sizes differ by at most one).
pub fn make_folds(n: usize, k: usize, rng: &RngStream) -> Result<FoldAssignment> {
    if k == 0 {
        return Err(Error::invalid("number of folds must be at least 1"));
    }
    if k > n {
        return Err(Error::invalid(format!("cannot split {n} rows into {k} folds")));
    }
    if k == 1 {
        return Ok(FoldAssignment::single(n));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng.rng());
    let mut fold_of = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        fold_of[i] = pos % k;
    }
    Ok(FoldAssignment { fold_of, k })
}

/// Rows of `m` selected by `idx`, in order.
pub(crate) fn select_rows(m: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), m.ncols(), |r, c| m[(idx[r], c)])
}

pub(crate) fn select_entries(v: &DVector<f64>, idx: &[usize]) -> DVector<f64> {
    DVector::from_fn(idx.len(), |r, _| v[idx[r]])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_small_file() {
        let d = read_csv("a,b,y\n1,2,3\n4,5,6".as_bytes(), None).unwrap();
        assert_eq!((d.n(), d.p()), (2, 2));
        assert_eq!(d.y().as_slice(), &[3.0, 6.0]);
        assert_eq!(d.x()[(1, 0)], 4.0);
        assert_eq!(d.feature_names(), &["a".to_string(), "b".to_string()]);
    }

    #[test]
    fn target_override_moves_column() {
        let d = read_csv("y,a,b\n3,1,2\n6,4,5".as_bytes(), Some("y")).unwrap();
        assert_eq!(d.y().as_slice(), &[3.0, 6.0]);
        assert_eq!(d.feature_names(), &["a".to_string(), "b".to_string()]);
    }

    #[test]
    fn quoted_headers_accepted() {
        let d = read_csv("\"a\",\"b\",\"y\"\n1,2,3\n4,5,6".as_bytes(), None).unwrap();
        assert_eq!(d.feature_names()[1], "b");
    }

    #[test]
    fn non_numeric_cell_names_row_and_column() {
        let err = read_csv("a,b,y\n1,abc,3\n4,5,6".as_bytes(), None).unwrap_err();
        match err {
            Error::Cell { row, column, .. } => {
                assert_eq!(row, 1);
                assert_eq!(column, "b");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn header_only_is_rejected() {
        let err = read_csv("a,b,y\n".as_bytes(), None).unwrap_err();
        assert!(err.to_string().contains("fewer than 2 rows"), "{err}");
    }

    #[test]
    fn duplicate_header_is_rejected() {
        assert!(read_csv("a,a,y\n1,2,3\n4,5,6".as_bytes(), None).is_err());
    }

    #[test]
    fn missing_and_nan_cells_rejected() {
        assert!(read_csv("a,b,y\n1,,3\n4,5,6".as_bytes(), None).is_err());
        assert!(read_csv("a,b,y\n1,NaN,3\n4,5,6".as_bytes(), None).is_err());
    }

    #[test]
    fn folds_balanced() {
        let f = make_folds(4, 2, &RngStream::new(1, 0)).unwrap();
        assert_eq!(f.sizes(), vec![2, 2]);
        let f = make_folds(11, 3, &RngStream::new(1, 0)).unwrap();
        let s = f.sizes();
        assert!(s.iter().max().unwrap() - s.iter().min().unwrap() <= 1);
    }

    #[test]
    fn single_fold_is_all_zero() {
        let f = make_folds(5, 1, &RngStream::new(9, 9)).unwrap();
        assert_eq!(f.fold_of(), &[0, 0, 0, 0, 0]);
    }

    #[test]
    fn too_many_folds_is_error() {
        assert!(make_folds(3, 5, &RngStream::new(0, 0)).is_err());
    }

    #[test]
    fn folds_deterministic() {
        let a = make_folds(50, 5, &RngStream::new(3, 2)).unwrap();
        let b = make_folds(50, 5, &RngStream::new(3, 2)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn standardized_columns() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 5.0, 2.0, 5.0, 3.0, 5.0]);
        let d = Dataset::from_xy(x, DVector::from_vec(vec![0.0, 1.0, 2.0])).unwrap();
        let s = d.standardized();
        let c0 = s.column(0);
        assert!((c0.sum()).abs() < 1e-12);
        assert!((c0.norm_squared() / 3.0 - 1.0).abs() < 1e-12);
        assert!(s.column(1).iter().all(|v| *v == 0.0));
    }
}
