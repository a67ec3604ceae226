//! Dataset ingestion, deterministic stratified splits, standardization,
//! one-hot targets, synthetic generators and the GOPM binary matrix format.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::num::matrix::DenseMatrix;
use crate::num::rng::{RngStream, StreamId, StreamPurpose};
use crate::scalar::Scalar;

/// Per-column standardization statistics, fitted on the training split and
/// applied identically to every split. Constant columns map to zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer<S: Scalar> {
    pub mean: Vec<S>,
    pub std: Vec<S>,
}

impl<S: Scalar> Standardizer<S> {
    pub fn fit(x: &DenseMatrix<S>) -> Self {
        let mean = x.column_means();
        let n = x.rows().max(1);
        let mut var = vec![S::zero(); x.cols()];
        for r in 0..x.rows() {
            for (v, (&xv, &m)) in var.iter_mut().zip(x.row(r).iter().zip(&mean)) {
                let d = xv - m;
                *v += d * d;
            }
        }
        let denom = S::of(n as f64);
        let std = var
            .into_iter()
            .map(|v| {
                let s = (v / denom).sqrt();
                if s > S::zero() {
                    s
                } else {
                    S::one()
                }
            })
            .collect();
        Self { mean, std }
    }

    pub fn transform(&self, x: &DenseMatrix<S>) -> Result<DenseMatrix<S>> {
        if x.cols() != self.mean.len() {
            return Err(Error::shape(
                "standardize",
                format!("input has {} columns, stats have {}", x.cols(), self.mean.len()),
            ));
        }
        let mut out = x.clone();
        for r in 0..out.rows() {
            for ((v, m), s) in out.row_mut(r).iter_mut().zip(&self.mean).zip(&self.std) {
                *v = (*v - *m) / *s;
            }
        }
        Ok(out)
    }
}

pub type Matrix = DenseMatrix<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

/// An immutable classification dataset with raw (unstandardized) features,
/// dense class indices and a per-sample split assignment.
#[derive(Debug, Clone)]
pub struct Dataset {
    x: Matrix,
    labels: Vec<usize>,
    class_count: usize,
    split: Vec<Split>,
    /// Original label strings in first-appearance order, when loaded from
    /// a file.
    class_names: Option<Vec<String>>,
}

impl Dataset {
    /// Builds a dataset with every sample assigned to the training split.
    pub fn new(x: Matrix, labels: Vec<usize>, class_count: usize) -> Result<Self> {
        if labels.len() != x.rows() {
            return Err(Error::shape(
                "dataset",
                format!("{} rows vs {} labels", x.rows(), labels.len()),
            ));
        }
        if class_count == 0 {
            return Err(Error::invalid("class_count must be >= 1"));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_count) {
            return Err(Error::invalid(format!(
                "label {} out of range [0, {})",
                bad, class_count
            )));
        }
        let n = x.rows();
        Ok(Self {
            x,
            labels,
            class_count,
            split: vec![Split::Train; n],
            class_names: None,
        })
    }

    pub fn features(&self) -> &Matrix {
        &self.x
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn feature_dim(&self) -> usize {
        self.x.cols()
    }

    pub fn split_assignment(&self) -> &[Split] {
        &self.split
    }

    pub fn class_names(&self) -> Option<&[String]> {
        self.class_names.as_deref()
    }

    /// Attaches the original label strings (index-aligned with the dense
    /// class indices).
    pub fn with_class_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.class_count {
            return Err(Error::invalid(format!(
                "{} class names for {} classes",
                names.len(),
                self.class_count
            )));
        }
        self.class_names = Some(names);
        Ok(self)
    }

    pub fn indices_of(&self, split: Split) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.split[i] == split).collect()
    }

    /// Features, one-hot targets and labels of one split, in sample order.
    pub fn part(&self, split: Split) -> (Matrix, Matrix, Vec<usize>) {
        let idx = self.indices_of(split);
        let x = self.x.select_rows(&idx);
        let labels: Vec<usize> = idx.iter().map(|&i| self.labels[i]).collect();
        let y = one_hot(&labels, self.class_count);
        (x, y, labels)
    }

    /// Standardization statistics fitted on the training rows only.
    pub fn fit_standardizer(&self) -> Standardizer<f64> {
        let idx = self.indices_of(Split::Train);
        Standardizer::fit(&self.x.select_rows(&idx))
    }
}

/// One-hot target matrix: row `i` has a single 1 at column `labels[i]`.
pub fn one_hot(labels: &[usize], class_count: usize) -> Matrix {
    let mut y = Matrix::zeros(labels.len(), class_count);
    for (r, &l) in labels.iter().enumerate() {
        y[(r, l)] = 1.0;
    }
    y
}

/// Largest-remainder apportionment of `n` samples over three fractions.
fn apportion(n: usize, fractions: (f64, f64, f64)) -> [usize; 3] {
    let f = [fractions.0, fractions.1, fractions.2];
    let mut counts = [0usize; 3];
    let mut rema: Vec<(usize, f64)> = Vec::with_capacity(3);
    let mut assigned = 0;
    for i in 0..3 {
        let exact = n as f64 * f[i];
        counts[i] = exact.floor() as usize;
        assigned += counts[i];
        rema.push((i, exact - exact.floor()));
    }
    // Distribute the remainder by largest fractional part; ties go to the
    // earlier split (train, then val, then test).
    rema.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    let mut left = n - assigned;
    for (i, _) in rema {
        if left == 0 {
            break;
        }
        counts[i] += 1;
        left -= 1;
    }
    counts
}

/// Assigns splits with a seeded, stratified shuffle: each class is shuffled
/// and cut contiguously, so the training split contains every class. For
/// tiny classes val/test may be empty; train always receives at least one
/// sample per class.
pub fn split_dataset(ds: Dataset, fractions: (f64, f64, f64), seed: u64) -> Result<Dataset> {
    let sum = fractions.0 + fractions.1 + fractions.2;
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!("split fractions sum to {}, expected 1", sum)));
    }
    if fractions.0 <= 0.0 || fractions.1 < 0.0 || fractions.2 < 0.0 {
        return Err(Error::invalid("train fraction must be positive, val/test non-negative"));
    }

    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); ds.class_count];
    for (i, &l) in ds.labels.iter().enumerate() {
        by_class[l].push(i);
    }
    if let Some(empty) = by_class.iter().position(Vec::is_empty) {
        return Err(Error::invalid(format!(
            "class {} has no samples to distribute over the splits",
            empty
        )));
    }

    let mut rng = RngStream::new(seed, StreamId::simple(StreamPurpose::Split));
    let mut ds = ds;
    for indices in &mut by_class {
        rng.shuffle(indices);
        let mut counts = apportion(indices.len(), fractions);
        if counts[0] == 0 {
            // Steal one sample for train from the largest other split.
            let donor = if counts[1] >= counts[2] { 1 } else { 2 };
            counts[donor] -= 1;
            counts[0] += 1;
        }
        let (tr, va) = (counts[0], counts[0] + counts[1]);
        for (pos, &i) in indices.iter().enumerate() {
            ds.split[i] = if pos < tr {
                Split::Train
            } else if pos < va {
                Split::Val
            } else {
                Split::Test
            };
        }
    }
    Ok(ds)
}

/// Schema for CSV ingestion: the label column by name, and optionally an
/// explicit feature column list (default: every other column, in header
/// order).
#[derive(Debug, Clone)]
pub struct CsvSchema {
    pub label_column: String,
    pub feature_columns: Option<Vec<String>>,
}

impl CsvSchema {
    pub fn labeled(label_column: impl Into<String>) -> Self {
        Self {
            label_column: label_column.into(),
            feature_columns: None,
        }
    }
}

/// Loads a headered CSV. Labels are mapped to dense indices in
/// first-appearance order; features must parse as finite numbers.
pub fn load_csv(path: &Path, schema: &CsvSchema) -> Result<Dataset> {
    let parse_err = |row: Option<usize>, col: Option<&str>, detail: String| Error::Parse {
        path: path.display().to_string(),
        location: match (row, col) {
            (Some(r), Some(c)) => format!(" at row {}, column {}", r, c),
            (Some(r), None) => format!(" at row {}", r),
            _ => String::new(),
        },
        detail,
    };

    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| parse_err(None, None, e.to_string()))?;

    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| parse_err(None, None, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();

    let label_idx = headers
        .iter()
        .position(|h| h == &schema.label_column)
        .ok_or_else(|| {
            parse_err(
                None,
                None,
                format!("missing label column '{}'", schema.label_column),
            )
        })?;

    let feature_idx: Vec<usize> = match &schema.feature_columns {
        Some(names) => {
            let mut idx = Vec::with_capacity(names.len());
            for name in names {
                let found = headers.iter().position(|h| h == name).ok_or_else(|| {
                    parse_err(None, None, format!("missing feature column '{}'", name))
                })?;
                idx.push(found);
            }
            idx
        }
        None => (0..headers.len()).filter(|&i| i != label_idx).collect(),
    };
    if feature_idx.is_empty() {
        return Err(parse_err(None, None, "no feature columns".into()));
    }

    let mut data = Vec::new();
    let mut labels = Vec::new();
    let mut class_names: Vec<String> = Vec::new();
    for (row_no, record) in reader.records().enumerate() {
        // Row numbers are 1-based over data rows, matching most tooling.
        let row = row_no + 1;
        let record = record.map_err(|e| parse_err(Some(row), None, e.to_string()))?;
        for &fi in &feature_idx {
            let cell = record
                .get(fi)
                .ok_or_else(|| parse_err(Some(row), Some(&headers[fi]), "missing cell".into()))?;
            let value: f64 = cell.parse().map_err(|_| {
                parse_err(Some(row), Some(&headers[fi]), format!("'{}' is not numeric", cell))
            })?;
            if !value.is_finite() {
                return Err(parse_err(
                    Some(row),
                    Some(&headers[fi]),
                    format!("'{}' is not finite", cell),
                ));
            }
            data.push(value);
        }
        let label_cell = record
            .get(label_idx)
            .ok_or_else(|| parse_err(Some(row), Some(&schema.label_column), "missing cell".into()))?;
        let label = match class_names.iter().position(|n| n == label_cell) {
            Some(i) => i,
            None => {
                class_names.push(label_cell.to_string());
                class_names.len() - 1
            }
        };
        labels.push(label);
    }
    if labels.is_empty() {
        return Err(parse_err(None, None, "file has no data rows".into()));
    }

    let rows = labels.len();
    let x = Matrix::from_vec(rows, feature_idx.len(), data)
        .map_err(|e| parse_err(None, None, e.to_string()))?;
    let class_count = class_names.len();
    let mut ds = Dataset::new(x, labels, class_count)?;
    ds.class_names = Some(class_names);
    Ok(ds)
}

/// Synthetic dataset family and its parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum SyntheticSpec {
    /// Gaussian clusters with seeded random centers in
    /// `[-center_box, center_box]^dim` and isotropic `noise` spread.
    Blobs {
        samples: usize,
        dim: usize,
        classes: usize,
        center_box: f64,
        noise: f64,
    },
    /// Two interleaved half-circles in the first two coordinates, lifted to
    /// `dim` with pure-noise coordinates.
    Moons { samples: usize, dim: usize, noise: f64 },
    /// Composition of XOR-like factors: coordinate pairs whose product
    /// signs are XORed into the label. Requires at least two nonlinear
    /// layers to separate reliably; extra dimensions are uniform
    /// distractors. `margin` keeps each factor coordinate away from zero,
    /// `noise` adds Gaussian jitter after labeling.
    LayeredXor {
        samples: usize,
        pairs: usize,
        dim: usize,
        margin: f64,
        noise: f64,
    },
}

pub fn make_synthetic(spec: &SyntheticSpec, seed: u64) -> Result<Dataset> {
    let ds = make_synthetic_inner(spec, seed)?;
    // Digit class names keep eval-time label alignment unambiguous.
    let names = (0..ds.class_count()).map(|c| c.to_string()).collect();
    ds.with_class_names(names)
}

fn make_synthetic_inner(spec: &SyntheticSpec, seed: u64) -> Result<Dataset> {
    let mut rng = RngStream::new(seed, StreamId::simple(StreamPurpose::Synthetic));
    match *spec {
        SyntheticSpec::Blobs {
            samples,
            dim,
            classes,
            center_box,
            noise,
        } => {
            if samples == 0 || dim == 0 || classes == 0 {
                return Err(Error::invalid("blobs need samples, dim and classes >= 1"));
            }
            if samples < classes {
                return Err(Error::invalid("blobs need at least one sample per class"));
            }
            if !(center_box > 0.0) || noise < 0.0 {
                return Err(Error::invalid("blobs need center_box > 0 and noise >= 0"));
            }
            let mut centers = Vec::with_capacity(classes);
            for _ in 0..classes {
                centers.push(rng.uniform_vec(-center_box, center_box, dim)?);
            }
            let mut x = Matrix::zeros(samples, dim);
            let mut labels = Vec::with_capacity(samples);
            for i in 0..samples {
                let c = i % classes;
                labels.push(c);
                for (v, &m) in x.row_mut(i).iter_mut().zip(&centers[c]) {
                    *v = m + noise * rng.standard_normal();
                }
            }
            Dataset::new(x, labels, classes)
        }
        SyntheticSpec::Moons { samples, dim, noise } => {
            if samples < 2 || dim < 2 {
                return Err(Error::invalid("moons need samples >= 2 and dim >= 2"));
            }
            if noise < 0.0 {
                return Err(Error::invalid("noise must be >= 0"));
            }
            let mut x = Matrix::zeros(samples, dim);
            let mut labels = Vec::with_capacity(samples);
            for i in 0..samples {
                let c = i % 2;
                labels.push(c);
                let t = rng.unit() * std::f64::consts::PI;
                let (mut a, mut b) = if c == 0 {
                    (t.cos(), t.sin())
                } else {
                    (1.0 - t.cos(), 0.5 - t.sin())
                };
                a += noise * rng.standard_normal();
                b += noise * rng.standard_normal();
                let row = x.row_mut(i);
                row[0] = a;
                row[1] = b;
                for v in row.iter_mut().skip(2) {
                    *v = noise * rng.standard_normal();
                }
            }
            Dataset::new(x, labels, 2)
        }
        SyntheticSpec::LayeredXor {
            samples,
            pairs,
            dim,
            margin,
            noise,
        } => {
            if samples == 0 || pairs == 0 {
                return Err(Error::invalid("layered-xor needs samples and pairs >= 1"));
            }
            if dim < 2 * pairs {
                return Err(Error::invalid(format!(
                    "layered-xor with {} pairs needs dim >= {}",
                    pairs,
                    2 * pairs
                )));
            }
            if !(0.0..1.0).contains(&margin) || noise < 0.0 {
                return Err(Error::invalid("layered-xor needs margin in [0, 1) and noise >= 0"));
            }
            let mut x = Matrix::zeros(samples, dim);
            let mut labels = Vec::with_capacity(samples);
            for i in 0..samples {
                let mut parity = 0usize;
                {
                    let row = x.row_mut(i);
                    for p in 0..pairs {
                        let mut prod = 1.0;
                        for off in 0..2 {
                            let u = rng.uniform(-1.0, 1.0)?;
                            let sign = if u < 0.0 { -1.0 } else { 1.0 };
                            let v = sign * (margin + (1.0 - margin) * u.abs());
                            row[2 * p + off] = v;
                            prod *= v;
                        }
                        if prod > 0.0 {
                            parity ^= 1;
                        }
                    }
                    for v in row.iter_mut().skip(2 * pairs) {
                        *v = rng.uniform(-1.0, 1.0)?;
                    }
                }
                labels.push(parity);
                if noise > 0.0 {
                    for v in x.row_mut(i) {
                        *v += noise * rng.standard_normal();
                    }
                }
            }
            Dataset::new(x, labels, 2)
        }
    }
}

// --- GOPM binary matrix format -------------------------------------------
//
// magic "GOPM" | version u32 LE | rows u64 LE | cols u64 LE |
// rows*cols f64 LE, row-major.

pub const GOPM_MAGIC: &[u8; 4] = b"GOPM";
pub const GOPM_VERSION: u32 = 1;

pub fn save_matrix_gopm(path: &Path, m: &Matrix) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(GOPM_MAGIC)?;
    w.write_all(&GOPM_VERSION.to_le_bytes())?;
    w.write_all(&(m.rows() as u64).to_le_bytes())?;
    w.write_all(&(m.cols() as u64).to_le_bytes())?;
    for v in m.data() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_matrix_gopm(path: &Path) -> Result<Matrix> {
    let corrupt = |detail: &str| Error::Parse {
        path: path.display().to_string(),
        location: String::new(),
        detail: detail.to_string(),
    };
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|_| corrupt("truncated header"))?;
    if &magic != GOPM_MAGIC {
        return Err(corrupt("bad magic bytes"));
    }
    let mut b4 = [0u8; 4];
    r.read_exact(&mut b4).map_err(|_| corrupt("truncated header"))?;
    let version = u32::from_le_bytes(b4);
    if version != GOPM_VERSION {
        return Err(corrupt(&format!("unsupported version {}", version)));
    }
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b8).map_err(|_| corrupt("truncated header"))?;
    let rows = u64::from_le_bytes(b8) as usize;
    r.read_exact(&mut b8).map_err(|_| corrupt("truncated header"))?;
    let cols = u64::from_le_bytes(b8) as usize;
    let mut data = Vec::with_capacity(rows * cols);
    for _ in 0..rows * cols {
        r.read_exact(&mut b8).map_err(|_| corrupt("truncated payload"))?;
        data.push(f64::from_le_bytes(b8));
    }
    let mut tail = [0u8; 1];
    if r.read(&mut tail)? != 0 {
        return Err(corrupt("trailing bytes after payload"));
    }
    Matrix::from_vec(rows, cols, data)
}

/// Writes the split manifest CSV: `sample_index,split`.
pub fn write_split_manifest(path: &Path, ds: &Dataset) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "sample_index,split")?;
    for (i, s) in ds.split_assignment().iter().enumerate() {
        writeln!(w, "{},{}", i, s.name())?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Ridge least-squares one-vs-all linear classifier, solved by Gaussian
    /// elimination; the independent separability oracle for the synthetic
    /// generators.
    fn least_squares_accuracy(train: (&Matrix, &[usize]), test: (&Matrix, &[usize]), c: usize) -> f64 {
        let (x, labels) = train;
        let n = x.rows();
        let d = x.cols() + 1; // bias column
        let mut a = vec![vec![0.0f64; d]; d];
        let mut b = vec![vec![0.0f64; c]; d];
        let aug = |row: &[f64], j: usize| if j < row.len() { row[j] } else { 1.0 };
        for r in 0..n {
            let row = x.row(r);
            for i in 0..d {
                for j in 0..d {
                    a[i][j] += aug(row, i) * aug(row, j);
                }
                b[i][labels[r]] += aug(row, i);
            }
        }
        for (i, arow) in a.iter_mut().enumerate() {
            arow[i] += 1e-8;
        }
        // Gaussian elimination with partial pivoting.
        for col in 0..d {
            let mut piv = col;
            for r in col + 1..d {
                if a[r][col].abs() > a[piv][col].abs() {
                    piv = r;
                }
            }
            a.swap(col, piv);
            b.swap(col, piv);
            let diag = a[col][col];
            for r in 0..d {
                if r == col {
                    continue;
                }
                let f = a[r][col] / diag;
                for j in 0..d {
                    a[r][j] -= f * a[col][j];
                }
                for j in 0..c {
                    b[r][j] -= f * b[col][j];
                }
            }
        }
        let w: Vec<Vec<f64>> = (0..d).map(|i| (0..c).map(|j| b[i][j] / a[i][i]).collect()).collect();

        let (xt, lt) = test;
        let mut hits = 0;
        for r in 0..xt.rows() {
            let row = xt.row(r);
            let mut best = (0usize, f64::NEG_INFINITY);
            for j in 0..c {
                let mut score = 0.0;
                for i in 0..d {
                    score += aug(row, i) * w[i][j];
                }
                if score > best.1 {
                    best = (j, score);
                }
            }
            if best.0 == lt[r] {
                hits += 1;
            }
        }
        hits as f64 / xt.rows() as f64
    }

    #[test]
    fn split_counts_are_exact_for_100_samples() {
        let ds = make_synthetic(
            &SyntheticSpec::Blobs {
                samples: 100,
                dim: 3,
                classes: 2,
                center_box: 5.0,
                noise: 1.0,
            },
            7,
        )
        .unwrap();
        let ds = split_dataset(ds, (0.6, 0.2, 0.2), 9).unwrap();
        assert_eq!(ds.indices_of(Split::Train).len(), 60);
        assert_eq!(ds.indices_of(Split::Val).len(), 20);
        assert_eq!(ds.indices_of(Split::Test).len(), 20);
    }

    #[test]
    fn split_is_deterministic_and_partitions() {
        let ds = make_synthetic(
            &SyntheticSpec::Blobs {
                samples: 83,
                dim: 2,
                classes: 3,
                center_box: 4.0,
                noise: 0.5,
            },
            3,
        )
        .unwrap();
        let a = split_dataset(ds.clone(), (0.6, 0.2, 0.2), 11).unwrap();
        let b = split_dataset(ds, (0.6, 0.2, 0.2), 11).unwrap();
        assert_eq!(a.split_assignment(), b.split_assignment());
        let total = a.indices_of(Split::Train).len()
            + a.indices_of(Split::Val).len()
            + a.indices_of(Split::Test).len();
        assert_eq!(total, 83);
    }

    #[test]
    fn stratified_split_keeps_every_class_in_train() {
        let x = Matrix::from_fn(10, 2, |i, j| (i * 2 + j) as f64);
        let labels = vec![0, 0, 0, 0, 0, 1, 1, 1, 1, 1];
        let ds = Dataset::new(x, labels, 2).unwrap();
        let ds = split_dataset(ds, (0.6, 0.2, 0.2), 5).unwrap();
        let train_labels: Vec<usize> = ds
            .indices_of(Split::Train)
            .iter()
            .map(|&i| ds.labels()[i])
            .collect();
        assert!(train_labels.contains(&0));
        assert!(train_labels.contains(&1));
    }

    #[test]
    fn standardized_train_columns_are_centered_unit() {
        let ds = make_synthetic(
            &SyntheticSpec::Blobs {
                samples: 200,
                dim: 4,
                classes: 2,
                center_box: 3.0,
                noise: 2.0,
            },
            17,
        )
        .unwrap();
        let ds = split_dataset(ds, (0.6, 0.2, 0.2), 17).unwrap();
        let stdzr = ds.fit_standardizer();
        let (xtr, _, _) = ds.part(Split::Train);
        let t = stdzr.transform(&xtr).unwrap();
        let means = t.column_means();
        for m in means {
            assert!(m.abs() < 1e-10);
        }
        for c in 0..t.cols() {
            let col = t.column(c);
            let var: f64 = col.iter().map(|v| v * v).sum::<f64>() / col.len() as f64;
            assert!((var.sqrt() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn standardizer_constant_columns_map_to_zero() {
        let x = Matrix::from_rows(&[vec![5.0, 1.0], vec![5.0, 3.0], vec![5.0, 5.0]]).unwrap();
        let s = Standardizer::fit(&x);
        let t = s.transform(&x).unwrap();
        for r in 0..3 {
            assert_eq!(t[(r, 0)], 0.0);
        }
        let mean: f64 = (0..3).map(|r| t[(r, 1)]).sum::<f64>() / 3.0;
        assert!(mean.abs() < 1e-12);
    }

    #[test]
    fn one_hot_rows_sum_to_one() {
        let y = one_hot(&[0, 2, 1, 2], 3);
        for r in 0..4 {
            let sum: f64 = y.row(r).iter().sum();
            assert_eq!(sum, 1.0);
            assert_eq!(y.row(r).iter().filter(|&&v| v == 1.0).count(), 1);
        }
    }

    #[test]
    fn well_separated_blobs_are_linearly_separable() {
        // Separation of ~10 sigma: linear baseline reaches >= 0.99.
        let ds = make_synthetic(
            &SyntheticSpec::Blobs {
                samples: 400,
                dim: 5,
                classes: 2,
                center_box: 5.0,
                noise: 1.0,
            },
            21,
        )
        .unwrap();
        let ds = split_dataset(ds, (0.6, 0.2, 0.2), 21).unwrap();
        let (xtr, _, ltr) = ds.part(Split::Train);
        let (xte, _, lte) = ds.part(Split::Test);
        let acc = least_squares_accuracy((&xtr, &ltr), (&xte, &lte), 2);
        assert!(acc >= 0.99, "linear baseline accuracy {}", acc);
    }

    #[test]
    fn layered_xor_defeats_linear_classifiers() {
        let ds = make_synthetic(
            &SyntheticSpec::LayeredXor {
                samples: 600,
                pairs: 1,
                dim: 2,
                margin: 0.1,
                noise: 0.0,
            },
            23,
        )
        .unwrap();
        let ds = split_dataset(ds, (0.6, 0.2, 0.2), 23).unwrap();
        let (xtr, _, ltr) = ds.part(Split::Train);
        let (xte, _, lte) = ds.part(Split::Test);
        let acc = least_squares_accuracy((&xtr, &ltr), (&xte, &lte), 2);
        assert!(acc <= 0.6, "linear baseline accuracy {}", acc);
    }

    #[test]
    fn synthetic_generation_is_deterministic() {
        let spec = SyntheticSpec::Moons {
            samples: 50,
            dim: 4,
            noise: 0.1,
        };
        let a = make_synthetic(&spec, 31).unwrap();
        let b = make_synthetic(&spec, 31).unwrap();
        assert_eq!(a.features(), b.features());
        assert_eq!(a.labels(), b.labels());
    }

    #[test]
    fn csv_round_trip_and_errors() {
        let dir = tempfile::tempdir().unwrap();

        let good = dir.path().join("good.csv");
        std::fs::write(&good, "f1,f2,label\n1.0,2.0,cat\n3.0,4.0,dog\n5.0,6.0,cat\n").unwrap();
        let ds = load_csv(&good, &CsvSchema::labeled("label")).unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.feature_dim(), 2);
        assert_eq!(ds.labels(), &[0, 1, 0]);
        assert_eq!(ds.class_count(), 2);
        assert_eq!(ds.class_names().unwrap(), &["cat".to_string(), "dog".to_string()]);

        let nan = dir.path().join("nan.csv");
        std::fs::write(&nan, "f1,f2,label\n1.0,2.0,a\n1.0,NaN,b\n").unwrap();
        let err = load_csv(&nan, &CsvSchema::labeled("label")).unwrap_err();
        assert!(err.to_string().contains("row 2"), "{}", err);

        let missing = dir.path().join("missing.csv");
        std::fs::write(&missing, "f1,f2,target\n1.0,2.0,a\n").unwrap();
        let err = load_csv(&missing, &CsvSchema::labeled("label")).unwrap_err();
        assert!(err.to_string().contains("label"), "{}", err);

        let empty = dir.path().join("empty.csv");
        std::fs::write(&empty, "f1,f2,label\n").unwrap();
        assert!(load_csv(&empty, &CsvSchema::labeled("label")).is_err());

        // Extra columns are ignored when the schema selects features.
        let extra = dir.path().join("extra.csv");
        std::fs::write(&extra, "f1,junk,f2,label\n1.0,x,2.0,a\n3.0,y,4.0,b\n").unwrap();
        let schema = CsvSchema {
            label_column: "label".into(),
            feature_columns: Some(vec!["f1".into(), "f2".into()]),
        };
        let ds = load_csv(&extra, &schema).unwrap();
        assert_eq!(ds.feature_dim(), 2);
        assert_eq!(ds.features()[(1, 1)], 4.0);
    }

    #[test]
    fn gopm_round_trip_and_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.gopm");
        let m = Matrix::from_fn(7, 3, |i, j| (i as f64) * 0.37 - (j as f64) * 1.21);
        save_matrix_gopm(&path, &m).unwrap();
        let back = load_matrix_gopm(&path).unwrap();
        assert_eq!(m, back);

        // Truncation is reported as corruption.
        let bytes = std::fs::read(&path).unwrap();
        let cut = dir.path().join("cut.gopm");
        std::fs::write(&cut, &bytes[..bytes.len() - 5]).unwrap();
        assert!(matches!(load_matrix_gopm(&cut), Err(Error::Parse { .. })));

        let bad = dir.path().join("bad.gopm");
        let mut f = std::fs::File::create(&bad).unwrap();
        f.write_all(b"NOPE").unwrap();
        assert!(load_matrix_gopm(&bad).is_err());
    }

    #[test]
    fn split_manifest_lists_every_sample() {
        let dir = tempfile::tempdir().unwrap();
        let ds = make_synthetic(
            &SyntheticSpec::Blobs {
                samples: 10,
                dim: 2,
                classes: 2,
                center_box: 1.0,
                noise: 0.1,
            },
            1,
        )
        .unwrap();
        let ds = split_dataset(ds, (0.6, 0.2, 0.2), 2).unwrap();
        let path = dir.path().join("split.csv");
        write_split_manifest(&path, &ds).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 11);
        assert!(text.starts_with("sample_index,split\n"));
    }
}
