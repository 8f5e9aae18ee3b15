//! Dataset representation, CSV ingestion, projection and standardisation.
//!
//! A [`Dataset`] is a dense, row-major `n x d` matrix of finite reals plus
//! row identities, optional ground-truth outlier labels and an optional
//! categorical class column. It is immutable once built; every transform
//! returns a new dataset.

use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    values: Vec<f64>,
    n: usize,
    d: usize,
    feature_names: Vec<String>,
    row_ids: Vec<String>,
    labels: Option<Vec<bool>>,
    class_col: Option<Vec<String>>,
}

impl Dataset {
    /// Builds a dataset from row vectors. Row ids default to `0..n`, feature
    /// names to `f0..f{d-1}`.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let d = rows.first().map_or(0, Vec::len);
        let mut values = Vec::with_capacity(n * d);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != d {
                return Err(Error::Ragged {
                    row: i,
                    found: row.len(),
                    expected: d,
                });
            }
            values.extend_from_slice(row);
        }
        Self::from_row_major(n, d, values)
    }

    pub fn from_row_major(n: usize, d: usize, values: Vec<f64>) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(Error::InvalidDataset(format!(
                "need at least one row and one feature, got {n}x{d}"
            )));
        }
        if values.len() != n * d {
            return Err(Error::DimensionMismatch {
                left: values.len(),
                right: n * d,
            });
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                row: pos / d,
                column: format!("f{}", pos % d),
                value: values[pos].to_string(),
            });
        }
        Ok(Dataset {
            values,
            n,
            d,
            feature_names: (0..d).map(|j| format!("f{j}")).collect(),
            row_ids: (0..n).map(|i| i.to_string()).collect(),
            labels: None,
            class_col: None,
        })
    }

    pub fn with_labels(mut self, labels: Vec<bool>) -> Result<Self> {
        self.check_len("labels", labels.len())?;
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn with_class_column(mut self, classes: Vec<String>) -> Result<Self> {
        self.check_len("class column", classes.len())?;
        self.class_col = Some(classes);
        Ok(self)
    }

    pub fn with_row_ids(mut self, ids: Vec<String>) -> Result<Self> {
        self.check_len("row ids", ids.len())?;
        let mut seen = HashSet::with_capacity(ids.len());
        if let Some(dup) = ids.iter().find(|id| !seen.insert(id.as_str())) {
            return Err(Error::InvalidDataset(format!("duplicate row id {dup:?}")));
        }
        self.row_ids = ids;
        Ok(self)
    }

    pub fn with_feature_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.d {
            return Err(Error::DimensionMismatch {
                left: names.len(),
                right: self.d,
            });
        }
        self.feature_names = names;
        Ok(self)
    }

    fn check_len(&self, what: &str, len: usize) -> Result<()> {
        if len != self.n {
            return Err(Error::InvalidDataset(format!(
                "{what} has length {len}, dataset has {} rows",
                self.n
            )));
        }
        Ok(())
    }

    pub fn n_rows(&self) -> usize {
        self.n
    }

    pub fn n_features(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.d..(i + 1) * self.d]
    }

    #[inline]
    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.d + j]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.value(i, j)).collect()
    }

    /// Row-major backing storage.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.d)
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn row_ids(&self) -> &[String] {
        &self.row_ids
    }

    pub fn labels(&self) -> Option<&[bool]> {
        self.labels.as_deref()
    }

    pub fn class_column(&self) -> Option<&[String]> {
        self.class_col.as_deref()
    }

    pub fn full_subspace(&self) -> Subspace {
        Subspace::full(self.d)
    }

    /// Keeps only the columns of `sub`, in order. Rows, ids, labels and
    /// classes are carried over untouched.
    pub fn project(&self, sub: &Subspace) -> Result<Dataset> {
        sub.check(self.d)?;
        let f = sub.features();
        let mut values = Vec::with_capacity(self.n * f.len());
        for row in self.rows() {
            values.extend(f.iter().map(|&j| row[j]));
        }
        Ok(Dataset {
            values,
            n: self.n,
            d: f.len(),
            feature_names: f.iter().map(|&j| self.feature_names[j].clone()).collect(),
            row_ids: self.row_ids.clone(),
            labels: self.labels.clone(),
            class_col: self.class_col.clone(),
        })
    }

    /// Z-scores every column using the population (1/n) variance. Constant
    /// columns become all zeros.
    pub fn standardize(&self) -> Dataset {
        let n = self.n as f64;
        let mut out = self.clone();
        for j in 0..self.d {
            let mean = self.rows().map(|r| r[j]).sum::<f64>() / n;
            let var = self.rows().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n;
            let sd = var.sqrt();
            for i in 0..self.n {
                let v = &mut out.values[i * self.d + j];
                *v = if sd > 0.0 { (*v - mean) / sd } else { 0.0 };
            }
        }
        out
    }

    pub(crate) fn replace_values(&self, values: Vec<f64>) -> Dataset {
        debug_assert_eq!(values.len(), self.values.len());
        Dataset {
            values,
            ..self.clone()
        }
    }
}

/// An ordered, duplicate-free set of feature indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Subspace(Vec<usize>);

impl Subspace {
    /// Sorts the indices; rejects empty input and duplicates.
    pub fn new(mut features: Vec<usize>) -> Result<Self> {
        if features.is_empty() {
            return Err(Error::InvalidSubspace("subspace is empty".into()));
        }
        features.sort_unstable();
        if let Some(w) = features.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::InvalidSubspace(format!(
                "feature {} listed twice",
                w[0]
            )));
        }
        Ok(Subspace(features))
    }

    pub fn full(d: usize) -> Self {
        Subspace((0..d).collect())
    }

    pub fn features(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, feature: usize) -> bool {
        self.0.binary_search(&feature).is_ok()
    }

    /// Errors if any index is outside `[0, d)`.
    pub fn check(&self, d: usize) -> Result<()> {
        match self.0.last() {
            Some(&last) if last >= d => Err(Error::InvalidSubspace(format!(
                "feature index {last} out of range for {d} features"
            ))),
            _ => Ok(()),
        }
    }

    /// Appends a feature larger than every current one.
    pub(crate) fn extended(&self, feature: usize) -> Subspace {
        debug_assert!(self.0.last().is_none_or(|&l| l < feature));
        let mut f = self.0.clone();
        f.push(feature);
        Subspace(f)
    }
}

impl fmt::Display for Subspace {
    /// `i|j|k`
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (pos, j) in self.0.iter().enumerate() {
            if pos > 0 {
                f.write_str("|")?;
            }
            write!(f, "{j}")?;
        }
        Ok(())
    }
}

/// Formats a real with 17 significant digits, enough to round-trip an f64.
pub fn fmt_real(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        x.to_string()
    }
}

#[derive(Debug, Clone, Default)]
pub struct CsvOptions {
    pub has_header: bool,
    /// Column holding outlier labels (`0/1` or `true/false`).
    pub label_column: Option<String>,
    pub class_column: Option<String>,
    pub id_column: Option<String>,
    /// When set, a named label/class column that is absent from the header is
    /// silently skipped instead of being an error.
    pub optional_columns: bool,
}

impl CsvOptions {
    pub fn with_header() -> Self {
        CsvOptions {
            has_header: true,
            ..Default::default()
        }
    }
}

pub fn load_csv(path: impl AsRef<Path>, opts: &CsvOptions) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(BufReader::new(file), opts)
}

/// Without a header, columns are named by their 0-based position, so
/// `label_column: Some("3")` selects the fourth column.
pub fn read_csv<R: Read>(reader: R, opts: &CsvOptions) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(opts.has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let header: Vec<String> = if opts.has_header {
        rdr.headers()?.iter().map(str::to_string).collect()
    } else {
        Vec::new()
    };
    let raw = rdr
        .records()
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let width = if opts.has_header {
        header.len()
    } else {
        raw.first().map_or(0, |r| r.len())
    };
    let names: Vec<String> = if opts.has_header {
        header
    } else {
        (0..width).map(|j| j.to_string()).collect()
    };

    let find = |name: &Option<String>| -> Result<Option<usize>> {
        match name {
            None => Ok(None),
            Some(n) => match names.iter().position(|h| h == n) {
                Some(p) => Ok(Some(p)),
                None if opts.optional_columns => Ok(None),
                None => Err(Error::MissingColumn(n.clone())),
            },
        }
    };
    let label_idx = find(&opts.label_column)?;
    let class_idx = find(&opts.class_column)?;
    let id_idx = find(&opts.id_column)?;
    let feature_idx: Vec<usize> = (0..width)
        .filter(|j| Some(*j) != label_idx && Some(*j) != class_idx && Some(*j) != id_idx)
        .collect();

    let data_row = |i: usize| if opts.has_header { i + 2 } else { i + 1 };
    let mut values = Vec::with_capacity(raw.len() * feature_idx.len());
    let mut labels = label_idx.map(|_| Vec::with_capacity(raw.len()));
    let mut classes = class_idx.map(|_| Vec::with_capacity(raw.len()));
    let mut ids = id_idx.map(|_| Vec::with_capacity(raw.len()));

    for (i, rec) in raw.iter().enumerate() {
        if rec.len() != width {
            return Err(Error::Ragged {
                row: data_row(i),
                found: rec.len(),
                expected: width,
            });
        }
        for &j in &feature_idx {
            let cell = &rec[j];
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                row: data_row(i),
                column: names[j].clone(),
                value: cell.to_string(),
            })?;
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    row: data_row(i),
                    column: names[j].clone(),
                    value: cell.to_string(),
                });
            }
            values.push(v);
        }
        if let (Some(j), Some(l)) = (label_idx, labels.as_mut()) {
            l.push(parse_label(&rec[j]).ok_or_else(|| Error::BadLabel {
                row: data_row(i),
                column: names[j].clone(),
                value: rec[j].to_string(),
            })?);
        }
        if let (Some(j), Some(c)) = (class_idx, classes.as_mut()) {
            c.push(rec[j].to_string());
        }
        if let (Some(j), Some(v)) = (id_idx, ids.as_mut()) {
            v.push(rec[j].to_string());
        }
    }

    let mut ds = Dataset::from_row_major(raw.len(), feature_idx.len(), values)?
        .with_feature_names(feature_idx.iter().map(|&j| names[j].clone()).collect())?;
    if let Some(l) = labels {
        ds = ds.with_labels(l)?;
    }
    if let Some(c) = classes {
        ds = ds.with_class_column(c)?;
    }
    if let Some(v) = ids {
        ds = ds.with_row_ids(v)?;
    }
    Ok(ds)
}

fn parse_label(s: &str) -> Option<bool> {
    match s.to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" | "1.0" => Some(true),
        "0" | "false" | "no" | "0.0" => Some(false),
        _ => None,
    }
}

/// Writes features (17 significant digits), then `outlier` (0/1) and `class`
/// columns when present. `id` is written first only when the row ids differ
/// from the default `0..n`.
pub fn write_csv<W: Write>(data: &Dataset, writer: W) -> Result<()> {
    write_csv_named(data, writer, "outlier", "class")
}

pub fn write_csv_named<W: Write>(
    data: &Dataset,
    writer: W,
    label_name: &str,
    class_name: &str,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let custom_ids = data
        .row_ids
        .iter()
        .enumerate()
        .any(|(i, id)| *id != i.to_string());
    let mut header: Vec<&str> = Vec::new();
    if custom_ids {
        header.push("id");
    }
    header.extend(data.feature_names.iter().map(String::as_str));
    if data.labels.is_some() {
        header.push(label_name);
    }
    if data.class_col.is_some() {
        header.push(class_name);
    }
    w.write_record(&header)?;
    let mut rec: Vec<String> = Vec::with_capacity(header.len());
    for i in 0..data.n {
        rec.clear();
        if custom_ids {
            rec.push(data.row_ids[i].clone());
        }
        rec.extend(data.row(i).iter().map(|&v| fmt_real(v)));
        if let Some(l) = &data.labels {
            rec.push(if l[i] { "1" } else { "0" }.to_string());
        }
        if let Some(c) = &data.class_col {
            rec.push(c[i].clone());
        }
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io("<csv output>", e))?;
    Ok(())
}

pub fn save_csv(data: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    write_csv(data, BufWriter::new(f))
}

/// Reads a JSON array of arrays of 0-based feature indices, validated
/// against `d` features.
pub fn read_subspaces_json(path: impl AsRef<Path>, d: usize) -> Result<Vec<Subspace>> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let raw: Vec<Vec<usize>> = serde_json::from_reader(BufReader::new(f))?;
    parse_subspaces(raw, d)
}

pub fn parse_subspaces(raw: Vec<Vec<usize>>, d: usize) -> Result<Vec<Subspace>> {
    raw.into_iter()
        .map(|f| {
            let s = Subspace::new(f)?;
            s.check(d)?;
            Ok(s)
        })
        .collect()
}

pub fn write_subspaces_json<W: Write>(subspaces: &[Subspace], writer: W) -> Result<()> {
    let raw: Vec<&[usize]> = subspaces.iter().map(Subspace::features).collect();
    serde_json::to_writer(writer, &raw)?;
    Ok(())
}
