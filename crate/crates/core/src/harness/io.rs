//! CSV ingestion and export.
//!
//! Files are UTF-8 with a header row and comma separators. One column is the
//! response, an optional column holds a group label (e.g. a day for Hit-k),
//! and every other column must be numeric and becomes a covariate.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2, Axis};

use crate::error::{Error, Result};
use crate::model::Dataset;

#[derive(Debug, Clone, PartialEq)]
pub struct LoadOptions {
    pub target: String,
    pub add_intercept: bool,
    pub standardize: bool,
    /// Column statistics to standardize with instead of fitting them on this
    /// file, e.g. the training set's statistics when loading a test set.
    pub scaling: Option<Standardizer>,
    pub group_column: Option<String>,
}

impl LoadOptions {
    pub fn new(target: impl Into<String>) -> Self {
        Self { target: target.into(), add_intercept: false, standardize: false, scaling: None, group_column: None }
    }
}

#[derive(Debug, Clone)]
pub struct LoadedData {
    pub dataset: Dataset,
    /// Covariate names in column order, including `intercept` when added.
    pub columns: Vec<String>,
    pub groups: Option<Vec<String>>,
    /// Statistics used when `standardize` was requested.
    pub scaling: Option<Standardizer>,
}

pub fn load_csv(path: impl AsRef<Path>, opts: &LoadOptions) -> Result<LoadedData> {
    read_csv(File::open(path)?, opts)
}

pub fn read_csv<R: Read>(input: R, opts: &LoadOptions) -> Result<LoadedData> {
    let mut reader = csv::ReaderBuilder::new().flexible(true).trim(csv::Trim::All).from_reader(input);
    let header: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    if header.iter().all(String::is_empty) {
        return Err(Error::invalid("CSV input is empty"));
    }
    let find = |name: &str| header.iter().position(|h| h == name);
    let target = find(&opts.target)
        .ok_or_else(|| Error::invalid(format!("target column '{}' not found in header", opts.target)))?;
    let group = match &opts.group_column {
        Some(g) => Some(find(g).ok_or_else(|| Error::invalid(format!("group column '{g}' not found in header")))?),
        None => None,
    };
    let covariates: Vec<usize> = (0..header.len()).filter(|&j| j != target && Some(j) != group).collect();
    if covariates.is_empty() && !opts.add_intercept {
        return Err(Error::invalid("no covariate columns besides the target"));
    }

    let mut values = Vec::new();
    let mut y = Vec::new();
    let mut groups = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != header.len() {
            return Err(Error::Parse {
                line,
                message: format!("expected {} fields, found {}", header.len(), record.len()),
            });
        }
        let cell = |j: usize| -> Result<f64> {
            let raw = &record[j];
            if raw.is_empty() {
                return Err(Error::Parse { line, message: format!("missing value in column '{}'", header[j]) });
            }
            let v: f64 = raw.parse().map_err(|_| Error::Parse {
                line,
                message: format!("non-numeric value '{raw}' in column '{}'", header[j]),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse { line, message: format!("non-finite value in column '{}'", header[j]) });
            }
            Ok(v)
        };
        for &j in &covariates {
            values.push(cell(j)?);
        }
        y.push(cell(target)?);
        if let Some(g) = group {
            groups.push(record[g].to_owned());
        }
    }
    if y.is_empty() {
        return Err(Error::invalid("CSV input has a header but no data rows"));
    }

    let mut x = Array2::from_shape_vec((y.len(), covariates.len()), values).expect("row lengths checked");
    let scaling = if opts.standardize {
        let s = match &opts.scaling {
            Some(s) if s.mean.len() != x.ncols() => {
                return Err(Error::invalid(format!(
                    "scaling has {} columns but the data has {}",
                    s.mean.len(),
                    x.ncols()
                )));
            }
            Some(s) => s.clone(),
            None => Standardizer::fit(&x),
        };
        s.apply(&mut x);
        Some(s)
    } else {
        None
    };
    let mut columns: Vec<String> = covariates.iter().map(|&j| header[j].clone()).collect();
    if opts.add_intercept {
        x.push_column(Array1::ones(y.len()).view()).expect("row count matches");
        columns.push("intercept".to_owned());
    }
    Ok(LoadedData { dataset: Dataset::new(x, Array1::from(y))?, columns, groups: group.map(|_| groups), scaling })
}

/// Per-column centering and scaling. Constant columns get scale 1, so they
/// are only centered.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    /// Column means and sample standard deviations of `x`.
    pub fn fit(x: &Array2<f64>) -> Self {
        let n = x.nrows() as f64;
        let (mut mean, mut scale) = (Vec::new(), Vec::new());
        for col in x.axis_iter(Axis(1)) {
            let m = col.sum() / n;
            let ss: f64 = col.iter().map(|v| (v - m) * (v - m)).sum();
            let sd = if n > 1.0 { (ss / (n - 1.0)).sqrt() } else { 0.0 };
            mean.push(m);
            scale.push(if sd > 0.0 { sd } else { 1.0 });
        }
        Self { mean, scale }
    }

    pub fn apply(&self, x: &mut Array2<f64>) {
        for (j, mut col) in x.axis_iter_mut(Axis(1)).enumerate() {
            let (m, s) = (self.mean[j], self.scale[j]);
            col.mapv_inplace(|v| (v - m) / s);
        }
    }
}

/// Centers every column and scales it to unit sample standard deviation.
pub fn standardize_columns(x: &mut Array2<f64>) {
    Standardizer::fit(x).apply(x);
}

/// Writes `x1..xp` and the target column. Values use Rust's shortest
/// round-trip formatting, so a reload is bit-identical.
pub fn write_csv<W: Write>(data: &Dataset, target: &str, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = (1..=data.p()).map(|j| format!("x{j}")).collect();
    header.push(target.to_owned());
    w.write_record(&header)?;
    let mut row = Vec::with_capacity(data.p() + 1);
    for (xr, yv) in data.x().rows().into_iter().zip(data.y()) {
        row.clear();
        row.extend(xr.iter().map(|v| v.to_string()));
        row.push(yv.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_csv(path: impl AsRef<Path>, data: &Dataset, target: &str) -> Result<()> {
    write_csv(data, target, std::io::BufWriter::new(File::create(path)?))
}
