//! Time-series collections with their loaders and per-series z-normalisation.
//!
//! Values are stored as one flat buffer of `M × n_max × d` doubles, timestep
//! major within each series. Series shorter than `n_max` are zero-padded and
//! the padding is tracked through `lengths` (the observation mask is
//! `t < lengths[i]`).

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Standard deviations at or below this are treated as constant series.
pub const STD_EPSILON: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    /// One univariate series per line, tab separated, label in column 0.
    UcrTsv,
    /// `series_id,dim,t,value[,label]` with a header row.
    CsvLong,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ucr_tsv" | "ucr-tsv" | "tsv" => Ok(Format::UcrTsv),
            "csv_long" | "csv-long" | "csv" => Ok(Format::CsvLong),
            other => Err(Error::Config(format!("unknown dataset format {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesDataset {
    name: String,
    ids: Vec<String>,
    values: Vec<f64>,
    lengths: Vec<usize>,
    n_max: usize,
    dim: usize,
    labels: Option<Vec<usize>>,
    classes: Vec<String>,
}

impl TimeSeriesDataset {
    /// Builds a dataset from per-series observations.
    ///
    /// `series[i]` holds `len_i × dim` values, timestep major. Labels are
    /// class tokens; they are mapped to `0..#classes` in first-appearance order.
    pub fn from_series(
        name: impl Into<String>,
        dim: usize,
        ids: Vec<String>,
        series: Vec<Vec<f64>>,
        labels: Option<Vec<String>>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Shape("dimension must be at least 1".into()));
        }
        if series.len() < 2 {
            return Err(Error::Shape(format!(
                "need at least 2 series, got {}",
                series.len()
            )));
        }
        if ids.len() != series.len() {
            return Err(Error::Shape(format!(
                "{} ids for {} series",
                ids.len(),
                series.len()
            )));
        }
        let mut lengths = Vec::with_capacity(series.len());
        for (i, s) in series.iter().enumerate() {
            if s.len() % dim != 0 {
                return Err(Error::Shape(format!(
                    "series {i} has {} values, not a multiple of dim {dim}",
                    s.len()
                )));
            }
            let len = s.len() / dim;
            if len < 2 {
                return Err(Error::Shape(format!(
                    "series {i} has {len} timesteps, need at least 2"
                )));
            }
            if let Some(v) = s.iter().find(|v| !v.is_finite()) {
                return Err(Error::Validation(format!("series {i} contains {v}")));
            }
            lengths.push(len);
        }
        let n_max = lengths.iter().copied().max().unwrap_or(0);
        let stride = n_max * dim;
        let mut values = vec![0.0; series.len() * stride];
        for (i, s) in series.iter().enumerate() {
            values[i * stride..i * stride + s.len()].copy_from_slice(s);
        }

        let (labels, classes) = match labels {
            None => (None, Vec::new()),
            Some(tokens) => {
                if tokens.len() != series.len() {
                    return Err(Error::Shape(format!(
                        "{} labels for {} series",
                        tokens.len(),
                        series.len()
                    )));
                }
                let mut classes: Vec<String> = Vec::new();
                let mut index: HashMap<String, usize> = HashMap::new();
                let labels = tokens
                    .into_iter()
                    .map(|t| {
                        *index.entry(t.clone()).or_insert_with(|| {
                            classes.push(t);
                            classes.len() - 1
                        })
                    })
                    .collect();
                (Some(labels), classes)
            }
        };

        Ok(Self {
            name: name.into(),
            ids,
            values,
            lengths,
            n_max,
            dim,
            labels,
            classes,
        })
    }

    /// Univariate, equal-length convenience constructor with numbered ids.
    pub fn from_rows(
        name: impl Into<String>,
        rows: Vec<Vec<f64>>,
        labels: Option<Vec<String>>,
    ) -> Result<Self> {
        let ids = (0..rows.len()).map(|i| i.to_string()).collect();
        Self::from_series(name, 1, ids, rows, labels)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.lengths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lengths.is_empty()
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lengths(&self) -> &[usize] {
        &self.lengths
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn class_count(&self) -> Option<usize> {
        self.labels.as_ref().map(|_| self.classes.len())
    }

    /// The full padded flat buffer (`M × n_max × d`).
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Padded series `i`, `n_max × d` values.
    pub fn series(&self, i: usize) -> &[f64] {
        let stride = self.n_max * self.dim;
        &self.values[i * stride..(i + 1) * stride]
    }

    /// Observed prefix of series `i`, `lengths[i] × d` values.
    pub fn observed(&self, i: usize) -> &[f64] {
        &self.series(i)[..self.lengths[i] * self.dim]
    }

    pub fn value(&self, i: usize, t: usize, k: usize) -> f64 {
        self.series(i)[t * self.dim + k]
    }

    pub fn is_observed(&self, i: usize, t: usize) -> bool {
        t < self.lengths[i]
    }

    /// Boolean `M × n_max` observation mask.
    pub fn mask(&self) -> Vec<Vec<bool>> {
        self.lengths
            .iter()
            .map(|&len| (0..self.n_max).map(|t| t < len).collect())
            .collect()
    }

    /// Rows of the padded flat representation (length `n_max · d` each), as
    /// used by raw-series distances.
    pub fn flattened_rows(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|i| self.series(i).to_vec()).collect()
    }

    /// Returns a copy padded (with masked zeros) to a longer `n_max`.
    pub fn padded_to(&self, n_max: usize) -> Result<Self> {
        if n_max < self.n_max {
            return Err(Error::Shape(format!(
                "cannot pad length {} down to {n_max}",
                self.n_max
            )));
        }
        let old = self.n_max * self.dim;
        let new = n_max * self.dim;
        let mut values = vec![0.0; self.len() * new];
        for i in 0..self.len() {
            values[i * new..i * new + old].copy_from_slice(self.series(i));
        }
        Ok(Self {
            values,
            n_max,
            ..self.clone()
        })
    }

    /// Per-series, per-dimension z-normalisation over observed timesteps.
    ///
    /// Population standard deviation; slices with std ≤ [`STD_EPSILON`] are
    /// only mean-centred. Padding stays at zero.
    pub fn z_normalize(&self) -> Self {
        let mut out = self.clone();
        let stride = self.n_max * self.dim;
        for i in 0..self.len() {
            let len = self.lengths[i];
            let s = &mut out.values[i * stride..(i + 1) * stride];
            for k in 0..self.dim {
                let mean = (0..len).map(|t| s[t * self.dim + k]).sum::<f64>() / len as f64;
                let var = (0..len)
                    .map(|t| {
                        let c = s[t * self.dim + k] - mean;
                        c * c
                    })
                    .sum::<f64>()
                    / len as f64;
                let std = var.sqrt();
                for t in 0..len {
                    let v = &mut s[t * self.dim + k];
                    *v -= mean;
                    if std > STD_EPSILON {
                        *v /= std;
                    }
                }
            }
        }
        out
    }

    /// Concatenates `test` after `self`; class vocabularies are unioned by token.
    pub fn merge(&self, test: &TimeSeriesDataset) -> Result<Self> {
        if self.dim != test.dim {
            return Err(Error::Shape(format!(
                "cannot merge dimension {} with dimension {}",
                self.dim, test.dim
            )));
        }
        let (labels, classes) = match (&self.labels, &test.labels) {
            (None, None) => (None, Vec::new()),
            (Some(a), Some(b)) => {
                let mut classes = self.classes.clone();
                let mut remap = Vec::with_capacity(test.classes.len());
                for c in &test.classes {
                    let id = match classes.iter().position(|x| x == c) {
                        Some(p) => p,
                        None => {
                            classes.push(c.clone());
                            classes.len() - 1
                        }
                    };
                    remap.push(id);
                }
                let mut labels = a.clone();
                labels.extend(b.iter().map(|&l| remap[l]));
                (Some(labels), classes)
            }
            _ => {
                return Err(Error::Shape(
                    "cannot merge a labelled dataset with an unlabelled one".into(),
                ))
            }
        };

        let n_max = self.n_max.max(test.n_max);
        let a = self.padded_to(n_max)?;
        let b = test.padded_to(n_max)?;
        let mut values = a.values;
        values.extend_from_slice(&b.values);
        let mut lengths = self.lengths.clone();
        lengths.extend_from_slice(&test.lengths);

        let mut ids = self.ids.clone();
        let clash = test.ids.iter().any(|id| self.ids.contains(id));
        ids.extend(test.ids.iter().map(|id| {
            if clash {
                format!("test/{id}")
            } else {
                id.clone()
            }
        }));

        Ok(Self {
            name: self.name.clone(),
            ids,
            values,
            lengths,
            n_max,
            dim: self.dim,
            labels,
            classes,
        })
    }

    /// Writes the canonical `csv_long` form (series in dataset order, then t, then dim).
    pub fn write_csv_long(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_csv_long_to(&mut w)
            .map_err(|e| Error::io(path, e))
    }

    fn write_csv_long_to<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        let labelled = self.labels.is_some();
        if labelled {
            writeln!(w, "series_id,dim,t,value,label")?;
        } else {
            writeln!(w, "series_id,dim,t,value")?;
        }
        for i in 0..self.len() {
            for t in 0..self.lengths[i] {
                for k in 0..self.dim {
                    let v = self.value(i, t, k);
                    match &self.labels {
                        Some(l) => writeln!(
                            w,
                            "{},{k},{t},{v:?},{}",
                            self.ids[i], self.classes[l[i]]
                        )?,
                        None => writeln!(w, "{},{k},{t},{v:?}", self.ids[i])?,
                    }
                }
            }
        }
        w.flush()
    }
}

/// Loads a dataset file; no normalisation is applied.
pub fn load_dataset(path: &Path, format: Format) -> Result<TimeSeriesDataset> {
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("dataset");
    let name = ["_TRAIN", "_TEST"]
        .iter()
        .find_map(|sfx| stem.strip_suffix(sfx))
        .filter(|s| !s.is_empty())
        .unwrap_or(stem)
        .to_string();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    match format {
        Format::UcrTsv => parse_ucr_tsv(&name, &text),
        Format::CsvLong => parse_csv_long(&name, &text),
    }
}

fn parse_f64(field: &str, line: usize) -> Result<f64> {
    field.trim().parse::<f64>().map_err(|_| Error::Parse {
        line,
        message: format!("non-numeric value {field:?}"),
    })
}

/// Canonical token for a numeric class label, so `1`, `1.0` and `1e0` agree.
fn label_token(field: &str, line: usize) -> Result<String> {
    let v = parse_f64(field, line)?;
    if !v.is_finite() {
        return Err(Error::Parse {
            line,
            message: format!("label {field:?} is not finite"),
        });
    }
    // -0 and 0 are the same class.
    Ok(format!("{}", v + 0.0))
}

pub fn parse_ucr_tsv(name: &str, text: &str) -> Result<TimeSeriesDataset> {
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    let mut width = None;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim_end_matches(['\r', '\n']);
        if trimmed.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = trimmed.split('\t').collect();
        match width {
            None => {
                if fields.len() < 3 {
                    return Err(Error::Parse {
                        line,
                        message: format!(
                            "expected a label and at least 2 values, got {} columns",
                            fields.len()
                        ),
                    });
                }
                width = Some(fields.len());
            }
            Some(w) if w != fields.len() => {
                return Err(Error::Parse {
                    line,
                    message: format!("expected {w} columns, got {}", fields.len()),
                })
            }
            _ => {}
        }
        labels.push(label_token(fields[0], line)?);
        let values = fields[1..]
            .iter()
            .map(|f| parse_f64(f, line))
            .collect::<Result<Vec<f64>>>()?;
        // Variable-length UCR files pad the tail with NaN.
        let len = values
            .iter()
            .rposition(|v| !v.is_nan())
            .map_or(0, |p| p + 1);
        if values[..len].iter().any(|v| !v.is_finite()) {
            return Err(Error::Parse {
                line,
                message: "missing or infinite value inside the series".into(),
            });
        }
        rows.push(values[..len].to_vec());
    }
    if rows.len() < 2 {
        return Err(Error::Shape(format!(
            "need at least 2 series, got {}",
            rows.len()
        )));
    }
    TimeSeriesDataset::from_rows(name, rows, Some(labels))
}

#[derive(Default)]
struct LongSeries {
    cells: BTreeMap<(usize, usize), f64>,
    label: Option<String>,
}

pub fn parse_csv_long(name: &str, text: &str) -> Result<TimeSeriesDataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let labelled = match header.as_slice() {
        [a, b, c, d] if [a, b, c, d] == ["series_id", "dim", "t", "value"] => false,
        [a, b, c, d, e] if [a, b, c, d, e] == ["series_id", "dim", "t", "value", "label"] => true,
        _ => {
            return Err(Error::Parse {
                line: 1,
                message: format!("unexpected header {header:?}"),
            })
        }
    };
    let columns = header.len();

    let mut series: HashMap<String, LongSeries> = HashMap::new();
    let mut dim = 0usize;
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != columns {
            return Err(Error::Parse {
                line,
                message: format!("expected {columns} columns, got {}", record.len()),
            });
        }
        let index = |s: &str, what: &str| {
            s.parse::<usize>().map_err(|_| Error::Parse {
                line,
                message: format!("invalid {what} {s:?}"),
            })
        };
        let id = record[0].to_string();
        let k = index(&record[1], "dim")?;
        let t = index(&record[2], "t")?;
        let v = parse_f64(&record[3], line)?;
        if !v.is_finite() {
            return Err(Error::Parse {
                line,
                message: format!("non-finite value {:?}", &record[3]),
            });
        }
        let entry = series.entry(id.clone()).or_default();
        if entry.cells.insert((t, k), v).is_some() {
            return Err(Error::Parse {
                line,
                message: format!("duplicate cell (series {id}, dim {k}, t {t})"),
            });
        }
        if labelled {
            let label = record[4].to_string();
            match &entry.label {
                None => entry.label = Some(label),
                Some(prev) if *prev != label => {
                    return Err(Error::Parse {
                        line,
                        message: format!("series {id} has labels {prev:?} and {label:?}"),
                    })
                }
                _ => {}
            }
        }
        dim = dim.max(k + 1);
    }
    if series.len() < 2 {
        return Err(Error::Shape(format!(
            "need at least 2 series, got {}",
            series.len()
        )));
    }

    let mut keys: Vec<String> = series.keys().cloned().collect();
    let numeric: Option<Vec<i64>> = keys.iter().map(|k| k.parse::<i64>().ok()).collect();
    if numeric.is_some() {
        keys.sort_by_key(|k| k.parse::<i64>().unwrap_or_default());
    } else {
        keys.sort();
    }

    let mut ids = Vec::with_capacity(keys.len());
    let mut rows = Vec::with_capacity(keys.len());
    let mut labels = Vec::with_capacity(keys.len());
    for key in keys {
        let s = series.remove(&key).unwrap_or_default();
        let len = s.cells.keys().map(|&(t, _)| t + 1).max().unwrap_or(0);
        if s.cells.len() != len * dim {
            return Err(Error::Parse {
                line: 0,
                message: format!(
                    "series {key} is missing cells: has {} of {len}×{dim}",
                    s.cells.len()
                ),
            });
        }
        // BTreeMap order is (t, k), i.e. timestep major.
        rows.push(s.cells.into_values().collect());
        labels.push(s.label.unwrap_or_default());
        ids.push(key);
    }
    TimeSeriesDataset::from_series(name, dim, ids, rows, labelled.then_some(labels))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn approx(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn z_normalize_small_series() {
        let ds = TimeSeriesDataset::from_rows("t", vec![vec![2.0, 4.0, 6.0], vec![5.0, 5.0, 5.0]], None)
            .unwrap()
            .z_normalize();
        let a = ds.observed(0);
        assert!(approx(a[0], -1.2247, 1e-4));
        assert!(approx(a[1], 0.0, 1e-12));
        assert!(approx(a[2], 1.2247, 1e-4));
        assert_eq!(ds.observed(1), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn z_normalize_is_idempotent() {
        let ds = TimeSeriesDataset::from_rows(
            "t",
            vec![vec![1.0, 3.0, -2.0, 8.0], vec![0.5, 0.25, 4.0, 1.0]],
            None,
        )
        .unwrap()
        .z_normalize();
        let again = ds.z_normalize();
        for (a, b) in ds.values().iter().zip(again.values()) {
            assert!(approx(*a, *b, 1e-9));
        }
    }

    #[test]
    fn ucr_tsv_basic() {
        let text = "1\t0.5\t1.5\t2.5\n2\t3.0\t4.0\t5.0\n1.0\t3.0\t4.0\t5.0\n";
        let ds = parse_ucr_tsv("x", text).unwrap();
        assert_eq!((ds.len(), ds.n_max(), ds.dim()), (3, 3, 1));
        assert_eq!(ds.labels().unwrap(), &[0, 1, 0]);
        assert_eq!(ds.classes(), &["1".to_string(), "2".to_string()]);
    }

    #[test]
    fn ucr_tsv_identical_rows() {
        let ds = parse_ucr_tsv("x", "0\t1.25\t-3\n0\t1.25\t-3\n").unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.series(0), ds.series(1));
    }

    #[test]
    fn ucr_tsv_errors() {
        match parse_ucr_tsv("x", "1\t2\t3\n1\t2\n") {
            Err(Error::Parse { line: 2, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            parse_ucr_tsv("x", "1\t2\t3\n1\tabc\t2\n"),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(matches!(parse_ucr_tsv("x", "1\t2\t3\n"), Err(Error::Shape(_))));
    }

    #[test]
    fn ucr_tsv_trailing_nan_defines_length() {
        let ds = parse_ucr_tsv("x", "1\t1\t2\t3\n2\t4\t5\tNaN\n").unwrap();
        assert_eq!(ds.lengths(), &[3, 2]);
        assert!(!ds.is_observed(1, 2));
        assert!(parse_ucr_tsv("x", "1\t1\tNaN\t3\n2\t4\t5\t6\n").is_err());
    }

    #[test]
    fn csv_long_variable_length_multivariate() {
        // Three series of lengths 4, 6 and 5 with two dimensions, rows shuffled.
        let mut lines = vec!["series_id,dim,t,value,label".to_string()];
        let lens = [(2, 4usize), (0, 6), (1, 5)];
        let mut cells = Vec::new();
        for (sid, len) in lens {
            for t in 0..len {
                for k in 0..2 {
                    cells.push(format!("{sid},{k},{t},{},{}", sid * 100 + t * 10 + k, sid % 2));
                }
            }
        }
        cells.reverse();
        lines.extend(cells);
        let ds = parse_csv_long("x", &lines.join("\n")).unwrap();
        assert_eq!(ds.n_max(), 6);
        assert_eq!(ds.dim(), 2);
        // sorted numerically by series id: 0 (len 6), 1 (len 5), 2 (len 4)
        assert_eq!(ds.lengths(), &[6, 5, 4]);
        assert_eq!(ds.ids(), &["0", "1", "2"]);
        assert_eq!(ds.value(2, 3, 1), 231.0);
        assert_eq!(ds.value(2, 4, 0), 0.0);
        assert!(!ds.mask()[2][4]);
        assert!(ds.mask()[2][3]);
        assert_eq!(ds.labels().unwrap(), &[0, 1, 0]);
    }

    #[test]
    fn csv_long_missing_cell_is_error() {
        let text = "series_id,dim,t,value\na,0,0,1\na,0,1,2\nb,0,0,1\nb,0,2,3\n";
        assert!(matches!(parse_csv_long("x", text), Err(Error::Parse { .. })));
        let bad_cols = "series_id,dim,t,value\na,0,0\n";
        assert!(matches!(parse_csv_long("x", bad_cols), Err(Error::Parse { .. })));
    }

    #[test]
    fn merge_concatenates_and_unions_classes() {
        let a = parse_ucr_tsv("a", "1\t1\t2\n2\t3\t4\n").unwrap();
        let b = parse_ucr_tsv("b", "3\t5\t6\t7\n1\t8\t9\t10\n").unwrap();
        let m = a.merge(&b).unwrap();
        assert_eq!(m.len(), 4);
        assert_eq!(m.n_max(), 3);
        assert_eq!(m.lengths(), &[2, 2, 3, 3]);
        assert_eq!(m.labels().unwrap(), &[0, 1, 2, 0]);
        assert_eq!(m.observed(3), &[8.0, 9.0, 10.0]);
        assert_eq!(m.ids()[2], "test/0");
    }

    #[test]
    fn merge_rejects_dimension_mismatch() {
        let a = TimeSeriesDataset::from_rows("a", vec![vec![1.0, 2.0]; 2], None).unwrap();
        let b = TimeSeriesDataset::from_series(
            "b",
            2,
            vec!["x".into(), "y".into()],
            vec![vec![1.0; 4], vec![2.0; 4]],
            None,
        )
        .unwrap();
        assert!(matches!(a.merge(&b), Err(Error::Shape(_))));
    }

    #[test]
    fn split_suffix_is_dropped_from_name() {
        let dir = tempfile::tempdir().unwrap();
        for (file, expect) in [("Coffee_TRAIN.tsv", "Coffee"), ("x_TEST.tsv", "x"), ("_TRAIN.tsv", "_TRAIN"), ("plain.tsv", "plain")] {
            let path = dir.path().join(file);
            std::fs::write(&path, "1\t0.5\t1.5\n2\t0.1\t0.2\n").unwrap();
            assert_eq!(load_dataset(&path, Format::UcrTsv).unwrap().name(), expect);
        }
    }
}
