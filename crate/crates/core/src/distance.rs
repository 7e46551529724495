//! Distance kernels and pairwise distance matrices.
//!
//! The Mahalanobis covariance is pooled over the whole row set being
//! clustered (the latent matrix, or the flattened raw series). A per-pair
//! covariance of two vectors is rank one and cannot be inverted.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::exec::Execution;

/// Default ridge, relative to the mean diagonal of the covariance.
pub const DEFAULT_RELATIVE_RIDGE: f64 = 1e-6;
/// Condition number above which the pseudoinverse is used.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MeasureKind {
    #[serde(rename = "CH")]
    Chebyshev,
    #[serde(rename = "MA")]
    Manhattan,
    #[serde(rename = "ML")]
    Mahalanobis,
}

impl MeasureKind {
    pub const ALL: [MeasureKind; 3] = [
        MeasureKind::Chebyshev,
        MeasureKind::Manhattan,
        MeasureKind::Mahalanobis,
    ];

    pub fn code(self) -> &'static str {
        match self {
            MeasureKind::Chebyshev => "CH",
            MeasureKind::Manhattan => "MA",
            MeasureKind::Mahalanobis => "ML",
        }
    }
}

impl fmt::Display for MeasureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for MeasureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "CH" | "CHEBYSHEV" => Ok(MeasureKind::Chebyshev),
            "MA" | "MANHATTAN" => Ok(MeasureKind::Manhattan),
            "ML" | "MAHALANOBIS" => Ok(MeasureKind::Mahalanobis),
            _ => Err(Error::Config(format!("unknown distance measure {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovarianceSource {
    DatasetPooled,
    Supplied,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceModel {
    dim: usize,
    /// Row-major `dim × dim`.
    matrix: Vec<f64>,
    /// (Pseudo)inverse of `matrix + ridge·I`, row-major.
    inverse: Vec<f64>,
    /// Rows of `W` with `Wᵀ W = inverse`.
    whitening: Vec<f64>,
    ridge: f64,
    pseudo_inverse: bool,
    condition: f64,
    source: CovarianceSource,
}

impl CovarianceModel {
    /// Builds the model for a supplied symmetric matrix.
    pub fn from_matrix(dim: usize, matrix: Vec<f64>, ridge: f64) -> Result<Self> {
        if matrix.len() != dim * dim || dim == 0 {
            return Err(Error::Shape(format!(
                "covariance has {} entries, expected {dim}×{dim}",
                matrix.len()
            )));
        }
        if ridge < 0.0 || !ridge.is_finite() {
            return Err(Error::Config(format!("ridge must be ≥ 0, got {ridge}")));
        }
        for i in 0..dim {
            for j in 0..i {
                if (matrix[i * dim + j] - matrix[j * dim + i]).abs() > 1e-10 {
                    return Err(Error::Validation("covariance is not symmetric".into()));
                }
            }
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("covariance has non-finite entries".into()));
        }
        let mut model = Self::invert(dim, matrix, ridge);
        model.source = CovarianceSource::Supplied;
        Ok(model)
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = vec![0.0; dim * dim];
        for i in 0..dim {
            m[i * dim + i] = 1.0;
        }
        let mut model = Self::invert(dim, m, 0.0);
        model.source = CovarianceSource::Supplied;
        model
    }

    fn invert(dim: usize, matrix: Vec<f64>, ridge: f64) -> Self {
        let a = DMatrix::from_fn(dim, dim, |i, j| {
            matrix[i * dim + j] + if i == j { ridge } else { 0.0 }
        });
        let eig = SymmetricEigen::new(a.clone());
        let max = eig.eigenvalues.iter().fold(0.0f64, |m, &e| m.max(e.abs()));
        let min = eig.eigenvalues.iter().fold(f64::INFINITY, |m, &e| m.min(e));
        let condition = if min > 0.0 { max / min } else { f64::INFINITY };

        let cholesky = if condition <= MAX_CONDITION {
            a.clone().cholesky()
        } else {
            None
        };
        let tol = max * dim as f64 * f64::EPSILON;
        // `whitening` holds `W` with `WᵀW = inverse`: `L⁻¹` for `A = L Lᵀ`,
        // else `Λ⁺^{1/2} Vᵀ` from the eigendecomposition.
        let (inverse, whitening, pseudo_inverse) = match cholesky {
            Some(ch) => {
                let l_inv = ch
                    .l()
                    .solve_lower_triangular(&DMatrix::identity(dim, dim))
                    .unwrap_or_else(|| DMatrix::zeros(dim, dim));
                (ch.inverse(), l_inv, false)
            }
            None => {
                let mut inv = DMatrix::zeros(dim, dim);
                let mut w = DMatrix::zeros(dim, dim);
                for (k, &e) in eig.eigenvalues.iter().enumerate() {
                    if e > tol {
                        let v = eig.eigenvectors.column(k);
                        inv += (v * v.transpose()) / e;
                        w.row_mut(k).copy_from(&(v.transpose() / e.sqrt()));
                    }
                }
                (inv, w, true)
            }
        };
        let inverse = (&inverse + inverse.transpose()) * 0.5;
        let to_vec = |m: &DMatrix<f64>| (0..dim * dim).map(|idx| m[(idx / dim, idx % dim)]).collect();

        Self {
            dim,
            matrix,
            inverse: to_vec(&inverse),
            whitening: to_vec(&whitening),
            ridge,
            pseudo_inverse,
            condition,
            source: CovarianceSource::DatasetPooled,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matrix(&self) -> &[f64] {
        &self.matrix
    }

    pub fn inverse(&self) -> &[f64] {
        &self.inverse
    }

    pub fn ridge(&self) -> f64 {
        self.ridge
    }

    pub fn used_pseudo_inverse(&self) -> bool {
        self.pseudo_inverse
    }

    pub fn condition(&self) -> f64 {
        self.condition
    }

    pub fn source(&self) -> CovarianceSource {
        self.source
    }

    /// Maps a row into the space where Mahalanobis distance is Euclidean.
    pub fn whiten(&self, x: &[f64]) -> Vec<f64> {
        self.whitening
            .chunks_exact(self.dim)
            .map(|w| w.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Hex SHA-256 of the fitted state.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.dim as u64).to_le_bytes());
        h.update(self.ridge.to_bits().to_le_bytes());
        for v in &self.inverse {
            h.update(v.to_bits().to_le_bytes());
        }
        hex::encode(&h.finalize()[..])
    }
}

/// Pooled sample covariance (divide by `M − 1`) of all rows.
///
/// The ridge added before inversion is `relative_ridge` times the mean of the
/// covariance diagonal. Near-singular systems fall back to the pseudoinverse.
pub fn fit_covariance(rows: &[Vec<f64>], relative_ridge: f64) -> Result<CovarianceModel> {
    let m = rows.len();
    if m < 2 {
        return Err(Error::Shape(format!(
            "covariance needs at least 2 rows, got {m}"
        )));
    }
    let p = rows[0].len();
    if p == 0 || rows.iter().any(|r| r.len() != p) {
        return Err(Error::Shape("rows must share a non-zero width".into()));
    }
    if relative_ridge < 0.0 || !relative_ridge.is_finite() {
        return Err(Error::Config(format!(
            "ridge must be ≥ 0, got {relative_ridge}"
        )));
    }
    let mut mean = vec![0.0; p];
    for r in rows {
        for (acc, v) in mean.iter_mut().zip(r) {
            *acc += v;
        }
    }
    mean.iter_mut().for_each(|v| *v /= m as f64);

    let mut cov = vec![0.0; p * p];
    let mut centred = vec![0.0; p];
    for r in rows {
        for k in 0..p {
            centred[k] = r[k] - mean[k];
        }
        for i in 0..p {
            let ci = centred[i];
            let row = &mut cov[i * p..(i + 1) * p];
            for j in i..p {
                row[j] += ci * centred[j];
            }
        }
    }
    let denom = (m - 1) as f64;
    for i in 0..p {
        for j in i..p {
            let v = cov[i * p + j] / denom;
            cov[i * p + j] = v;
            cov[j * p + i] = v;
        }
    }
    let mean_diag = (0..p).map(|i| cov[i * p + i]).sum::<f64>() / p as f64;
    Ok(CovarianceModel::invert(p, cov, relative_ridge * mean_diag))
}

fn check_lengths(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::Shape(format!(
            "vector lengths differ: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    Ok(())
}

pub fn chebyshev(x: &[f64], y: &[f64]) -> Result<f64> {
    check_lengths(x, y)?;
    Ok(chebyshev_unchecked(x, y))
}

pub fn manhattan(x: &[f64], y: &[f64]) -> Result<f64> {
    check_lengths(x, y)?;
    Ok(manhattan_unchecked(x, y))
}

pub fn mahalanobis(x: &[f64], y: &[f64], cov: &CovarianceModel) -> Result<f64> {
    check_lengths(x, y)?;
    if x.len() != cov.dim {
        return Err(Error::Shape(format!(
            "vector length {} does not match covariance dimension {}",
            x.len(),
            cov.dim
        )));
    }
    Ok(mahalanobis_unchecked(x, y, cov))
}

#[inline]
fn chebyshev_unchecked(x: &[f64], y: &[f64]) -> f64 {
    x.iter()
        .zip(y)
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
}

#[inline]
fn manhattan_unchecked(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b).abs()).sum()
}

/// `‖W (x − y)‖` with `WᵀW` the model's (pseudo)inverse: the square root of
/// the quadratic form, evaluated without cancellation.
fn mahalanobis_unchecked(x: &[f64], y: &[f64], cov: &CovarianceModel) -> f64 {
    let p = cov.dim;
    let mut diff = [0.0f64; 64];
    let mut heap;
    let delta: &mut [f64] = if p <= diff.len() {
        &mut diff[..p]
    } else {
        heap = vec![0.0; p];
        &mut heap
    };
    for k in 0..p {
        delta[k] = x[k] - y[k];
    }
    cov.whitening
        .chunks_exact(p)
        .map(|w| {
            let v: f64 = w.iter().zip(delta.iter()).map(|(a, b)| a * b).sum();
            v * v
        })
        .sum::<f64>()
        .sqrt()
}

#[derive(Debug, Clone)]
pub struct DistanceMeasure {
    pub kind: MeasureKind,
    pub covariance: Option<Arc<CovarianceModel>>,
}

impl DistanceMeasure {
    pub fn chebyshev() -> Self {
        Self {
            kind: MeasureKind::Chebyshev,
            covariance: None,
        }
    }

    pub fn manhattan() -> Self {
        Self {
            kind: MeasureKind::Manhattan,
            covariance: None,
        }
    }

    pub fn mahalanobis(cov: Arc<CovarianceModel>) -> Self {
        Self {
            kind: MeasureKind::Mahalanobis,
            covariance: Some(cov),
        }
    }

    /// Builds a measure; Mahalanobis requires a covariance.
    pub fn new(kind: MeasureKind, covariance: Option<Arc<CovarianceModel>>) -> Result<Self> {
        if kind == MeasureKind::Mahalanobis && covariance.is_none() {
            return Err(Error::Config(
                "Mahalanobis distance requires a covariance model".into(),
            ));
        }
        Ok(Self { kind, covariance })
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        match self.kind {
            MeasureKind::Chebyshev => chebyshev(x, y),
            MeasureKind::Manhattan => manhattan(x, y),
            MeasureKind::Mahalanobis => mahalanobis(x, y, self.require_cov()?),
        }
    }

    fn require_cov(&self) -> Result<&CovarianceModel> {
        self.covariance.as_deref().ok_or_else(|| {
            Error::Config("Mahalanobis distance requires a covariance model".into())
        })
    }
}

/// Symmetric zero-diagonal matrix stored as its strict upper triangle.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DistanceMatrix {
    #[inline]
    fn index(n: usize, i: usize, j: usize) -> usize {
        debug_assert!(i < j && j < n);
        n * i - i * (i + 1) / 2 + j - i - 1
    }

    pub fn from_condensed(n: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * n.saturating_sub(1) / 2 {
            return Err(Error::Shape(format!(
                "condensed matrix for {n} points needs {} entries, got {}",
                n * n.saturating_sub(1) / 2,
                data.len()
            )));
        }
        Ok(Self { n, data })
    }

    /// Validates symmetry and a zero diagonal (exactly) before condensing.
    #[allow(clippy::needless_range_loop)]
    pub fn from_square(square: &[Vec<f64>]) -> Result<Self> {
        let n = square.len();
        if square.iter().any(|r| r.len() != n) {
            return Err(Error::Validation("distance matrix is not square".into()));
        }
        let mut data = Vec::with_capacity(n * n.saturating_sub(1) / 2);
        for i in 0..n {
            if square[i][i] != 0.0 {
                return Err(Error::Validation(format!(
                    "diagonal entry {i} is {} instead of 0",
                    square[i][i]
                )));
            }
            for j in i + 1..n {
                let (a, b) = (square[i][j], square[j][i]);
                if a.is_nan() || b.is_nan() || a != b {
                    return Err(Error::Validation(format!(
                        "entries ({i},{j}) and ({j},{i}) differ: {a} vs {b}"
                    )));
                }
                data.push(a);
            }
        }
        Ok(Self { n, data })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        use std::cmp::Ordering::*;
        match i.cmp(&j) {
            Equal => 0.0,
            Less => self.data[Self::index(self.n, i, j)],
            Greater => self.data[Self::index(self.n, j, i)],
        }
    }

    pub fn condensed(&self) -> &[f64] {
        &self.data
    }

    pub fn into_condensed(self) -> Vec<f64> {
        self.data
    }

    pub fn to_square(&self) -> Vec<Vec<f64>> {
        (0..self.n)
            .map(|i| (0..self.n).map(|j| self.get(i, j)).collect())
            .collect()
    }

    /// Row-major CSV with a `series_id` header row and column.
    pub fn write_csv(&self, path: &Path, ids: &[String]) -> Result<()> {
        if ids.len() != self.n {
            return Err(Error::Shape(format!("{} ids for {} rows", ids.len(), self.n)));
        }
        let mut out = String::from("series_id");
        for id in ids {
            out.push(',');
            out.push_str(id);
        }
        out.push('\n');
        for (i, id) in ids.iter().enumerate() {
            out.push_str(id);
            for j in 0..self.n {
                out.push_str(&format!(",{:?}", self.get(i, j)));
            }
            out.push('\n');
        }
        std::fs::File::create(path)
            .and_then(|mut f| f.write_all(out.as_bytes()))
            .map_err(|e| Error::io(path, e))
    }
}

/// Pairwise distances between all rows.
///
/// Chebyshev and Manhattan entries are the kernel values exactly. Mahalanobis
/// entries are Euclidean distances between whitened rows, which agree with
/// the kernel up to rounding at `O(p)` instead of `O(p²)` cost per pair.
pub fn distance_matrix(
    rows: &[Vec<f64>],
    measure: &DistanceMeasure,
    exec: Execution,
) -> Result<DistanceMatrix> {
    let n = rows.len();
    let p = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != p) {
        return Err(Error::Shape("rows must share a common width".into()));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Validation("rows contain non-finite values".into()));
    }

    let per_row: Vec<Vec<f64>> = match measure.kind {
        MeasureKind::Chebyshev => exec.map_range(n, |i| {
            rows[i + 1..]
                .iter()
                .map(|r| chebyshev_unchecked(&rows[i], r))
                .collect()
        }),
        MeasureKind::Manhattan => exec.map_range(n, |i| {
            rows[i + 1..]
                .iter()
                .map(|r| manhattan_unchecked(&rows[i], r))
                .collect()
        }),
        MeasureKind::Mahalanobis => {
            let cov = measure.require_cov()?;
            if cov.dim != p {
                return Err(Error::Shape(format!(
                    "row width {p} does not match covariance dimension {}",
                    cov.dim
                )));
            }
            let white: Vec<Vec<f64>> = exec.map_range(n, |i| cov.whiten(&rows[i]));
            exec.map_range(n, |i| {
                white[i + 1..]
                    .iter()
                    .map(|r| {
                        white[i]
                            .iter()
                            .zip(r)
                            .map(|(a, b)| (a - b) * (a - b))
                            .sum::<f64>()
                            .sqrt()
                    })
                    .collect()
            })
        }
    };
    let data: Vec<f64> = per_row.into_iter().flatten().collect();
    if let Some(v) = data.iter().find(|v| !v.is_finite()) {
        return Err(Error::Validation(format!("distance matrix contains {v}")));
    }
    DistanceMatrix::from_condensed(n, data)
}
