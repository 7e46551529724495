//! Internal validation with the modified Hubert statistic, best-measure
//! selection, and external scores (Rand index, NMI).

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::cluster::FlatClustering;
use crate::distance::{mahalanobis, CovarianceModel, DistanceMatrix, MeasureKind};
use crate::error::{Error, Result};
use crate::exec::Execution;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HubertScore {
    pub t: f64,
    pub measure_evaluated: Option<MeasureKind>,
    pub covariance_fingerprint: String,
}

/// Modified Hubert statistic with Mahalanobis point and centre distances.
///
/// `T = 2 / (M (M − 1)) · Σ_{i<j} d(x_i, x_j) · d(c(i), c(j))`, where `c(i)` is
/// the mean of the rows in `x_i`'s cluster. Same-cluster pairs contribute 0.
pub fn hubert_statistic(
    rows: &[Vec<f64>],
    clustering: &FlatClustering,
    cov: &CovarianceModel,
    exec: Execution,
) -> Result<HubertScore> {
    check_rows(rows, clustering, cov)?;
    let m = rows.len();
    let assign = clustering.assignments();
    let centre_d = centre_distances(rows, clustering, cov)?;
    let k = clustering.k();
    let partial = exec.map_range(m, |i| {
        let ci = assign[i];
        let mut s = 0.0;
        for j in i + 1..m {
            let w = centre_d[ci * k + assign[j]];
            if w != 0.0 {
                s += mahalanobis(&rows[i], &rows[j], cov).unwrap_or(f64::NAN) * w;
            }
        }
        s
    });
    finish(partial, m, clustering, cov)
}

/// Same statistic with point distances taken from a precomputed Mahalanobis
/// matrix over the same rows and covariance.
pub fn hubert_statistic_with_matrix(
    rows: &[Vec<f64>],
    point_distances: &DistanceMatrix,
    clustering: &FlatClustering,
    cov: &CovarianceModel,
    exec: Execution,
) -> Result<HubertScore> {
    check_rows(rows, clustering, cov)?;
    let m = rows.len();
    if point_distances.len() != m {
        return Err(Error::Shape(format!(
            "distance matrix covers {} points, rows have {m}",
            point_distances.len()
        )));
    }
    let assign = clustering.assignments();
    let centre_d = centre_distances(rows, clustering, cov)?;
    let k = clustering.k();
    let partial = exec.map_range(m, |i| {
        let ci = assign[i];
        let mut s = 0.0;
        for j in i + 1..m {
            let w = centre_d[ci * k + assign[j]];
            if w != 0.0 {
                s += point_distances.get(i, j) * w;
            }
        }
        s
    });
    finish(partial, m, clustering, cov)
}

fn check_rows(rows: &[Vec<f64>], clustering: &FlatClustering, cov: &CovarianceModel) -> Result<()> {
    if rows.len() != clustering.len() {
        return Err(Error::Shape(format!(
            "{} rows but {} assignments",
            rows.len(),
            clustering.len()
        )));
    }
    if clustering.k() == 0 || rows.len() < 2 {
        return Err(Error::Shape("need at least 2 rows and 1 cluster".into()));
    }
    if rows.iter().any(|r| r.len() != cov.dim()) {
        return Err(Error::Shape(format!(
            "rows must have width {} to match the covariance",
            cov.dim()
        )));
    }
    Ok(())
}

fn centre_distances(
    rows: &[Vec<f64>],
    clustering: &FlatClustering,
    cov: &CovarianceModel,
) -> Result<Vec<f64>> {
    let k = clustering.k();
    let p = cov.dim();
    let mut centres = vec![vec![0.0; p]; k];
    let mut counts = vec![0usize; k];
    for (row, &c) in rows.iter().zip(clustering.assignments()) {
        counts[c] += 1;
        for (acc, v) in centres[c].iter_mut().zip(row) {
            *acc += v;
        }
    }
    for (c, n) in centres.iter_mut().zip(&counts) {
        c.iter_mut().for_each(|v| *v /= *n as f64);
    }
    let mut out = vec![0.0; k * k];
    for a in 0..k {
        for b in a + 1..k {
            let d = mahalanobis(&centres[a], &centres[b], cov)?;
            out[a * k + b] = d;
            out[b * k + a] = d;
        }
    }
    Ok(out)
}

fn finish(
    partial: Vec<f64>,
    m: usize,
    clustering: &FlatClustering,
    cov: &CovarianceModel,
) -> Result<HubertScore> {
    let sum: f64 = partial.iter().sum();
    let t = 2.0 * sum / (m as f64 * (m as f64 - 1.0));
    if !t.is_finite() {
        return Err(Error::Validation(format!("Hubert statistic is {t}")));
    }
    Ok(HubertScore {
        t,
        measure_evaluated: clustering.measure(),
        covariance_fingerprint: cov.fingerprint(),
    })
}

/// Rounds to 12 significant digits for tie comparison.
pub fn round_significant(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.11e}").parse().unwrap_or(x)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExternalScores {
    pub rand_index: f64,
    pub nmi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureResult {
    pub measure: MeasureKind,
    pub clustering: FlatClustering,
    pub hubert: HubertScore,
    pub external: Option<ExternalScores>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub results: Vec<MeasureResult>,
    pub best_measures: Vec<MeasureKind>,
    pub max_t: f64,
}

impl SelectionReport {
    pub fn result(&self, measure: MeasureKind) -> Option<&MeasureResult> {
        self.results.iter().find(|r| r.measure == measure)
    }

    /// Attaches Rand index and NMI against ground-truth labels.
    pub fn score_against(&mut self, truth: &[usize]) -> Result<()> {
        for r in &mut self.results {
            r.external = Some(ExternalScores {
                rand_index: rand_index(truth, r.clustering.assignments())?,
                nmi: nmi(truth, r.clustering.assignments())?,
            });
        }
        Ok(())
    }
}

/// Picks every measure attaining the largest statistic, in input order.
///
/// Mirrors the selection loop: the running maximum starts at 0, a strictly
/// larger value replaces the best set and an equal value joins it. Values are
/// compared after rounding to 12 significant digits.
pub fn best_cluster(per_measure: Vec<(FlatClustering, HubertScore)>) -> Result<SelectionReport> {
    if per_measure.is_empty() {
        return Err(Error::Config("no measures to select from".into()));
    }
    let mut max_t = 0.0;
    let mut best = Vec::new();
    let mut results = Vec::with_capacity(per_measure.len());
    for (clustering, hubert) in per_measure {
        let measure = clustering
            .measure()
            .or(hubert.measure_evaluated)
            .ok_or_else(|| Error::Config("clustering is not tagged with a measure".into()))?;
        let t = round_significant(hubert.t);
        if max_t < t {
            best.clear();
            max_t = t;
            best.push(measure);
        } else if max_t == t {
            best.push(measure);
        }
        results.push(MeasureResult {
            measure,
            clustering,
            hubert,
            external: None,
        });
    }
    Ok(SelectionReport {
        results,
        best_measures: best,
        max_t,
    })
}

fn check_labels(truth: &[usize], pred: &[usize]) -> Result<()> {
    if truth.len() != pred.len() {
        return Err(Error::Shape(format!(
            "label lengths differ: {} vs {}",
            truth.len(),
            pred.len()
        )));
    }
    Ok(())
}

struct Contingency {
    n: u64,
    joint: HashMap<(usize, usize), u64>,
    left: HashMap<usize, u64>,
    right: HashMap<usize, u64>,
}

impl Contingency {
    fn new(left: &[usize], right: &[usize]) -> Self {
        let mut c = Self {
            n: left.len() as u64,
            joint: HashMap::new(),
            left: HashMap::new(),
            right: HashMap::new(),
        };
        for (&a, &b) in left.iter().zip(right) {
            *c.joint.entry((a, b)).or_default() += 1;
            *c.left.entry(a).or_default() += 1;
            *c.right.entry(b).or_default() += 1;
        }
        c
    }
}

fn pairs(n: u64) -> u64 {
    n * n.saturating_sub(1) / 2
}

/// Fraction of unordered pairs on which the two partitions agree.
pub fn rand_index(truth: &[usize], pred: &[usize]) -> Result<f64> {
    check_labels(truth, pred)?;
    if truth.len() < 2 {
        return Err(Error::Shape("Rand index needs at least 2 items".into()));
    }
    let c = Contingency::new(truth, pred);
    let total = pairs(c.n);
    let tp: u64 = c.joint.values().map(|&v| pairs(v)).sum();
    let same_truth: u64 = c.left.values().map(|&v| pairs(v)).sum();
    let same_pred: u64 = c.right.values().map(|&v| pairs(v)).sum();
    let tn = total + tp - same_truth - same_pred;
    Ok((tp + tn) as f64 / total as f64)
}

/// Mutual information normalised by the arithmetic mean of the entropies.
///
/// Two single-cluster partitions score 1; if only one side has zero entropy
/// the score is 0.
pub fn nmi(truth: &[usize], pred: &[usize]) -> Result<f64> {
    check_labels(truth, pred)?;
    if truth.is_empty() {
        return Err(Error::Shape("NMI needs at least 1 item".into()));
    }
    let c = Contingency::new(truth, pred);
    let n = c.n as f64;
    let entropy = |counts: &HashMap<usize, u64>| -> f64 {
        -counts
            .values()
            .map(|&v| {
                let p = v as f64 / n;
                p * p.ln()
            })
            .sum::<f64>()
    };
    let (ht, hp) = (entropy(&c.left), entropy(&c.right));
    if c.left.len() == 1 && c.right.len() == 1 {
        return Ok(1.0);
    }
    if c.left.len() == 1 || c.right.len() == 1 {
        return Ok(0.0);
    }
    let mi: f64 = c
        .joint
        .iter()
        .map(|(&(a, b), &v)| {
            let nij = v as f64;
            (nij / n) * ((nij * n) / (c.left[&a] as f64 * c.right[&b] as f64)).ln()
        })
        .sum();
    Ok((mi / (0.5 * (ht + hp))).clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distance::DistanceMeasure;

    fn score(t: f64, m: MeasureKind) -> (FlatClustering, HubertScore) {
        (
            FlatClustering::new(vec![0, 1], Some(m)).unwrap(),
            HubertScore {
                t,
                measure_evaluated: Some(m),
                covariance_fingerprint: String::new(),
            },
        )
    }

    #[test]
    fn hubert_four_points() {
        let rows = vec![vec![0.0], vec![1.0], vec![10.0], vec![11.0]];
        let cov = CovarianceModel::identity(1);
        let two = FlatClustering::new(vec![0, 0, 1, 1], None).unwrap();
        let t = hubert_statistic(&rows, &two, &cov, Execution::Serial).unwrap().t;
        assert!((t - 400.0 / 6.0).abs() < 1e-6);
        let one = FlatClustering::new(vec![0; 4], None).unwrap();
        assert_eq!(hubert_statistic(&rows, &one, &cov, Execution::Serial).unwrap().t, 0.0);
    }

    #[test]
    fn hubert_with_matrix_agrees() {
        let rows: Vec<Vec<f64>> = (0..12)
            .map(|i| {
                let t = i as f64;
                vec![t.sin() * 3.0, (t * 0.37).cos(), t * 0.1]
            })
            .collect();
        let cov = std::sync::Arc::new(crate::distance::fit_covariance(&rows, 1e-6).unwrap());
        let fc = FlatClustering::new((0..12).map(|i| i % 3).collect(), None).unwrap();
        let dm = crate::distance::distance_matrix(
            &rows,
            &DistanceMeasure::mahalanobis(cov.clone()),
            Execution::Serial,
        )
        .unwrap();
        let a = hubert_statistic(&rows, &fc, &cov, Execution::Serial).unwrap();
        let b = hubert_statistic_with_matrix(&rows, &dm, &fc, &cov, Execution::Parallel).unwrap();
        assert_eq!(a.t, b.t);
    }

    #[test]
    fn hubert_rejects_mismatched_sizes() {
        let rows = vec![vec![0.0], vec![1.0]];
        let fc = FlatClustering::new(vec![0, 1, 1], None).unwrap();
        assert!(matches!(
            hubert_statistic(&rows, &fc, &CovarianceModel::identity(1), Execution::Serial),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn best_single_winner() {
        let r = best_cluster(vec![
            score(1.38, MeasureKind::Chebyshev),
            score(1.56, MeasureKind::Manhattan),
            score(1.90, MeasureKind::Mahalanobis),
        ])
        .unwrap();
        assert_eq!(r.best_measures, vec![MeasureKind::Mahalanobis]);
        assert_eq!(r.results.len(), 3);
    }

    #[test]
    fn best_keeps_ties() {
        let r = best_cluster(vec![
            score(0.5, MeasureKind::Chebyshev),
            score(0.5, MeasureKind::Manhattan),
            score(0.2, MeasureKind::Mahalanobis),
        ])
        .unwrap();
        assert_eq!(r.best_measures, vec![MeasureKind::Chebyshev, MeasureKind::Manhattan]);
        // differences below 12 significant digits count as ties
        let r = best_cluster(vec![
            score(0.5, MeasureKind::Chebyshev),
            score(0.5 + 1e-15, MeasureKind::Manhattan),
        ])
        .unwrap();
        assert_eq!(r.best_measures.len(), 2);
    }

    #[test]
    fn best_single_and_empty() {
        let r = best_cluster(vec![score(0.7, MeasureKind::Chebyshev)]).unwrap();
        assert_eq!(r.best_measures, vec![MeasureKind::Chebyshev]);
        assert!(matches!(best_cluster(vec![]), Err(Error::Config(_))));
    }

    #[test]
    fn rand_index_examples() {
        assert_eq!(rand_index(&[0, 0, 1, 1], &[1, 1, 0, 0]).unwrap(), 1.0);
        assert!((rand_index(&[0, 0, 1, 1], &[0, 1, 0, 1]).unwrap() - 1.0 / 3.0).abs() < 1e-9);
        assert_eq!(rand_index(&[0, 0, 0], &[0, 1, 2]).unwrap(), 0.0);
        assert!(matches!(rand_index(&[0, 1], &[0]), Err(Error::Shape(_))));
    }

    #[test]
    fn nmi_examples() {
        assert!((nmi(&[0, 0, 1, 2], &[5, 5, 3, 4]).unwrap() - 1.0).abs() < 1e-12);
        assert!(nmi(&[0, 0, 1, 1], &[0, 1, 0, 1]).unwrap().abs() < 1e-9);
        assert_eq!(nmi(&[0, 1, 1, 0], &[0, 0, 0, 0]).unwrap(), 0.0);
        assert!(nmi(&[0, 1], &[0]).is_err());
    }

    #[test]
    fn rounding_keeps_twelve_digits() {
        assert_eq!(round_significant(1.234567890123456), 1.23456789012);
        assert_eq!(round_significant(0.0), 0.0);
    }
}
