//! Average-linkage agglomerative clustering.
//!
//! Clusters live in slots indexed by their smallest member leaf. The
//! inter-cluster distance table is kept up to date with the Lance–Williams
//! average-linkage update, and each slot caches its nearest higher-slot
//! neighbour so that a merge step is a linear scan in the common case.
//!
//! Ties on the linkage distance go to the pair with the smallest
//! `(min leaf of first cluster, min leaf of second cluster)`.

use std::collections::HashSet;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::distance::{DistanceMatrix, MeasureKind};
use crate::error::{Error, Result};

/// One agglomeration step. Leaves are `0..M`; the cluster formed by merge
/// `s` gets id `M + s`. `a` is the side holding the smaller leaf.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub a: usize,
    pub b: usize,
    pub distance: f64,
    pub id: usize,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dendrogram {
    leaf_count: usize,
    merges: Vec<Merge>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlatClustering {
    assignments: Vec<usize>,
    k: usize,
    measure: Option<MeasureKind>,
}

impl FlatClustering {
    /// Validates that ids cover `0..k` without gaps.
    pub fn new(assignments: Vec<usize>, measure: Option<MeasureKind>) -> Result<Self> {
        let k = assignments.iter().max().map_or(0, |m| m + 1);
        let mut seen = vec![false; k];
        for &a in &assignments {
            seen[a] = true;
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::Validation(
                "cluster ids must be contiguous from 0".into(),
            ));
        }
        Ok(Self {
            assignments,
            k,
            measure,
        })
    }

    pub fn assignments(&self) -> &[usize] {
        &self.assignments
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.assignments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignments.is_empty()
    }

    pub fn measure(&self) -> Option<MeasureKind> {
        self.measure
    }

    pub fn with_measure(mut self, measure: MeasureKind) -> Self {
        self.measure = Some(measure);
        self
    }

    pub fn write_csv(&self, path: &Path, ids: &[String]) -> Result<()> {
        let mut out = String::from("series_id,cluster\n");
        for (id, c) in ids.iter().zip(&self.assignments) {
            out.push_str(&format!("{id},{c}\n"));
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path) -> Result<(Vec<String>, Self)> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)?;
        let mut ids = Vec::new();
        let mut assignments = Vec::new();
        for (row, record) in reader.records().enumerate() {
            let record = record?;
            let line = row + 2;
            if record.len() != 2 {
                return Err(Error::Parse {
                    line,
                    message: format!("expected 2 columns, got {}", record.len()),
                });
            }
            ids.push(record[0].to_string());
            assignments.push(record[1].parse::<usize>().map_err(|_| Error::Parse {
                line,
                message: format!("invalid cluster id {:?}", &record[1]),
            })?);
        }
        Ok((ids, Self::new(assignments, None)?))
    }
}

/// Mean of all cross-pair distances between two disjoint, non-empty sets.
pub fn average_linkage(dist: &DistanceMatrix, a: &[usize], b: &[usize]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Logic("linkage needs two non-empty clusters".into()));
    }
    if let Some(&bad) = a.iter().chain(b).find(|&&i| i >= dist.len()) {
        return Err(Error::Shape(format!(
            "index {bad} out of range for {} points",
            dist.len()
        )));
    }
    let left: HashSet<usize> = a.iter().copied().collect();
    if b.iter().any(|j| left.contains(j)) {
        return Err(Error::Logic("clusters overlap".into()));
    }
    let sum: f64 = a
        .iter()
        .map(|&i| b.iter().map(|&j| dist.get(i, j)).sum::<f64>())
        .sum();
    Ok(sum / (a.len() * b.len()) as f64)
}

const NONE: usize = usize::MAX;

struct Working {
    n: usize,
    d: Vec<f64>,
    /// Active slots in increasing order.
    active: Vec<usize>,
    nn: Vec<usize>,
    nn_d: Vec<f64>,
}

impl Working {
    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        let (i, j) = if i < j { (i, j) } else { (j, i) };
        self.n * i - i * (i + 1) / 2 + j - i - 1
    }

    #[inline]
    fn get(&self, i: usize, j: usize) -> f64 {
        self.d[self.idx(i, j)]
    }

    /// Nearest active slot above `i`; the first one wins ties.
    fn recompute(&mut self, i: usize) {
        let mut best = NONE;
        let mut best_d = f64::INFINITY;
        let start = self.active.partition_point(|&j| j <= i);
        if start < self.active.len() {
            let base = self.idx(i, i + 1);
            for &j in &self.active[start..] {
                let v = self.d[base + (j - i - 1)];
                if best == NONE || v < best_d {
                    best = j;
                    best_d = v;
                }
            }
        }
        self.nn[i] = best;
        self.nn_d[i] = best_d;
    }
}

/// Builds the full average-linkage dendrogram (`M − 1` merges).
pub fn agglomerate(dist: &DistanceMatrix) -> Result<Dendrogram> {
    let n = dist.len();
    if n == 0 {
        return Err(Error::Shape("cannot cluster zero points".into()));
    }
    if let Some(v) = dist.condensed().iter().find(|v| !v.is_finite()) {
        return Err(Error::Validation(format!("distance matrix contains {v}")));
    }

    let mut w = Working {
        n,
        d: dist.condensed().to_vec(),
        active: (0..n).collect(),
        nn: vec![NONE; n],
        nn_d: vec![f64::INFINITY; n],
    };
    for i in 0..n {
        w.recompute(i);
    }
    let mut size = vec![1usize; n];
    let mut node = (0..n).collect::<Vec<usize>>();
    let mut merges = Vec::with_capacity(n.saturating_sub(1));

    for step in 0..n.saturating_sub(1) {
        let mut a = NONE;
        for &i in &w.active {
            if w.nn[i] != NONE && (a == NONE || w.nn_d[i] < w.nn_d[a]) {
                a = i;
            }
        }
        let b = w.nn[a];
        let d_ab = w.nn_d[a];
        let (na, nb) = (size[a] as f64, size[b] as f64);

        merges.push(Merge {
            a: node[a],
            b: node[b],
            distance: d_ab,
            id: n + step,
            size: size[a] + size[b],
        });

        let pos_b = w.active.binary_search(&b).unwrap_or_else(|p| p);
        w.active.remove(pos_b);
        for t in 0..w.active.len() {
            let k = w.active[t];
            if k != a {
                let v = (na * w.get(k, a) + nb * w.get(k, b)) / (na + nb);
                let ix = w.idx(k, a);
                w.d[ix] = v;
            }
        }
        size[a] += size[b];
        node[a] = n + step;

        for t in 0..pos_b {
            let k = w.active[t];
            if k == a {
                continue;
            }
            if w.nn[k] == a || w.nn[k] == b {
                w.recompute(k);
            } else if k < a {
                let v = w.get(k, a);
                if v < w.nn_d[k] || (v == w.nn_d[k] && a < w.nn[k]) {
                    w.nn[k] = a;
                    w.nn_d[k] = v;
                }
            }
        }
        w.recompute(a);
    }

    Ok(Dendrogram {
        leaf_count: n,
        merges,
    })
}

impl Dendrogram {
    pub fn from_merges(leaf_count: usize, merges: Vec<Merge>) -> Result<Self> {
        if leaf_count == 0 || merges.len() != leaf_count - 1 {
            return Err(Error::Shape(format!(
                "{} merges for {leaf_count} leaves",
                merges.len()
            )));
        }
        let mut used = vec![false; 2 * leaf_count - 1];
        for (s, m) in merges.iter().enumerate() {
            if m.id != leaf_count + s || m.a >= m.id || m.b >= m.id || m.a == m.b {
                return Err(Error::Validation(format!("merge {s} has invalid ids")));
            }
            for c in [m.a, m.b] {
                if std::mem::replace(&mut used[c], true) {
                    return Err(Error::Validation(format!("cluster {c} merged twice")));
                }
            }
        }
        Ok(Self {
            leaf_count,
            merges,
        })
    }

    pub fn leaf_count(&self) -> usize {
        self.leaf_count
    }

    pub fn merges(&self) -> &[Merge] {
        &self.merges
    }

    /// Undoes the last `k − 1` merges. Cluster ids follow the order of each
    /// cluster's smallest member index.
    pub fn cut(&self, k: usize) -> Result<FlatClustering> {
        let m = self.leaf_count;
        if k == 0 || k > m {
            return Err(Error::Config(format!(
                "cluster count {k} outside 1..={m}"
            )));
        }
        let mut parent: Vec<usize> = (0..2 * m - 1).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for merge in &self.merges[..m - k] {
            parent[merge.a] = merge.id;
            parent[merge.b] = merge.id;
        }
        let mut label_of_root = vec![NONE; 2 * m - 1];
        let mut next = 0;
        let assignments = (0..m)
            .map(|i| {
                let r = find(&mut parent, i);
                if label_of_root[r] == NONE {
                    label_of_root[r] = next;
                    next += 1;
                }
                label_of_root[r]
            })
            .collect();
        FlatClustering::new(assignments, None)
    }

    /// Lines `merge_index,a,b,distance,size` after a header line.
    pub fn write_text(&self, path: &Path) -> Result<()> {
        let mut out = Vec::new();
        writeln!(out, "merge_index,a,b,distance,size").ok();
        for (s, m) in self.merges.iter().enumerate() {
            writeln!(out, "{s},{},{},{:?},{}", m.a, m.b, m.distance, m.size).ok();
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn read_text(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_text(&text)
    }

    pub fn parse_text(text: &str) -> Result<Self> {
        let mut merges = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = line.trim();
            if line.is_empty() || line.starts_with("merge_index") {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            let bad = |what: &str| Error::Parse {
                line: line_no,
                message: format!("invalid {what} in {line:?}"),
            };
            if f.len() != 5 {
                return Err(bad("column count"));
            }
            let a = f[1].parse().map_err(|_| bad("a"))?;
            let b = f[2].parse().map_err(|_| bad("b"))?;
            let distance = f[3].parse().map_err(|_| bad("distance"))?;
            let size = f[4].parse().map_err(|_| bad("size"))?;
            merges.push(Merge {
                a,
                b,
                distance,
                id: 0,
                size,
            });
        }
        let leaf_count = merges.len() + 1;
        for (s, m) in merges.iter_mut().enumerate() {
            m.id = leaf_count + s;
        }
        Self::from_merges(leaf_count, merges)
    }
}
