//! Independent oracles and fixtures shared by the integration tests.
#![allow(dead_code)]

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use hc_aecs::autoencoder::{AutoencoderModel, Dense, LstmLayer};
use hc_aecs::dataset::TimeSeriesDataset;
use hc_aecs::Execution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn sig(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// One LSTM step written out gate by gate.
pub fn oracle_step(layer: &LstmLayer, x: &[f64], h: &[f64], c: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n_in = layer.input_size();
    let hs = layer.hidden_size();
    let w = layer.weights();
    let b = layer.bias();
    let pre = |gate: usize, j: usize| -> f64 {
        let row = gate * hs + j;
        let mut s = b[row];
        for k in 0..n_in {
            s += w[row * (n_in + hs) + k] * x[k];
        }
        for k in 0..hs {
            s += w[row * (n_in + hs) + n_in + k] * h[k];
        }
        s
    };
    let mut h_new = vec![0.0; hs];
    let mut c_new = vec![0.0; hs];
    for j in 0..hs {
        let i_g = sig(pre(0, j));
        let f_g = sig(pre(1, j));
        let g_g = pre(2, j).tanh();
        let o_g = sig(pre(3, j));
        c_new[j] = f_g * c[j] + i_g * g_g;
        h_new[j] = o_g * c_new[j].tanh();
    }
    (h_new, c_new)
}

pub fn oracle_dense(layer: &Dense, x: &[f64]) -> Vec<f64> {
    let n_in = x.len();
    layer
        .bias()
        .iter()
        .enumerate()
        .map(|(r, b)| b + (0..n_in).map(|k| layer.weights()[r * n_in + k] * x[k]).sum::<f64>())
        .collect()
}

/// Reconstruction of `steps` timesteps and the latent.
pub fn oracle_forward(m: &AutoencoderModel, x: &[f64], len: usize, steps: usize) -> (Vec<f64>, Vec<f64>) {
    let dims = m.dims();
    let d = dims.input_dim;
    let (mut h1, mut c1) = (vec![0.0; dims.hidden1], vec![0.0; dims.hidden1]);
    let (mut h2, mut c2) = (vec![0.0; dims.hidden2], vec![0.0; dims.hidden2]);
    for t in 0..len {
        (h1, c1) = oracle_step(&m.encoder1, &x[t * d..(t + 1) * d], &h1, &c1);
        (h2, c2) = oracle_step(&m.encoder2, &h1, &h2, &c2);
    }
    let z = h2;
    let mut dh1 = oracle_dense(&m.decoder_init, &z);
    let mut dc1 = vec![0.0; dims.hidden1];
    let (mut dh2, mut dc2) = (vec![0.0; dims.hidden2], vec![0.0; dims.hidden2]);
    let mut y = Vec::new();
    for _ in 0..steps {
        (dh1, dc1) = oracle_step(&m.decoder1, &z, &dh1, &dc1);
        (dh2, dc2) = oracle_step(&m.decoder2, &dh1, &dh2, &dc2);
        y.extend(oracle_dense(&m.output, &dh2));
    }
    (y, z)
}

/// Max relative error between analytic and central-difference gradients of
/// the full-batch loss. Relative errors use `max(|a|, |b|, 1e-6)` as the
/// denominator so that vanishing gradients compare absolutely.
pub fn gradient_check(model: &AutoencoderModel, ds: &TimeSeriesDataset, step: f64) -> f64 {
    let idx: Vec<usize> = (0..ds.len()).collect();
    let (_, grad) = model.batch_gradient(ds, &idx, Execution::Serial).unwrap();
    let analytic = grad.flat_params();
    let base = model.flat_params();
    let mut probe = model.clone();
    let mut worst: f64 = 0.0;
    for p in 0..base.len() {
        let mut plus = base.clone();
        plus[p] += step;
        probe.set_flat_params(&plus).unwrap();
        let lp = probe.batch_loss(ds, &idx).unwrap();
        let mut minus = base.clone();
        minus[p] -= step;
        probe.set_flat_params(&minus).unwrap();
        let lm = probe.batch_loss(ds, &idx).unwrap();
        let numeric = (lp - lm) / (2.0 * step);
        let denom = analytic[p].abs().max(numeric.abs()).max(1e-6);
        worst = worst.max((analytic[p] - numeric).abs() / denom);
    }
    worst
}

/// Four univariate series of lengths 6, 4, 5 and 3.
pub fn ragged_dataset() -> TimeSeriesDataset {
    let series = vec![
        vec![0.1, -0.4, 0.9, 0.3, -1.2, 0.5],
        vec![1.0, 0.2, -0.3, 0.8],
        vec![-0.6, 0.7, 0.0, 1.1, 0.4],
        vec![0.3, -0.9, 0.2],
    ];
    let ids = (0..4).map(|i| format!("s{i}")).collect();
    TimeSeriesDataset::from_series("grad", 1, ids, series, None).unwrap()
}

/// Eight phase-shifted sine periods of length 16.
pub fn phase_sinusoids() -> TimeSeriesDataset {
    let rows = (0..8)
        .map(|i| {
            (0..16)
                .map(|t| {
                    let tau = std::f64::consts::TAU;
                    (tau * t as f64 / 16.0 + i as f64 * tau / 8.0).sin()
                })
                .collect()
        })
        .collect();
    TimeSeriesDataset::from_rows("sinusoids", rows, None).unwrap()
}

/// (a, b, distance) per merge, with ids as in the production dendrogram,
/// recomputing every inter-cluster mean from scratch at each step.
pub fn naive_merges(square: &[Vec<f64>]) -> Vec<(usize, usize, f64)> {
    let m = square.len();
    // (members, node id); members sorted, so members[0] is the min leaf.
    let mut clusters: Vec<(Vec<usize>, usize)> = (0..m).map(|i| (vec![i], i)).collect();
    let mut out = Vec::new();
    for step in 0..m.saturating_sub(1) {
        let mut best: Option<(f64, usize, usize)> = None;
        for x in 0..clusters.len() {
            for y in 0..clusters.len() {
                if clusters[x].0[0] >= clusters[y].0[0] {
                    continue;
                }
                let (a, b) = (&clusters[x].0, &clusters[y].0);
                let mut s = 0.0;
                for &i in a {
                    for &j in b {
                        s += square[i][j];
                    }
                }
                let d = s / (a.len() * b.len()) as f64;
                let better = match best {
                    None => true,
                    Some((bd, ba, bb)) => d < bd || (d == bd && (a[0], b[0]) < (ba, bb)),
                };
                if better {
                    best = Some((d, a[0], b[0]));
                }
            }
        }
        let (d, la, lb) = best.unwrap();
        let xa = clusters.iter().position(|c| c.0[0] == la).unwrap();
        let xb = clusters.iter().position(|c| c.0[0] == lb).unwrap();
        out.push((clusters[xa].1, clusters[xb].1, d));
        let mut merged = clusters[xa].0.clone();
        merged.extend(&clusters[xb].0);
        merged.sort_unstable();
        let (hi, lo) = if xa > xb { (xa, xb) } else { (xb, xa) };
        clusters.remove(hi);
        clusters.remove(lo);
        clusters.push((merged, m + step));
    }
    out
}

#[allow(clippy::needless_range_loop)]
pub fn random_square(rng: &mut ChaCha8Rng, m: usize) -> Vec<Vec<f64>> {
    let mut sq = vec![vec![0.0; m]; m];
    for i in 0..m {
        for j in i + 1..m {
            let v = rng.gen_range(0.0..10.0);
            sq[i][j] = v;
            sq[j][i] = v;
        }
    }
    sq
}

pub fn brute_rand(a: &[usize], b: &[usize]) -> f64 {
    let m = a.len();
    let mut agree = 0usize;
    let mut pairs = 0usize;
    for i in 0..m {
        for j in i + 1..m {
            pairs += 1;
            if (a[i] == a[j]) == (b[i] == b[j]) {
                agree += 1;
            }
        }
    }
    agree as f64 / pairs as f64
}

/// Mutual information over the entropies' arithmetic mean.
pub fn table_nmi(a: &[usize], b: &[usize]) -> f64 {
    let n = a.len() as f64;
    let ka = a.iter().max().unwrap() + 1;
    let kb = b.iter().max().unwrap() + 1;
    let mut table = vec![vec![0.0f64; kb]; ka];
    for (&x, &y) in a.iter().zip(b) {
        table[x][y] += 1.0;
    }
    let rows: Vec<f64> = table.iter().map(|r| r.iter().sum()).collect();
    let cols: Vec<f64> = (0..kb).map(|j| table.iter().map(|r| r[j]).sum()).collect();
    let entropy = |v: &[f64]| -> f64 {
        v.iter().filter(|&&c| c > 0.0).map(|&c| -(c / n) * (c / n).ln()).sum()
    };
    let (ha, hb) = (entropy(&rows), entropy(&cols));
    let mut mi = 0.0;
    for i in 0..ka {
        for j in 0..kb {
            let c = table[i][j];
            if c > 0.0 {
                mi += (c / n) * ((c * n) / (rows[i] * cols[j])).ln();
            }
        }
    }
    if ha == 0.0 && hb == 0.0 {
        1.0
    } else if ha == 0.0 || hb == 0.0 {
        0.0
    } else {
        mi / ((ha + hb) / 2.0)
    }
}

/// Random labels with 1..=5 classes, relabelled to be contiguous from 0.
pub fn random_labels(rng: &mut ChaCha8Rng, m: usize) -> Vec<usize> {
    let k = rng.gen_range(1..=5);
    let raw: Vec<usize> = (0..m).map(|_| rng.gen_range(0..k)).collect();
    let mut map = HashMap::new();
    raw.iter()
        .map(|r| {
            let next = map.len();
            *map.entry(*r).or_insert(next)
        })
        .collect()
}

/// Cylinder–bell–funnel series of length `n`, `per_class` of each class,
/// as `(label, values)` rows.
pub fn cbf(per_class: usize, n: usize, seed: u64) -> Vec<(u32, Vec<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for i in 0..3 * per_class {
        let class = (i % 3) as u32;
        let a = rng.gen_range(n / 8..n / 4);
        let b = a + rng.gen_range(n / 4..3 * n / 4).min(n - a - 1);
        let eta = 6.0 + rng.gen_range(-1.0..1.0);
        let v = (0..n)
            .map(|t| {
                let inside = t >= a && t <= b;
                let shape = match class {
                    0 => 1.0,
                    1 => (t as f64 - a as f64) / (b - a) as f64,
                    _ => (b as f64 - t as f64) / (b - a) as f64,
                };
                let noise: f64 = rng.gen_range(-1.0..1.0);
                if inside { eta * shape + noise } else { noise }
            })
            .collect();
        out.push((class + 1, v));
    }
    out
}

pub fn write_tsv(dir: &Path, name: &str, rows: &[(u32, Vec<f64>)]) -> PathBuf {
    let path = dir.join(name);
    let text: String = rows
        .iter()
        .map(|(l, v)| {
            let vals: Vec<String> = v.iter().map(|x| format!("{x:?}")).collect();
            format!("{l}\t{}\n", vals.join("\t"))
        })
        .collect();
    std::fs::write(&path, text).unwrap();
    path
}
