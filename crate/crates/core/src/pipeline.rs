//! End-to-end runs: load → merge → normalise → represent → cluster → select.
//!
//! Two representations are supported: the autoencoder latent (`hc_aecs`)
//! and the flattened, z-normalised raw series (`hc_raw`). Everything after the
//! representation step is shared.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::autoencoder::{extract_aecs, train, AutoencoderModel, LatentMatrix, TrainConfig, TrainTrace};
use crate::cluster::{agglomerate, Dendrogram, FlatClustering};
use crate::dataset::{load_dataset, Format, TimeSeriesDataset};
use crate::distance::{
    distance_matrix, fit_covariance, CovarianceModel, DistanceMatrix, DistanceMeasure, MeasureKind,
    DEFAULT_RELATIVE_RIDGE,
};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::selection::{best_cluster, hubert_statistic_with_matrix, SelectionReport};

/// Environment variable naming the default data root for benchmark manifests.
pub const DATA_ROOT_ENV: &str = "HCAECS_DATA_ROOT";
pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    HcAecs,
    HcRaw,
}

impl Mode {
    pub fn code(self) -> &'static str {
        match self {
            Mode::HcAecs => "hc_aecs",
            Mode::HcRaw => "hc_raw",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub train_path: PathBuf,
    pub test_path: Option<PathBuf>,
    pub format: Format,
    pub hidden1: usize,
    pub hidden2: usize,
    pub training: TrainConfig,
    /// Number of clusters; defaults to the number of distinct labels.
    pub k: Option<usize>,
    pub mode: Mode,
    pub measures: Vec<MeasureKind>,
    pub output_dir: Option<PathBuf>,
    /// Reuse cached checkpoints and latents under `output_dir/cache`.
    pub use_cache: bool,
    #[serde(skip)]
    pub exec: Execution,
}

impl RunConfig {
    pub fn new(train_path: impl Into<PathBuf>, mode: Mode) -> Self {
        Self {
            train_path: train_path.into(),
            test_path: None,
            format: Format::UcrTsv,
            hidden1: 16,
            hidden2: 12,
            training: TrainConfig::default(),
            k: None,
            mode,
            measures: MeasureKind::ALL.to_vec(),
            output_dir: None,
            use_cache: true,
            exec: Execution::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.measures.is_empty() {
            return Err(Error::Config("at least one measure is required".into()));
        }
        let mut seen = self.measures.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.measures.len() {
            return Err(Error::Config("measures must not repeat".into()));
        }
        if self.k == Some(0) {
            return Err(Error::Config("K must be ≥ 1".into()));
        }
        if self.mode == Mode::HcAecs {
            if !(self.hidden2 >= 1 && self.hidden2 < self.hidden1) {
                return Err(Error::Config(format!(
                    "need 1 ≤ h2 < h1, got h1={}, h2={}",
                    self.hidden1, self.hidden2
                )));
            }
            self.training.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub t_aecs: f64,
    pub t_c: f64,
    pub t_v: f64,
    pub t_total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub name: String,
    pub series: usize,
    pub n_max: usize,
    pub dim: usize,
    pub classes: Option<usize>,
    pub fingerprint: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub crate_version: String,
    pub parallel: bool,
    pub threads: usize,
    pub os: String,
    pub arch: String,
}

impl Environment {
    pub fn current(exec: Execution) -> Self {
        #[cfg(feature = "parallel")]
        let threads = if exec.is_parallel() {
            rayon::current_num_threads()
        } else {
            1
        };
        #[cfg(not(feature = "parallel"))]
        let threads = {
            let _ = exec;
            1
        };
        Self {
            crate_version: env!("CARGO_PKG_VERSION").into(),
            parallel: exec.is_parallel(),
            threads,
            os: std::env::consts::OS.into(),
            arch: std::env::consts::ARCH.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub mode: Mode,
    pub dataset: DatasetSummary,
    pub k: usize,
    pub representation_width: usize,
    pub config: RunConfig,
    pub selection: SelectionReport,
    pub train_trace: Option<TrainTrace>,
    pub latent_fingerprint: Option<String>,
    pub covariance_fingerprint: String,
    pub timings: Timings,
    pub environment: Environment,
}

impl RunReport {
    pub fn write_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// SHA-256 over every stored field, with values taken bitwise.
pub fn dataset_fingerprint(ds: &TimeSeriesDataset) -> String {
    let mut h = Sha256::new();
    for v in [ds.len(), ds.n_max(), ds.dim()] {
        h.update((v as u64).to_le_bytes());
    }
    for id in ds.ids() {
        h.update(id.as_bytes());
        h.update([0u8]);
    }
    for &l in ds.lengths() {
        h.update((l as u64).to_le_bytes());
    }
    if let Some(labels) = ds.labels() {
        for &l in labels {
            h.update((l as u64).to_le_bytes());
        }
    }
    for v in ds.values() {
        h.update(v.to_bits().to_le_bytes());
    }
    hex::encode(&h.finalize()[..])
}

/// Loads the train split plus any test split, then merges and z-normalises.
pub fn prepare_dataset(cfg: &RunConfig) -> Result<TimeSeriesDataset> {
    let train = load_dataset(&cfg.train_path, cfg.format)?;
    let merged = match &cfg.test_path {
        Some(p) => train.merge(&load_dataset(p, cfg.format)?)?,
        None => train,
    };
    Ok(merged.z_normalize())
}

/// `K` from the config, else the number of label classes.
pub fn resolve_k(k: Option<usize>, ds: &TimeSeriesDataset) -> Result<usize> {
    let k = match k {
        Some(k) => k,
        None => ds.class_count().ok_or_else(|| {
            Error::Config("K is required when the dataset has no labels".into())
        })?,
    };
    if k == 0 || k > ds.len() {
        return Err(Error::Config(format!(
            "K={k} must lie in 1..={}",
            ds.len()
        )));
    }
    Ok(k)
}

/// One measure's clustering of a representation.
#[derive(Debug, Clone)]
pub struct MeasureClustering {
    pub measure: MeasureKind,
    pub dendrogram: Dendrogram,
    pub clustering: FlatClustering,
}

#[derive(Debug, Clone)]
pub struct Clustered {
    pub per_measure: Vec<MeasureClustering>,
    /// Pooled covariance of the representation, used by ML and the statistic.
    pub covariance: Arc<CovarianceModel>,
    pub mahalanobis: Option<DistanceMatrix>,
}

/// Fits the pooled covariance and clusters `rows` under every measure.
pub fn cluster_all(
    rows: &[Vec<f64>],
    k: usize,
    measures: &[MeasureKind],
    exec: Execution,
) -> Result<Clustered> {
    if rows.len() < 2 {
        return Err(Error::Shape("need at least 2 series to cluster".into()));
    }
    let covariance = Arc::new(fit_covariance(rows, DEFAULT_RELATIVE_RIDGE)?);
    let mut per_measure = Vec::with_capacity(measures.len());
    let mut mahalanobis = None;
    for &measure in measures {
        let dm = DistanceMeasure::new(measure, Some(covariance.clone()))?;
        let dist = distance_matrix(rows, &dm, exec)?;
        let dendrogram = agglomerate(&dist)?;
        let clustering = dendrogram.cut(k)?.with_measure(measure);
        if measure == MeasureKind::Mahalanobis {
            mahalanobis = Some(dist);
        }
        per_measure.push(MeasureClustering {
            measure,
            dendrogram,
            clustering,
        });
    }
    Ok(Clustered {
        per_measure,
        covariance,
        mahalanobis,
    })
}

/// Scores every clustering with the Hubert statistic and picks the best.
pub fn select(rows: &[Vec<f64>], clustered: &Clustered, exec: Execution) -> Result<SelectionReport> {
    let clusterings = clustered
        .per_measure
        .iter()
        .map(|mc| mc.clustering.clone())
        .collect();
    score(rows, &clustered.covariance, clustered.mahalanobis.as_ref(), clusterings, exec)
}

/// Selection over externally produced clusterings of `rows`, with the
/// covariance fitted on `rows`.
pub fn select_clusterings(
    rows: &[Vec<f64>],
    clusterings: Vec<FlatClustering>,
    exec: Execution,
) -> Result<SelectionReport> {
    let cov = Arc::new(fit_covariance(rows, DEFAULT_RELATIVE_RIDGE)?);
    score(rows, &cov, None, clusterings, exec)
}

fn score(
    rows: &[Vec<f64>],
    cov: &Arc<CovarianceModel>,
    ml: Option<&DistanceMatrix>,
    clusterings: Vec<FlatClustering>,
    exec: Execution,
) -> Result<SelectionReport> {
    let owned;
    let ml = match ml {
        Some(m) => m,
        None => {
            owned = distance_matrix(rows, &DistanceMeasure::mahalanobis(cov.clone()), exec)?;
            &owned
        }
    };
    let scored = clusterings
        .into_iter()
        .map(|c| {
            let t = hubert_statistic_with_matrix(rows, ml, &c, cov, exec)?;
            Ok((c, t))
        })
        .collect::<Result<Vec<_>>>()?;
    best_cluster(scored)
}

fn round_ms(secs: f64) -> f64 {
    (secs * 1000.0).round() / 1000.0
}

fn cache_key(ds_fp: &str, cfg: &RunConfig, d: usize, n_max: usize) -> String {
    let t = &cfg.training;
    let descr = format!(
        "{ds_fp}|d={d}|n={n_max}|h1={}|h2={}|seed={}|epochs={}|batch={}|lr={:?}|mom={:?}|clip={:?}",
        cfg.hidden1, cfg.hidden2, t.seed, t.epochs, t.batch_size, t.learning_rate, t.momentum, t.clip_norm
    );
    let digest = Sha256::digest(descr.as_bytes());
    hex::encode(&digest[..12])
}

/// Cache directory for one (dataset, architecture, training) combination.
pub fn cache_dir(output_dir: &Path, ds: &TimeSeriesDataset, cfg: &RunConfig) -> PathBuf {
    let key = cache_key(&dataset_fingerprint(ds), cfg, ds.dim(), ds.n_max());
    output_dir.join("cache").join(format!("{}-{key}", sanitize(ds.name())))
}

fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

struct Representation {
    rows: Vec<Vec<f64>>,
    trace: Option<TrainTrace>,
    latent: Option<LatentMatrix>,
}

fn learn_aecs(cfg: &RunConfig, ds: &TimeSeriesDataset) -> Result<Representation> {
    let cache = match (&cfg.output_dir, cfg.use_cache) {
        (Some(out), true) => Some(cache_dir(out, ds, cfg)),
        _ => None,
    };
    if let Some(dir) = &cache {
        if let Some(rep) = load_cached(dir, ds)? {
            return Ok(rep);
        }
    }
    let model = AutoencoderModel::new(ds.dim(), cfg.hidden1, cfg.hidden2, ds.n_max(), cfg.training.seed)?;
    let (model, trace) = train(&model, ds, &cfg.training, cfg.exec)?;
    let latent = extract_aecs(&model, ds, cfg.exec)?;
    if let Some(dir) = &cache {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        model.save(&dir.join("model.json"))?;
        latent.write_csv(&dir.join("latent.csv"))?;
        let trace_path = dir.join("trace.json");
        std::fs::write(&trace_path, serde_json::to_string(&trace)?)
            .map_err(|e| Error::io(&trace_path, e))?;
    }
    Ok(Representation {
        rows: latent.values.clone(),
        trace: Some(trace),
        latent: Some(latent),
    })
}

fn load_cached(dir: &Path, ds: &TimeSeriesDataset) -> Result<Option<Representation>> {
    let (model_path, latent_path, trace_path) =
        (dir.join("model.json"), dir.join("latent.csv"), dir.join("trace.json"));
    if !(model_path.exists() && latent_path.exists() && trace_path.exists()) {
        return Ok(None);
    }
    let model = AutoencoderModel::load(&model_path)?;
    let mut latent = LatentMatrix::read_csv(&latent_path)?;
    if latent.ids != ds.ids() {
        return Err(Error::Validation(format!(
            "cached latent {} does not match the dataset's series",
            latent_path.display()
        )));
    }
    latent.source_model_fingerprint = model.fingerprint();
    let text = std::fs::read_to_string(&trace_path).map_err(|e| Error::io(&trace_path, e))?;
    let trace: TrainTrace = serde_json::from_str(&text)?;
    Ok(Some(Representation {
        rows: latent.values.clone(),
        trace: Some(trace),
        latent: Some(latent),
    }))
}

/// Runs the configured mode.
pub fn run(cfg: &RunConfig) -> Result<RunReport> {
    match cfg.mode {
        Mode::HcAecs => run_hc_aecs(cfg),
        Mode::HcRaw => run_hc_raw(cfg),
    }
}

/// Autoencoder latent → clustering under each measure → selection.
pub fn run_hc_aecs(cfg: &RunConfig) -> Result<RunReport> {
    let mut cfg = cfg.clone();
    cfg.mode = Mode::HcAecs;
    run_with(&cfg, learn_aecs)
}

/// Same flow on the flattened, zero-padded, z-normalised raw series.
pub fn run_hc_raw(cfg: &RunConfig) -> Result<RunReport> {
    let mut cfg = cfg.clone();
    cfg.mode = Mode::HcRaw;
    run_with(&cfg, |_, ds| {
        Ok(Representation {
            rows: ds.flattened_rows(),
            trace: None,
            latent: None,
        })
    })
}

/// Clusters and selects on a precomputed latent matrix (row `i` ↔ series `i`).
pub fn run_on_latent(cfg: &RunConfig, latent: LatentMatrix) -> Result<RunReport> {
    let mut cfg = cfg.clone();
    cfg.mode = Mode::HcAecs;
    run_with(&cfg, move |_, ds| {
        if latent.ids != ds.ids() {
            return Err(Error::Validation(
                "latent series ids do not match the dataset".into(),
            ));
        }
        Ok(Representation {
            rows: latent.values.clone(),
            trace: None,
            latent: Some(latent.clone()),
        })
    })
}

fn run_with(
    cfg: &RunConfig,
    represent: impl FnOnce(&RunConfig, &TimeSeriesDataset) -> Result<Representation>,
) -> Result<RunReport> {
    let start = Instant::now();
    cfg.validate()?;
    let ds = prepare_dataset(cfg).map_err(|e| e.in_stage("load"))?;
    let k = resolve_k(cfg.k, &ds)?;

    let t0 = Instant::now();
    let rep = represent(cfg, &ds).map_err(|e| e.in_stage("aecs"))?;
    let t_aecs = if cfg.mode == Mode::HcAecs { t0.elapsed().as_secs_f64() } else { 0.0 };

    let t1 = Instant::now();
    let clustered = cluster_all(&rep.rows, k, &cfg.measures, cfg.exec).map_err(|e| e.in_stage("cluster"))?;
    let t_c = t1.elapsed().as_secs_f64();

    let t2 = Instant::now();
    let mut selection = select(&rep.rows, &clustered, cfg.exec).map_err(|e| e.in_stage("select"))?;
    let t_v = t2.elapsed().as_secs_f64();

    if let Some(labels) = ds.labels() {
        selection.score_against(labels).map_err(|e| e.in_stage("select"))?;
    }

    let mut report = RunReport {
        schema_version: REPORT_SCHEMA_VERSION,
        mode: cfg.mode,
        dataset: DatasetSummary {
            name: ds.name().to_string(),
            series: ds.len(),
            n_max: ds.n_max(),
            dim: ds.dim(),
            classes: ds.class_count(),
            fingerprint: dataset_fingerprint(&ds),
        },
        k,
        representation_width: rep.rows.first().map_or(0, Vec::len),
        config: cfg.clone(),
        selection,
        train_trace: rep.trace,
        latent_fingerprint: rep.latent.as_ref().map(|l| l.source_model_fingerprint.clone()),
        covariance_fingerprint: clustered.covariance.fingerprint(),
        timings: Timings {
            t_aecs: round_ms(t_aecs),
            t_c: round_ms(t_c),
            t_v: round_ms(t_v),
            t_total: 0.0,
        },
        environment: Environment::current(cfg.exec),
    };

    if let Some(out) = &cfg.output_dir {
        write_outputs(out, &ds, &clustered, rep.latent.as_ref()).map_err(|e| e.in_stage("report"))?;
        report.timings.t_total = round_ms(start.elapsed().as_secs_f64());
        report
            .write_json(&out.join("report.json"))
            .map_err(|e| e.in_stage("report"))?;
    } else {
        report.timings.t_total = round_ms(start.elapsed().as_secs_f64());
    }
    Ok(report)
}

fn write_outputs(
    out: &Path,
    ds: &TimeSeriesDataset,
    clustered: &Clustered,
    latent: Option<&LatentMatrix>,
) -> Result<()> {
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    if let Some(latent) = latent {
        latent.write_csv(&out.join("latent.csv"))?;
    }
    for mc in &clustered.per_measure {
        let code = mc.measure.code();
        mc.dendrogram.write_text(&out.join(format!("dendrogram_{code}.txt")))?;
        mc.clustering
            .write_csv(&out.join(format!("clusters_{code}.csv")), ds.ids())?;
    }
    Ok(())
}

/// One manifest line: a dataset name and an optional K override.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub name: String,
    pub k: Option<usize>,
}

/// Parses `name[,K]` lines; blank lines and `#` comments are skipped.
pub fn parse_manifest(text: &str) -> Result<Vec<ManifestEntry>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split(',').map(str::trim);
        let name = parts.next().unwrap_or_default().to_string();
        let k = match parts.next() {
            Some("") | None => None,
            Some(v) => Some(v.parse::<usize>().map_err(|_| Error::Parse {
                line: i + 1,
                message: format!("invalid K {v:?}"),
            })?),
        };
        if name.is_empty() || parts.next().is_some() {
            return Err(Error::Parse {
                line: i + 1,
                message: "expected `name[,K]`".into(),
            });
        }
        out.push(ManifestEntry { name, k });
    }
    Ok(out)
}

/// `<root>/<name>/<name>_TRAIN.tsv` and, when present, `_TEST.tsv`.
pub fn resolve_ucr(root: &Path, name: &str) -> Result<(PathBuf, Option<PathBuf>)> {
    let dir = root.join(name);
    let train = dir.join(format!("{name}_TRAIN.tsv"));
    let test = dir.join(format!("{name}_TEST.tsv"));
    if !train.is_file() {
        return Err(Error::io(
            &train,
            std::io::Error::new(std::io::ErrorKind::NotFound, "training split not found"),
        ));
    }
    Ok((train, test.is_file().then_some(test)))
}

/// One benchmark table row.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub dataset: String,
    pub result: std::result::Result<RunReport, String>,
}

/// Runs every manifest entry under the template config; failures are kept
/// as rows and do not stop the run.
pub fn benchmark(entries: &[ManifestEntry], data_root: &Path, template: &RunConfig) -> Vec<BenchRow> {
    entries
        .iter()
        .map(|e| {
            let result = resolve_ucr(data_root, &e.name).and_then(|(train, test)| {
                let mut cfg = template.clone();
                cfg.train_path = train;
                cfg.test_path = test;
                cfg.k = e.k.or(template.k);
                cfg.output_dir = template.output_dir.as_ref().map(|o| o.join(&e.name));
                run(&cfg)
            });
            BenchRow {
                dataset: e.name.clone(),
                result: result.map_err(|err| err.to_string()),
            }
        })
        .collect()
}

pub const BENCH_HEADER: [&str; 19] = [
    "dataset", "mode", "status", "series", "k", "width", "ri_CH", "t_CH", "ri_MA", "t_MA", "ri_ML",
    "t_ML", "best", "t_aecs", "t_c", "t_v", "t_total", "per_instance_ms", "error",
];

/// Writes the aggregate table as CSV.
pub fn write_bench_csv<W: std::io::Write>(rows: &[BenchRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(BENCH_HEADER)?;
    for row in rows {
        let mut rec: Vec<String> = vec![row.dataset.clone()];
        match &row.result {
            Ok(r) => {
                rec.push(r.mode.code().into());
                rec.push("ok".into());
                rec.push(r.dataset.series.to_string());
                rec.push(r.k.to_string());
                rec.push(r.representation_width.to_string());
                for m in MeasureKind::ALL {
                    match r.selection.result(m) {
                        Some(res) => {
                            rec.push(
                                res.external
                                    .map_or(String::new(), |e| format!("{:.6}", e.rand_index)),
                            );
                            rec.push(format!("{:.6}", res.hubert.t));
                        }
                        None => rec.extend([String::new(), String::new()]),
                    }
                }
                let best: Vec<&str> = r.selection.best_measures.iter().map(|m| m.code()).collect();
                rec.push(best.join("|"));
                let t = r.timings;
                rec.extend([t.t_aecs, t.t_c, t.t_v, t.t_total].map(|v| format!("{v:.3}")));
                rec.push(format!("{:.6}", 1000.0 * t.t_total / r.dataset.series as f64));
                rec.push(String::new());
            }
            Err(msg) => {
                rec.push(String::new());
                rec.push("error".into());
                rec.extend(std::iter::repeat_n(String::new(), 15));
                rec.push(msg.clone());
            }
        }
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io("<bench output>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_tsv(dir: &Path, name: &str, rows: &[(u32, Vec<f64>)]) -> PathBuf {
        let path = dir.join(name);
        let text: String = rows
            .iter()
            .map(|(l, v)| {
                let vals: Vec<String> = v.iter().map(|x| x.to_string()).collect();
                format!("{l}\t{}\n", vals.join("\t"))
            })
            .collect();
        std::fs::write(&path, text).unwrap();
        path
    }

    fn two_class(n: usize, m: usize) -> Vec<(u32, Vec<f64>)> {
        (0..m)
            .map(|i| {
                let class = (i % 2) as u32;
                let freq = if class == 0 { 0.3 } else { 1.1 };
                let v = (0..n).map(|t| (t as f64 * freq + i as f64 * 0.05).sin()).collect();
                (class + 1, v)
            })
            .collect()
    }

    #[test]
    fn manifest_parsing() {
        let m = parse_manifest("# c\nCoffee\n\nGunPoint, 2\n").unwrap();
        assert_eq!(
            m,
            vec![
                ManifestEntry { name: "Coffee".into(), k: None },
                ManifestEntry { name: "GunPoint".into(), k: Some(2) },
            ]
        );
        assert!(matches!(parse_manifest("A,x"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse_manifest("A,1,2"), Err(Error::Parse { .. })));
    }

    #[test]
    fn config_validation() {
        let mut cfg = RunConfig::new("x", Mode::HcAecs);
        assert!(cfg.validate().is_ok());
        cfg.measures.clear();
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        let mut cfg = RunConfig::new("x", Mode::HcAecs);
        cfg.hidden2 = 16;
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        cfg.mode = Mode::HcRaw;
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn raw_run_on_two_series_is_a_single_merge() {
        let dir = tempfile::tempdir().unwrap();
        let train = write_tsv(dir.path(), "t.tsv", &[(1, vec![0.0, 1.0, 2.0]), (2, vec![2.0, 0.0, 1.0])]);
        let mut cfg = RunConfig::new(train, Mode::HcRaw);
        cfg.exec = Execution::Serial;
        let report = run_hc_raw(&cfg).unwrap();
        assert_eq!(report.k, 2);
        for r in &report.selection.results {
            assert_eq!(r.clustering.assignments(), &[0, 1]);
            assert_eq!(r.external.unwrap().rand_index, 1.0);
        }
    }

    #[test]
    fn single_measure_run_selects_it() {
        let dir = tempfile::tempdir().unwrap();
        let train = write_tsv(dir.path(), "t.tsv", &two_class(20, 10));
        let mut cfg = RunConfig::new(train, Mode::HcAecs);
        cfg.measures = vec![MeasureKind::Chebyshev];
        cfg.training.epochs = 2;
        let report = run_hc_aecs(&cfg).unwrap();
        assert_eq!(report.selection.results.len(), 1);
        assert_eq!(report.selection.best_measures, vec![MeasureKind::Chebyshev]);
        assert_eq!(report.representation_width, 12);
        assert!(report.timings.t_aecs >= 0.0);
    }

    #[test]
    fn cached_latent_gives_identical_selection() {
        let dir = tempfile::tempdir().unwrap();
        let train = write_tsv(dir.path(), "t.tsv", &two_class(20, 12));
        let mut cfg = RunConfig::new(train, Mode::HcAecs);
        cfg.training.epochs = 2;
        cfg.output_dir = Some(dir.path().join("out"));
        let first = run_hc_aecs(&cfg).unwrap();
        let second = run_hc_aecs(&cfg).unwrap();
        assert_eq!(first.selection, second.selection);
        assert_eq!(first.train_trace, second.train_trace);

        let latent = LatentMatrix::read_csv(&dir.path().join("out/latent.csv")).unwrap();
        let third = run_on_latent(&cfg, latent).unwrap();
        assert_eq!(first.selection, third.selection);

        let back = RunReport::read_json(&dir.path().join("out/report.json")).unwrap();
        assert_eq!(back.selection, second.selection);
    }

    #[test]
    fn bench_records_failures_and_continues() {
        let dir = tempfile::tempdir().unwrap();
        let ds_dir = dir.path().join("Toy");
        std::fs::create_dir_all(&ds_dir).unwrap();
        write_tsv(&ds_dir, "Toy_TRAIN.tsv", &two_class(12, 6));
        write_tsv(&ds_dir, "Toy_TEST.tsv", &two_class(12, 4));
        let entries = parse_manifest("Toy\nMissing\n").unwrap();
        let rows = benchmark(&entries, dir.path(), &RunConfig::new("", Mode::HcRaw));
        assert!(rows[0].result.is_ok());
        assert!(rows[1].result.is_err());
        assert_eq!(rows[0].result.as_ref().unwrap().dataset.series, 10);

        let mut buf = Vec::new();
        write_bench_csv(&rows, &mut buf).unwrap();
        let mut reader = csv::Reader::from_reader(buf.as_slice());
        let records: Vec<csv::StringRecord> = reader.records().map(|r| r.unwrap()).collect();
        assert_eq!(records.len(), 2);
        assert_eq!(&records[0][2], "ok");
        assert_eq!(&records[1][2], "error");
    }
}
