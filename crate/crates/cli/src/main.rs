//! `hcaecs`: command-line driver for the clustering pipeline.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hc_aecs::autoencoder::{extract_aecs, train, AutoencoderModel, LatentMatrix, TrainConfig};
use hc_aecs::cluster::FlatClustering;
use hc_aecs::dataset::Format;
use hc_aecs::distance::MeasureKind;
use hc_aecs::pipeline::{
    benchmark, cluster_all, parse_manifest, prepare_dataset, run_hc_aecs, run_hc_raw,
    select_clusterings, write_bench_csv, Mode, RunConfig, RunReport, DATA_ROOT_ENV,
};
use hc_aecs::selection::SelectionReport;
use hc_aecs::{Error, Execution, Result};

#[derive(Parser)]
#[command(name = "hcaecs", version, about = "Hierarchical clustering of time series on autoencoder latents")]
struct Cli {
    /// Run every data-parallel loop on the calling thread.
    #[arg(long, global = true)]
    serial: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the autoencoder and export its latent matrix.
    TrainAecs {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cluster a feature CSV (`series_id,z0,…`) under each measure.
    Cluster {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        k: usize,
        #[command(flatten)]
        measures: MeasureArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score flat clusterings of a feature CSV and pick the best measure.
    Select {
        #[arg(long)]
        features: PathBuf,
        /// Clustering CSVs; file names `clusters_<CODE>.csv` name the measure.
        #[arg(long, required = true, num_args = 1..)]
        clusters: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// End-to-end run on the autoencoder latent.
    Run {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        measures: MeasureArgs,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Retrain even when a cached latent exists.
        #[arg(long)]
        no_cache: bool,
    },
    /// End-to-end run on the flattened raw series.
    RunRaw {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        measures: MeasureArgs,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every dataset of a manifest (`name[,K]` per line) and write a CSV table.
    Bench {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, env = DATA_ROOT_ENV)]
        data_root: PathBuf,
        #[arg(long, value_enum, default_value = "hc-aecs")]
        mode: BenchMode,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        measures: MeasureArgs,
        /// Table destination; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Per-dataset report directories.
        #[arg(long)]
        reports: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum BenchMode {
    HcAecs,
    HcRaw,
}

#[derive(Args)]
struct DataArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    test: Option<PathBuf>,
    #[arg(long, default_value = "ucr_tsv", value_parser = parse_format)]
    format: Format,
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long, default_value_t = 16)]
    h1: usize,
    #[arg(long, default_value_t = 12)]
    h2: usize,
    #[arg(long, default_value_t = 0.004)]
    lr: f64,
    #[arg(long, default_value_t = 0.0)]
    momentum: f64,
    #[arg(long, default_value_t = 32)]
    batch: usize,
    #[arg(long, default_value_t = 30)]
    epochs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Clip the global gradient norm to this value.
    #[arg(long)]
    clip: Option<f64>,
}

impl ModelArgs {
    fn training(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch,
            learning_rate: self.lr,
            momentum: self.momentum,
            seed: self.seed,
            clip_norm: self.clip,
        }
    }
}

#[derive(Args)]
struct MeasureArgs {
    /// Comma-separated subset of CH, MA, ML.
    #[arg(long, value_delimiter = ',', default_value = "CH,MA,ML", value_parser = parse_measure)]
    measures: Vec<MeasureKind>,
}

fn parse_format(s: &str) -> Result<Format> {
    s.parse()
}

fn parse_measure(s: &str) -> Result<MeasureKind> {
    s.parse()
}

fn base_config(data: &DataArgs, mode: Mode, measures: &MeasureArgs, k: Option<usize>, out: Option<PathBuf>, exec: Execution) -> RunConfig {
    let mut cfg = RunConfig::new(&data.train, mode);
    cfg.test_path = data.test.clone();
    cfg.format = data.format;
    cfg.measures = measures.measures.clone();
    cfg.k = k;
    cfg.output_dir = out;
    cfg.exec = exec;
    cfg
}

fn print_summary(report: &RunReport) {
    println!(
        "{} on {} (M={}, K={}, width {})",
        match report.mode {
            Mode::HcAecs => "HC-AECS",
            Mode::HcRaw => "HC-L",
        },
        report.dataset.name,
        report.dataset.series,
        report.k,
        report.representation_width
    );
    print_selection(&report.selection);
    let t = report.timings;
    println!(
        "t_aecs {:.3} s, t_c {:.3} s, t_v {:.3} s, total {:.3} s",
        t.t_aecs, t.t_c, t.t_v, t.t_total
    );
}

fn print_selection(selection: &SelectionReport) {
    for r in &selection.results {
        let ext = r
            .external
            .map(|e| format!("  RI {:.4}  NMI {:.4}", e.rand_index, e.nmi))
            .unwrap_or_default();
        println!("  {}  T {:.6}{ext}", r.measure, r.hubert.t);
    }
    let best: Vec<&str> = selection.best_measures.iter().map(|m| m.code()).collect();
    println!("best: {}", best.join(", "));
}

fn measure_from_file_name(path: &Path) -> Option<MeasureKind> {
    let stem = path.file_stem()?.to_str()?;
    stem.rsplit('_').next()?.parse().ok()
}

fn execute(cli: Cli) -> Result<()> {
    let exec = if cli.serial {
        Execution::Serial
    } else {
        Execution::Parallel
    };
    match cli.command {
        Command::TrainAecs { data, model, out } => {
            let cfg = {
                let mut c = base_config(&data, Mode::HcAecs, &MeasureArgs { measures: MeasureKind::ALL.to_vec() }, None, None, exec);
                c.hidden1 = model.h1;
                c.hidden2 = model.h2;
                c.training = model.training();
                c
            };
            cfg.validate()?;
            let ds = prepare_dataset(&cfg).map_err(|e| e.in_stage("load"))?;
            let init = AutoencoderModel::new(ds.dim(), cfg.hidden1, cfg.hidden2, ds.n_max(), cfg.training.seed)?;
            let (trained, trace) = train(&init, &ds, &cfg.training, exec).map_err(|e| e.in_stage("aecs"))?;
            let latent = extract_aecs(&trained, &ds, exec)?;
            std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
            trained.save(&out.join("model.json"))?;
            latent.write_csv(&out.join("latent.csv"))?;
            let trace_path = out.join("trace.json");
            std::fs::write(&trace_path, serde_json::to_string_pretty(&trace)?)
                .map_err(|e| Error::io(&trace_path, e))?;
            println!(
                "trained {} epochs on {} series; final loss {:.6}; wrote {}",
                trace.losses.len(),
                ds.len(),
                trace.losses.last().copied().unwrap_or(f64::NAN),
                out.display()
            );
        }
        Command::Cluster { features, k, measures, out } => {
            let latent = LatentMatrix::read_csv(&features)?;
            let clustered = cluster_all(latent.rows(), k, &measures.measures, exec)?;
            std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
            for mc in &clustered.per_measure {
                let code = mc.measure.code();
                mc.dendrogram.write_text(&out.join(format!("dendrogram_{code}.txt")))?;
                mc.clustering.write_csv(&out.join(format!("clusters_{code}.csv")), &latent.ids)?;
            }
            println!("clustered {} series into K={k}; wrote {}", latent.len(), out.display());
        }
        Command::Select { features, clusters, out } => {
            let latent = LatentMatrix::read_csv(&features)?;
            let mut flat = Vec::with_capacity(clusters.len());
            for path in &clusters {
                let measure = measure_from_file_name(path).ok_or_else(|| {
                    Error::Config(format!(
                        "cannot infer the measure from {}; expected clusters_<CH|MA|ML>.csv",
                        path.display()
                    ))
                })?;
                let (ids, c) = FlatClustering::read_csv(path)?;
                if ids != latent.ids {
                    return Err(Error::Validation(format!(
                        "{} does not list the feature file's series in order",
                        path.display()
                    )));
                }
                flat.push(c.with_measure(measure));
            }
            let selection = select_clusterings(latent.rows(), flat, exec)?;
            print_selection(&selection);
            if let Some(out) = out {
                std::fs::write(&out, serde_json::to_string_pretty(&selection)?)
                    .map_err(|e| Error::io(&out, e))?;
            }
        }
        Command::Run { data, model, measures, k, out, no_cache } => {
            let mut cfg = base_config(&data, Mode::HcAecs, &measures, k, out, exec);
            cfg.hidden1 = model.h1;
            cfg.hidden2 = model.h2;
            cfg.training = model.training();
            cfg.use_cache = !no_cache;
            print_summary(&run_hc_aecs(&cfg)?);
        }
        Command::RunRaw { data, measures, k, out } => {
            let cfg = base_config(&data, Mode::HcRaw, &measures, k, out, exec);
            print_summary(&run_hc_raw(&cfg)?);
        }
        Command::Bench { manifest, data_root, mode, model, measures, out, reports } => {
            let text = std::fs::read_to_string(&manifest).map_err(|e| Error::io(&manifest, e))?;
            let entries = parse_manifest(&text)?;
            let mode = match mode {
                BenchMode::HcAecs => Mode::HcAecs,
                BenchMode::HcRaw => Mode::HcRaw,
            };
            let mut template = RunConfig::new(PathBuf::new(), mode);
            template.hidden1 = model.h1;
            template.hidden2 = model.h2;
            template.training = model.training();
            template.measures = measures.measures;
            template.output_dir = reports;
            template.exec = exec;
            template.validate()?;
            let rows = benchmark(&entries, &data_root, &template);
            match out {
                Some(path) => {
                    let file = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
                    write_bench_csv(&rows, file)?;
                }
                None => write_bench_csv(&rows, std::io::stdout().lock())?,
            }
            let failed = rows.iter().filter(|r| r.result.is_err()).count();
            if failed > 0 {
                eprintln!("{failed} of {} datasets failed", rows.len());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
