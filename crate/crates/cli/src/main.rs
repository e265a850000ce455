use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use ditwpc::benchmarks::FittedBenchmark;
use ditwpc::curve_models::{Curve, PiecewiseWpc};
use ditwpc::metrics::{evaluate, write_reports_csv};
use ditwpc::nn::{load_model_expecting, UNet};
use ditwpc::pipeline::{
    apply_scenario, ingest_scada, measure_wpcm_runtime, run_benchmark_suite, run_dit_training, run_wpcm,
    write_runtime_csv, Ingested, LabelSource, RunConfig, Scenario, OUT_DIR_ENV,
};
use ditwpc::raster::{marker_size_for_test, render_curve, render_overlay, render_scatter};
use ditwpc::synthesis::{synthesize_dataset, synthesize_indexed, DatasetManifest, ScatterSet};

#[derive(Parser)]
#[command(name = "ditwpc", version, about = "Wind power curve modeling from SCADA scatter images")]
struct Cli {
    /// TOML run configuration; missing sections take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Start from the 64x64 CPU profile instead of the full-size defaults.
    #[arg(long, global = true)]
    desk: bool,
    /// Output directory (overrides the config file and $DITWPC_OUT_DIR).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a labeled training set as CSV files plus a seed manifest.
    Synth {
        /// Number of samples (defaults to synthesis.n_samples).
        #[arg(long)]
        n: Option<usize>,
        /// Also write the rendered scatter/curve image pairs.
        #[arg(long)]
        images: bool,
    },
    /// Train the generator on synthetic pairs.
    Train,
    /// Model the power curve of a SCADA file with a trained generator.
    Infer {
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Compare the generator(s) with the classical benchmarks on a held-out split.
    Benchmark {
        /// SCADA CSV; omit to use a synthetic sample.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Index of the synthetic sample used when no input is given.
        #[arg(long, default_value_t = 0)]
        synthetic: usize,
        /// Generator checkpoints, as NAME=PATH or PATH.
        #[arg(long)]
        checkpoint: Vec<String>,
        /// Also time one modeling call per model.
        #[arg(long)]
        runtime: bool,
    },
    /// Score a saved curve against a SCADA file.
    Evaluate {
        /// curve.json from `infer`, or a fitted benchmark record.
        #[arg(long)]
        curve: PathBuf,
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Draw a SCADA file, optionally with a curve on top.
    Plot {
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        curve: Option<PathBuf>,
        /// Integer upscaling of the configured frame.
        #[arg(long, default_value_t = 1)]
        scale: usize,
    },
    /// Print the effective configuration as TOML.
    ShowConfig,
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let cfg = match &cli.config {
        Some(path) => RunConfig::load(path).with_context(|| format!("loading {}", path.display()))?,
        None if cli.desk => RunConfig::desk(),
        None => RunConfig::default(),
    };
    Ok(cfg)
}

fn out_dir(cli: &Cli, cfg: &RunConfig) -> Result<PathBuf> {
    let dir = cli.out.clone().unwrap_or_else(|| cfg.output_dir());
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn input_path(flag: &Option<PathBuf>, cfg: &RunConfig) -> Result<PathBuf> {
    match flag.clone().or_else(|| cfg.paths.input.clone()) {
        Some(p) => Ok(p),
        None => bail!("no input file: pass --input or set paths.input"),
    }
}

/// Reads the SCADA file, or the user's cleaned file under S3.
fn ingest(path: &Path, cfg: &RunConfig) -> Result<Ingested> {
    let path = match (&cfg.scenario.scenario, &cfg.scenario.cleaned_input) {
        (Scenario::S3Careful, Some(clean)) => clean.as_path(),
        _ => path,
    };
    let got = ingest_scada(path, &cfg.normalization).with_context(|| format!("reading {}", path.display()))?;
    if got.rejected > 0 {
        log::warn!("{}: {} rows rejected", path.display(), got.rejected);
    }
    log::info!(
        "{} points; cut-out speed {}, rated power {}",
        got.data.len(),
        got.cutout_speed,
        got.rated_power
    );
    Ok(got)
}

fn load_generator(path: &Path, cfg: &RunConfig) -> Result<UNet<f32>> {
    load_model_expecting(path, &cfg.network).with_context(|| format!("loading {}", path.display()))
}

fn generator_name(model: &UNet<f32>) -> &'static str {
    if model.config().skip_connections {
        "DITU-net"
    } else {
        "DCAE"
    }
}

enum SavedCurve {
    Dit(PiecewiseWpc),
    Benchmark(FittedBenchmark),
}

impl Curve for SavedCurve {
    fn value(&self, x: f64) -> f64 {
        match self {
            SavedCurve::Dit(c) => c.value(x),
            SavedCurve::Benchmark(b) => b.value(x),
        }
    }
}

fn load_curve(path: &Path) -> Result<SavedCurve> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    if let Ok(c) = serde_json::from_str::<PiecewiseWpc>(&text) {
        return Ok(SavedCurve::Dit(c));
    }
    let b = serde_json::from_str::<FittedBenchmark>(&text)
        .with_context(|| format!("{} is neither a curve record nor a fitted benchmark", path.display()))?;
    Ok(SavedCurve::Benchmark(b))
}

fn synth(cfg: &RunConfig, out: &Path, n: Option<usize>, images: bool) -> Result<()> {
    let mut scfg = cfg.synthesis.clone();
    if let Some(n) = n {
        scfg.n_samples = n;
    }
    let samples = synthesize_dataset(&scfg)?;
    let dir = out.join("samples");
    for (i, s) in samples.iter().enumerate() {
        s.scatter.save_csv(&dir.join(format!("sample_{i:05}.csv")))?;
        if images {
            render_scatter(&s.scatter, &cfg.raster)?.save_png(&dir.join(format!("sample_{i:05}_scada.png")))?;
            render_curve(&s.truth, &cfg.raster).save_png(&dir.join(format!("sample_{i:05}_neat.png")))?;
        }
    }
    ditwpc::io::write_json(&out.join("synth_manifest.json"), &DatasetManifest::new(&scfg, &samples))?;
    println!("wrote {} samples to {}", samples.len(), dir.display());
    Ok(())
}

fn benchmark(
    cfg: &RunConfig,
    out: &Path,
    input: &Option<PathBuf>,
    synthetic: usize,
    checkpoints: &[String],
    runtime: bool,
) -> Result<()> {
    let (data, labels) = match input.clone().or_else(|| cfg.paths.input.clone()) {
        Some(p) => (ingest(&p, cfg)?.data, LabelSource::Unlabeled),
        None => (synthesize_indexed(&cfg.synthesis, synthetic)?.scatter, LabelSource::Synthetic),
    };
    let mut models = Vec::new();
    for spec in checkpoints {
        let (name, path) = match spec.split_once('=') {
            Some((n, p)) => (Some(n.to_string()), PathBuf::from(p)),
            None => (None, PathBuf::from(spec)),
        };
        let model = load_generator(&path, cfg)?;
        let name = name.unwrap_or_else(|| generator_name(&model).to_string());
        models.push((name, model));
    }
    let generators: Vec<(String, &UNet<f32>)> = models.iter().map(|(n, m)| (n.clone(), m)).collect();
    let table = run_benchmark_suite(&data, labels, cfg, &generators)?;
    let path = out.join("benchmark.csv");
    table.write_csv(&path)?;
    for (model, r) in &table.reports {
        match r {
            Ok(r) => println!("{model:>9}  rmse {:.5}  mae {:.5}  wmape {:.2}%", r.rmse, r.mae, r.wmape_pct),
            Err(e) => println!("{model:>9}  failed: {e}"),
        }
    }
    println!("{} train / {} test points; table written to {}", table.n_train, table.n_test, path.display());
    if runtime {
        let prepared = apply_scenario(&data, &cfg.scenario, labels)?;
        let entries = measure_wpcm_runtime(&prepared, cfg, &generators)?;
        let path = out.join("runtime.csv");
        write_runtime_csv(&entries, &path)?;
        for e in &entries {
            println!("{:>9}  {:.4} s per call", e.name, e.mean_seconds);
        }
        println!("timings ({}) written to {}", entries[0].hardware, path.display());
    }
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .filter_level(if cli.verbose {
            log::LevelFilter::Info
        } else {
            log::LevelFilter::Warn
        })
        .parse_default_env()
        .init();
    let cfg = load_config(&cli)?;

    match &cli.command {
        Command::ShowConfig => {
            print!("{}", cfg.to_toml()?);
            eprintln!("# output directory: {} (override with ${OUT_DIR_ENV})", cfg.output_dir().display());
        }
        Command::Synth { n, images } => synth(&cfg, &out_dir(&cli, &cfg)?, *n, *images)?,
        Command::Train => {
            let o = run_dit_training(&cfg, &out_dir(&cli, &cfg)?)?;
            println!(
                "trained {} epochs in {:.1} s, final loss {:.6}; checkpoint {}",
                o.report.epoch_losses.len(),
                o.report.seconds,
                o.report.epoch_losses.last().copied().unwrap_or(f64::NAN),
                o.checkpoint.display()
            );
        }
        Command::Infer { input, checkpoint } => {
            let out = out_dir(&cli, &cfg)?;
            let data = ingest(&input_path(input, &cfg)?, &cfg)?.data;
            let data = apply_scenario(&data, &cfg.scenario, LabelSource::Unlabeled)?;
            let ckpt = checkpoint
                .clone()
                .or_else(|| cfg.paths.checkpoint.clone())
                .unwrap_or_else(|| out.join("checkpoint.bin"));
            let model = load_generator(&ckpt, &cfg)?;
            let o = run_wpcm(&data, &model, &cfg, Some(&out))?;
            let c = &o.wpc;
            println!(
                "cut-in {:.4}, rated {:.4} (normalized speed); curve, images and overlay in {}",
                c.x_cutin,
                c.x_rated,
                out.display()
            );
        }
        Command::Benchmark {
            input,
            synthetic,
            checkpoint,
            runtime,
        } => benchmark(&cfg, &out_dir(&cli, &cfg)?, input, *synthetic, checkpoint, *runtime)?,
        Command::Evaluate { curve, input } => {
            let out = out_dir(&cli, &cfg)?;
            let curve = load_curve(curve)?;
            let data = ingest(&input_path(input, &cfg)?, &cfg)?.data;
            let xs: Vec<f64> = data.points.iter().map(|p| p.x).collect();
            let ys: Vec<f64> = data.points.iter().map(|p| p.y).collect();
            let pred: Vec<f64> = xs.iter().map(|&x| curve.value(x)).collect();
            let r = evaluate(&pred, &ys, &xs, cfg.metrics.cws, &cfg.metrics.alphas)?;
            let path = out.join("metrics.csv");
            let mut buf = Vec::new();
            write_reports_csv(&mut buf, &[(vec![("points".to_string(), r.n_points.to_string())], r.clone())])?;
            ditwpc::io::write_atomic(&path, &buf)?;
            let mape = r.mape_pct.map_or_else(|| "undefined".to_string(), |v| format!("{v:.2}%"));
            println!(
                "rmse {:.5}  mae {:.5}  mape {mape}  wmape {:.2}%  (n = {}); written to {}",
                r.rmse,
                r.mae,
                r.wmape_pct,
                r.n_points,
                path.display()
            );
        }
        Command::Plot { input, curve, scale } => {
            let out = out_dir(&cli, &cfg)?;
            let data: ScatterSet = ingest(&input_path(input, &cfg)?, &cfg)?.data;
            if data.is_empty() {
                bail!("nothing to plot");
            }
            let raster = cfg.raster.scaled((*scale).max(1));
            let raster = raster.with_marker_size(marker_size_for_test(data.len(), &raster)?);
            let img = match curve {
                Some(p) => render_overlay(&data, &load_curve(p)?, &raster)?,
                None => render_scatter(&data, &raster)?,
            };
            let path = out.join("plot.png");
            img.save_png(&path)?;
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}
