//! Train/test protocol, the model comparison table and wall-clock timing.

use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::run::run_wpcm;
use super::scenario::{clean, restrict, LabelSource};
use super::RunConfig;
use crate::benchmarks::fit_benchmark;
use crate::curve_models::Curve;
use crate::error::{Error, Result};
use crate::metrics::{alpha_key, evaluate, MetricReport};
use crate::nn::UNet;
use crate::synthesis::ScatterSet;

/// Shuffled `(train, test)` index sets; the test set holds
/// `round(fraction * n)` indices, at least one and never all.
pub fn train_test_split(n: usize, fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if n < 2 {
        return Err(Error::InvalidInput(format!("cannot split {n} points")));
    }
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Config(format!("test fraction {fraction} must lie in (0, 1)")));
    }
    let n_test = ((fraction * n as f64).round() as usize).clamp(1, n - 1);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let test = idx.split_off(n - n_test);
    Ok((idx, test))
}

fn subset(data: &ScatterSet, idx: &[usize]) -> ScatterSet {
    ScatterSet::new(idx.iter().map(|&i| data.points[i]).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteRow {
    pub model: String,
    pub scenario: String,
    pub pattern: String,
    pub metric: String,
    /// Empty for failed models and undefined metrics.
    pub value: Option<f64>,
    pub status: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SuiteTable {
    pub rows: Vec<SuiteRow>,
    /// Per model, its metrics or the reason it failed.
    pub reports: Vec<(String, std::result::Result<MetricReport, String>)>,
    pub n_train: usize,
    pub n_test: usize,
}

impl SuiteTable {
    pub fn report(&self, model: &str) -> Option<&MetricReport> {
        self.reports.iter().find(|(m, _)| m == model).and_then(|(_, r)| r.as_ref().ok())
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.into_inner().map_err(|e| Error::InvalidInput(e.to_string()))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        crate::io::write_atomic(path, &self.to_csv()?)
    }
}

fn metric_rows(model: &str, scenario: &str, pattern: &str, r: &MetricReport) -> Vec<SuiteRow> {
    let row = |metric: String, value: Option<f64>| SuiteRow {
        model: model.to_string(),
        scenario: scenario.to_string(),
        pattern: pattern.to_string(),
        metric,
        value,
        status: "ok".into(),
    };
    let mut rows = vec![
        row("rmse".into(), Some(r.rmse)),
        row("mae".into(), Some(r.mae)),
        row("mape_pct".into(), r.mape_pct),
        row("wmape_pct".into(), Some(r.wmape_pct)),
    ];
    for (a, v) in &r.alpha_ss_pct {
        rows.push(row(format!("ss_{a}_pct"), Some(*v)));
    }
    rows
}

/// Cleans `data` per the scenario, holds out a seeded test split, restricts
/// the training part per the access pattern, fits every configured
/// benchmark and runs every supplied generator on the training part, then
/// scores all of them on the held-out points. A model that fails gets a
/// `failed` row and the others carry on.
pub fn run_benchmark_suite(
    data: &ScatterSet,
    labels: LabelSource,
    cfg: &RunConfig,
    generators: &[(String, &UNet<f32>)],
) -> Result<SuiteTable> {
    cfg.validate()?;
    let spec = &cfg.scenario;
    let cleaned = clean(data, spec, labels)?;
    let (train_idx, test_idx) = train_test_split(cleaned.len(), cfg.test_split_fraction, cfg.seed)?;
    let train = restrict(&subset(&cleaned, &train_idx), spec);
    let test = subset(&cleaned, &test_idx);
    let train_pairs = train.pairs();
    let test_x: Vec<f64> = test.points.iter().map(|p| p.x).collect();
    let test_y: Vec<f64> = test.points.iter().map(|p| p.y).collect();
    let (sc, pat) = (spec.scenario.name(), spec.pattern.name());

    let score = |curve: &dyn Curve| {
        let pred: Vec<f64> = test_x.iter().map(|&x| curve.value(x)).collect();
        evaluate(&pred, &test_y, &test_x, cfg.metrics.cws, &cfg.metrics.alphas)
    };
    let bcfg = cfg.benchmark_config();
    let mut reports = Vec::new();
    for &kind in &cfg.suite.benchmarks {
        let r = fit_benchmark(kind, &train_pairs, &bcfg).and_then(|m| score(&m));
        reports.push((kind.name().to_string(), r.map_err(|e| e.to_string())));
    }
    for (name, model) in generators {
        let r = run_wpcm(&train, model, cfg, None).and_then(|o| score(&o.wpc));
        reports.push((name.clone(), r.map_err(|e| e.to_string())));
    }

    let mut rows = Vec::new();
    for (model, r) in &reports {
        match r {
            Ok(r) => rows.extend(metric_rows(model, sc, pat, r)),
            Err(e) => rows.push(SuiteRow {
                model: model.clone(),
                scenario: sc.into(),
                pattern: pat.into(),
                metric: "all".into(),
                value: None,
                status: format!("failed: {e}"),
            }),
        }
    }
    Ok(SuiteTable {
        rows,
        reports,
        n_train: train.len(),
        n_test: test.len(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RuntimeEntry {
    pub name: String,
    pub mean_seconds: f64,
    pub min_seconds: f64,
    pub repetitions: usize,
    pub hardware: String,
}

/// CPU model, logical core count, OS and architecture.
pub fn hardware_description() -> String {
    let cpu = std::fs::read_to_string("/proc/cpuinfo")
        .ok()
        .and_then(|t| {
            t.lines()
                .find(|l| l.starts_with("model name"))
                .and_then(|l| l.split(':').nth(1))
                .map(|s| s.trim().to_string())
        })
        .unwrap_or_else(|| "unknown CPU".into());
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    format!("{cpu}, {cores} logical cores, {}-{}", std::env::consts::OS, std::env::consts::ARCH)
}

/// Mean wall-clock seconds of `job` over `repetitions` runs after one
/// untimed warm-up run.
pub fn measure_runtime(name: &str, repetitions: usize, mut job: impl FnMut() -> Result<()>) -> Result<RuntimeEntry> {
    if repetitions < 5 {
        return Err(Error::Config(format!("runtime needs at least 5 repetitions, got {repetitions}")));
    }
    job()?;
    let mut times = Vec::with_capacity(repetitions);
    for _ in 0..repetitions {
        let t = Instant::now();
        job()?;
        times.push(t.elapsed().as_secs_f64());
    }
    Ok(RuntimeEntry {
        name: name.to_string(),
        mean_seconds: times.iter().sum::<f64>() / repetitions as f64,
        min_seconds: times.iter().cloned().fold(f64::INFINITY, f64::min),
        repetitions,
        hardware: hardware_description(),
    })
}

/// Timing of one complete curve-modeling call per model on `data`: fitting
/// for the benchmarks, rendering, inference and extraction for generators.
pub fn measure_wpcm_runtime(
    data: &ScatterSet,
    cfg: &RunConfig,
    generators: &[(String, &UNet<f32>)],
) -> Result<Vec<RuntimeEntry>> {
    let reps = cfg.suite.runtime_repetitions;
    let pairs = data.pairs();
    let bcfg = cfg.benchmark_config();
    let mut out = Vec::new();
    for (name, model) in generators {
        out.push(measure_runtime(name, reps, || run_wpcm(data, model, cfg, None).map(|_| ()))?);
    }
    for &kind in &cfg.suite.benchmarks {
        out.push(measure_runtime(kind.name(), reps, || fit_benchmark(kind, &pairs, &bcfg).map(|_| ()))?);
    }
    Ok(out)
}

pub fn write_runtime_csv(entries: &[RuntimeEntry], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for e in entries {
        w.serialize(e)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::InvalidInput(e.to_string()))?;
    crate::io::write_atomic(path, &bytes)
}

/// Column label for the shooting score at `alpha`.
pub fn ss_metric_name(alpha: f64) -> String {
    format!("ss_{}_pct", alpha_key(alpha))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmarks::BenchmarkKind;
    use crate::pipeline::{Pattern, Scenario, ScenarioSpec};
    use crate::synthesis::{synthesize_indexed, SynthesisConfig};

    fn quick_cfg() -> RunConfig {
        let mut cfg = RunConfig::default();
        cfg.search.iterations = 150;
        cfg
    }

    #[test]
    fn split_is_seeded_and_disjoint() {
        let (a, b) = train_test_split(101, 0.2, 5).unwrap();
        assert_eq!((a.len(), b.len()), (81, 20));
        let mut all: Vec<_> = a.iter().chain(&b).copied().collect();
        all.sort();
        assert_eq!(all, (0..101).collect::<Vec<_>>());
        assert_eq!(train_test_split(101, 0.2, 5).unwrap(), (a, b));
        assert_ne!(train_test_split(101, 0.2, 6).unwrap().1, train_test_split(101, 0.2, 5).unwrap().1);
        assert!(train_test_split(1, 0.2, 0).is_err());
    }

    #[test]
    fn perfect_world_every_benchmark_is_accurate() {
        let synth = SynthesisConfig {
            sigma_normal: 0.0,
            discard_prob: 0.0,
            seed: 8,
            ..SynthesisConfig::default()
        };
        let data = synthesize_indexed(&synth, 0).unwrap().scatter;
        let mut cfg = quick_cfg();
        cfg.scenario = ScenarioSpec::new(Scenario::S3Careful, Pattern::Np);
        let table = run_benchmark_suite(&data, LabelSource::Synthetic, &cfg, &[]).unwrap();
        assert_eq!((table.n_train, table.n_test), (800, 200));
        for kind in BenchmarkKind::ALL {
            let r = table.report(kind.name()).unwrap();
            assert!(r.rmse <= 0.02, "{} rmse {}", kind.name(), r.rmse);
        }
        let again = run_benchmark_suite(&data, LabelSource::Synthetic, &cfg, &[]).unwrap();
        assert_eq!(again.to_csv().unwrap(), table.to_csv().unwrap());
    }

    #[test]
    fn failures_become_rows() {
        let data = ScatterSet::from_pairs(&(0..11).map(|i| (i as f64 / 10.0, 0.5)).collect::<Vec<_>>());
        let mut cfg = quick_cfg();
        cfg.suite.benchmarks = vec![BenchmarkKind::De, BenchmarkKind::Spline];
        cfg.spline.smoothing = 0.0;
        // 9 training points cannot support a fit
        let table = run_benchmark_suite(&data, LabelSource::Unlabeled, &cfg, &[]).unwrap();
        assert_eq!(table.rows.len(), 2);
        assert!(table.rows.iter().all(|r| r.status.starts_with("failed") && r.value.is_none()));
        let text = String::from_utf8(table.to_csv().unwrap()).unwrap();
        assert!(text.starts_with("model,scenario,pattern,metric,value,status\n"));
    }

    #[test]
    fn runtime_contract() {
        assert!(matches!(measure_runtime("x", 4, || Ok(())), Err(Error::Config(_))));
        let mut calls = 0;
        let e = measure_runtime("x", 5, || {
            calls += 1;
            Ok(())
        })
        .unwrap();
        assert_eq!(calls, 6);
        assert_eq!(e.repetitions, 5);
        assert!(e.mean_seconds >= e.min_seconds && !e.hardware.is_empty());
    }
}
