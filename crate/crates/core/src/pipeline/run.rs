//! Generator training on synthetic pairs, and curve modeling of one scatter
//! with a trained generator.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::RunConfig;
use crate::curve_models::PiecewiseWpc;
use crate::error::{Error, Result};
use crate::extraction::{extract_detailed, Extraction};
use crate::nn::{save_model, train, NetworkConfig, PairSource, TrainConfig, TrainReport, UNet};
use crate::raster::{marker_size_for_test, render_curve, render_overlay, render_scatter, RasterConfig, WpcImage};
use crate::synthesis::{synthesize_dataset, DatasetManifest, ScatterSet, SyntheticSample};

/// Training pairs rendered on demand from synthesized samples.
pub struct SyntheticPairs<'a> {
    pub samples: &'a [SyntheticSample],
    pub raster: &'a RasterConfig,
}

impl PairSource for SyntheticPairs<'_> {
    fn len(&self) -> usize {
        self.samples.len()
    }

    fn pair(&self, index: usize) -> Result<(WpcImage, WpcImage)> {
        let s = &self.samples[index];
        Ok((render_scatter(&s.scatter, self.raster)?, render_curve(&s.truth, self.raster)))
    }
}

pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const LOSS_FILE: &str = "loss_history.csv";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const INCOMPLETE_FILE: &str = "INCOMPLETE";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingManifest {
    pub dataset: DatasetManifest,
    pub raster: RasterConfig,
    pub network: NetworkConfig,
    pub train: TrainConfig,
}

#[derive(Clone, Debug)]
pub struct TrainingOutcome {
    pub checkpoint: PathBuf,
    pub loss_history: PathBuf,
    pub manifest: PathBuf,
    pub report: TrainReport,
}

/// Synthesizes the training set, trains a fresh generator and writes the
/// checkpoint, the loss history and a manifest of every sample seed into
/// `out_dir`. A failed run leaves an `INCOMPLETE` note instead of a
/// checkpoint.
pub fn run_dit_training(cfg: &RunConfig, out_dir: &Path) -> Result<TrainingOutcome> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let incomplete = out_dir.join(INCOMPLETE_FILE);
    crate::io::write_atomic(&incomplete, b"training in progress\n")?;
    let result = train_into(cfg, out_dir);
    match &result {
        Ok(_) => {
            std::fs::remove_file(&incomplete).map_err(|e| Error::io(&incomplete, e))?;
        }
        Err(e) => {
            crate::io::write_atomic(&incomplete, format!("training failed: {e}\n").as_bytes())?;
        }
    }
    result
}

fn train_into(cfg: &RunConfig, out_dir: &Path) -> Result<TrainingOutcome> {
    let samples = synthesize_dataset(&cfg.synthesis)?;
    let manifest = out_dir.join(MANIFEST_FILE);
    crate::io::write_json(
        &manifest,
        &TrainingManifest {
            dataset: DatasetManifest::new(&cfg.synthesis, &samples),
            raster: cfg.raster.clone(),
            network: cfg.network.clone(),
            train: cfg.train.clone(),
        },
    )?;
    let mut model = UNet::<f32>::new(cfg.network.clone())?;
    log::info!(
        "training {} on {} pairs for {} epochs",
        cfg.network.describe(),
        samples.len(),
        cfg.train.n_iter
    );
    let pairs = SyntheticPairs {
        samples: &samples,
        raster: &cfg.raster,
    };
    let report = train(&mut model, &pairs, &cfg.train, |epoch, loss| {
        log::info!("epoch {epoch}: loss {loss:.6}");
    })?;
    let checkpoint = out_dir.join(CHECKPOINT_FILE);
    save_model(&model, &checkpoint)?;
    let loss_history = out_dir.join(LOSS_FILE);
    report.write_csv(&loss_history)?;
    Ok(TrainingOutcome {
        checkpoint,
        loss_history,
        manifest,
        report,
    })
}

#[derive(Clone, Debug)]
pub struct WpcmOutcome {
    pub wpc: PiecewiseWpc,
    pub marker_size: f64,
    pub input: WpcImage,
    pub generated: WpcImage,
    pub extraction: Extraction,
}

pub const SCATTER_PNG: &str = "scatter.png";
pub const GENERATED_PNG: &str = "generated.png";
pub const OVERLAY_PNG: &str = "overlay.png";
pub const CURVE_FILE: &str = "curve.json";

/// Renders `data` with the test-time marker size, runs the generator and
/// extracts the curve. With `out_dir`, writes the rendered scatter, the
/// generated image, the curve record and an overlay figure; the generated
/// image is kept even when extraction fails.
pub fn run_wpcm(data: &ScatterSet, model: &UNet<f32>, cfg: &RunConfig, out_dir: Option<&Path>) -> Result<WpcmOutcome> {
    if data.len() < crate::benchmarks::MIN_POINTS {
        return Err(Error::InvalidInput(format!(
            "curve modeling needs at least {} points, got {}",
            crate::benchmarks::MIN_POINTS,
            data.len()
        )));
    }
    let marker_size = marker_size_for_test(data.len(), &cfg.raster)?;
    let input = render_scatter(data, &cfg.raster.with_marker_size(marker_size))?;
    let generated = model.infer(&input)?;
    let extraction = extract_detailed(&generated, &cfg.raster, &cfg.extraction);
    if let Some(dir) = out_dir {
        input.save_png(&dir.join(SCATTER_PNG))?;
        generated.save_png(&dir.join(GENERATED_PNG))?;
    }
    let extraction = extraction?;
    let wpc = extraction.correction.wpc.clone();
    if let Some(dir) = out_dir {
        crate::io::write_json(&dir.join(CURVE_FILE), &wpc)?;
        render_overlay(data, &wpc, &cfg.raster)?.save_png(&dir.join(OVERLAY_PNG))?;
    }
    Ok(WpcmOutcome {
        wpc,
        marker_size,
        input,
        generated,
        extraction,
    })
}
