use std::path::Path;
use std::time::Instant;

use log::info;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::LossKind;
use super::optim::Adam;
use super::tensor::{images_to_tensor, Scalar};
use super::unet::UNet;
use crate::error::{Error, Result};
use crate::raster::WpcImage;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub loss: LossKind,
    /// Epochs.
    pub n_iter: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Seed for the per-epoch shuffles.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            loss: LossKind::Mse,
            n_iter: 50,
            batch_size: 8,
            learning_rate: 1e-3,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_iter == 0 {
            return Err(Error::Config("n_iter must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        Ok(())
    }
}

/// Training pairs `(scatter image, clean curve image)`, produced on demand
/// so large datasets need not sit in memory.
pub trait PairSource {
    fn len(&self) -> usize;

    fn pair(&self, index: usize) -> Result<(WpcImage, WpcImage)>;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl PairSource for [(WpcImage, WpcImage)] {
    fn len(&self) -> usize {
        <[_]>::len(self)
    }

    fn pair(&self, index: usize) -> Result<(WpcImage, WpcImage)> {
        Ok(self[index].clone())
    }
}

impl PairSource for Vec<(WpcImage, WpcImage)> {
    fn len(&self) -> usize {
        <[_]>::len(self)
    }

    fn pair(&self, index: usize) -> Result<(WpcImage, WpcImage)> {
        Ok(self[index].clone())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean training loss of every epoch.
    pub epoch_losses: Vec<f64>,
    pub seconds: f64,
}

impl TrainReport {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["epoch", "loss"])?;
        for (i, l) in self.epoch_losses.iter().enumerate() {
            w.write_record([(i + 1).to_string(), l.to_string()])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::InvalidInput(e.to_string()))?;
        crate::io::write_atomic(path, &bytes)
    }
}

/// One optimizer step on a batch; returns the batch loss.
pub fn train_step<T: Scalar>(
    model: &mut UNet<T>,
    opt: &mut Adam<T>,
    inputs: &[&WpcImage],
    targets: &[&WpcImage],
    loss: LossKind,
) -> Result<f64> {
    let x = images_to_tensor::<T>(inputs)?;
    let y = images_to_tensor::<T>(targets)?;
    if !x.same_shape(&y) {
        return Err(Error::DimensionMismatch {
            expected: format!("targets shaped like inputs ({}x{})", x.w, x.h),
            actual: format!("{}x{}", y.w, y.h),
        });
    }
    model.zero_grad();
    let pred = model.forward_train(x)?;
    let (value, grad) = loss.value_and_grad(&pred.data, &y.data);
    let mut dy = pred;
    dy.data = grad;
    model.backward(&dy);
    opt.step(model.params_mut());
    Ok(value)
}

/// Trains for `cfg.n_iter` epochs over a freshly shuffled order each epoch.
/// `on_epoch(epoch, loss)` is called after every epoch.
pub fn train<T: Scalar, S: PairSource + ?Sized>(
    model: &mut UNet<T>,
    data: &S,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<TrainReport> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::InvalidInput("training set is empty".into()));
    }
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt = Adam::new(cfg.learning_rate);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut report = TrainReport::default();
    for epoch in 1..=cfg.n_iter {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let pairs = chunk.iter().map(|&i| data.pair(i)).collect::<Result<Vec<_>>>()?;
            let inputs: Vec<&WpcImage> = pairs.iter().map(|p| &p.0).collect();
            let targets: Vec<&WpcImage> = pairs.iter().map(|p| &p.1).collect();
            let l = train_step(model, &mut opt, &inputs, &targets, cfg.loss)?;
            if !l.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, loss: l });
            }
            total += l * chunk.len() as f64;
        }
        let mean = total / data.len() as f64;
        info!("epoch {epoch}/{}: loss {mean:.6}", cfg.n_iter);
        on_epoch(epoch, mean);
        report.epoch_losses.push(mean);
    }
    report.seconds = start.elapsed().as_secs_f64();
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::unet::NetworkConfig;
    use crate::raster::ImageRole;

    fn toy_pairs() -> Vec<(WpcImage, WpcImage)> {
        (0..3)
            .map(|k| {
                let mut a = WpcImage::white(16, 16, ImageRole::ScadaWpc);
                let mut b = WpcImage::white(16, 16, ImageRole::NeatWpc);
                for c in 0..16 {
                    a.set_pixel(c, (c + k) % 16, [0.0; 3]);
                    b.set_pixel(c, (c + k) % 16, [0.0; 3]);
                    a.set_pixel(c, (3 * c + k) % 16, [0.0; 3]);
                }
                (a, b)
            })
            .collect()
    }

    fn tiny() -> NetworkConfig {
        NetworkConfig {
            image_size: 16,
            base_channels: 4,
            depth: 2,
            skip_connections: true,
            init_seed: 1,
        }
    }

    #[test]
    fn zero_epochs_are_rejected() {
        let cfg = TrainConfig {
            n_iter: 0,
            ..TrainConfig::default()
        };
        let mut net = UNet::<f32>::new(tiny()).unwrap();
        assert!(matches!(train(&mut net, &toy_pairs(), &cfg, |_, _| {}), Err(Error::Config(_))));
        let empty: Vec<(WpcImage, WpcImage)> = Vec::new();
        assert!(train(&mut net, &empty, &TrainConfig::default(), |_, _| {}).is_err());
    }

    #[test]
    fn loss_decreases_and_runs_are_reproducible() {
        let cfg = TrainConfig {
            n_iter: 15,
            batch_size: 2,
            learning_rate: 5e-3,
            ..TrainConfig::default()
        };
        let data = toy_pairs();
        let mut a = UNet::<f32>::new(tiny()).unwrap();
        let mut seen = 0;
        let ra = train(&mut a, &data, &cfg, |_, _| seen += 1).unwrap();
        assert_eq!(seen, 15);
        assert!(ra.epoch_losses.last().unwrap() < ra.epoch_losses.first().unwrap());
        let mut b = UNet::<f32>::new(tiny()).unwrap();
        let rb = train(&mut b, &data, &cfg, |_, _| {}).unwrap();
        assert_eq!(ra.epoch_losses, rb.epoch_losses);
        assert_eq!(a.state(), b.state());
    }

    #[test]
    fn divergence_is_reported() {
        let cfg = TrainConfig {
            n_iter: 3,
            learning_rate: 1e30,
            ..TrainConfig::default()
        };
        let mut net = UNet::<f32>::new(tiny()).unwrap();
        let r = train(&mut net, &toy_pairs(), &cfg, |_, _| {});
        assert!(matches!(r, Err(Error::NonFiniteLoss { .. })), "{r:?}");
    }

    #[test]
    fn loss_history_csv() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("loss.csv");
        let r = TrainReport {
            epoch_losses: vec![0.5, 0.25],
            seconds: 1.0,
        };
        r.write_csv(&path).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "epoch,loss\n1,0.5\n2,0.25\n");
    }
}
