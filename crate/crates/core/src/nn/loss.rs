use serde::{Deserialize, Serialize};

use super::tensor::Scalar;
use crate::error::{Error, Result};
use crate::raster::WpcImage;

/// Pixel losses, all mean-reduced over every element.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    #[default]
    Mse,
    L1,
    /// `0.5 e^2` for `|e| <= 1`, else `|e| - 0.5`.
    SmoothL1,
}

impl LossKind {
    fn term(self, e: f64) -> (f64, f64) {
        match self {
            LossKind::Mse => (e * e, 2.0 * e),
            LossKind::L1 => (e.abs(), if e > 0.0 { 1.0 } else if e < 0.0 { -1.0 } else { 0.0 }),
            LossKind::SmoothL1 => {
                if e.abs() <= 1.0 {
                    (0.5 * e * e, e)
                } else {
                    (e.abs() - 0.5, e.signum())
                }
            }
        }
    }

    /// Loss value and its gradient with respect to `pred`.
    pub fn value_and_grad<T: Scalar>(self, pred: &[T], target: &[T]) -> (f64, Vec<T>) {
        assert_eq!(pred.len(), target.len(), "loss: length mismatch");
        let n = pred.len().max(1) as f64;
        let mut total = 0.0;
        let grad = pred
            .iter()
            .zip(target)
            .map(|(&p, &t)| {
                let e = (p - t).to_f64().unwrap_or(f64::NAN);
                let (v, g) = self.term(e);
                total += v;
                T::of(g / n)
            })
            .collect();
        (total / n, grad)
    }

    pub fn value<T: Scalar>(self, pred: &[T], target: &[T]) -> f64 {
        assert_eq!(pred.len(), target.len(), "loss: length mismatch");
        let n = pred.len().max(1) as f64;
        pred.iter()
            .zip(target)
            .map(|(&p, &t)| self.term((p - t).to_f64().unwrap_or(f64::NAN)).0)
            .sum::<f64>()
            / n
    }
}

/// Loss between two images of the same size.
pub fn image_loss(pred: &WpcImage, target: &WpcImage, kind: LossKind) -> Result<f64> {
    if (pred.width, pred.height) != (target.width, target.height) {
        return Err(Error::DimensionMismatch {
            expected: format!("{}x{}", target.width, target.height),
            actual: format!("{}x{}", pred.width, pred.height),
        });
    }
    Ok(kind.value(&pred.pixels, &target.pixels))
}
