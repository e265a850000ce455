//! One-hidden-layer sigmoid network, scalar in, scalar out.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::check_data;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SnnConfig {
    pub hidden_units: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for SnnConfig {
    fn default() -> Self {
        SnnConfig {
            hidden_units: 50,
            epochs: 2000,
            learning_rate: 1e-2,
            seed: 0,
        }
    }
}

impl SnnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_units == 0 {
            return Err(Error::Config("hidden_units must be at least 1".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnnModel {
    /// Input standardization: the network sees `(x - x_mean) / x_scale`.
    pub x_mean: f64,
    pub x_scale: f64,
    pub w_in: Vec<f64>,
    pub b_in: Vec<f64>,
    pub w_out: Vec<f64>,
    pub b_out: f64,
}

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

impl SnnModel {
    fn raw(&self, x: f64) -> f64 {
        let u = (x - self.x_mean) / self.x_scale;
        self.b_out
            + self
                .w_in
                .iter()
                .zip(&self.b_in)
                .zip(&self.w_out)
                .map(|((w, b), v)| v * sigmoid(w * u + b))
                .sum::<f64>()
    }

    /// Clipped to `[0, 1]`.
    pub fn predict(&self, x: f64) -> f64 {
        self.raw(x).clamp(0.0, 1.0)
    }
}

struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
}

/// Full-batch Adam on mean squared error.
pub fn fit_snn(data: &[(f64, f64)], cfg: &SnnConfig) -> Result<SnnModel> {
    check_data(data)?;
    cfg.validate()?;
    let n = data.len() as f64;
    let h = cfg.hidden_units;
    let x_mean = data.iter().map(|p| p.0).sum::<f64>() / n;
    let x_var = data.iter().map(|p| (p.0 - x_mean).powi(2)).sum::<f64>() / n;
    let x_scale = if x_var > 0.0 { x_var.sqrt() } else { 1.0 };
    let y_mean = data.iter().map(|p| p.1).sum::<f64>() / n;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut normal = |s: f64| s * rng.sample::<f64, _>(StandardNormal);
    // parameter vector layout: [w_in (h), b_in (h), w_out (h), b_out]
    let mut theta: Vec<f64> = Vec::with_capacity(3 * h + 1);
    theta.extend((0..h).map(|_| normal(2.0)));
    theta.extend((0..h).map(|_| normal(2.0)));
    theta.extend((0..h).map(|_| normal(1.0 / (h as f64).sqrt())));
    theta.push(y_mean);

    let us: Vec<f64> = data.iter().map(|p| (p.0 - x_mean) / x_scale).collect();
    let mut st = AdamState {
        m: vec![0.0; theta.len()],
        v: vec![0.0; theta.len()],
    };
    let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8);
    let mut act = vec![0.0; h];
    let mut grad = vec![0.0; theta.len()];
    for epoch in 1..=cfg.epochs {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut loss = 0.0;
        for (&u, &(_, y)) in us.iter().zip(data) {
            let mut out = theta[3 * h];
            for j in 0..h {
                act[j] = sigmoid(theta[j] * u + theta[h + j]);
                out += theta[2 * h + j] * act[j];
            }
            let e = out - y;
            loss += e * e;
            let de = 2.0 * e / n;
            grad[3 * h] += de;
            for j in 0..h {
                let v = theta[2 * h + j];
                grad[2 * h + j] += de * act[j];
                let dz = de * v * act[j] * (1.0 - act[j]);
                grad[j] += dz * u;
                grad[h + j] += dz;
            }
        }
        loss /= n;
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch, loss });
        }
        let c1 = 1.0 - b1.powi(epoch as i32);
        let c2 = 1.0 - b2.powi(epoch as i32);
        for k in 0..theta.len() {
            st.m[k] = b1 * st.m[k] + (1.0 - b1) * grad[k];
            st.v[k] = b2 * st.v[k] + (1.0 - b2) * grad[k] * grad[k];
            theta[k] -= cfg.learning_rate * (st.m[k] / c1) / ((st.v[k] / c2).sqrt() + eps);
        }
    }
    Ok(SnnModel {
        x_mean,
        x_scale,
        w_in: theta[..h].to_vec(),
        b_in: theta[h..2 * h].to_vec(),
        w_out: theta[2 * h..3 * h].to_vec(),
        b_out: theta[3 * h],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curve_models::unit_grid;

    fn smoothstep(x: f64) -> f64 {
        3.0 * x * x - 2.0 * x * x * x
    }

    #[test]
    fn fits_smoothstep() {
        let data: Vec<_> = unit_grid(200).into_iter().map(|x| (x, smoothstep(x))).collect();
        let m = fit_snn(&data, &SnnConfig::default()).unwrap();
        let rmse = (data.iter().map(|&(x, y)| (m.predict(x) - y).powi(2)).sum::<f64>() / 200.0).sqrt();
        assert!(rmse <= 0.01, "{rmse}");
        assert_eq!(m.w_in.len(), 50);
    }

    #[test]
    fn config_and_determinism() {
        let data: Vec<_> = unit_grid(30).into_iter().map(|x| (x, smoothstep(x))).collect();
        let bad = SnnConfig {
            hidden_units: 0,
            ..SnnConfig::default()
        };
        assert!(matches!(fit_snn(&data, &bad), Err(Error::Config(_))));
        let cfg = SnnConfig {
            epochs: 50,
            ..SnnConfig::default()
        };
        assert_eq!(fit_snn(&data, &cfg).unwrap(), fit_snn(&data, &cfg).unwrap());
        assert!(fit_snn(&data[..9], &cfg).is_err());
    }

    #[test]
    fn predictions_are_clipped() {
        let m = SnnModel {
            x_mean: 0.0,
            x_scale: 1.0,
            w_in: vec![1.0],
            b_in: vec![0.0],
            w_out: vec![10.0],
            b_out: -3.0,
        };
        assert_eq!(m.predict(0.0), 1.0);
        assert_eq!(m.predict(-100.0), 0.0);
    }
}
