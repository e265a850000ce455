//! S-shaped closed-form curves fitted by box-constrained global search.

use serde::{Deserialize, Serialize};

use super::bsa::{bsa_minimize, SearchConfig};
use super::check_data;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ParametricFamily {
    /// `exp(-t1 exp(t2 x))`, params `[t1, t2]`.
    #[serde(rename = "DE")]
    De,
    /// `exp(-exp(a0 - a1 x - a2 x^2 - a3 x^3))`, params `[a0, a1, a2, a3]`.
    #[serde(rename = "ADE")]
    Ade,
    /// `d + (a - d) / (1 + (x/c)^b)`, params `[a, b, c, d]`.
    #[serde(rename = "PLF4")]
    Plf4,
    /// `d + (a - d) / (1 + (x/c)^b)^g`, params `[a, b, c, d, g]`.
    #[serde(rename = "PLF5")]
    Plf5,
}

impl ParametricFamily {
    pub const ALL: [ParametricFamily; 4] = [Self::De, Self::Ade, Self::Plf4, Self::Plf5];

    pub fn name(self) -> &'static str {
        match self {
            Self::De => "DE",
            Self::Ade => "ADE",
            Self::Plf4 => "4PLF",
            Self::Plf5 => "5PLF",
        }
    }

    /// Default search box.
    pub fn default_bounds(self) -> Vec<(f64, f64)> {
        match self {
            Self::De => vec![(1.0, 100.0), (-30.0, -1.0)],
            Self::Ade => vec![(0.0, 10.0), (-10.0, 40.0), (-30.0, 20.0), (0.0, 30.0)],
            Self::Plf4 => vec![(-0.2, 0.2), (1.0, 50.0), (1e-3, 1.0), (0.8, 1.2)],
            Self::Plf5 => vec![(-0.2, 0.2), (1.0, 50.0), (1e-3, 1.0), (0.8, 1.2), (0.1, 10.0)],
        }
    }

    pub fn n_params(self) -> usize {
        match self {
            Self::De => 2,
            Self::Ade => 4,
            Self::Plf4 => 4,
            Self::Plf5 => 5,
        }
    }

    /// Unclipped closed form.
    pub fn eval(self, p: &[f64], x: f64) -> f64 {
        match self {
            Self::De => (-p[0] * (p[1] * x).exp()).exp(),
            Self::Ade => (-(p[0] - p[1] * x - p[2] * x * x - p[3] * x * x * x).exp()).exp(),
            Self::Plf4 => p[3] + (p[0] - p[3]) / (1.0 + (x / p[2]).powf(p[1])),
            Self::Plf5 => p[3] + (p[0] - p[3]) / (1.0 + (x / p[2]).powf(p[1])).powf(p[4]),
        }
    }
}

/// A family, its search box and (once fitted) its parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParametricSpec {
    pub family: ParametricFamily,
    pub bounds: Vec<(f64, f64)>,
    pub params: Option<Vec<f64>>,
}

impl ParametricSpec {
    pub fn new(family: ParametricFamily) -> Self {
        ParametricSpec {
            family,
            bounds: family.default_bounds(),
            params: None,
        }
    }

    pub fn with_bounds(family: ParametricFamily, bounds: Vec<(f64, f64)>) -> Result<Self> {
        if bounds.len() != family.n_params() {
            return Err(Error::DimensionMismatch {
                expected: format!("{} bounds for {}", family.n_params(), family.name()),
                actual: bounds.len().to_string(),
            });
        }
        Ok(ParametricSpec {
            family,
            bounds,
            params: None,
        })
    }

    /// Clipped to `[0, 1]`.
    pub fn predict(&self, x: f64) -> Result<f64> {
        let p = self.params.as_ref().ok_or(Error::Unfitted)?;
        let v = self.family.eval(p, x);
        Ok(if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) })
    }
}

fn mse(family: ParametricFamily, p: &[f64], data: &[(f64, f64)]) -> f64 {
    data.iter().map(|&(x, y)| (family.eval(p, x) - y).powi(2)).sum::<f64>() / data.len() as f64
}

/// Least-squares fit of `spec.family` to `data` over `spec.bounds`.
pub fn fit_parametric(data: &[(f64, f64)], spec: &ParametricSpec, cfg: &SearchConfig) -> Result<ParametricSpec> {
    check_data(data)?;
    let family = spec.family;
    let r = bsa_minimize(|p| mse(family, p, data), &spec.bounds, cfg)?;
    Ok(ParametricSpec {
        family,
        bounds: spec.bounds.clone(),
        params: Some(r.params),
    })
}
