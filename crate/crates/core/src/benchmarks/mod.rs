//! Classical power curve models used as baselines: four parametric S-shapes
//! fitted by global search, a shallow neural regressor and a penalized
//! regression spline.

pub mod bsa;
pub mod parametric;
pub mod snn;
pub mod spline;

use serde::{Deserialize, Serialize};

pub use bsa::{bsa_minimize, SearchConfig, SearchResult};
pub use parametric::{fit_parametric, ParametricFamily, ParametricSpec};
pub use snn::{fit_snn, SnnConfig, SnnModel};
pub use spline::{fit_spline, SplineConfig, SplineModel};

use crate::curve_models::Curve;
use crate::error::{Error, Result};

pub const MIN_POINTS: usize = 10;

pub(crate) fn check_data(data: &[(f64, f64)]) -> Result<()> {
    if data.len() < MIN_POINTS {
        return Err(Error::InvalidInput(format!(
            "fitting needs at least {MIN_POINTS} points, got {}",
            data.len()
        )));
    }
    if let Some(i) = data.iter().position(|p| !(p.0.is_finite() && p.1.is_finite())) {
        return Err(Error::InvalidInput(format!("non-finite value in data row {i}")));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BenchmarkKind {
    #[serde(rename = "DE")]
    De,
    #[serde(rename = "ADE")]
    Ade,
    #[serde(rename = "PLF4")]
    Plf4,
    #[serde(rename = "PLF5")]
    Plf5,
    #[serde(rename = "SNN")]
    Snn,
    #[serde(rename = "SR")]
    Spline,
}

impl BenchmarkKind {
    pub const ALL: [BenchmarkKind; 6] = [Self::De, Self::Ade, Self::Plf4, Self::Plf5, Self::Snn, Self::Spline];

    pub fn name(self) -> &'static str {
        match self {
            Self::De => "DE",
            Self::Ade => "ADE",
            Self::Plf4 => "4PLF",
            Self::Plf5 => "5PLF",
            Self::Snn => "SNN",
            Self::Spline => "SR",
        }
    }

    pub fn parametric_family(self) -> Option<ParametricFamily> {
        match self {
            Self::De => Some(ParametricFamily::De),
            Self::Ade => Some(ParametricFamily::Ade),
            Self::Plf4 => Some(ParametricFamily::Plf4),
            Self::Plf5 => Some(ParametricFamily::Plf5),
            Self::Snn | Self::Spline => None,
        }
    }
}

impl std::str::FromStr for BenchmarkKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let up = s.to_ascii_uppercase();
        Self::ALL
            .into_iter()
            .find(|k| k.name() == up || format!("{k:?}").to_ascii_uppercase() == up || (up == "PLF4" && *k == Self::Plf4) || (up == "PLF5" && *k == Self::Plf5))
            .ok_or_else(|| Error::InvalidInput(format!("unknown benchmark {s:?}")))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub search: SearchConfig,
    pub snn: SnnConfig,
    pub spline: SplineConfig,
}

/// Any fitted baseline. Serializes as a tagged record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum FittedBenchmark {
    Parametric { family: ParametricFamily, params: Vec<f64> },
    Snn(SnnModel),
    Spline(SplineModel),
}

impl FittedBenchmark {
    pub fn kind(&self) -> BenchmarkKind {
        match self {
            Self::Parametric { family, .. } => match family {
                ParametricFamily::De => BenchmarkKind::De,
                ParametricFamily::Ade => BenchmarkKind::Ade,
                ParametricFamily::Plf4 => BenchmarkKind::Plf4,
                ParametricFamily::Plf5 => BenchmarkKind::Plf5,
            },
            Self::Snn(_) => BenchmarkKind::Snn,
            Self::Spline(_) => BenchmarkKind::Spline,
        }
    }

    /// Normalized power at normalized speed `x`, clipped to `[0, 1]`.
    pub fn predict(&self, x: f64) -> f64 {
        match self {
            Self::Parametric { family, params } => {
                let v = family.eval(params, x);
                if v.is_nan() {
                    0.0
                } else {
                    v.clamp(0.0, 1.0)
                }
            }
            Self::Snn(m) => m.predict(x),
            Self::Spline(m) => m.predict(x),
        }
    }

    pub fn predict_batch(&self, xs: &[f64]) -> Vec<f64> {
        xs.iter().map(|&x| self.predict(x)).collect()
    }
}

impl Curve for FittedBenchmark {
    fn value(&self, x: f64) -> f64 {
        self.predict(x)
    }
}

pub fn fit_benchmark(kind: BenchmarkKind, data: &[(f64, f64)], cfg: &BenchmarkConfig) -> Result<FittedBenchmark> {
    match kind.parametric_family() {
        Some(family) => {
            let spec = fit_parametric(data, &ParametricSpec::new(family), &cfg.search)?;
            Ok(FittedBenchmark::Parametric {
                family,
                params: spec.params.ok_or(Error::Unfitted)?,
            })
        }
        None if kind == BenchmarkKind::Snn => Ok(FittedBenchmark::Snn(fit_snn(data, &cfg.snn)?)),
        None => Ok(FittedBenchmark::Spline(fit_spline(data, &cfg.spline)?)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curve_models::unit_grid;

    fn de_data() -> Vec<(f64, f64)> {
        unit_grid(60)
            .into_iter()
            .map(|x| (x, ParametricFamily::De.eval(&[20.0, -10.0], x)))
            .collect()
    }

    fn quick() -> BenchmarkConfig {
        BenchmarkConfig {
            search: SearchConfig {
                iterations: 100,
                ..SearchConfig::default()
            },
            snn: SnnConfig {
                epochs: 100,
                ..SnnConfig::default()
            },
            spline: SplineConfig::default(),
        }
    }

    #[test]
    fn every_kind_fits_and_stays_in_the_unit_interval() {
        let data = de_data();
        for kind in BenchmarkKind::ALL {
            let m = fit_benchmark(kind, &data, &quick()).unwrap();
            assert_eq!(m.kind(), kind);
            for x in [-0.5, 0.0, 0.3, 1.0, 1.5] {
                assert!((0.0..=1.0).contains(&m.predict(x)), "{kind:?} at {x}");
            }
            let xs = [0.9, 0.1, 0.5];
            let batch = m.predict_batch(&xs);
            for (x, v) in xs.iter().zip(batch) {
                assert_eq!(v, m.predict(*x));
            }
        }
    }

    #[test]
    fn fitted_de_matches_training_targets() {
        let data = de_data();
        let m = fit_benchmark(BenchmarkKind::De, &data, &BenchmarkConfig::default()).unwrap();
        for &(x, y) in &data {
            assert!((m.predict(x) - y).abs() < 1e-3);
        }
    }

    #[test]
    fn serde_round_trip() {
        let m = fit_benchmark(BenchmarkKind::Spline, &de_data(), &quick()).unwrap();
        let text = serde_json::to_string(&m).unwrap();
        assert!(text.contains("\"model\":\"spline\""));
        let back: FittedBenchmark = serde_json::from_str(&text).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn data_checks() {
        assert!(check_data(&[(0.1, 0.1); 9]).is_err());
        let mut d = vec![(0.1, 0.1); 10];
        assert!(check_data(&d).is_ok());
        d[4].1 = f64::NAN;
        assert!(check_data(&d).is_err());
    }

    #[test]
    fn names_parse() {
        for kind in BenchmarkKind::ALL {
            assert_eq!(kind.name().parse::<BenchmarkKind>().unwrap(), kind);
        }
        assert_eq!("plf4".parse::<BenchmarkKind>().unwrap(), BenchmarkKind::Plf4);
        assert!("knn".parse::<BenchmarkKind>().is_err());
    }
}
