//! Data preparation scenarios (raw, roughly cleaned, carefully cleaned) and
//! access patterns (full range or speed-truncated).

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::ingest::quantile;
use crate::error::{Error, Result};
use crate::synthesis::{Label, ScatterSet};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scenario {
    /// Raw data.
    #[default]
    #[serde(rename = "S1")]
    S1Raw,
    /// Rule-based rough cleaning.
    #[serde(rename = "S2")]
    S2Rough,
    /// Expert cleaning: the outlier labels on synthetic data, a user-supplied
    /// cleaned file on real data.
    #[serde(rename = "S3")]
    S3Careful,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Self::S1Raw => "S1",
            Self::S2Rough => "S2",
            Self::S3Careful => "S3",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Pattern {
    /// Normal pattern: the whole speed range is available.
    #[default]
    #[serde(rename = "NP")]
    Np,
    /// Incomplete data pattern: speeds above a quantile are unavailable.
    #[serde(rename = "IDP")]
    Idp,
}

impl Pattern {
    pub fn name(self) -> &'static str {
        match self {
            Self::Np => "NP",
            Self::Idp => "IDP",
        }
    }
}

/// Thresholds of the rough cleaning rules.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoughFilter {
    /// Power below this counts as a stoppage...
    pub low_power: f64,
    /// ...when the speed exceeds this fraction of the estimated rated speed.
    pub rated_speed_fraction: f64,
    pub bin_width: f64,
    /// Power bins below the plateau holding more than this many times the
    /// median bin count are treated as curtailment and dropped.
    pub bin_factor: f64,
}

impl Default for RoughFilter {
    fn default() -> Self {
        RoughFilter {
            low_power: 0.02,
            rated_speed_fraction: 0.5,
            bin_width: 0.01,
            bin_factor: 3.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSpec {
    pub scenario: Scenario,
    pub pattern: Pattern,
    /// Speed quantile above which data is hidden under IDP.
    pub idp_quantile: f64,
    pub rough: RoughFilter,
    /// Pre-cleaned SCADA file used for S3 on real data.
    pub cleaned_input: Option<PathBuf>,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        ScenarioSpec {
            scenario: Scenario::S1Raw,
            pattern: Pattern::Np,
            idp_quantile: 0.6,
            rough: RoughFilter::default(),
            cleaned_input: None,
        }
    }
}

impl ScenarioSpec {
    pub fn new(scenario: Scenario, pattern: Pattern) -> Self {
        ScenarioSpec {
            scenario,
            pattern,
            ..ScenarioSpec::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.idp_quantile > 0.0 && self.idp_quantile <= 1.0) {
            return Err(Error::Config(format!(
                "idp_quantile must lie in (0, 1], got {}",
                self.idp_quantile
            )));
        }
        let r = &self.rough;
        if !(r.bin_width > 0.0 && r.bin_width <= 1.0 && r.bin_factor > 0.0 && r.rated_speed_fraction >= 0.0) {
            return Err(Error::Config("rough filter thresholds must be positive".into()));
        }
        Ok(())
    }
}

/// Whether the points carry trustworthy outlier labels.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LabelSource {
    Synthetic,
    Unlabeled,
}

/// The scenario filter alone, without the access pattern.
pub fn clean(data: &ScatterSet, spec: &ScenarioSpec, labels: LabelSource) -> Result<ScatterSet> {
    match spec.scenario {
        Scenario::S1Raw => Ok(data.clone()),
        Scenario::S2Rough => Ok(rough_filter(data, &spec.rough)),
        Scenario::S3Careful => match labels {
            LabelSource::Synthetic => Ok(ScatterSet::new(
                data.points.iter().filter(|p| p.label == Label::Normal).copied().collect(),
            )),
            // the caller has already swapped in the cleaned file
            LabelSource::Unlabeled if spec.cleaned_input.is_some() => Ok(data.clone()),
            LabelSource::Unlabeled => Err(Error::Config(
                "scenario S3 on unlabeled data needs scenario.cleaned_input".into(),
            )),
        },
    }
}

/// The access pattern alone: under IDP, drops points faster than the
/// configured speed quantile of `data`.
pub fn restrict(data: &ScatterSet, spec: &ScenarioSpec) -> ScatterSet {
    match spec.pattern {
        Pattern::Np => data.clone(),
        Pattern::Idp => {
            let xs: Vec<f64> = data.points.iter().map(|p| p.x).collect();
            let Some(cut) = quantile(&xs, spec.idp_quantile) else {
                return data.clone();
            };
            ScatterSet::new(data.points.iter().filter(|p| p.x <= cut).copied().collect())
        }
    }
}

pub fn apply_scenario(data: &ScatterSet, spec: &ScenarioSpec, labels: LabelSource) -> Result<ScatterSet> {
    spec.validate()?;
    Ok(restrict(&clean(data, spec, labels)?, spec))
}

fn rough_filter(data: &ScatterSet, f: &RoughFilter) -> ScatterSet {
    let ys: Vec<f64> = data.points.iter().map(|p| p.y).collect();
    let Some(top) = quantile(&ys, 0.99) else {
        return data.clone();
    };
    let plateau = 0.95 * top;
    let near_rated: Vec<f64> = data.points.iter().filter(|p| p.y >= plateau).map(|p| p.x).collect();
    let rated_speed = quantile(&near_rated, 0.1).unwrap_or(1.0);

    // bin 0 holds the legitimate below-cut-in records and is never dropped
    let bin = |y: f64| (y / f.bin_width).floor() as usize;
    let n_bins = bin(plateau);
    let mut counts = vec![0usize; n_bins.max(1)];
    for p in &data.points {
        let b = bin(p.y);
        if p.y < plateau && b >= 1 && b < counts.len() {
            counts[b] += 1;
        }
    }
    let occupied: Vec<f64> = counts.iter().skip(1).filter(|&&c| c > 0).map(|&c| c as f64).collect();
    let limit = quantile(&occupied, 0.5).map(|m| f.bin_factor * m);

    let keep = |x: f64, y: f64| {
        if y < f.low_power && x > f.rated_speed_fraction * rated_speed {
            return false;
        }
        let b = bin(y);
        match limit {
            Some(limit) if y < plateau && b >= 1 && b < counts.len() => counts[b] as f64 <= limit,
            _ => true,
        }
    };
    ScatterSet::new(data.points.iter().filter(|p| keep(p.x, p.y)).copied().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthesis::{synthesize_indexed, ScatterPoint, SynthesisConfig};

    fn sample() -> ScatterSet {
        let cfg = SynthesisConfig {
            discard_prob: 0.0,
            seed: 3,
            ..SynthesisConfig::default()
        };
        synthesize_indexed(&cfg, 0).unwrap().scatter
    }

    #[test]
    fn raw_scenario_is_identity() {
        let s = sample();
        assert_eq!(apply_scenario(&s, &ScenarioSpec::default(), LabelSource::Synthetic).unwrap(), s);
    }

    #[test]
    fn oracle_keeps_exactly_the_normal_points() {
        let s = sample();
        let spec = ScenarioSpec::new(Scenario::S3Careful, Pattern::Np);
        let out = apply_scenario(&s, &spec, LabelSource::Synthetic).unwrap();
        assert_eq!(out.len(), 1000);
        assert!(out.points.iter().all(|p| p.label == Label::Normal));
        assert!(matches!(
            apply_scenario(&s, &spec, LabelSource::Unlabeled),
            Err(Error::Config(_))
        ));
        let with_file = ScenarioSpec {
            cleaned_input: Some("clean.csv".into()),
            ..spec
        };
        assert_eq!(apply_scenario(&s, &with_file, LabelSource::Unlabeled).unwrap(), s);
    }

    #[test]
    fn truncation_respects_the_quantile() {
        let s = sample();
        let spec = ScenarioSpec::new(Scenario::S1Raw, Pattern::Idp);
        let out = apply_scenario(&s, &spec, LabelSource::Synthetic).unwrap();
        let xs: Vec<f64> = s.points.iter().map(|p| p.x).collect();
        let cut = quantile(&xs, 0.6).unwrap();
        assert!(out.points.iter().all(|p| p.x <= cut));
        assert!((out.len() as f64 / s.len() as f64 - 0.6).abs() < 0.01);
    }

    #[test]
    fn rough_filter_removes_stoppages_and_stripes() {
        let mut pts = Vec::new();
        // a clean ramp
        for i in 0..1000 {
            let x = i as f64 / 999.0;
            pts.push(ScatterPoint { x, y: (2.0 * x - 0.3).clamp(0.0, 1.0), label: Label::Normal });
        }
        // stoppages at high speed and a curtailment stripe at 0.455
        for i in 0..50 {
            pts.push(ScatterPoint { x: 0.8 + i as f64 * 0.003, y: 0.0, label: Label::Sparse });
            pts.push(ScatterPoint { x: 0.6 + i as f64 * 0.006, y: 0.455, label: Label::Stacked });
        }
        let s = ScatterSet::new(pts);
        let spec = ScenarioSpec::new(Scenario::S2Rough, Pattern::Np);
        let out = apply_scenario(&s, &spec, LabelSource::Unlabeled).unwrap();
        assert_eq!(out.count(Label::Sparse), 0);
        assert_eq!(out.count(Label::Stacked), 0);
        assert!(out.count(Label::Normal) >= 980, "{}", out.count(Label::Normal));
    }

    #[test]
    fn spec_validation() {
        let spec = ScenarioSpec {
            idp_quantile: 0.0,
            ..ScenarioSpec::default()
        };
        assert!(spec.validate().is_err());
    }
}
