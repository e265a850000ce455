//! Synthetic SCADA scatter around a sampled ground-truth curve: normal
//! points with derivative-shaped noise, curtailment stripes, uniform sparse
//! outliers, then an optional truncation that mimics missing high-speed or
//! high-power records.

use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::curve_models::{sample_wpc_function, Curve, WpcFunction};
use crate::error::{Error, Result};
use crate::seeding::derive_seed;

/// Normalized derivative level above which the projection bends towards 1.
pub const VP_KNEE: f64 = 0.7;

const STRIPE_LEVEL_RANGE: (f64, f64) = (0.1, 0.9);
const STRIPE_REDRAWS: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Normal,
    Stacked,
    Sparse,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Normal => "normal",
            Label::Stacked => "stacked",
            Label::Sparse => "sparse",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScatterPoint {
    #[serde(rename = "wind_speed")]
    pub x: f64,
    #[serde(rename = "wind_power")]
    pub y: f64,
    pub label: Label,
}

/// Labeled normalized `(speed, power)` points.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ScatterSet {
    pub points: Vec<ScatterPoint>,
}

impl ScatterSet {
    pub fn new(points: Vec<ScatterPoint>) -> Self {
        ScatterSet { points }
    }

    /// Wraps unlabeled observations; they are tagged `normal`.
    pub fn from_pairs(pairs: &[(f64, f64)]) -> Self {
        ScatterSet {
            points: pairs
                .iter()
                .map(|&(x, y)| ScatterPoint {
                    x,
                    y,
                    label: Label::Normal,
                })
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn count(&self, label: Label) -> usize {
        self.points.iter().filter(|p| p.label == label).count()
    }

    pub fn pairs(&self) -> Vec<(f64, f64)> {
        self.points.iter().map(|p| (p.x, p.y)).collect()
    }

    pub fn extend(&mut self, other: ScatterSet) {
        self.points.extend(other.points);
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        for p in &self.points {
            wtr.serialize(p)?;
        }
        wtr.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let points = rdr
            .deserialize()
            .collect::<std::result::Result<Vec<ScatterPoint>, _>>()?;
        Ok(ScatterSet { points })
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        crate::io::write_atomic(path, &buf)
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(f)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StackedMode {
    /// Horizontal curtailment stripes below the curve.
    #[default]
    Stripe,
    /// Gaussian jitter around the curve.
    AroundCurve,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthesisConfig {
    pub n_samples: usize,
    pub n_normal: usize,
    pub n_stacked: usize,
    pub n_sparse: usize,
    pub sigma_normal: f64,
    pub sigma_stacked: f64,
    pub stacked_mode: StackedMode,
    pub discard_prob: f64,
    pub discard_quantile_range: (f64, f64),
    pub seed: u64,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        SynthesisConfig {
            n_samples: 4000,
            n_normal: 1000,
            n_stacked: 150,
            n_sparse: 250,
            sigma_normal: 0.05,
            sigma_stacked: 0.01,
            stacked_mode: StackedMode::Stripe,
            discard_prob: 0.3,
            discard_quantile_range: (0.5, 0.95),
            seed: 0,
        }
    }
}

impl SynthesisConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("n_samples", self.n_samples),
            ("n_normal", self.n_normal),
            ("n_stacked", self.n_stacked),
            ("n_sparse", self.n_sparse),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if !(self.sigma_normal >= 0.0 && self.sigma_stacked >= 0.0) {
            return Err(Error::Config("noise amplitudes must be non-negative".into()));
        }
        if !(0.0..=1.0).contains(&self.discard_prob) {
            return Err(Error::Config(format!(
                "discard_prob = {} is not a probability",
                self.discard_prob
            )));
        }
        let (lo, hi) = self.discard_quantile_range;
        if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
            return Err(Error::Config(format!(
                "discard_quantile_range ({lo}, {hi}) must be an interval inside [0, 1]"
            )));
        }
        Ok(())
    }

    /// Points per sample when no truncation happens.
    pub fn points_per_sample(&self) -> usize {
        self.n_normal + self.n_stacked + self.n_sparse
    }
}

/// Maps derivative values to noise scales in `[0, 1]`: min-max normalize,
/// keep the lower part linear, bend the top part towards 1.
pub fn variance_projection(d: &[f64]) -> Result<Vec<f64>> {
    if d.is_empty() {
        return Err(Error::InvalidInput(
            "variance projection of an empty vector".into(),
        ));
    }
    let (lo, hi) = d
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    if hi == lo {
        return Ok(vec![0.0; d.len()]);
    }
    Ok(d.iter()
        .map(|&v| {
            let eta = (v - lo) / (hi - lo);
            if eta < VP_KNEE {
                eta
            } else {
                (1.0 - (eta - 1.0).powi(4)).sqrt()
            }
        })
        .collect())
}

fn labeled(x: f64, y: f64, label: Label) -> ScatterPoint {
    ScatterPoint {
        x,
        y: y.clamp(0.0, 1.0),
        label,
    }
}

/// Normal operation points: `y = f(x) + eps * sigma * phi(f'(x))`.
pub fn synthesize_normal<R: Rng + ?Sized>(
    f: &WpcFunction,
    count: usize,
    sigma_normal: f64,
    rng: &mut R,
) -> ScatterSet {
    let xs: Vec<f64> = (0..count).map(|_| rng.random::<f64>()).collect();
    let slopes: Vec<f64> = xs.iter().map(|&x| f.slope(x)).collect();
    let Ok(phi) = variance_projection(&slopes) else {
        return ScatterSet::default();
    };
    let points = xs
        .iter()
        .zip(&phi)
        .map(|(&x, &scale)| {
            let eps: f64 = rng.sample(StandardNormal);
            labeled(x, f.value(x) + eps * sigma_normal * scale, Label::Normal)
        })
        .collect();
    ScatterSet { points }
}

/// Smallest `x` with `f(x) >= level` for a non-decreasing `f`, or `None`
/// if the curve never gets there.
fn first_crossing(f: &WpcFunction, level: f64) -> Option<f64> {
    if f.value(1.0) <= level {
        return None;
    }
    if f.value(0.0) > level {
        return Some(0.0);
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if f.value(mid) > level {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some(hi)
}

/// A horizontal curtailment stripe: level `c ~ U[0.1, 0.9]`, speeds drawn
/// where the curve is above `c`, power jittered around `c`.
pub fn synthesize_stacked<R: Rng + ?Sized>(
    f: &WpcFunction,
    count: usize,
    sigma_stacked: f64,
    rng: &mut R,
) -> ScatterSet {
    for _ in 0..STRIPE_REDRAWS {
        let level = rng.random_range(STRIPE_LEVEL_RANGE.0..STRIPE_LEVEL_RANGE.1);
        let Some(x_start) = first_crossing(f, level) else {
            continue;
        };
        let points = (0..count)
            .map(|_| {
                let x = rng.random_range(x_start..=1.0);
                let eps: f64 = rng.sample(StandardNormal);
                labeled(x, level + eps * sigma_stacked, Label::Stacked)
            })
            .collect();
        return ScatterSet { points };
    }
    ScatterSet::default()
}

/// The literal jitter-around-the-curve reading of stacked outliers.
pub fn synthesize_stacked_around_curve<R: Rng + ?Sized>(
    f: &WpcFunction,
    count: usize,
    sigma_stacked: f64,
    rng: &mut R,
) -> ScatterSet {
    let points = (0..count)
        .map(|_| {
            let x = rng.random::<f64>();
            let eps: f64 = rng.sample(StandardNormal);
            labeled(x, f.value(x) + eps * sigma_stacked, Label::Stacked)
        })
        .collect();
    ScatterSet { points }
}

pub fn synthesize_sparse<R: Rng + ?Sized>(count: usize, rng: &mut R) -> ScatterSet {
    let points = (0..count)
        .map(|_| labeled(rng.random(), rng.random(), Label::Sparse))
        .collect();
    ScatterSet { points }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    Speed,
    Power,
}

/// A truncation applied by [`random_discard`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Truncation {
    pub axis: Axis,
    pub threshold: f64,
}

impl Truncation {
    pub fn apply(&self, s: &ScatterSet) -> ScatterSet {
        let keep = |p: &&ScatterPoint| match self.axis {
            Axis::Speed => p.x <= self.threshold,
            Axis::Power => p.y <= self.threshold,
        };
        ScatterSet {
            points: s.points.iter().filter(keep).copied().collect(),
        }
    }
}

/// With probability `discard_prob`, drops every point whose speed (or power,
/// chosen uniformly) exceeds a threshold drawn from `quantile_range`.
pub fn random_discard<R: Rng + ?Sized>(
    s: ScatterSet,
    discard_prob: f64,
    quantile_range: (f64, f64),
    rng: &mut R,
) -> (ScatterSet, Option<Truncation>) {
    if !rng.random_bool(discard_prob.clamp(0.0, 1.0)) {
        return (s, None);
    }
    let axis = if rng.random_bool(0.5) {
        Axis::Speed
    } else {
        Axis::Power
    };
    let (lo, hi) = quantile_range;
    let threshold = if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    };
    let t = Truncation { axis, threshold };
    (t.apply(&s), Some(t))
}

/// One synthesized training sample.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSample {
    pub seed: u64,
    pub scatter: ScatterSet,
    pub truth: WpcFunction,
    pub truncation: Option<Truncation>,
}

/// Samples a curve, emits normal, stacked and sparse points in that order,
/// then applies the random truncation.
pub fn synthesize_sample<R: Rng + ?Sized>(
    config: &SynthesisConfig,
    rng: &mut R,
) -> Result<(ScatterSet, WpcFunction, Option<Truncation>)> {
    let truth = sample_wpc_function(rng)?;
    let mut scatter = synthesize_normal(&truth, config.n_normal, config.sigma_normal, rng);
    scatter.extend(match config.stacked_mode {
        StackedMode::Stripe => synthesize_stacked(&truth, config.n_stacked, config.sigma_stacked, rng),
        StackedMode::AroundCurve => {
            synthesize_stacked_around_curve(&truth, config.n_stacked, config.sigma_stacked, rng)
        }
    });
    scatter.extend(synthesize_sparse(config.n_sparse, rng));
    let (scatter, truncation) = random_discard(
        scatter,
        config.discard_prob,
        config.discard_quantile_range,
        rng,
    );
    Ok((scatter, truth, truncation))
}

/// Sample `index` of the dataset described by `config`, reproducible on its own.
pub fn synthesize_indexed(config: &SynthesisConfig, index: usize) -> Result<SyntheticSample> {
    let seed = derive_seed(config.seed, index as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (scatter, truth, truncation) = synthesize_sample(config, &mut rng)?;
    Ok(SyntheticSample {
        seed,
        scatter,
        truth,
        truncation,
    })
}

/// `config.n_samples` independent samples with per-sample seeds derived from
/// `config.seed`.
pub fn synthesize_dataset(config: &SynthesisConfig) -> Result<Vec<SyntheticSample>> {
    config.validate()?;
    (0..config.n_samples)
        .map(|i| synthesize_indexed(config, i))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleManifest {
    pub index: usize,
    pub seed: u64,
    pub truth: WpcFunction,
    pub truncation: Option<Truncation>,
    pub n_points: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub config: SynthesisConfig,
    pub samples: Vec<SampleManifest>,
}

impl DatasetManifest {
    pub fn new(config: &SynthesisConfig, samples: &[SyntheticSample]) -> Self {
        DatasetManifest {
            config: config.clone(),
            samples: samples
                .iter()
                .enumerate()
                .map(|(index, s)| SampleManifest {
                    index,
                    seed: s.seed,
                    truth: s.truth.clone(),
                    truncation: s.truncation,
                    n_points: s.scatter.len(),
                })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn variance_projection_branches() {
        let phi = variance_projection(&[0.0, 0.5, 1.0]).unwrap();
        assert_eq!(phi[0], 0.0);
        assert_eq!(phi[1], 0.5);
        assert_eq!(phi[2], 1.0);
        // upper branch just above the knee
        let phi = variance_projection(&[0.0, 0.8, 1.0]).unwrap();
        assert!((phi[1] - (1.0 - 0.2f64.powi(4)).sqrt()).abs() < 1e-15);
        assert_eq!(variance_projection(&[3.0, 3.0]).unwrap(), vec![0.0, 0.0]);
        assert!(variance_projection(&[]).is_err());
    }

    #[test]
    fn zero_noise_normal_points_lie_on_curve() {
        let f = WpcFunction::de(20.0, -10.0).unwrap();
        let s = synthesize_normal(&f, 500, 0.0, &mut rng(1));
        assert_eq!(s.len(), 500);
        for p in &s.points {
            assert_eq!(p.y, f.value(p.x));
            assert_eq!(p.label, Label::Normal);
        }
    }

    #[test]
    fn normal_noise_follows_the_slope() {
        let f = WpcFunction::de(20.0, -10.0).unwrap();
        let s = synthesize_normal(&f, 10_000, 0.05, &mut rng(2));
        let mut rows: Vec<(f64, f64)> = s
            .points
            .iter()
            .map(|p| (f.slope(p.x), p.y - f.value(p.x)))
            .collect();
        rows.sort_by(|a, b| a.0.total_cmp(&b.0));
        let std = |r: &[(f64, f64)]| {
            let m = r.iter().map(|v| v.1).sum::<f64>() / r.len() as f64;
            (r.iter().map(|v| (v.1 - m).powi(2)).sum::<f64>() / (r.len() - 1) as f64).sqrt()
        };
        let decile = rows.len() / 10;
        let flat = std(&rows[..decile]);
        let steep = std(&rows[rows.len() - decile..]);
        assert!(steep > flat, "steep {steep} <= flat {flat}");
    }

    #[test]
    fn stripes_sit_below_the_curve() {
        let f = WpcFunction::de(15.0, -9.0).unwrap();
        let s = synthesize_stacked(&f, 50, 0.0, &mut rng(3));
        let level = s.points[0].y;
        assert!((0.1..0.9).contains(&level));
        for p in &s.points {
            assert_eq!(p.y, level);
            assert!(f.value(p.x) >= level);
        }
    }

    #[test]
    fn stripe_jitter_tail_matches_gaussian() {
        // one point per stripe over 1000 stripes; a violation of
        // f(x) > y - 3 sigma needs eps > 3, which has probability 0.00135
        let f = WpcFunction::de(15.0, -9.0).unwrap();
        let sigma = 0.01;
        let mut r = rng(4);
        let mut over3 = 0;
        for _ in 0..1000 {
            let s = synthesize_stacked(&f, 1, sigma, &mut r);
            let p = s.points[0];
            if f.value(p.x) <= p.y - 3.0 * sigma {
                over3 += 1;
            }
            assert!(f.value(p.x) > p.y - 6.0 * sigma);
        }
        // P(Binomial(1000, 0.00135) > 6) < 0.001
        assert!(over3 <= 6, "{over3} stripe points more than 3 sigma above the curve");
    }

    #[test]
    fn flat_curve_yields_no_stripe() {
        // never exceeds 0.1, so no level in [0.1, 0.9] can be placed under it
        let f = WpcFunction::de(50.0, -1e-3).unwrap();
        assert!(synthesize_stacked(&f, 10, 0.01, &mut rng(5)).is_empty());
    }

    #[test]
    fn sparse_points_are_uniform() {
        let s = synthesize_sparse(100_000, &mut rng(6));
        let (mx, my) = s.points.iter().fold((0.0, 0.0), |(a, b), p| (a + p.x, b + p.y));
        assert!((mx / 1e5 - 0.5f64).abs() < 0.01);
        assert!((my / 1e5 - 0.5f64).abs() < 0.01);
        assert!(s
            .points
            .iter()
            .all(|p| (0.0..=1.0).contains(&p.x) && (0.0..=1.0).contains(&p.y)));
        let one = synthesize_sparse(1, &mut rng(7));
        assert_eq!(one.len(), 1);
        assert_eq!(one.points[0].label, Label::Sparse);
    }

    #[test]
    fn discard_cases() {
        let s = synthesize_sparse(2000, &mut rng(8));
        let (same, t) = random_discard(s.clone(), 0.0, (0.5, 0.95), &mut rng(9));
        assert_eq!(same, s);
        assert!(t.is_none());

        for seed in 0..20 {
            let (cut, t) = random_discard(s.clone(), 1.0, (0.5, 0.95), &mut rng(seed));
            let t = t.unwrap();
            assert!((0.5..0.95).contains(&t.threshold));
            let max = cut
                .points
                .iter()
                .map(|p| match t.axis {
                    Axis::Speed => p.x,
                    Axis::Power => p.y,
                })
                .fold(0.0, f64::max);
            assert!(max <= t.threshold);
        }
    }

    #[test]
    fn discard_trigger_rate() {
        let s = synthesize_sparse(10, &mut rng(10));
        let mut r = rng(11);
        let hits = (0..1000)
            .filter(|_| random_discard(s.clone(), 0.3, (0.5, 0.95), &mut r).1.is_some())
            .count();
        assert!((255..=345).contains(&hits), "hits = {hits}");
    }

    #[test]
    fn default_sample_composition() {
        let cfg = SynthesisConfig {
            discard_prob: 0.0,
            ..SynthesisConfig::default()
        };
        let (s, _, t) = synthesize_sample(&cfg, &mut rng(12)).unwrap();
        assert!(t.is_none());
        assert_eq!(s.len(), 1400);
        assert_eq!(s.count(Label::Normal), 1000);
        assert_eq!(s.count(Label::Stacked), 150);
        assert_eq!(s.count(Label::Sparse), 250);
        // concatenation order
        assert_eq!(s.points[0].label, Label::Normal);
        assert_eq!(s.points[1000].label, Label::Stacked);
        assert_eq!(s.points[1399].label, Label::Sparse);
    }

    #[test]
    fn zero_noise_sample_is_consistent_with_truth() {
        let cfg = SynthesisConfig {
            sigma_normal: 0.0,
            discard_prob: 0.0,
            ..SynthesisConfig::default()
        };
        let (s, f, _) = synthesize_sample(&cfg, &mut rng(13)).unwrap();
        for p in s.points.iter().filter(|p| p.label == Label::Normal) {
            assert_eq!(p.y, f.value(p.x));
        }
    }

    #[test]
    fn dataset_determinism() {
        let cfg = SynthesisConfig {
            n_samples: 3,
            seed: 99,
            ..SynthesisConfig::default()
        };
        let a = synthesize_dataset(&cfg).unwrap();
        let b = synthesize_dataset(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 3);
        assert_ne!(a[0].seed, a[1].seed);
        let one = synthesize_dataset(&SynthesisConfig {
            n_samples: 1,
            ..cfg.clone()
        })
        .unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one[0], a[0]);
    }

    #[test]
    fn config_validation() {
        let bad = SynthesisConfig {
            n_normal: 0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = SynthesisConfig {
            discard_prob: 1.5,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        assert!(SynthesisConfig::default().validate().is_ok());
    }

    #[test]
    fn csv_round_trip() {
        let s = synthesize_sparse(5, &mut rng(14));
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("wind_speed,wind_power,label\n"));
        assert_eq!(ScatterSet::read_csv(buf.as_slice()).unwrap(), s);
    }
}
