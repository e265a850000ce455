//! Penalized cubic regression spline (uniform B-spline basis, second
//! difference penalty on the coefficients).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::check_data;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplineConfig {
    /// Equispaced knots spanning the data range, end points included.
    pub n_knots: usize,
    /// Weight of the roughness penalty relative to the mean squared residual.
    pub smoothing: f64,
}

impl Default for SplineConfig {
    fn default() -> Self {
        SplineConfig {
            n_knots: 20,
            smoothing: 1e-6,
        }
    }
}

impl SplineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_knots < 2 {
            return Err(Error::Config("n_knots must be at least 2".into()));
        }
        if !(self.smoothing >= 0.0 && self.smoothing.is_finite()) {
            return Err(Error::Config("smoothing must be a non-negative number".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplineModel {
    pub lo: f64,
    pub hi: f64,
    /// One coefficient per basis function, `n_knots + 2` in total.
    pub coeffs: Vec<f64>,
}

/// Index of the first non-zero basis function at `x` and the four weights.
fn local_basis(lo: f64, hi: f64, n_intervals: usize, x: f64) -> (usize, [f64; 4]) {
    let t = (x.clamp(lo, hi) - lo) / (hi - lo) * n_intervals as f64;
    let i = (t.floor() as usize).min(n_intervals - 1);
    let u = t - i as f64;
    let (u2, u3) = (u * u, u * u * u);
    let w = [
        (1.0 - u).powi(3) / 6.0,
        (3.0 * u3 - 6.0 * u2 + 4.0) / 6.0,
        (-3.0 * u3 + 3.0 * u2 + 3.0 * u + 1.0) / 6.0,
        u3 / 6.0,
    ];
    (i, w)
}

impl SplineModel {
    fn n_intervals(&self) -> usize {
        self.coeffs.len() - 3
    }

    /// Unclipped; held constant outside the fitted range.
    pub fn raw(&self, x: f64) -> f64 {
        let (i, w) = local_basis(self.lo, self.hi, self.n_intervals(), x);
        (0..4).map(|k| w[k] * self.coeffs[i + k]).sum()
    }

    /// Clipped to `[0, 1]`.
    pub fn predict(&self, x: f64) -> f64 {
        self.raw(x).clamp(0.0, 1.0)
    }
}

/// Minimizes `(1/n) |B c - y|^2 + smoothing |D2 c|^2`.
pub fn fit_spline(data: &[(f64, f64)], cfg: &SplineConfig) -> Result<SplineModel> {
    check_data(data)?;
    cfg.validate()?;
    let lo = data.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let hi = data.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return Err(Error::InvalidInput("all speeds are equal; a spline needs a range".into()));
    }
    let nint = cfg.n_knots - 1;
    let k = nint + 3;
    let n = data.len();
    let n_pen = if cfg.smoothing > 0.0 { k - 2 } else { 0 };
    let mut a = DMatrix::<f64>::zeros(n + n_pen, k);
    let mut b = DVector::<f64>::zeros(n + n_pen);
    let row_scale = 1.0 / (n as f64).sqrt();
    for (r, &(x, y)) in data.iter().enumerate() {
        let (i, w) = local_basis(lo, hi, nint, x);
        for (j, wj) in w.iter().enumerate() {
            a[(r, i + j)] = wj * row_scale;
        }
        b[r] = y * row_scale;
    }
    let s = cfg.smoothing.sqrt();
    for j in 0..n_pen {
        a[(n + j, j)] = s;
        a[(n + j, j + 1)] = -2.0 * s;
        a[(n + j, j + 2)] = s;
    }
    if n + n_pen < k {
        return Err(Error::RankDeficient(format!(
            "{} knots need at least {k} points without smoothing; use fewer knots",
            cfg.n_knots
        )));
    }
    let qr = a.qr();
    let r = qr.r();
    let diag: Vec<f64> = (0..k).map(|i| r[(i, i)].abs()).collect();
    let dmax = diag.iter().cloned().fold(0.0, f64::max);
    let dmin = diag.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(dmax > 0.0) || dmin <= 1e-12 * dmax {
        return Err(Error::RankDeficient(format!(
            "{} knots are too many for this data; use fewer knots or positive smoothing",
            cfg.n_knots
        )));
    }
    let qtb = qr.q().transpose() * b;
    let c = r
        .solve_upper_triangular(&qtb)
        .ok_or_else(|| Error::RankDeficient("triangular solve failed".into()))?;
    Ok(SplineModel {
        lo,
        hi,
        coeffs: c.iter().copied().collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curve_models::unit_grid;

    #[test]
    fn reproduces_cubics_without_smoothing() {
        let f = |x: f64| 0.1 + 0.3 * x - 0.7 * x * x + 1.1 * x * x * x;
        let data: Vec<_> = unit_grid(200).into_iter().map(|x| (x, f(x))).collect();
        let cfg = SplineConfig {
            smoothing: 0.0,
            ..SplineConfig::default()
        };
        let m = fit_spline(&data, &cfg).unwrap();
        assert_eq!(m.coeffs.len(), 22);
        for &(x, y) in &data {
            assert!((m.raw(x) - y).abs() <= 1e-8, "{x}");
        }
    }

    #[test]
    fn heavy_smoothing_tends_to_least_squares_line() {
        let data: Vec<_> = unit_grid(101)
            .into_iter()
            .map(|x| (x, 0.2 + 0.5 * x * x + 0.05 * (37.0 * x).sin()))
            .collect();
        let n = data.len() as f64;
        let (mx, my) = (
            data.iter().map(|p| p.0).sum::<f64>() / n,
            data.iter().map(|p| p.1).sum::<f64>() / n,
        );
        let slope = data.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>()
            / data.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
        let line = |x: f64| my + slope * (x - mx);
        let cfg = SplineConfig {
            smoothing: 1e8,
            ..SplineConfig::default()
        };
        let m = fit_spline(&data, &cfg).unwrap();
        for x in unit_grid(11) {
            assert!((m.raw(x) - line(x)).abs() < 1e-6, "{x}: {} vs {}", m.raw(x), line(x));
        }
    }

    #[test]
    fn fits_smooth_power_curve() {
        let de = |x: f64| (-20.0 * (-10.0 * x).exp()).exp();
        let data: Vec<_> = unit_grid(500).into_iter().map(|x| (x, de(x))).collect();
        let m = fit_spline(&data, &SplineConfig::default()).unwrap();
        let g = unit_grid(101);
        let rmse = (g.iter().map(|&x| (m.predict(x) - de(x)).powi(2)).sum::<f64>() / 101.0).sqrt();
        assert!(rmse <= 1e-3, "{rmse}");
    }

    #[test]
    fn too_many_knots_is_rank_deficient() {
        let data: Vec<_> = unit_grid(12).into_iter().map(|x| (x, x)).collect();
        let cfg = SplineConfig {
            n_knots: 40,
            smoothing: 0.0,
        };
        assert!(matches!(fit_spline(&data, &cfg), Err(Error::RankDeficient(_))));
        assert!(fit_spline(&data, &SplineConfig { n_knots: 40, ..SplineConfig::default() }).is_ok());
    }

    #[test]
    fn clipped_and_constant_outside_range() {
        let data: Vec<_> = unit_grid(50).into_iter().map(|x| (0.2 + 0.5 * x, 1.3 * x - 0.1)).collect();
        let m = fit_spline(&data, &SplineConfig::default()).unwrap();
        assert_eq!(m.predict(0.0), 0.0);
        assert_eq!(m.predict(1.0), 1.0);
        assert_eq!(m.raw(0.95), m.raw(0.7));
    }
}
