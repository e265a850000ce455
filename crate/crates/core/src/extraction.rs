//! Reading a power curve back out of a neat-WPC image: per-column darkest
//! trace, ridge polynomial fit, then cut-in / rated boundaries from the
//! stationary points of the fitted polynomial.

use log::warn;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::curve_models::{unit_grid, Basis, PiecewiseWpc, Polynomial};
use crate::error::{Error, Result};
use crate::raster::{to_greyscale, RasterConfig, WpcImage};

/// How far a converged root may sit outside `[0, 1]` before it is rejected
/// (it is clamped afterwards).
const DOMAIN_SLACK: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractionConfig {
    pub poly_order: usize,
    pub ridge_lambda: f64,
    pub basis: Basis,
    pub c_cutin: f64,
    pub c_rated: f64,
    pub bisection_tol: f64,
    pub nrm_tol: f64,
    pub nrm_max_iter: usize,
    pub fallback_grid_points: usize,
    /// Columns whose darkest pixel is at least this bright count as blank.
    pub blank_level: f32,
    /// Largest tolerated fraction of blank columns.
    pub max_blank_fraction: f64,
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        ExtractionConfig {
            poly_order: 35,
            ridge_lambda: 1e-4,
            basis: Basis::Chebyshev,
            c_cutin: 0.15,
            c_rated: 0.85,
            bisection_tol: 1e-6,
            nrm_tol: 1e-10,
            nrm_max_iter: 100,
            fallback_grid_points: 1001,
            blank_level: 0.99,
            max_blank_fraction: 0.1,
        }
    }
}

impl ExtractionConfig {
    /// Settings for the 64x64 frame, which only has 50 plot columns.
    pub fn desk() -> Self {
        ExtractionConfig {
            poly_order: 12,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.c_cutin && self.c_cutin < self.c_rated && self.c_rated < 1.0) {
            return Err(Error::Config(format!(
                "need 0 < c_cutin < c_rated < 1, got {} and {}",
                self.c_cutin, self.c_rated
            )));
        }
        if self.poly_order < 3 {
            return Err(Error::Config("poly_order must be at least 3".into()));
        }
        if !(self.ridge_lambda >= 0.0 && self.ridge_lambda.is_finite()) {
            return Err(Error::Config("ridge_lambda must be finite and non-negative".into()));
        }
        if !(self.bisection_tol > 0.0 && self.nrm_tol > 0.0) {
            return Err(Error::Config("tolerances must be positive".into()));
        }
        if self.nrm_max_iter == 0 || self.fallback_grid_points < 2 {
            return Err(Error::Config(
                "nrm_max_iter must be positive and fallback_grid_points at least 2".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.max_blank_fraction) {
            return Err(Error::Config("max_blank_fraction must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Darkest row of every plot column, mapped back to data coordinates.
/// Ties are averaged. Blank columns are dropped.
pub fn pixel_map(img: &WpcImage, raster: &RasterConfig, cfg: &ExtractionConfig) -> Result<Vec<(f64, f64)>> {
    if img.width != raster.width || img.height != raster.height {
        return Err(Error::DimensionMismatch {
            expected: format!("{}x{} image", raster.width, raster.height),
            actual: format!("{}x{}", img.width, img.height),
        });
    }
    let grey = to_greyscale(img);
    let (x0, x1) = raster.x_pixel_range;
    let (y0, y1) = raster.y_pixel_range;
    let mut points = Vec::with_capacity(raster.n_columns());
    let mut blank = 0usize;
    for c in x0..=x1 {
        let min = (y0..=y1).map(|r| grey.get(c, r)).fold(f32::INFINITY, f32::min);
        if min >= cfg.blank_level {
            blank += 1;
            continue;
        }
        let (sum, n) = (y0..=y1)
            .filter(|&r| grey.get(c, r) == min)
            .fold((0usize, 0usize), |(s, n), r| (s + r, n + 1));
        let row = sum as f64 / n as f64;
        points.push(raster.pixel_to_data(c as f64, row));
    }
    if blank > 0 {
        warn!("{blank} of {} columns carry no trace", raster.n_columns());
    }
    if blank as f64 > cfg.max_blank_fraction * raster.n_columns() as f64 {
        return Err(Error::ExtractionFailure(format!(
            "{blank} of {} columns are blank; the generated image is too faint",
            raster.n_columns()
        )));
    }
    Ok(points)
}

/// Ridge least squares `min |V a - y|^2 + lambda |a|^2`, solved by QR on the
/// design matrix stacked over `sqrt(lambda) I`.
pub fn fit_polynomial(points: &[(f64, f64)], order: usize, lambda: f64, basis: Basis) -> Result<Polynomial> {
    let k = order + 1;
    if points.len() < k {
        return Err(Error::InvalidInput(format!(
            "order {order} fit needs at least {k} points, got {}",
            points.len()
        )));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidInput(format!("ridge lambda {lambda} must be non-negative")));
    }
    let m = points.len() + if lambda > 0.0 { k } else { 0 };
    let mut a = DMatrix::<f64>::zeros(m, k);
    let mut b = DVector::<f64>::zeros(m);
    let mut row = vec![0.0; k];
    for (i, &(x, y)) in points.iter().enumerate() {
        Polynomial::basis_row(basis, x, &mut row);
        for (j, &v) in row.iter().enumerate() {
            a[(i, j)] = v;
        }
        b[i] = y;
    }
    if lambda > 0.0 {
        let s = lambda.sqrt();
        for j in 0..k {
            a[(points.len() + j, j)] = s;
        }
    }
    let qr = a.qr();
    let r = qr.r();
    let diag: Vec<f64> = (0..k).map(|i| r[(i, i)].abs()).collect();
    let dmax = diag.iter().cloned().fold(0.0, f64::max);
    let dmin = diag.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(dmax > 0.0) || dmin <= 1e-12 * dmax {
        return Err(Error::RankDeficient(format!(
            "R diagonal ranges over [{dmin:e}, {dmax:e}]; use a positive ridge lambda"
        )));
    }
    let qtb = qr.q().transpose() * b;
    let coeffs = r
        .solve_upper_triangular(&qtb)
        .ok_or_else(|| Error::RankDeficient("triangular solve failed".into()))?;
    Ok(Polynomial {
        basis,
        coeffs: coeffs.iter().copied().collect(),
    })
}

/// Root of `g` in `[lo, hi]`, bracketed to width at most `tol`.
pub fn bisection(g: impl Fn(f64) -> f64, lo: f64, hi: f64, tol: f64) -> Result<f64> {
    let (mut lo, mut hi) = (lo, hi);
    let (g_lo, g_hi) = (g(lo), g(hi));
    if g_lo == 0.0 {
        return Ok(lo);
    }
    if g_hi == 0.0 {
        return Ok(hi);
    }
    if !(g_lo * g_hi < 0.0) {
        return Err(Error::NoSignChange { lo, hi, g_lo, g_hi });
    }
    let lo_negative = g_lo < 0.0;
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let gm = g(mid);
        if gm == 0.0 {
            return Ok(mid);
        }
        if (gm < 0.0) == lo_negative {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NewtonRoot {
    pub root: f64,
    pub iterations: usize,
}

/// Newton-Raphson on `g` from `x0`, stopping when `|g(x)| <= tol`. Iterates
/// may wander; only the converged root is checked against `domain`.
pub fn newton_raphson(
    g: impl Fn(f64) -> f64,
    g_prime: impl Fn(f64) -> f64,
    x0: f64,
    tol: f64,
    max_iter: usize,
    domain: Option<(f64, f64)>,
) -> Result<NewtonRoot> {
    let mut x = x0;
    for iterations in 0..=max_iter {
        let gx = g(x);
        if !gx.is_finite() {
            return Err(Error::NonConvergence(format!("g({x}) is not finite")));
        }
        if gx.abs() <= tol {
            if let Some((lo, hi)) = domain {
                if x < lo - DOMAIN_SLACK || x > hi + DOMAIN_SLACK {
                    return Err(Error::NonConvergence(format!(
                        "root {x} lies outside [{lo}, {hi}]"
                    )));
                }
            }
            return Ok(NewtonRoot { root: x, iterations });
        }
        if iterations == max_iter {
            break;
        }
        let d = g_prime(x);
        if !(d.abs() >= 1e-12) {
            return Err(Error::NonConvergence(format!("derivative {d:e} vanishes at x = {x}")));
        }
        x -= gx / d;
    }
    Err(Error::NonConvergence(format!("no root within {max_iter} iterations (last x = {x})")))
}

/// Where a boundary speed came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundarySource {
    /// Stationary point found by Newton-Raphson.
    Newton,
    /// Smallest `|f'|` on a grid after Newton failed.
    GridFallback,
    /// The fit never crossed the seed level; boundary set to the domain end.
    NoCrossing,
    /// Boundaries came out in the wrong order and were reset to 0 and 1.
    Reset,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Correction {
    pub wpc: PiecewiseWpc,
    pub cutin: BoundarySource,
    pub rated: BoundarySource,
}

fn first_crossing(poly: &Polynomial, level: f64, cfg: &ExtractionConfig) -> Option<f64> {
    let grid = unit_grid(cfg.fallback_grid_points);
    let g = |x: f64| poly.eval(x) - level;
    let mut prev = (grid[0], g(grid[0]));
    if prev.1 == 0.0 {
        return Some(prev.0);
    }
    for &x in &grid[1..] {
        let gx = g(x);
        if prev.1 * gx <= 0.0 {
            return bisection(g, prev.0, x, cfg.bisection_tol).ok();
        }
        prev = (x, gx);
    }
    None
}

fn grid_argmin_slope(slope: &Polynomial, lo: f64, hi: f64, n: usize) -> f64 {
    unit_grid(n)
        .into_iter()
        .map(|t| lo + t * (hi - lo))
        .min_by(|a, b| slope.eval(*a).abs().total_cmp(&slope.eval(*b).abs()))
        .unwrap_or(lo)
}

/// One boundary: seed at the `level` crossing, then Newton on `f'`. The
/// root has to land on the `below` side of the seed (towards 0 for cut-in,
/// towards 1 for rated).
fn boundary(poly: &Polynomial, level: f64, below: bool, cfg: &ExtractionConfig) -> (f64, BoundarySource) {
    let Some(seed) = first_crossing(poly, level, cfg) else {
        return (if below { 0.0 } else { 1.0 }, BoundarySource::NoCrossing);
    };
    let slope = poly.derivative();
    let curvature = slope.derivative();
    let (lo, hi) = if below { (0.0, seed) } else { (seed, 1.0) };
    match newton_raphson(
        |x| slope.eval(x),
        |x| curvature.eval(x),
        seed,
        cfg.nrm_tol,
        cfg.nrm_max_iter,
        Some((lo, hi)),
    ) {
        Ok(r) => (r.root.clamp(0.0, 1.0), BoundarySource::Newton),
        Err(_) => (
            grid_argmin_slope(&slope, lo, hi, cfg.fallback_grid_points),
            BoundarySource::GridFallback,
        ),
    }
}

/// Flattens the fitted polynomial outside its cut-in and rated speeds.
pub fn domain_knowledge_correction(poly: &Polynomial, cfg: &ExtractionConfig) -> Result<Correction> {
    let (mut xc, mut cutin) = boundary(poly, cfg.c_cutin, true, cfg);
    let (mut xr, mut rated) = boundary(poly, cfg.c_rated, false, cfg);
    if xc >= xr {
        warn!("cut-in {xc} is not below rated {xr}; using the full range");
        (xc, xr) = (0.0, 1.0);
        (cutin, rated) = (BoundarySource::Reset, BoundarySource::Reset);
    }
    Ok(Correction {
        wpc: PiecewiseWpc::new(poly.clone(), xc, xr)?,
        cutin,
        rated,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Extraction {
    pub points: Vec<(f64, f64)>,
    pub correction: Correction,
}

/// `pixel_map`, `fit_polynomial` and `domain_knowledge_correction`, keeping
/// the intermediate results.
pub fn extract_detailed(img: &WpcImage, raster: &RasterConfig, cfg: &ExtractionConfig) -> Result<Extraction> {
    cfg.validate()?;
    let points = pixel_map(img, raster, cfg)?;
    let poly = fit_polynomial(&points, cfg.poly_order, cfg.ridge_lambda, cfg.basis)?;
    let correction = domain_knowledge_correction(&poly, cfg)?;
    Ok(Extraction { points, correction })
}

pub fn extract(img: &WpcImage, raster: &RasterConfig, cfg: &ExtractionConfig) -> Result<PiecewiseWpc> {
    Ok(extract_detailed(img, raster, cfg)?.correction.wpc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curve_models::{Curve, WpcFunction};
    use crate::raster::{render_curve, ImageRole};

    fn smoothstep() -> Polynomial {
        Polynomial::monomial(vec![0.0, 0.0, 3.0, -2.0])
    }

    #[test]
    fn tied_rows_are_averaged() {
        let raster = RasterConfig::default();
        let mut img = WpcImage::white(256, 256, ImageRole::Generated);
        for c in 32..=229 {
            img.set_pixel(c, 100, [0.0; 3]);
            img.set_pixel(c, 101, [0.0; 3]);
        }
        img.set_pixel(40, 31, [0.0; 3]);
        let pts = pixel_map(&img, &raster, &ExtractionConfig::default()).unwrap();
        assert_eq!(pts.len(), 198);
        let expected_y = 1.0 - (100.5 - 31.0) / 196.0;
        assert!((pts[0].1 - expected_y).abs() < 1e-15);
        assert!((pts[8].1 - (1.0 - (232.0 / 3.0 - 31.0) / 196.0)).abs() < 1e-12);
        assert!(pts.windows(2).all(|w| w[1].0 > w[0].0));
        assert_eq!(pts[0].0, 0.0);
        assert_eq!(pts[197].0, 1.0);
    }

    #[test]
    fn frame_rows_map_to_unit_endpoints() {
        let raster = RasterConfig::default();
        assert_eq!(raster.pixel_to_data(32.0, 31.0), (0.0, 1.0));
        assert_eq!(raster.pixel_to_data(229.0, 227.0), (1.0, 0.0));
    }

    #[test]
    fn blank_columns() {
        let raster = RasterConfig::default();
        let cfg = ExtractionConfig::default();
        let white = WpcImage::white(256, 256, ImageRole::Generated);
        assert!(matches!(pixel_map(&white, &raster, &cfg), Err(Error::ExtractionFailure(_))));
        assert!(matches!(extract(&white, &raster, &cfg), Err(Error::ExtractionFailure(_))));

        // 19 blank columns (< 10%) are tolerated, 20 are not
        let mut img = render_curve(&|x: f64| x, &raster);
        for c in 32..51 {
            for r in 0..256 {
                img.set_pixel(c, r, [1.0; 3]);
            }
        }
        assert_eq!(pixel_map(&img, &raster, &cfg).unwrap().len(), 179);
        for r in 0..256 {
            img.set_pixel(51, r, [1.0; 3]);
        }
        assert!(pixel_map(&img, &raster, &cfg).is_err());
    }

    #[test]
    fn render_then_map_stays_within_line_width() {
        let raster = RasterConfig::default();
        let f = WpcFunction::de(20.0, -10.0).unwrap();
        let img = render_curve(&f, &raster);
        let pts = pixel_map(&img, &raster, &ExtractionConfig::default()).unwrap();
        let bound = (raster.line_width as f64 + 1.0) / 196.0;
        for &(x, y) in &pts[1..pts.len() - 1] {
            assert!((y - f.value(x)).abs() <= bound, "x = {x}");
        }
    }

    #[test]
    fn exact_cubic_recovery() {
        let pts: Vec<_> = unit_grid(40).into_iter().map(|x| (x, smoothstep().eval(x))).collect();
        let p = fit_polynomial(&pts, 3, 0.0, Basis::Monomial).unwrap();
        for (a, b) in p.coeffs.iter().zip([0.0, 0.0, 3.0, -2.0]) {
            assert!((a - b).abs() < 1e-8);
        }
        let c = fit_polynomial(&pts, 3, 0.0, Basis::Chebyshev).unwrap();
        for (a, b) in c.coeffs.iter().zip([0.5, 0.5625, 0.0, -0.0625]) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn constant_fit_and_ridge_limit() {
        let pts: Vec<_> = unit_grid(20).into_iter().map(|x| (x, 0.5)).collect();
        let p = fit_polynomial(&pts, 5, 0.0, Basis::Monomial).unwrap();
        assert!((p.coeffs[0] - 0.5).abs() < 1e-8);
        assert!(p.coeffs[1..].iter().all(|c| c.abs() < 1e-8));
        let q = fit_polynomial(&pts, 5, 1e12, Basis::Monomial).unwrap();
        assert!(q.coeffs.iter().all(|c| c.abs() < 1e-9));
    }

    #[test]
    fn residuals_are_orthogonal_to_the_basis() {
        let pts: Vec<_> = unit_grid(60)
            .into_iter()
            .map(|x| (x, (5.0 * x).sin() + 0.1 * (37.0 * x).cos()))
            .collect();
        let p = fit_polynomial(&pts, 6, 0.0, Basis::Monomial).unwrap();
        let mut row = vec![0.0; 7];
        let mut dots = [0.0; 7];
        for &(x, y) in &pts {
            Polynomial::basis_row(Basis::Monomial, x, &mut row);
            let r = p.eval(x) - y;
            for j in 0..7 {
                dots[j] += r * row[j];
            }
        }
        assert!(dots.iter().all(|d| d.abs() < 1e-8), "{dots:?}");
    }

    #[test]
    fn degenerate_abscissae_are_rank_deficient() {
        let pts = vec![(0.5, 0.1); 10];
        assert!(matches!(
            fit_polynomial(&pts, 3, 0.0, Basis::Monomial),
            Err(Error::RankDeficient(_))
        ));
        assert!(fit_polynomial(&pts, 3, 1e-4, Basis::Monomial).is_ok());
        assert!(fit_polynomial(&pts[..3], 3, 0.0, Basis::Monomial).is_err());
    }

    #[test]
    fn bisection_examples() {
        assert!((bisection(|x| x - 0.5, 0.0, 1.0, 1e-6).unwrap() - 0.5).abs() <= 1e-6);
        // dense-grid oracle for 3x^2 - 2x^3 = 0.15
        let oracle = unit_grid(2_000_001)
            .into_iter()
            .min_by(|a, b| (smoothstep().eval(*a) - 0.15).abs().total_cmp(&(smoothstep().eval(*b) - 0.15).abs()))
            .unwrap();
        let root = bisection(|x| smoothstep().eval(x) - 0.15, 0.0, 1.0, 1e-6).unwrap();
        assert!((root - oracle).abs() <= 1e-6);
        assert!((root - 0.244402).abs() < 1e-6);
        assert!(matches!(
            bisection(|x| x + 1.0, 0.0, 1.0, 1e-6),
            Err(Error::NoSignChange { .. })
        ));
    }

    #[test]
    fn newton_examples() {
        let r = newton_raphson(|x| x * x - 2.0, |x| 2.0 * x, 1.5, 1e-10, 100, None).unwrap();
        assert!((r.root - 2f64.sqrt()).abs() < 1e-10);
        assert!(r.iterations <= 6);

        let r = newton_raphson(|x| 6.0 * x - 6.0 * x * x, |x| 6.0 - 12.0 * x, 0.2453, 1e-10, 100, Some((0.0, 1.0)))
            .unwrap();
        assert!(r.root.abs() < 1e-10);

        let r = newton_raphson(|x| x - 0.3, |_| 1.0, 0.3, 1e-10, 100, None).unwrap();
        assert_eq!((r.root, r.iterations), (0.3, 0));

        assert!(newton_raphson(|x| x * x - 2.0, |x| 2.0 * x, 1.5, 1e-10, 100, Some((0.0, 1.0))).is_err());
        assert!(newton_raphson(|x| x * x + 1.0, |x| 2.0 * x, 0.0, 1e-10, 100, None).is_err());
        assert!(newton_raphson(|x| x * x + 1.0, |x| 2.0 * x, 0.5, 1e-10, 50, None).is_err());
    }

    #[test]
    fn smoothstep_correction() {
        let c = domain_knowledge_correction(&smoothstep(), &ExtractionConfig::default()).unwrap();
        assert_eq!((c.cutin, c.rated), (BoundarySource::Newton, BoundarySource::Newton));
        assert!(c.wpc.x_cutin.abs() < 1e-10 && (c.wpc.x_rated - 1.0).abs() < 1e-10);
        assert!(c.wpc.p_cutin.abs() < 1e-9 && (c.wpc.p_rated - 1.0).abs() < 1e-9);
        let slope = smoothstep().derivative();
        assert!(slope.eval(c.wpc.x_cutin).abs() <= 1e-10);
        assert!(slope.eval(c.wpc.x_rated).abs() <= 1e-10);
    }

    #[test]
    fn low_polynomial_falls_back_to_full_rated() {
        let p = Polynomial::monomial(vec![0.0, 0.6]);
        let c = domain_knowledge_correction(&p, &ExtractionConfig::default()).unwrap();
        assert_eq!(c.rated, BoundarySource::NoCrossing);
        assert_eq!(c.wpc.x_rated, 1.0);
        assert!((c.wpc.p_rated - 0.6).abs() < 1e-15);
    }

    #[test]
    fn plateaus_outside_boundaries() {
        let raster = RasterConfig::default();
        let f = WpcFunction::de(30.0, -12.0).unwrap();
        let wpc = extract(&render_curve(&f, &raster), &raster, &ExtractionConfig::default()).unwrap();
        for x in unit_grid(201) {
            if x < wpc.x_cutin {
                assert_eq!(wpc.value(x), wpc.p_cutin);
            } else if x >= wpc.x_rated {
                assert_eq!(wpc.value(x), wpc.p_rated);
            }
        }
        let again = extract(&render_curve(&f, &raster), &raster, &ExtractionConfig::default()).unwrap();
        assert_eq!(wpc, again);
    }

    #[test]
    fn wrong_image_size_is_rejected() {
        let img = WpcImage::white(64, 64, ImageRole::Generated);
        assert!(pixel_map(&img, &RasterConfig::default(), &ExtractionConfig::default()).is_err());
    }
}
