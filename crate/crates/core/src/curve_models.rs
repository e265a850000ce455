//! Ground-truth S-shaped power curve families and the piecewise curve that
//! extraction produces.
//!
//! Everything here works in normalized units: wind speed and power both live
//! on `[0, 1]`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_unit, Error, Result};

/// Sampling box for the double-exponential family.
pub const DE_T1_RANGE: (f64, f64) = (10.0, 50.0);
pub const DE_T2_RANGE: (f64, f64) = (-15.0, -8.0);

/// Fixed and sampled coefficients of the adjusted double exponential.
pub const ADE_A0: f64 = 5.0;
pub const ADE_A3: f64 = 15.0;
pub const ADE_A1_RANGE: (f64, f64) = (-5.0, 25.0);
pub const ADE_A2_RANGE: (f64, f64) = (-15.0, 10.0);

/// Grid used by the shape-validity check.
pub const SHAPE_GRID_POINTS: usize = 512;
pub const SHAPE_MAX_AT_ZERO: f64 = 0.05;
pub const SHAPE_MIN_AT_ONE: f64 = 0.95;

/// Rejection budget per draw before sampling is declared broken.
pub const MAX_REJECTIONS: usize = 1000;

/// Anything that maps normalized wind speed to normalized power.
///
/// `value` performs no domain checks; it is what the rasterizer and the
/// evaluation grids call.
pub trait Curve {
    fn value(&self, x: f64) -> f64;
}

impl<F: Fn(f64) -> f64> Curve for F {
    fn value(&self, x: f64) -> f64 {
        self(x)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum WpcFamily {
    /// `f(x) = exp(-t1 * exp(t2 * x))`
    #[serde(rename = "DE")]
    De,
    /// `f(x) = exp(-exp(a0 - a1 x - a2 x^2 - a3 x^3))`
    #[serde(rename = "ADE")]
    Ade,
}

impl WpcFamily {
    pub fn n_params(self) -> usize {
        match self {
            WpcFamily::De => 2,
            WpcFamily::Ade => 4,
        }
    }
}

/// A ground-truth power curve: a family plus its parameters.
///
/// DE params are `[t1, t2]`; ADE params are `[a0, a1, a2, a3]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "WpcRecord", into = "WpcRecord")]
pub struct WpcFunction {
    family: WpcFamily,
    params: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct WpcRecord {
    family: WpcFamily,
    params: Vec<f64>,
}

impl TryFrom<WpcRecord> for WpcFunction {
    type Error = Error;

    fn try_from(r: WpcRecord) -> Result<Self> {
        WpcFunction::new(r.family, r.params)
    }
}

impl From<WpcFunction> for WpcRecord {
    fn from(f: WpcFunction) -> Self {
        WpcRecord {
            family: f.family,
            params: f.params,
        }
    }
}

impl WpcFunction {
    pub fn new(family: WpcFamily, params: Vec<f64>) -> Result<Self> {
        if params.len() != family.n_params() {
            return Err(Error::InvalidInput(format!(
                "{family:?} takes {} parameters, got {}",
                family.n_params(),
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite curve parameter in {params:?}"
            )));
        }
        Ok(WpcFunction { family, params })
    }

    pub fn de(t1: f64, t2: f64) -> Result<Self> {
        Self::new(WpcFamily::De, vec![t1, t2])
    }

    pub fn ade(a0: f64, a1: f64, a2: f64, a3: f64) -> Result<Self> {
        Self::new(WpcFamily::Ade, vec![a0, a1, a2, a3])
    }

    pub fn family(&self) -> WpcFamily {
        self.family
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    /// Closed-form evaluation; errors outside `[0, 1]`.
    pub fn eval(&self, x: f64) -> Result<f64> {
        check_unit("wind speed", x)?;
        Ok(self.value(x))
    }

    /// Closed-form first derivative; errors outside `[0, 1]`.
    pub fn derivative(&self, x: f64) -> Result<f64> {
        check_unit("wind speed", x)?;
        Ok(self.slope(x))
    }

    pub(crate) fn slope(&self, x: f64) -> f64 {
        match self.family {
            WpcFamily::De => {
                let (t1, t2) = (self.params[0], self.params[1]);
                let inner = (t2 * x).exp();
                -t1 * t2 * inner * (-t1 * inner).exp()
            }
            WpcFamily::Ade => {
                let u = self.ade_exponent(x);
                let du = -(self.params[1] + 2.0 * self.params[2] * x + 3.0 * self.params[3] * x * x);
                let eu = u.exp();
                -eu * du * (-eu).exp()
            }
        }
    }

    fn ade_exponent(&self, x: f64) -> f64 {
        let p = &self.params;
        p[0] - p[1] * x - p[2] * x * x - p[3] * x * x * x
    }

    /// Monotone on a 512-point grid, starts near zero, ends near one.
    pub fn is_valid_shape(&self) -> bool {
        let n = SHAPE_GRID_POINTS;
        let mut prev = self.value(0.0);
        if prev > SHAPE_MAX_AT_ZERO {
            return false;
        }
        for i in 1..n {
            let v = self.value(i as f64 / (n - 1) as f64);
            if v < prev {
                return false;
            }
            prev = v;
        }
        prev >= SHAPE_MIN_AT_ONE
    }
}

impl Curve for WpcFunction {
    fn value(&self, x: f64) -> f64 {
        match self.family {
            WpcFamily::De => (-self.params[0] * (self.params[1] * x).exp()).exp(),
            WpcFamily::Ade => (-self.ade_exponent(x).exp()).exp(),
        }
    }
}

/// Draws a ground-truth curve: DE or ADE with equal probability, ADE
/// instances rejection-sampled until they pass [`WpcFunction::is_valid_shape`].
pub fn sample_wpc_function<R: Rng + ?Sized>(rng: &mut R) -> Result<WpcFunction> {
    let family = if rng.random_bool(0.5) {
        WpcFamily::De
    } else {
        WpcFamily::Ade
    };
    for _ in 0..MAX_REJECTIONS {
        let f = match family {
            WpcFamily::De => WpcFunction::de(
                rng.random_range(DE_T1_RANGE.0..DE_T1_RANGE.1),
                rng.random_range(DE_T2_RANGE.0..DE_T2_RANGE.1),
            )?,
            WpcFamily::Ade => {
                // a2 first, then a1, mirroring how the ranges are stated
                let a2 = rng.random_range(ADE_A2_RANGE.0..ADE_A2_RANGE.1);
                let a1 = rng.random_range(ADE_A1_RANGE.0..ADE_A1_RANGE.1);
                WpcFunction::ade(ADE_A0, a1, a2, ADE_A3)?
            }
        };
        if f.is_valid_shape() {
            return Ok(f);
        }
    }
    Err(Error::SamplingFailure {
        attempts: MAX_REJECTIONS,
        reason: format!("no valid {family:?} shape; check the parameter ranges"),
    })
}

/// Basis a [`Polynomial`]'s coefficients are expressed in.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Basis {
    /// `sum a_i x^i`
    Monomial,
    /// `sum a_i T_i(2x - 1)`, Chebyshev polynomials of the first kind
    /// on the shifted variable.
    #[default]
    Chebyshev,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Polynomial {
    pub basis: Basis,
    pub coeffs: Vec<f64>,
}

impl Polynomial {
    pub fn monomial(coeffs: Vec<f64>) -> Self {
        Polynomial {
            basis: Basis::Monomial,
            coeffs,
        }
    }

    pub fn chebyshev(coeffs: Vec<f64>) -> Self {
        Polynomial {
            basis: Basis::Chebyshev,
            coeffs,
        }
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    pub fn eval(&self, x: f64) -> f64 {
        eval_series(self.basis, &self.coeffs, x)
    }

    /// d/dx, in the same basis.
    pub fn derivative(&self) -> Polynomial {
        let n = self.coeffs.len();
        if n <= 1 {
            return Polynomial {
                basis: self.basis,
                coeffs: vec![0.0],
            };
        }
        let coeffs = match self.basis {
            Basis::Monomial => (1..n).map(|i| i as f64 * self.coeffs[i]).collect(),
            Basis::Chebyshev => {
                let mut d = vec![0.0; n + 1];
                for k in (1..n).rev() {
                    d[k - 1] = d[k + 1] + 2.0 * k as f64 * self.coeffs[k];
                }
                d[0] *= 0.5;
                d.truncate(n - 1);
                // chain rule for t = 2x - 1
                d.iter().map(|v| 2.0 * v).collect()
            }
        };
        Polynomial {
            basis: self.basis,
            coeffs,
        }
    }

    /// Writes the basis functions evaluated at `x` into `row`
    /// (`row.len()` = number of coefficients).
    pub fn basis_row(basis: Basis, x: f64, row: &mut [f64]) {
        if row.is_empty() {
            return;
        }
        row[0] = 1.0;
        match basis {
            Basis::Monomial => {
                for i in 1..row.len() {
                    row[i] = row[i - 1] * x;
                }
            }
            Basis::Chebyshev => {
                let t = 2.0 * x - 1.0;
                if row.len() > 1 {
                    row[1] = t;
                }
                for i in 2..row.len() {
                    row[i] = 2.0 * t * row[i - 1] - row[i - 2];
                }
            }
        }
    }
}

impl Curve for Polynomial {
    fn value(&self, x: f64) -> f64 {
        self.eval(x)
    }
}

fn eval_series(basis: Basis, coeffs: &[f64], x: f64) -> f64 {
    match basis {
        Basis::Monomial => coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c),
        Basis::Chebyshev => {
            // Clenshaw recurrence
            let t = 2.0 * x - 1.0;
            let (mut b1, mut b2) = (0.0, 0.0);
            for &c in coeffs.iter().skip(1).rev() {
                let b0 = c + 2.0 * t * b1 - b2;
                b2 = b1;
                b1 = b0;
            }
            coeffs.first().copied().unwrap_or(0.0) + t * b1 - b2
        }
    }
}

/// An extracted power curve: flat below cut-in, polynomial in between,
/// flat from rated speed on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseWpc {
    pub basis: Basis,
    pub coeffs: Vec<f64>,
    pub x_cutin: f64,
    pub x_rated: f64,
    pub p_cutin: f64,
    pub p_rated: f64,
}

impl PiecewiseWpc {
    /// Builds the curve, taking the plateau levels from the polynomial so the
    /// result is continuous at both boundaries. Values are clamped to
    /// `[0, 1]`, plateaus included.
    pub fn new(poly: Polynomial, x_cutin: f64, x_rated: f64) -> Result<Self> {
        if !(0.0 <= x_cutin && x_cutin < x_rated && x_rated <= 1.0) {
            return Err(Error::InvalidInput(format!(
                "need 0 <= x_cutin < x_rated <= 1, got x_cutin = {x_cutin}, x_rated = {x_rated}"
            )));
        }
        let p_cutin = poly.eval(x_cutin).clamp(0.0, 1.0);
        let p_rated = poly.eval(x_rated).clamp(0.0, 1.0);
        Ok(PiecewiseWpc {
            basis: poly.basis,
            coeffs: poly.coeffs,
            x_cutin,
            x_rated,
            p_cutin,
            p_rated,
        })
    }

    pub fn polynomial(&self) -> Polynomial {
        Polynomial {
            basis: self.basis,
            coeffs: self.coeffs.clone(),
        }
    }

    pub fn eval(&self, x: f64) -> Result<f64> {
        check_unit("wind speed", x)?;
        Ok(self.value(x))
    }
}

impl Curve for PiecewiseWpc {
    fn value(&self, x: f64) -> f64 {
        if x < self.x_cutin {
            self.p_cutin
        } else if x >= self.x_rated {
            self.p_rated
        } else {
            eval_series(self.basis, &self.coeffs, x).clamp(0.0, 1.0)
        }
    }
}

/// Evaluates `curve` on `n` equispaced points over `[0, 1]`.
pub fn unit_grid(n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..n).map(|i| i as f64 / (n - 1) as f64).collect(),
    }
}

/// Root-mean-square difference between two curves on an `n`-point grid.
pub fn grid_rmse(a: &dyn Curve, b: &dyn Curve, n: usize) -> f64 {
    let grid = unit_grid(n);
    let sse: f64 = grid
        .iter()
        .map(|&x| (a.value(x) - b.value(x)).powi(2))
        .sum();
    (sse / grid.len() as f64).sqrt()
}
