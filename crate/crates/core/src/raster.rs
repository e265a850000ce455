//! Deterministic rasterization of scatter sets and curves into fixed-size
//! RGB images, and the data <-> pixel coordinate frame shared with curve
//! extraction.
//!
//! Marks are binary (black on white, no anti-aliasing). Pixel coordinates are
//! `(column, row)` with row 0 at the top of the image.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::curve_models::Curve;
use crate::error::{check_unit, Error, Result};
use crate::synthesis::ScatterSet;

pub const CHANNELS: usize = 3;

/// Image geometry and drawing settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RasterConfig {
    pub width: usize,
    pub height: usize,
    /// First and last pixel column of the plot area (inclusive).
    pub x_pixel_range: (usize, usize),
    /// First and last pixel row of the plot area (inclusive); the first row
    /// is power 1, the last is power 0.
    pub y_pixel_range: (usize, usize),
    /// Marker size used for synthetic training scatter, in plot units.
    pub marker_size: f64,
    /// Pixels per plot unit of marker size.
    pub marker_px_per_unit: f64,
    /// Curve thickness in pixels.
    pub line_width: usize,
    /// Proportionality between training and test marker areas.
    pub k_coeff: f64,
    /// Points per synthetic training scatter the marker size was tuned for.
    pub dit_points: usize,
}

impl Default for RasterConfig {
    fn default() -> Self {
        RasterConfig {
            width: 256,
            height: 256,
            x_pixel_range: (32, 229),
            y_pixel_range: (31, 227),
            marker_size: 6.0,
            marker_px_per_unit: 1.0,
            line_width: 2,
            k_coeff: 0.07,
            dit_points: 1400,
        }
    }
}

impl RasterConfig {
    /// The 64x64 frame used for CPU-scale training: every frame constant
    /// divided by four and rounded to the nearest pixel, 1 px curves.
    pub fn desk() -> Self {
        RasterConfig {
            width: 64,
            height: 64,
            x_pixel_range: (8, 57),
            y_pixel_range: (8, 57),
            marker_px_per_unit: 0.25,
            line_width: 1,
            ..Self::default()
        }
    }

    /// Same plot at `factor` times the pixel density. Line width is a drawing
    /// property and is kept.
    pub fn scaled(&self, factor: usize) -> Self {
        let s = |(a, b): (usize, usize)| (a * factor, b * factor);
        RasterConfig {
            width: self.width * factor,
            height: self.height * factor,
            x_pixel_range: s(self.x_pixel_range),
            y_pixel_range: s(self.y_pixel_range),
            marker_px_per_unit: self.marker_px_per_unit * factor as f64,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (x0, x1) = self.x_pixel_range;
        let (y0, y1) = self.y_pixel_range;
        if !(x0 < x1 && x1 < self.width) {
            return Err(Error::Config(format!(
                "x_pixel_range ({x0}, {x1}) must be increasing and inside width {}",
                self.width
            )));
        }
        if !(y0 < y1 && y1 < self.height) {
            return Err(Error::Config(format!(
                "y_pixel_range ({y0}, {y1}) must be increasing and inside height {}",
                self.height
            )));
        }
        if self.line_width < 1 {
            return Err(Error::Config("line_width must be at least 1".into()));
        }
        if !(self.k_coeff > 0.0 && self.marker_size > 0.0 && self.marker_px_per_unit > 0.0) {
            return Err(Error::Config(
                "k_coeff, marker_size and marker_px_per_unit must be positive".into(),
            ));
        }
        if self.dit_points == 0 {
            return Err(Error::Config("dit_points must be positive".into()));
        }
        Ok(())
    }

    /// Number of usable pixel rows, `y_last - y_first + 1`.
    pub fn resolution(&self) -> usize {
        self.y_pixel_range.1 - self.y_pixel_range.0 + 1
    }

    pub fn n_columns(&self) -> usize {
        self.x_pixel_range.1 - self.x_pixel_range.0 + 1
    }

    fn x_span(&self) -> f64 {
        (self.x_pixel_range.1 - self.x_pixel_range.0) as f64
    }

    fn y_span(&self) -> f64 {
        (self.y_pixel_range.1 - self.y_pixel_range.0) as f64
    }

    /// Fractional pixel coordinates of a data point.
    pub fn data_to_pixel_f(&self, x: f64, y: f64) -> (f64, f64) {
        (
            self.x_pixel_range.0 as f64 + x * self.x_span(),
            self.y_pixel_range.0 as f64 + (1.0 - y) * self.y_span(),
        )
    }

    /// Inverse of the pixel mapping; accepts fractional rows.
    pub fn pixel_to_data(&self, column: f64, row: f64) -> (f64, f64) {
        (
            (column - self.x_pixel_range.0 as f64) / self.x_span(),
            1.0 - (row - self.y_pixel_range.0 as f64) / self.y_span(),
        )
    }

    /// Disk radius in pixels for a marker of `marker_size` plot units.
    pub fn marker_radius_px(&self, marker_size: f64) -> usize {
        (round_half_up(marker_size * self.marker_px_per_unit / 2.0) as usize).max(1)
    }

    pub fn with_marker_size(&self, marker_size: f64) -> Self {
        RasterConfig {
            marker_size,
            ..self.clone()
        }
    }
}

fn round_half_up(v: f64) -> f64 {
    (v + 0.5).floor()
}

/// Pixel `(column, row)` of a normalized data point, rounding half up.
pub fn data_to_pixel(x: f64, y: f64, cfg: &RasterConfig) -> Result<(usize, usize)> {
    check_unit("wind speed", x)?;
    check_unit("wind power", y)?;
    let (c, r) = cfg.data_to_pixel_f(x, y);
    Ok((round_half_up(c) as usize, round_half_up(r) as usize))
}

/// Test-time marker size that keeps total marker area proportional to the
/// training images: `sqrt(K * dit_points * ms^2 / n_data)`.
pub fn marker_size_for_test(n_data: usize, cfg: &RasterConfig) -> Result<f64> {
    if n_data == 0 {
        return Err(Error::InvalidInput(
            "marker size needs at least one data point".into(),
        ));
    }
    Ok((cfg.k_coeff * cfg.dit_points as f64 * cfg.marker_size * cfg.marker_size / n_data as f64).sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImageRole {
    /// Rendered observations.
    ScadaWpc,
    /// Rendered clean curve.
    NeatWpc,
    /// Network output.
    Generated,
    /// Diagnostic figure.
    Overlay,
}

/// `height x width x 3` intensities in `[0, 1]`, row-major, channels last.
#[derive(Clone, Debug, PartialEq)]
pub struct WpcImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<f32>,
    pub role: ImageRole,
}

impl WpcImage {
    pub fn white(width: usize, height: usize, role: ImageRole) -> Self {
        WpcImage {
            width,
            height,
            pixels: vec![1.0; width * height * CHANNELS],
            role,
        }
    }

    pub fn from_pixels(width: usize, height: usize, pixels: Vec<f32>, role: ImageRole) -> Result<Self> {
        if pixels.len() != width * height * CHANNELS {
            return Err(Error::DimensionMismatch {
                expected: format!("{} values for {width}x{height}x3", width * height * CHANNELS),
                actual: pixels.len().to_string(),
            });
        }
        Ok(WpcImage {
            width,
            height,
            pixels,
            role,
        })
    }

    fn offset(&self, column: usize, row: usize) -> usize {
        (row * self.width + column) * CHANNELS
    }

    pub fn pixel(&self, column: usize, row: usize) -> [f32; 3] {
        let o = self.offset(column, row);
        [self.pixels[o], self.pixels[o + 1], self.pixels[o + 2]]
    }

    pub fn set_pixel(&mut self, column: usize, row: usize, rgb: [f32; 3]) {
        if column < self.width && row < self.height {
            let o = self.offset(column, row);
            self.pixels[o..o + 3].copy_from_slice(&rgb);
        }
    }

    pub fn is_black(&self, column: usize, row: usize) -> bool {
        self.pixel(column, row) == [0.0; 3]
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        let bytes: Vec<u8> = self
            .pixels
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect();
        let img = image::RgbImage::from_raw(self.width as u32, self.height as u32, bytes)
            .ok_or_else(|| Error::InvalidInput("pixel buffer does not match dimensions".into()))?;
        let mut buf = std::io::Cursor::new(Vec::new());
        img.write_to(&mut buf, image::ImageFormat::Png)?;
        crate::io::write_atomic(path, buf.get_ref())
    }

    pub fn load_png(path: &Path, role: ImageRole) -> Result<Self> {
        let img = image::open(path)?.to_rgb8();
        let (w, h) = img.dimensions();
        let pixels = img.into_raw().into_iter().map(|b| b as f32 / 255.0).collect();
        Self::from_pixels(w as usize, h as usize, pixels, role)
    }
}

/// Single-channel intensities, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct GreyImage {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f32>,
}

impl GreyImage {
    pub fn get(&self, column: usize, row: usize) -> f32 {
        self.values[row * self.width + column]
    }
}

/// Unweighted channel mean.
pub fn to_greyscale(img: &WpcImage) -> GreyImage {
    GreyImage {
        width: img.width,
        height: img.height,
        values: img
            .pixels
            .chunks_exact(CHANNELS)
            .map(|p| (p[0] + p[1] + p[2]) / 3.0)
            .collect(),
    }
}

fn stamp_disk(img: &mut WpcImage, cx: usize, cy: usize, radius: usize, rgb: [f32; 3]) {
    let r = radius as isize;
    for dy in -r..=r {
        for dx in -r..=r {
            if dx * dx + dy * dy > r * r {
                continue;
            }
            let (c, row) = (cx as isize + dx, cy as isize + dy);
            if c >= 0 && row >= 0 {
                img.set_pixel(c as usize, row as usize, rgb);
            }
        }
    }
}

fn draw_scatter(img: &mut WpcImage, s: &ScatterSet, cfg: &RasterConfig, rgb: [f32; 3]) -> Result<()> {
    let radius = cfg.marker_radius_px(cfg.marker_size);
    for p in &s.points {
        let (c, r) = data_to_pixel(p.x, p.y, cfg)?;
        stamp_disk(img, c, r, radius, rgb);
    }
    Ok(())
}

/// Each point as a filled black disk of radius
/// `max(1, round(marker_size * marker_px_per_unit / 2))` pixels.
pub fn render_scatter(s: &ScatterSet, cfg: &RasterConfig) -> Result<WpcImage> {
    let mut img = WpcImage::white(cfg.width, cfg.height, ImageRole::ScadaWpc);
    draw_scatter(&mut img, s, cfg, [0.0; 3])?;
    Ok(img)
}

/// Rows covered by the polyline in each plot column, as inclusive
/// `(first, last)` pairs. A column covers the span between the midpoints to
/// its neighbours, extended downwards by `line_width - 1`.
fn polyline_rows(curve: &dyn Curve, cfg: &RasterConfig) -> Vec<(usize, usize)> {
    let (x0, x1) = cfg.x_pixel_range;
    let rows: Vec<f64> = (x0..=x1)
        .map(|c| {
            let (x, _) = cfg.pixel_to_data(c as f64, 0.0);
            cfg.data_to_pixel_f(x, curve.value(x)).1
        })
        .collect();
    let last = (cfg.height - 1) as f64;
    (0..rows.len())
        .map(|i| {
            let mut lo = rows[i];
            let mut hi = rows[i];
            for j in [i.wrapping_sub(1), i + 1] {
                if let Some(&r) = rows.get(j) {
                    let mid = 0.5 * (rows[i] + r);
                    lo = lo.min(mid);
                    hi = hi.max(mid);
                }
            }
            let first = round_half_up(lo.clamp(0.0, last)) as usize;
            let end = round_half_up(hi.clamp(0.0, last)) as usize + cfg.line_width - 1;
            (first, end.min(cfg.height - 1))
        })
        .collect()
}

fn draw_curve(img: &mut WpcImage, curve: &dyn Curve, cfg: &RasterConfig, rgb: [f32; 3]) {
    for (i, (first, last)) in polyline_rows(curve, cfg).into_iter().enumerate() {
        let c = cfg.x_pixel_range.0 + i;
        for r in first..=last {
            img.set_pixel(c, r, rgb);
        }
    }
}

/// Connected black polyline through the curve sampled at every plot column.
pub fn render_curve(curve: &dyn Curve, cfg: &RasterConfig) -> WpcImage {
    let mut img = WpcImage::white(cfg.width, cfg.height, ImageRole::NeatWpc);
    draw_curve(&mut img, curve, cfg, [0.0; 3]);
    img
}

/// Scatter in grey with the curve drawn over it in red.
pub fn render_overlay(s: &ScatterSet, curve: &dyn Curve, cfg: &RasterConfig) -> Result<WpcImage> {
    let mut img = WpcImage::white(cfg.width, cfg.height, ImageRole::Overlay);
    draw_scatter(&mut img, s, cfg, [0.6; 3])?;
    draw_curve(&mut img, curve, cfg, [0.85, 0.0, 0.0]);
    Ok(img)
}
