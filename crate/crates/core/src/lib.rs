//! Wind power curve modeling from SCADA scatter plots.
//!
//! Scatter sets are rendered to images, cleaned by an image-to-image network
//! trained on synthetic data, and the curve is read back from the generated
//! image by column-wise extraction and a piecewise polynomial fit.

// `!(a > b)` is used on purpose to reject NaN along with the out-of-range case.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod benchmarks;
pub mod curve_models;
pub mod error;
pub mod extraction;
pub mod io;
pub mod metrics;
pub mod nn;
pub mod pipeline;
pub mod raster;
pub mod seeding;
pub mod synthesis;

pub use curve_models::{Basis, Curve, PiecewiseWpc, Polynomial, WpcFamily, WpcFunction};
pub use error::{Error, Result};
pub use raster::{GreyImage, ImageRole, RasterConfig, WpcImage};
pub use synthesis::{Label, ScatterPoint, ScatterSet, SynthesisConfig};
