//! Shared fixtures for the Criterion benchmarks in `benches/`.

use ditwpc::curve_models::WpcFunction;
use ditwpc::synthesis::{synthesize_indexed, ScatterSet, SynthesisConfig};

/// A fixed mid-range ground-truth curve.
pub fn reference_curve() -> WpcFunction {
    WpcFunction::de(20.0, -10.0).expect("valid parameters")
}

/// One default-size synthetic SCADA scatter without truncation.
pub fn reference_scatter() -> ScatterSet {
    let cfg = SynthesisConfig {
        discard_prob: 0.0,
        seed: 17,
        ..SynthesisConfig::default()
    };
    synthesize_indexed(&cfg, 0).expect("synthesis").scatter
}
