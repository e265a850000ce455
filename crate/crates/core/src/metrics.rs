//! Point-wise accuracy metrics for predicted normalized power.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Thresholds used for the shooting score unless configured otherwise.
pub const DEFAULT_ALPHAS: [f64; 3] = [0.05, 0.10, 0.15];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub rmse: f64,
    pub mae: f64,
    /// `None` when no point survives the cut-in filter.
    pub mape_pct: Option<f64>,
    pub wmape_pct: f64,
    /// Percentage of points with `|pred - truth| <= alpha`, keyed by alpha
    /// formatted with two decimals.
    pub alpha_ss_pct: BTreeMap<String, f64>,
    pub n_points: usize,
    pub n_points_mape: usize,
    /// Points above the cut-in speed left out of the MAPE because their
    /// true power is zero.
    pub n_zero_truth_excluded: usize,
}

pub fn alpha_key(alpha: f64) -> String {
    format!("{alpha:.2}")
}

impl MetricReport {
    pub fn alpha_ss(&self, alpha: f64) -> Option<f64> {
        self.alpha_ss_pct.get(&alpha_key(alpha)).copied()
    }
}

/// `wind_speed` and `cws` share the same normalization. `wmape_pct` is
/// taken over all points; it is zero when both predictions and truth are
/// all zero.
pub fn evaluate(pred: &[f64], truth: &[f64], wind_speed: &[f64], cws: f64, alphas: &[f64]) -> Result<MetricReport> {
    let n = truth.len();
    if n == 0 {
        return Err(Error::InvalidInput("metrics need at least one point".into()));
    }
    if pred.len() != n || wind_speed.len() != n {
        return Err(Error::DimensionMismatch {
            expected: format!("{n} predictions and speeds"),
            actual: format!("{} predictions, {} speeds", pred.len(), wind_speed.len()),
        });
    }
    if let Some(a) = alphas.iter().find(|a| !(a.is_finite() && **a >= 0.0)) {
        return Err(Error::InvalidInput(format!("alpha {a} must be a non-negative number")));
    }
    let mut sq = 0.0;
    let mut abs = 0.0;
    let mut abs_truth = 0.0;
    let mut ape = 0.0;
    let (mut n_mape, mut n_zero) = (0usize, 0usize);
    for i in 0..n {
        let e = pred[i] - truth[i];
        sq += e * e;
        abs += e.abs();
        abs_truth += truth[i].abs();
        if wind_speed[i] > cws {
            if truth[i] == 0.0 {
                n_zero += 1;
            } else {
                ape += (e / truth[i]).abs();
                n_mape += 1;
            }
        }
    }
    let wmape_pct = if abs == 0.0 { 0.0 } else { 100.0 * abs / abs_truth };
    let alpha_ss_pct = alphas
        .iter()
        .map(|&a| {
            let hits = pred.iter().zip(truth).filter(|(p, t)| (*p - *t).abs() <= a).count();
            (alpha_key(a), 100.0 * hits as f64 / n as f64)
        })
        .collect();
    Ok(MetricReport {
        rmse: (sq / n as f64).sqrt(),
        mae: abs / n as f64,
        mape_pct: (n_mape > 0).then(|| 100.0 * ape / n_mape as f64),
        wmape_pct,
        alpha_ss_pct,
        n_points: n,
        n_points_mape: n_mape,
        n_zero_truth_excluded: n_zero,
    })
}

/// One CSV row per labelled report. Columns follow the first report's
/// alphas. An undefined MAPE is written as `NA`.
pub fn write_reports_csv<W: Write>(out: W, rows: &[(Vec<(String, String)>, MetricReport)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let Some((labels, first)) = rows.first() else {
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        return Ok(());
    };
    let alphas: Vec<String> = first.alpha_ss_pct.keys().cloned().collect();
    let mut header: Vec<String> = labels.iter().map(|(k, _)| k.clone()).collect();
    header.extend(["rmse", "mae", "mape_pct", "wmape_pct"].map(String::from));
    header.extend(alphas.iter().map(|a| format!("ss_{a}_pct")));
    header.extend(["n_points", "n_points_mape", "n_zero_truth_excluded"].map(String::from));
    w.write_record(&header)?;
    for (labels, r) in rows {
        let mut rec: Vec<String> = labels.iter().map(|(_, v)| v.clone()).collect();
        rec.push(r.rmse.to_string());
        rec.push(r.mae.to_string());
        rec.push(r.mape_pct.map_or_else(|| "NA".to_string(), |v| v.to_string()));
        rec.push(r.wmape_pct.to_string());
        for a in &alphas {
            rec.push(r.alpha_ss_pct.get(a).map_or_else(|| "NA".to_string(), |v| v.to_string()));
        }
        rec.push(r.n_points.to_string());
        rec.push(r.n_points_mape.to_string());
        rec.push(r.n_zero_truth_excluded.to_string());
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}
