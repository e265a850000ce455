//! SCADA CSV reading and normalization to the unit square.

use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::synthesis::ScatterSet;

pub const SPEED_COLUMN: &str = "wind_speed";
pub const POWER_COLUMN: &str = "wind_power";

/// Cut-out speed used when none is configured, relative to the largest
/// observed speed.
pub const AUTO_CUTOUT_FACTOR: f64 = 1.05;
/// Power quantile taken as rated power when none is configured.
pub const AUTO_RATED_QUANTILE: f64 = 0.99;

/// Physical scales. A missing value is estimated from the data.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Normalization {
    pub rated_power: Option<f64>,
    pub cutout_speed: Option<f64>,
}

impl Normalization {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("rated_power", self.rated_power), ("cutout_speed", self.cutout_speed)] {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(Error::Config(format!("{name} must be positive, got {v}")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Ingested {
    pub data: ScatterSet,
    /// Rows dropped for a missing, unparsable or non-finite value.
    pub rejected: usize,
    pub rated_power: f64,
    pub cutout_speed: f64,
}

/// Linear-interpolation quantile, `q` in `[0, 1]`.
pub fn quantile(values: &[f64], q: f64) -> Option<f64> {
    if values.is_empty() || !(0.0..=1.0).contains(&q) {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q * (v.len() - 1) as f64;
    let i = pos.floor() as usize;
    let j = (i + 1).min(v.len() - 1);
    Some(v[i] + (pos - i as f64) * (v[j] - v[i]))
}

pub fn ingest_scada(path: &Path, norm: &Normalization) -> Result<Ingested> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    ingest_scada_reader(file, norm)
}

pub fn ingest_scada_reader<R: Read>(reader: R, norm: &Normalization) -> Result<Ingested> {
    norm.validate()?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).flexible(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h.eq_ignore_ascii_case(name))
            .ok_or_else(|| Error::InvalidInput(format!("SCADA file has no {name:?} column")))
    };
    let (si, pi) = (column(SPEED_COLUMN)?, column(POWER_COLUMN)?);
    let mut raw = Vec::new();
    let mut rejected = 0;
    for rec in rdr.records() {
        let rec = rec?;
        let parse = |i: usize| rec.get(i).and_then(|s| s.parse::<f64>().ok()).filter(|v| v.is_finite());
        match (parse(si), parse(pi)) {
            (Some(s), Some(p)) => raw.push((s, p)),
            _ => rejected += 1,
        }
    }
    if raw.is_empty() {
        return Err(Error::InvalidInput(format!(
            "SCADA file holds no usable rows ({rejected} rejected)"
        )));
    }
    let cutout_speed = match norm.cutout_speed {
        Some(v) => v,
        None => AUTO_CUTOUT_FACTOR * raw.iter().map(|r| r.0).fold(f64::NEG_INFINITY, f64::max),
    };
    let rated_power = match norm.rated_power {
        Some(v) => v,
        None => quantile(&raw.iter().map(|r| r.1).collect::<Vec<_>>(), AUTO_RATED_QUANTILE).unwrap_or(0.0),
    };
    if !(cutout_speed > 0.0) || !(rated_power > 0.0) {
        return Err(Error::InvalidInput(format!(
            "cannot normalize: cut-out speed {cutout_speed}, rated power {rated_power}"
        )));
    }
    let pairs: Vec<(f64, f64)> = raw
        .iter()
        .map(|&(s, p)| ((s / cutout_speed).clamp(0.0, 1.0), (p / rated_power).clamp(0.0, 1.0)))
        .collect();
    Ok(Ingested {
        data: ScatterSet::from_pairs(&pairs),
        rejected,
        rated_power,
        cutout_speed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixed() -> Normalization {
        Normalization {
            rated_power: Some(2000.0),
            cutout_speed: Some(25.0),
        }
    }

    #[test]
    fn linear_normalization_and_clipping() {
        let csv = "wind_speed,wind_power\n12.5,1000\n30,2000\n3,-50\n";
        let got = ingest_scada_reader(csv.as_bytes(), &fixed()).unwrap();
        assert_eq!(got.data.pairs(), vec![(0.5, 0.5), (1.0, 1.0), (0.12, 0.0)]);
        assert_eq!(got.rejected, 0);
    }

    #[test]
    fn bad_rows_are_counted() {
        let csv = "timestamp,Wind_Power,wind_speed\nt0,NaN,5\nt1,100,\nt2,100,abc\nt3,1000,12.5\nt4,inf,3\n";
        let got = ingest_scada_reader(csv.as_bytes(), &fixed()).unwrap();
        assert_eq!(got.data.len(), 1);
        assert_eq!(got.rejected, 4);
    }

    #[test]
    fn missing_columns_and_empty_files() {
        assert!(ingest_scada_reader("speed,power\n1,2\n".as_bytes(), &fixed()).is_err());
        assert!(ingest_scada_reader("wind_speed,wind_power\n".as_bytes(), &fixed()).is_err());
        assert!(ingest_scada_reader("".as_bytes(), &fixed()).is_err());
    }

    #[test]
    fn automatic_scales() {
        let mut csv = String::from("wind_speed,wind_power\n");
        for i in 0..=100 {
            csv.push_str(&format!("{},{}\n", i as f64 * 0.2, i as f64 * 10.0));
        }
        let got = ingest_scada_reader(csv.as_bytes(), &Normalization::default()).unwrap();
        assert!((got.cutout_speed - 21.0).abs() < 1e-12);
        assert!((got.rated_power - 990.0).abs() < 1e-9);
        assert_eq!(got.data.pairs().last().unwrap().1, 1.0);
    }

    #[test]
    fn quantiles() {
        let v = [3.0, 1.0, 2.0, 4.0];
        assert_eq!(quantile(&v, 0.0), Some(1.0));
        assert_eq!(quantile(&v, 1.0), Some(4.0));
        assert_eq!(quantile(&v, 0.5), Some(2.5));
        assert_eq!(quantile(&[], 0.5), None);
    }
}
