//! Time-domain heart rate variability and the MAPE accuracy metric.
//!
//! - SDNN: population standard deviation of the RR intervals (divide by `N`).
//! - RMSSD: root mean square of the `N - 1` successive differences.
//!
//! Normal-to-normal and RR intervals are treated as the same thing; no
//! ectopic-beat rejection happens here.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::SmoothedHrSeries;

/// Ordered beat-to-beat intervals in milliseconds.
#[derive(Debug, Clone, PartialEq)]
pub struct RrSeries {
    intervals_ms: Vec<f64>,
}

impl RrSeries {
    /// Every interval must be finite and strictly positive.
    pub fn new(intervals_ms: Vec<f64>) -> Result<Self> {
        if let Some((index, &value)) = intervals_ms
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && **v > 0.0))
        {
            return Err(Error::InvalidInterval { index, value });
        }
        Ok(Self { intervals_ms })
    }

    /// Pseudo-intervals from heart rates via `60000 / bpm`.
    pub fn from_heart_rates(bpm: &[f64]) -> Result<Self> {
        Self::new(bpm.iter().map(|hr| 60_000.0 / hr).collect())
    }

    pub fn intervals_ms(&self) -> &[f64] {
        &self.intervals_ms
    }

    pub fn len(&self) -> usize {
        self.intervals_ms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intervals_ms.is_empty()
    }

    /// Total covered time in seconds.
    pub fn duration_s(&self) -> f64 {
        self.intervals_ms.iter().sum::<f64>() / 1000.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.intervals_ms
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HrvMetricKind {
    Sdnn,
    Rmssd,
}

impl HrvMetricKind {
    pub const ALL: [HrvMetricKind; 2] = [HrvMetricKind::Sdnn, HrvMetricKind::Rmssd];

    pub fn name(self) -> &'static str {
        match self {
            HrvMetricKind::Sdnn => "sdnn",
            HrvMetricKind::Rmssd => "rmssd",
        }
    }

    /// Applies the metric to a plain interval slice (at least two values).
    pub fn compute(self, intervals_ms: &[f64]) -> Result<f64> {
        match self {
            HrvMetricKind::Sdnn => sdnn_ms(intervals_ms),
            HrvMetricKind::Rmssd => rmssd_ms(intervals_ms),
        }
    }
}

impl fmt::Display for HrvMetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for HrvMetricKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sdnn" => Ok(HrvMetricKind::Sdnn),
            "rmssd" => Ok(HrvMetricKind::Rmssd),
            other => Err(Error::InvalidConfig(format!("unknown HRV metric `{other}`"))),
        }
    }
}

/// An HRV estimate over a monitoring window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HrvValue {
    pub kind: HrvMetricKind,
    pub value_ms: f64,
    pub window_len_s: f64,
}

pub fn sdnn(rr: &RrSeries) -> Result<HrvValue> {
    Ok(HrvValue {
        kind: HrvMetricKind::Sdnn,
        value_ms: sdnn_ms(rr.intervals_ms())?,
        window_len_s: rr.duration_s(),
    })
}

pub fn rmssd(rr: &RrSeries) -> Result<HrvValue> {
    Ok(HrvValue {
        kind: HrvMetricKind::Rmssd,
        value_ms: rmssd_ms(rr.intervals_ms())?,
        window_len_s: rr.duration_s(),
    })
}

pub(crate) fn sdnn_ms(rr: &[f64]) -> Result<f64> {
    if rr.len() < 2 {
        return Err(Error::TooFewIntervals { len: rr.len() });
    }
    let n = rr.len() as f64;
    let mean = rr.iter().sum::<f64>() / n;
    let ss: f64 = rr.iter().map(|x| (x - mean) * (x - mean)).sum();
    Ok((ss / n).sqrt())
}

pub(crate) fn rmssd_ms(rr: &[f64]) -> Result<f64> {
    if rr.len() < 2 {
        return Err(Error::TooFewIntervals { len: rr.len() });
    }
    let ss: f64 = rr.windows(2).map(|w| (w[1] - w[0]) * (w[1] - w[0])).sum();
    Ok((ss / (rr.len() - 1) as f64).sqrt())
}

/// Rough HRV from smoothed per-second heart rates: each value becomes a
/// pseudo-interval of `60000 / sHR` ms before the metric is applied.
pub fn rough_hrv(shr: &SmoothedHrSeries, kind: HrvMetricKind) -> Result<HrvValue> {
    let value_ms = rough_hrv_ms(shr.values(), kind)?;
    Ok(HrvValue {
        kind,
        value_ms,
        window_len_s: shr.len() as f64,
    })
}

pub(crate) fn rough_hrv_ms(hr_bpm: &[f64], kind: HrvMetricKind) -> Result<f64> {
    if hr_bpm.len() < 2 {
        return Err(Error::TooFewIntervals { len: hr_bpm.len() });
    }
    let pseudo: Vec<f64> = hr_bpm.iter().map(|hr| 60_000.0 / hr).collect();
    kind.compute(&pseudo)
}

/// Mean absolute percentage error, in percent.
pub fn mape(estimates: &[f64], truths: &[f64]) -> Result<f64> {
    if estimates.len() != truths.len() || truths.is_empty() {
        return Err(Error::LengthMismatch {
            estimates: estimates.len(),
            truths: truths.len(),
        });
    }
    if let Some(index) = truths.iter().position(|t| *t == 0.0) {
        return Err(Error::ZeroTruth { index });
    }
    let total: f64 = estimates.iter().zip(truths).map(|(e, t)| ((e - t) / t).abs()).sum();
    Ok(100.0 * total / truths.len() as f64)
}
