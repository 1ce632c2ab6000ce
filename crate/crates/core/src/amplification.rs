//! How RR-interval estimation errors are amplified once converted to HRV.
//!
//! RR estimates are simulated as `RR * (1 + e)` with `e ~ Uniform(-a, a)` and
//! `a = 2 * target / 100`, so that `E|e|` equals the requested RR MAPE. The
//! base trace is cut into consecutive windows; each row of the table is the
//! trial-averaged MAPE between per-window HRV of the perturbed and original
//! intervals.

use std::io::Write;

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hrv::{mape, HrvMetricKind, RrSeries};
use crate::synth::{generate_rr_trace, HrDrift, SynthConfig};
use crate::{derive_seed, seeded_rng};

/// Minimum number of windows the base trace must provide.
pub const MIN_WINDOWS: usize = 10;

pub const CSV_HEADER: &str = "rr_mape,rmssd_mape,sdnn_mape,trials,seed";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AmplificationRow {
    pub rr_mape_pct: f64,
    pub rmssd_mape_pct: f64,
    pub sdnn_mape_pct: f64,
    pub trials: usize,
    pub seed: u64,
}

/// Multiplies every interval by an independent `1 + Uniform(-a, a)` factor.
pub fn inject_rr_error(rr: &RrSeries, target_mape_pct: f64, rng_seed: u64) -> Result<RrSeries> {
    let a = 2.0 * target_mape_pct / 100.0;
    if !(target_mape_pct >= 0.0 && a < 1.0) {
        return Err(Error::InvalidTarget {
            target_pct: target_mape_pct,
        });
    }
    if a == 0.0 {
        return Ok(rr.clone());
    }
    let mut rng = seeded_rng(rng_seed, 0);
    let perturbed = rr
        .intervals_ms()
        .iter()
        .map(|x| x * (1.0 + rng.random_range(-a..a)))
        .collect();
    RrSeries::new(perturbed)
}

/// Consecutive, non-overlapping windows of `window_s` seconds by cumulative time.
fn window_bounds(rr: &[f64], window_s: f64) -> Vec<(usize, usize)> {
    let mut bounds = Vec::new();
    let mut start = 0;
    let mut elapsed_ms = 0.0;
    for (i, r) in rr.iter().enumerate() {
        elapsed_ms += r;
        if elapsed_ms >= window_s * 1000.0 {
            bounds.push((start, i + 1));
            start = i + 1;
            elapsed_ms = 0.0;
        }
    }
    bounds
}

fn window_hrv(rr: &[f64], bounds: &[(usize, usize)], kind: HrvMetricKind) -> Result<Vec<f64>> {
    bounds.iter().map(|&(a, b)| kind.compute(&rr[a..b])).collect()
}

/// Trial-averaged HRV MAPE for each requested RR MAPE level.
pub fn amplification_table(
    base: &RrSeries,
    mape_levels_pct: &[f64],
    trials: usize,
    window_s: f64,
    rng_seed: u64,
) -> Result<Vec<AmplificationRow>> {
    if trials == 0 {
        return Err(Error::InvalidConfig("at least one trial is required".to_string()));
    }
    if !(window_s > 0.0) {
        return Err(Error::InvalidConfig("window length must be positive".to_string()));
    }
    if let Some(bad) = mape_levels_pct.iter().find(|l| !(**l >= 0.0)) {
        return Err(Error::InvalidTarget { target_pct: *bad });
    }
    let rr = base.intervals_ms();
    let bounds = window_bounds(rr, window_s);
    if bounds.len() < MIN_WINDOWS || bounds.iter().any(|(a, b)| b - a < 2) {
        return Err(Error::TooShort {
            len: bounds.len(),
            required: MIN_WINDOWS,
        });
    }
    let truth_rmssd = window_hrv(rr, &bounds, HrvMetricKind::Rmssd)?;
    let truth_sdnn = window_hrv(rr, &bounds, HrvMetricKind::Sdnn)?;

    mape_levels_pct
        .iter()
        .enumerate()
        .map(|(level_idx, &level)| {
            let per_trial: Vec<(f64, f64)> = (0..trials)
                .into_par_iter()
                .map(|t| {
                    let seed = derive_seed(derive_seed(rng_seed, level_idx as u64), t as u64);
                    let noisy = inject_rr_error(base, level, seed)?;
                    let rmssd = window_hrv(noisy.intervals_ms(), &bounds, HrvMetricKind::Rmssd)?;
                    let sdnn = window_hrv(noisy.intervals_ms(), &bounds, HrvMetricKind::Sdnn)?;
                    Ok((mape(&rmssd, &truth_rmssd)?, mape(&sdnn, &truth_sdnn)?))
                })
                .collect::<Result<_>>()?;
            // fixed-order reduction keeps the table independent of scheduling
            let (rmssd_sum, sdnn_sum) = per_trial.iter().fold((0.0, 0.0), |(a, b), (r, s)| (a + r, b + s));
            Ok(AmplificationRow {
                rr_mape_pct: level,
                rmssd_mape_pct: rmssd_sum / trials as f64,
                sdnn_mape_pct: sdnn_sum / trials as f64,
                trials,
                seed: rng_seed,
            })
        })
        .collect()
}

/// Reference base trace: 1 h at a mean interval of 900 ms, 20 ms beat jitter
/// and a 4 bpm / 60 s heart-rate oscillation (SDNN around 43 ms per minute).
pub fn reference_base_config(seed: u64) -> SynthConfig {
    SynthConfig {
        duration_s: 3600.0,
        base_hr_bpm: 60_000.0 / 900.0,
        hr_drift: HrDrift {
            amplitude_bpm: 4.0,
            period_s: 60.0,
        },
        rr_jitter_ms: 20.0,
        seed,
        ..SynthConfig::default()
    }
}

/// Window length used with the reference trace.
pub const REFERENCE_WINDOW_S: f64 = 60.0;

pub fn reference_base_trace(seed: u64) -> Result<RrSeries> {
    Ok(generate_rr_trace(&reference_base_config(seed))?.rr)
}

pub fn write_csv<W: Write>(rows: &[AmplificationRow], mut out: W) -> Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{}",
            r.rr_mape_pct, r.rmssd_mape_pct, r.sdnn_mape_pct, r.trials, r.seed
        )?;
    }
    Ok(())
}
