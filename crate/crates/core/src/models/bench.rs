//! Per-prediction wall-clock latency.

use std::hint::black_box;
use std::time::Instant;

use super::TrainedModel;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatencyStats {
    pub min_us: f64,
    pub mean_us: f64,
    pub p99_us: f64,
    pub repetitions: usize,
}

/// Times `repetitions` single predictions, cycling through `probes`, after an
/// untimed warm-up of `max(10, repetitions / 10)` predictions.
pub fn bench_inference(model: &TrainedModel, probes: &[Vec<f64>], repetitions: usize) -> Result<LatencyStats> {
    if repetitions < 100 {
        return Err(Error::InvalidConfig(format!(
            "need at least 100 repetitions, got {repetitions}"
        )));
    }
    if probes.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if let Some(bad) = probes.iter().find(|p| p.len() != model.n_features()) {
        return Err(Error::FeatureLengthMismatch {
            expected: model.n_features(),
            actual: bad.len(),
        });
    }
    for i in 0..(repetitions / 10).max(10) {
        black_box(model.predict_unchecked(black_box(&probes[i % probes.len()])));
    }
    let mut samples_us: Vec<f64> = (0..repetitions)
        .map(|i| {
            let probe = &probes[i % probes.len()];
            let start = Instant::now();
            black_box(model.predict_unchecked(black_box(probe)));
            start.elapsed().as_secs_f64() * 1e6
        })
        .collect();
    samples_us.sort_by(f64::total_cmp);
    let p99_index = ((0.99 * repetitions as f64).ceil() as usize).clamp(1, repetitions) - 1;
    Ok(LatencyStats {
        min_us: samples_us[0],
        mean_us: samples_us.iter().sum::<f64>() / repetitions as f64,
        p99_us: samples_us[p99_index],
        repetitions,
    })
}
