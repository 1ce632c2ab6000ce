//! PPG light signal to smoothed per-second heart rates.
//!
//! Three stages:
//! 1. [`ppg_to_hr`] slides an 8 s trailing window over the trace every
//!    0.25 s, detects pulse peaks in it and emits `60000 / mean inter-peak
//!    interval`. That yields four rough estimates per second.
//! 2. [`zscore_adjust`] replaces estimates further than `z * sigma` from the
//!    trace mean by the average of their neighbours.
//! 3. [`smooth`] averages each group of four estimates into one per second.

use crate::error::{Error, Result};

/// Rough heart-rate estimates emitted per second by [`ppg_to_hr`].
pub const RAW_RATE_PER_S: usize = 4;

/// Fallback estimate when the very first window yields no usable peaks.
pub const FALLBACK_HR_BPM: f64 = 60.0;

/// Exclusive physiological bounds for an accepted estimate.
pub const HR_BOUNDS_BPM: (f64, f64) = (20.0, 250.0);

/// Uniformly sampled light-intensity trace.
#[derive(Debug, Clone, PartialEq)]
pub struct PpgSignal {
    pub sampling_rate_hz: f64,
    pub samples: Vec<f64>,
    pub start_time_s: f64,
}

impl PpgSignal {
    pub fn new(sampling_rate_hz: f64, samples: Vec<f64>, start_time_s: f64) -> Result<Self> {
        if !(sampling_rate_hz.is_finite() && sampling_rate_hz > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "sampling rate must be positive, got {sampling_rate_hz}"
            )));
        }
        Ok(Self {
            sampling_rate_hz,
            samples,
            start_time_s,
        })
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sampling_rate_hz
    }

    pub fn time_of(&self, index: usize) -> f64 {
        self.start_time_s + index as f64 / self.sampling_rate_hz
    }

    /// Copy of the samples in `range`, keeping the absolute start time.
    pub fn slice(&self, range: std::ops::Range<usize>) -> PpgSignal {
        PpgSignal {
            sampling_rate_hz: self.sampling_rate_hz,
            start_time_s: self.time_of(range.start),
            samples: self.samples[range].to_vec(),
        }
    }
}

/// Four heart-rate estimates per second; estimate `j` belongs to the window
/// ending at `start_time_s + j / 4`.
#[derive(Debug, Clone, PartialEq)]
pub struct RawHrSeries {
    start_time_s: f64,
    values: Vec<f64>,
}

impl RawHrSeries {
    pub fn new(start_time_s: f64, values: Vec<f64>) -> Result<Self> {
        check_positive(&values)?;
        Ok(Self { start_time_s, values })
    }

    pub fn rate_per_s(&self) -> usize {
        RAW_RATE_PER_S
    }

    pub fn start_time_s(&self) -> f64 {
        self.start_time_s
    }

    pub fn time_of(&self, index: usize) -> f64 {
        self.start_time_s + index as f64 / RAW_RATE_PER_S as f64
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// One smoothed heart rate per second; value `i` summarises the raw
/// estimates of second `[start_time_s + i, start_time_s + i + 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothedHrSeries {
    start_time_s: f64,
    values: Vec<f64>,
}

impl SmoothedHrSeries {
    pub fn new(start_time_s: f64, values: Vec<f64>) -> Result<Self> {
        check_positive(&values)?;
        Ok(Self { start_time_s, values })
    }

    pub fn start_time_s(&self) -> f64 {
        self.start_time_s
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

fn check_positive(values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !(v.is_finite() && *v > 0.0)) {
        Some(i) => Err(Error::InvalidConfig(format!(
            "heart rate at index {i} must be finite and positive, got {}",
            values[i]
        ))),
        None => Ok(()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZScoreConfig {
    pub z_score: f64,
}

impl ZScoreConfig {
    pub fn new(z_score: f64) -> Result<Self> {
        if !(z_score.is_finite() && z_score > 0.0) {
            return Err(Error::InvalidConfig(format!("z-score must be positive, got {z_score}")));
        }
        Ok(Self { z_score })
    }
}

impl Default for ZScoreConfig {
    fn default() -> Self {
        Self { z_score: 3.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeakConfig {
    /// Refractory period between accepted peaks (0.27 s caps the rate at ~220 bpm).
    pub min_peak_distance_s: f64,
    /// Minimum prominence as a fraction of the detrended peak-to-peak range.
    pub prominence_fraction: f64,
}

impl Default for PeakConfig {
    fn default() -> Self {
        Self {
            min_peak_distance_s: 0.27,
            prominence_fraction: 0.3,
        }
    }
}

/// Returns the indices of pulse peaks in `window`, in increasing order.
///
/// The window is detrended by subtracting a centered 1 s moving average.
/// Local maxima (plateaus resolve to their middle sample) whose prominence
/// reaches `prominence_fraction` of the detrended range are kept. When two
/// candidates are closer than the refractory distance, the taller one wins.
/// A flat signal yields an empty list.
pub fn detect_peaks(window: &PpgSignal, cfg: &PeakConfig) -> Result<Vec<usize>> {
    if window.samples.is_empty() {
        return Err(Error::EmptySignal);
    }
    if !(cfg.min_peak_distance_s > 0.0) {
        return Err(Error::InvalidConfig(
            "minimum peak distance must be positive".to_string(),
        ));
    }
    let required_s = 2.0 * cfg.min_peak_distance_s;
    if window.duration_s() < required_s {
        return Err(Error::SignalTooShort {
            duration_s: window.duration_s(),
            required_s,
        });
    }

    let detrended = detrend(&window.samples, window.sampling_rate_hz);
    let (lo, hi) = detrended
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
            (lo.min(x), hi.max(x))
        });
    let range = hi - lo;
    if !(range > 0.0) {
        return Ok(Vec::new());
    }
    let min_prominence = cfg.prominence_fraction * range;

    let candidates: Vec<usize> = local_maxima(&detrended)
        .into_iter()
        .filter(|&p| prominence(&detrended, p) >= min_prominence)
        .collect();

    let distance = (cfg.min_peak_distance_s * window.sampling_rate_hz).ceil() as usize;
    Ok(enforce_distance(&candidates, &detrended, distance.max(1)))
}

/// Subtracts a centered moving average of 1 s width, truncated at the edges.
fn detrend(samples: &[f64], rate_hz: f64) -> Vec<f64> {
    let n = samples.len();
    let half = ((rate_hz.round() as usize) / 2).max(1);
    // Center first so the running sums stay small for large DC offsets.
    let offset = samples.iter().sum::<f64>() / n as f64;
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    let mut acc = 0.0;
    for &x in samples {
        acc += x - offset;
        prefix.push(acc);
    }
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(n);
            let mean = (prefix[hi] - prefix[lo]) / (hi - lo) as f64;
            (samples[i] - offset) - mean
        })
        .collect()
}

fn local_maxima(x: &[f64]) -> Vec<usize> {
    let mut peaks = Vec::new();
    let n = x.len();
    let mut i = 1;
    while i + 1 < n {
        if x[i - 1] < x[i] {
            let mut ahead = i + 1;
            while ahead + 1 < n && x[ahead] == x[i] {
                ahead += 1;
            }
            if x[ahead] < x[i] {
                peaks.push((i + ahead - 1) / 2);
                i = ahead;
                continue;
            }
        }
        i += 1;
    }
    peaks
}

/// Height of a peak above the higher of its two bases. A base is the lowest
/// point between the peak and the nearest strictly higher sample (or the
/// signal edge) on that side.
fn prominence(x: &[f64], peak: usize) -> f64 {
    let height = x[peak];
    let mut left_min = height;
    for &v in x[..peak].iter().rev() {
        if v > height {
            break;
        }
        left_min = left_min.min(v);
    }
    let mut right_min = height;
    for &v in &x[peak + 1..] {
        if v > height {
            break;
        }
        right_min = right_min.min(v);
    }
    height - left_min.max(right_min)
}

fn enforce_distance(peaks: &[usize], x: &[f64], distance: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..peaks.len()).collect();
    order.sort_by(|&a, &b| x[peaks[b]].total_cmp(&x[peaks[a]]).then(a.cmp(&b)));
    let mut keep = vec![true; peaks.len()];
    for &i in &order {
        if !keep[i] {
            continue;
        }
        for j in (0..i).rev() {
            if peaks[i] - peaks[j] >= distance {
                break;
            }
            keep[j] = false;
        }
        for j in i + 1..peaks.len() {
            if peaks[j] - peaks[i] >= distance {
                break;
            }
            keep[j] = false;
        }
    }
    peaks.iter().zip(keep).filter_map(|(&p, k)| k.then_some(p)).collect()
}

/// Four rough heart-rate estimates per second from a PPG trace.
///
/// The first estimate covers `[start, start + window_len_s)`; later ones slide
/// the window by a quarter second. Windows with fewer than two peaks, or
/// whose rate falls outside (20, 250) bpm, repeat the previous estimate (the
/// first falls back to 60 bpm).
pub fn ppg_to_hr(signal: &PpgSignal, window_len_s: f64, peaks: &PeakConfig) -> Result<RawHrSeries> {
    if signal.samples.is_empty() {
        return Err(Error::EmptySignal);
    }
    if !(window_len_s > 0.0) {
        return Err(Error::InvalidConfig("HR window length must be positive".to_string()));
    }
    let duration_s = signal.duration_s();
    if duration_s < window_len_s {
        return Err(Error::SignalTooShort {
            duration_s,
            required_s: window_len_s,
        });
    }

    let rate = signal.sampling_rate_hz;
    let step_s = 1.0 / RAW_RATE_PER_S as f64;
    let count = ((duration_s - window_len_s) / step_s + 1e-9).floor() as usize + 1;
    let mut values = Vec::with_capacity(count);
    let mut previous = FALLBACK_HR_BPM;
    for k in 0..count {
        let end_s = window_len_s + k as f64 * step_s;
        let hi = ((end_s * rate).round() as usize).min(signal.samples.len());
        let lo = (((end_s - window_len_s) * rate).round() as usize).min(hi);
        let window = signal.slice(lo..hi);
        let estimate = match detect_peaks(&window, peaks) {
            Ok(idx) if idx.len() >= 2 => {
                let span = (idx[idx.len() - 1] - idx[0]) as f64;
                let mean_interval_ms = 1000.0 * span / (idx.len() - 1) as f64 / rate;
                Some(60_000.0 / mean_interval_ms)
            }
            Ok(_) | Err(Error::SignalTooShort { .. }) => None,
            Err(e) => return Err(e),
        };
        if let Some(hr) = estimate.filter(|hr| *hr > HR_BOUNDS_BPM.0 && *hr < HR_BOUNDS_BPM.1) {
            previous = hr;
        }
        values.push(previous);
    }
    RawHrSeries::new(signal.start_time_s + window_len_s, values)
}

/// Replaces estimates with `|hr - mean| > z * sd` (statistics over the whole
/// input) by the mean of their neighbours.
///
/// Outliers are processed left to right: the left neighbour is its already
/// adjusted value, the right neighbour the raw input. Boundary outliers take
/// their single neighbour. A zero-variance series is returned unchanged.
pub fn zscore_adjust(hr: &RawHrSeries, cfg: &ZScoreConfig) -> Result<RawHrSeries> {
    let x = hr.values();
    let n = x.len();
    if n < 3 {
        return Err(Error::TooShort { len: n, required: 3 });
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let sd = (x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64).sqrt();
    let threshold = cfg.z_score * sd;

    let mut out = x.to_vec();
    for i in 0..n {
        if (x[i] - mean).abs() <= threshold {
            continue;
        }
        out[i] = match i {
            0 => x[1],
            i if i == n - 1 => out[n - 2],
            i => (out[i - 1] + x[i + 1]) / 2.0,
        };
    }
    RawHrSeries::new(hr.start_time_s(), out)
}

/// Averages each consecutive group of four estimates; a trailing partial
/// group is dropped.
pub fn smooth(hr: &RawHrSeries) -> Result<SmoothedHrSeries> {
    if hr.len() < RAW_RATE_PER_S {
        return Err(Error::TooShort {
            len: hr.len(),
            required: RAW_RATE_PER_S,
        });
    }
    let values = hr
        .values()
        .chunks_exact(RAW_RATE_PER_S)
        .map(|c| c.iter().sum::<f64>() / RAW_RATE_PER_S as f64)
        .collect();
    SmoothedHrSeries::new(hr.start_time_s(), values)
}

/// The full signal-processing chain with default settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pipeline {
    pub window_len_s: f64,
    pub peaks: PeakConfig,
    pub zscore: ZScoreConfig,
}

impl Default for Pipeline {
    fn default() -> Self {
        Self {
            window_len_s: 8.0,
            peaks: PeakConfig::default(),
            zscore: ZScoreConfig::default(),
        }
    }
}

impl Pipeline {
    /// Raw estimates after outlier adjustment (the HR-task features).
    pub fn adjusted_hr(&self, signal: &PpgSignal) -> Result<RawHrSeries> {
        let raw = ppg_to_hr(signal, self.window_len_s, &self.peaks)?;
        zscore_adjust(&raw, &self.zscore)
    }

    pub fn run(&self, signal: &PpgSignal) -> Result<SmoothedHrSeries> {
        smooth(&self.adjusted_hr(signal)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn sinusoid(freq_hz: f64, duration_s: f64, rate: f64) -> PpgSignal {
        let n = (duration_s * rate) as usize;
        let samples = (0..n).map(|i| (2.0 * PI * freq_hz * i as f64 / rate).sin()).collect();
        PpgSignal::new(rate, samples, 0.0).unwrap()
    }

    fn raw(values: &[f64]) -> RawHrSeries {
        RawHrSeries::new(0.0, values.to_vec()).unwrap()
    }

    #[test]
    fn sinusoid_peak_count() {
        // sin(2*pi*t) peaks at t = k + 1/4 for k = 0..59, all inside [0, 60).
        let sig = sinusoid(1.0, 60.0, 25.0);
        let peaks = detect_peaks(&sig, &PeakConfig::default()).unwrap();
        assert!((59..=61).contains(&peaks.len()), "{} peaks", peaks.len());
        assert!(peaks.windows(2).all(|w| w[1] - w[0] >= 7));
    }

    #[test]
    fn constant_signal_has_no_peaks() {
        let sig = PpgSignal::new(25.0, vec![5.0; 250], 0.0).unwrap();
        assert!(detect_peaks(&sig, &PeakConfig::default()).unwrap().is_empty());
    }

    #[test]
    fn empty_signal_is_an_error() {
        let sig = PpgSignal::new(25.0, vec![], 0.0).unwrap();
        assert!(matches!(
            detect_peaks(&sig, &PeakConfig::default()),
            Err(Error::EmptySignal)
        ));
    }

    #[test]
    fn plateau_resolves_to_middle() {
        let mut samples = vec![0.0; 60];
        samples[20..25].copy_from_slice(&[1.0; 5]);
        let sig = PpgSignal::new(25.0, samples, 0.0).unwrap();
        assert_eq!(detect_peaks(&sig, &PeakConfig::default()).unwrap(), vec![22]);
    }

    #[test]
    fn refractory_keeps_the_taller_peak() {
        let mut samples = vec![0.0; 75];
        samples[30] = 1.0;
        samples[33] = 0.8;
        samples[60] = 1.0;
        let sig = PpgSignal::new(25.0, samples, 0.0).unwrap();
        assert_eq!(detect_peaks(&sig, &PeakConfig::default()).unwrap(), vec![30, 60]);
    }

    #[test]
    fn short_signal_for_hr() {
        let sig = sinusoid(1.0, 7.0, 25.0);
        assert!(matches!(
            ppg_to_hr(&sig, 8.0, &PeakConfig::default()),
            Err(Error::SignalTooShort { .. })
        ));
    }

    #[test]
    fn hr_series_length_and_start() {
        let sig = sinusoid(1.5, 20.0, 25.0);
        let hr = ppg_to_hr(&sig, 8.0, &PeakConfig::default()).unwrap();
        // windows end at 8.0, 8.25, ..., 20.0
        assert_eq!(hr.len(), 49);
        assert_eq!(hr.start_time_s(), 8.0);
        assert!(hr.values().iter().all(|v| (v - 90.0).abs() < 2.0), "{:?}", hr.values());
    }

    #[test]
    fn flat_signal_falls_back() {
        let sig = PpgSignal::new(25.0, vec![1.0; 300], 0.0).unwrap();
        let hr = ppg_to_hr(&sig, 8.0, &PeakConfig::default()).unwrap();
        assert!(hr.values().iter().all(|v| *v == FALLBACK_HR_BPM));
    }

    #[test]
    fn zscore_single_spike_in_ten_sits_on_threshold() {
        // mean 83, population sd 39: |200 - 83| = 117 = 3 * 39 exactly, and
        // only strictly larger deviations are outliers.
        let input = raw(&[70., 70., 70., 200., 70., 70., 70., 70., 70., 70.]);
        let out = zscore_adjust(&input, &ZScoreConfig::default()).unwrap();
        assert_eq!(out, input);
        // A slightly lower threshold catches it and averages the neighbours.
        let out = zscore_adjust(&input, &ZScoreConfig::new(2.99).unwrap()).unwrap();
        assert_eq!(out.values(), &[70.0; 10]);
    }

    #[test]
    fn zscore_replaces_spike() {
        // 20 values: mean 76.5, sd 28.33, |200 - 76.5| = 123.5 > 85.0.
        let mut v = vec![70.0; 20];
        v[3] = 200.0;
        let out = zscore_adjust(&raw(&v), &ZScoreConfig::default()).unwrap();
        assert_eq!(out.values(), &[70.0; 20]);
    }

    #[test]
    fn zscore_constant_unchanged() {
        let input = raw(&[72.0; 16]);
        assert_eq!(zscore_adjust(&input, &ZScoreConfig::default()).unwrap(), input);
    }

    #[test]
    fn zscore_boundary_outliers_take_single_neighbor() {
        let mut v = vec![60.0; 20];
        v[0] = 240.0;
        v[1] = 61.0;
        let out = zscore_adjust(&raw(&v), &ZScoreConfig::default()).unwrap();
        assert_eq!(out.values()[0], 61.0);

        let mut v = vec![60.0; 20];
        v[19] = 240.0;
        v[18] = 59.0;
        let out = zscore_adjust(&raw(&v), &ZScoreConfig::default()).unwrap();
        assert_eq!(out.values()[19], 59.0);
    }

    #[test]
    fn zscore_consecutive_outliers_use_adjusted_left() {
        let mut v = vec![60.0; 40];
        v[10] = 230.0;
        v[11] = 230.0;
        let out = zscore_adjust(&raw(&v), &ZScoreConfig::default()).unwrap();
        assert_eq!(out.values()[10], (60.0 + 230.0) / 2.0);
        assert_eq!(out.values()[11], (145.0 + 60.0) / 2.0);
    }

    #[test]
    fn zscore_too_short() {
        assert!(matches!(
            zscore_adjust(&raw(&[60.0, 61.0]), &ZScoreConfig::default()),
            Err(Error::TooShort { len: 2, required: 3 })
        ));
    }

    #[test]
    fn zscore_config_must_be_positive() {
        assert!(ZScoreConfig::new(0.0).is_err());
        assert_eq!(ZScoreConfig::new(3.0).unwrap(), ZScoreConfig::default());
    }

    #[test]
    fn smooth_examples() {
        assert_eq!(smooth(&raw(&[60., 62., 64., 66.])).unwrap().values(), &[63.0]);
        assert_eq!(
            smooth(&raw(&[60., 60., 60., 60., 80., 80., 80., 80.]))
                .unwrap()
                .values(),
            &[60.0, 80.0]
        );
        assert_eq!(smooth(&raw(&[70.0; 9])).unwrap().len(), 2);
        assert!(matches!(smooth(&raw(&[70.0; 3])), Err(Error::TooShort { .. })));
    }
}
