//! Synthetic PPG traces with exactly known beat timing.
//!
//! Beats are generated one at a time from a slowly modulated heart rate plus
//! Gaussian jitter. Each beat is rendered as an asymmetric raised-cosine
//! pulse peaking at the beat time: it rises over 30% of the preceding
//! interval and decays over 70% of the following one, so consecutive pulses
//! tile without overlap. Sensor gain, white noise and motion-artifact bursts
//! are layered on top.
//!
//! Random streams: RR jitter, additive noise and artifacts each draw from
//! their own ChaCha stream of `seed`, so toggling one never perturbs another.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hrv::RrSeries;
use crate::seeded_rng;
use crate::signal::PpgSignal;

const STREAM_RR: u64 = 0;
const STREAM_NOISE: u64 = 1;
const STREAM_ARTIFACTS: u64 = 2;

/// Physiological clamp applied to every generated interval.
pub const RR_CLAMP_MS: (f64, f64) = (250.0, 2000.0);

/// Fraction of the interval used by the systolic rise.
const RISE_FRACTION: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HrDrift {
    pub amplitude_bpm: f64,
    pub period_s: f64,
}

impl Default for HrDrift {
    fn default() -> Self {
        Self {
            amplitude_bpm: 0.0,
            period_s: 300.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub duration_s: f64,
    pub sampling_rate_hz: f64,
    pub base_hr_bpm: f64,
    pub hr_drift: HrDrift,
    /// Standard deviation of the per-beat Gaussian jitter.
    pub rr_jitter_ms: f64,
    pub artifact_rate_per_min: f64,
    /// `[min, max]` burst length in seconds, drawn uniformly.
    pub artifact_duration_s: (f64, f64),
    pub sensor_bias_gain: f64,
    pub additive_noise_sigma: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            duration_s: 600.0,
            sampling_rate_hz: 25.0,
            base_hr_bpm: 60.0,
            hr_drift: HrDrift::default(),
            rr_jitter_ms: 0.0,
            artifact_rate_per_min: 0.0,
            artifact_duration_s: (2.0, 6.0),
            sensor_bias_gain: 1.0,
            additive_noise_sigma: 0.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(format!("synth: {msg}")));
        if !(self.duration_s.is_finite() && self.duration_s > 0.0) {
            return bad("duration_s must be positive");
        }
        if !(self.sampling_rate_hz.is_finite() && self.sampling_rate_hz > 0.0) {
            return bad("sampling_rate_hz must be positive");
        }
        if !(self.base_hr_bpm > 30.0 && self.base_hr_bpm < 200.0) {
            return bad("base_hr_bpm must lie in (30, 200)");
        }
        if !(self.hr_drift.amplitude_bpm >= 0.0 && self.hr_drift.period_s > 0.0) {
            return bad("hr_drift needs a non-negative amplitude and positive period");
        }
        if self.hr_drift.amplitude_bpm >= self.base_hr_bpm {
            return bad("hr_drift amplitude must stay below base_hr_bpm");
        }
        if !(self.rr_jitter_ms >= 0.0 && self.artifact_rate_per_min >= 0.0 && self.additive_noise_sigma >= 0.0) {
            return bad("jitter, artifact rate and noise sigma must be non-negative");
        }
        let (lo, hi) = self.artifact_duration_s;
        if !(lo > 0.0 && hi >= lo) {
            return bad("artifact_duration_s must be a positive [min, max] range");
        }
        if !(self.sensor_bias_gain.is_finite() && self.sensor_bias_gain > 0.0) {
            return bad("sensor_bias_gain must be positive");
        }
        Ok(())
    }

    /// Instantaneous heart rate of the drift model at `t_s`.
    pub fn heart_rate_at(&self, t_s: f64) -> f64 {
        self.base_hr_bpm + self.hr_drift.amplitude_bpm * (2.0 * PI * t_s / self.hr_drift.period_s).sin()
    }

    /// Settings for one of the recorded activities.
    ///
    /// | preset      | HR  | drift (bpm / s) | jitter ms | artifacts /min | noise |
    /// |-------------|-----|-----------------|-----------|----------------|-------|
    /// | sit         | 68  | 3 / 240         | 32        | 0.3            | 0.02  |
    /// | sleep       | 58  | 2 / 420         | 40        | 0.8            | 0.03  |
    /// | office_work | 78  | 6 / 180         | 28        | 2.5            | 0.05  |
    pub fn preset(activity: Activity, duration_s: f64, seed: u64) -> Self {
        let base = SynthConfig {
            duration_s,
            seed,
            ..SynthConfig::default()
        };
        match activity {
            Activity::Sit => SynthConfig {
                base_hr_bpm: 68.0,
                hr_drift: HrDrift {
                    amplitude_bpm: 3.0,
                    period_s: 240.0,
                },
                rr_jitter_ms: 32.0,
                artifact_rate_per_min: 0.3,
                artifact_duration_s: (1.0, 3.0),
                additive_noise_sigma: 0.02,
                ..base
            },
            Activity::Sleep => SynthConfig {
                base_hr_bpm: 58.0,
                hr_drift: HrDrift {
                    amplitude_bpm: 2.0,
                    period_s: 420.0,
                },
                rr_jitter_ms: 40.0,
                artifact_rate_per_min: 0.8,
                artifact_duration_s: (1.5, 4.0),
                additive_noise_sigma: 0.03,
                ..base
            },
            Activity::OfficeWork => SynthConfig {
                base_hr_bpm: 78.0,
                hr_drift: HrDrift {
                    amplitude_bpm: 6.0,
                    period_s: 180.0,
                },
                rr_jitter_ms: 28.0,
                artifact_rate_per_min: 2.5,
                artifact_duration_s: (2.0, 6.0),
                additive_noise_sigma: 0.05,
                ..base
            },
        }
    }

    /// Same settings with noise and motion artifacts switched off.
    pub fn noiseless(&self) -> Self {
        SynthConfig {
            artifact_rate_per_min: 0.0,
            additive_noise_sigma: 0.0,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activity {
    Sit,
    Sleep,
    OfficeWork,
}

impl Activity {
    pub const ALL: [Activity; 3] = [Activity::Sit, Activity::Sleep, Activity::OfficeWork];

    pub fn name(self) -> &'static str {
        match self {
            Activity::Sit => "sit",
            Activity::Sleep => "sleep",
            Activity::OfficeWork => "office_work",
        }
    }
}

impl fmt::Display for Activity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Activity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sit" => Ok(Activity::Sit),
            "sleep" => Ok(Activity::Sleep),
            "office_work" | "office-work" => Ok(Activity::OfficeWork),
            other => Err(Error::InvalidConfig(format!("unknown activity `{other}`"))),
        }
    }
}

/// True beat timing. `rr[i]` is the interval between beats `i` and `i + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub rr: RrSeries,
    pub beat_times_s: Vec<f64>,
}

impl GroundTruth {
    pub fn new(rr: RrSeries, beat_times_s: Vec<f64>) -> Result<Self> {
        if beat_times_s.len() != rr.len() + 1 {
            return Err(Error::InvalidConfig(format!(
                "{} beat times for {} intervals",
                beat_times_s.len(),
                rr.len()
            )));
        }
        if beat_times_s.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidConfig(
                "beat times must be strictly increasing".to_string(),
            ));
        }
        Ok(Self { rr, beat_times_s })
    }

    /// Intervals whose two bounding beats both fall inside `[start_s, end_s)`.
    pub fn intervals_within(&self, start_s: f64, end_s: f64) -> &[f64] {
        let first = self.beat_times_s.partition_point(|t| *t < start_s);
        let last = self.beat_times_s.partition_point(|t| *t < end_s);
        if last <= first + 1 {
            return &[];
        }
        &self.rr.intervals_ms()[first..last - 1]
    }

    /// Interval containing `t_s` (the first/last interval outside the beats).
    pub fn interval_at(&self, t_s: f64) -> f64 {
        let rr = self.rr.intervals_ms();
        let beats_before = self.beat_times_s.partition_point(|t| *t <= t_s);
        let idx = beats_before.saturating_sub(1).min(rr.len() - 1);
        rr[idx]
    }
}

/// Beat train with `RR = 60000 / HR(t) + N(0, jitter)`, clamped to
/// [250, 2000] ms. The first beat sits at `t = 0`; beats are added while
/// they land at or before `duration_s`.
pub fn generate_rr_trace(cfg: &SynthConfig) -> Result<GroundTruth> {
    cfg.validate()?;
    let mut rng = seeded_rng(cfg.seed, STREAM_RR);
    let jitter = Normal::new(0.0, cfg.rr_jitter_ms).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let mut beat_times = vec![0.0];
    let mut intervals = Vec::new();
    let mut t = 0.0;
    loop {
        let nominal = 60_000.0 / cfg.heart_rate_at(t);
        let noise = if cfg.rr_jitter_ms > 0.0 {
            jitter.sample(&mut rng)
        } else {
            0.0
        };
        let rr = (nominal + noise).clamp(RR_CLAMP_MS.0, RR_CLAMP_MS.1);
        let next = t + rr / 1000.0;
        if next > cfg.duration_s + 1e-9 {
            break;
        }
        intervals.push(rr);
        beat_times.push(next);
        t = next;
    }
    if intervals.is_empty() {
        return Err(Error::InvalidConfig(format!(
            "synth: duration {}s is shorter than one beat",
            cfg.duration_s
        )));
    }
    GroundTruth::new(RrSeries::new(intervals)?, beat_times)
}

/// Pulse train of the beats scaled by the sensor gain, before noise.
pub fn render_pulses(gt: &GroundTruth, cfg: &SynthConfig) -> Result<PpgSignal> {
    cfg.validate()?;
    let rate = cfg.sampling_rate_hz;
    let n = (cfg.duration_s * rate).round() as usize;
    let mut samples = vec![0.0; n];
    let rr = gt.rr.intervals_ms();
    for (b, &tb) in gt.beat_times_s.iter().enumerate() {
        let before_s = rr[b.saturating_sub(1).min(rr.len() - 1)] / 1000.0;
        let after_s = rr[b.min(rr.len() - 1)] / 1000.0;
        let rise = RISE_FRACTION * before_s;
        let decay = (1.0 - RISE_FRACTION) * after_s;
        let lo = ((tb - rise) * rate).ceil().max(0.0) as usize;
        let hi = (((tb + decay) * rate).floor().max(-1.0) + 1.0) as usize;
        for (i, s) in samples.iter_mut().enumerate().take(hi.min(n)).skip(lo) {
            let t = i as f64 / rate;
            let phase = if t <= tb {
                (t - (tb - rise)) / rise
            } else if t < tb + decay {
                1.0 - (t - tb) / decay
            } else {
                // half-open: the next rise starts here
                continue;
            };
            *s += 0.5 * (1.0 - (PI * phase.clamp(0.0, 1.0)).cos());
        }
    }
    let gain = cfg.sensor_bias_gain;
    for s in &mut samples {
        *s *= gain;
    }
    PpgSignal::new(rate, samples, 0.0)
}

/// Full synthetic trace: pulses, white noise, then motion artifacts.
pub fn render_ppg(gt: &GroundTruth, cfg: &SynthConfig) -> Result<PpgSignal> {
    let mut signal = render_pulses(gt, cfg)?;
    if cfg.additive_noise_sigma > 0.0 {
        let mut rng = seeded_rng(cfg.seed, STREAM_NOISE);
        let noise = Normal::new(0.0, cfg.additive_noise_sigma).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        for s in &mut signal.samples {
            *s += noise.sample(&mut rng);
        }
    }
    inject_motion_artifacts(&signal, cfg)
}

/// One motion-artifact burst.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArtifactEpoch {
    pub start_s: f64,
    pub duration_s: f64,
    /// Peak magnitude relative to the pulse amplitude.
    pub relative_amplitude: f64,
}

/// Poisson arrival times for bursts over `[0, duration_s)`.
pub fn artifact_epochs(duration_s: f64, cfg: &SynthConfig) -> Result<Vec<ArtifactEpoch>> {
    cfg.validate()?;
    if cfg.artifact_rate_per_min == 0.0 {
        return Ok(Vec::new());
    }
    let mut rng = seeded_rng(cfg.seed, STREAM_ARTIFACTS);
    let gaps = Exp::new(cfg.artifact_rate_per_min / 60.0).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let (dmin, dmax) = cfg.artifact_duration_s;
    let mut epochs = Vec::new();
    let mut t = gaps.sample(&mut rng);
    while t < duration_s {
        let duration_s = if dmax > dmin {
            rng.random_range(dmin..dmax)
        } else {
            dmin
        };
        let relative_amplitude = rng.random_range(1.0..3.0);
        epochs.push(ArtifactEpoch {
            start_s: t,
            duration_s,
            relative_amplitude,
        });
        t += gaps.sample(&mut rng);
    }
    Ok(epochs)
}

/// Superimposes band-limited random-walk bursts at Poisson-arriving epochs.
///
/// Each burst is a Gaussian random walk, low-passed with a 0.2 s moving
/// average (first null at 5 Hz) and high-passed by removing a 2 s moving
/// average (0.5 Hz), scaled so its peak reaches 1-3x the pulse amplitude and
/// tapered with a Hann envelope.
pub fn inject_motion_artifacts(signal: &PpgSignal, cfg: &SynthConfig) -> Result<PpgSignal> {
    if signal.samples.is_empty() {
        return Err(Error::EmptySignal);
    }
    let epochs = artifact_epochs(signal.duration_s(), cfg)?;
    let mut out = signal.clone();
    if epochs.is_empty() {
        return Ok(out);
    }
    let rate = signal.sampling_rate_hz;
    // Separate stream offset so the burst shapes do not alias the arrival draws.
    let mut rng = seeded_rng(cfg.seed ^ 0xA5A5_A5A5, STREAM_ARTIFACTS);
    let step = Normal::new(0.0, 1.0).expect("unit normal");
    let pulse_amplitude = cfg.sensor_bias_gain;
    for epoch in epochs {
        let start = (epoch.start_s * rate).round() as usize;
        let len = ((epoch.duration_s * rate).round() as usize).max(2);
        if start >= out.samples.len() {
            continue;
        }
        let mut walk = Vec::with_capacity(len);
        let mut acc = 0.0;
        for _ in 0..len {
            acc += step.sample(&mut rng);
            walk.push(acc);
        }
        let low = moving_average(&walk, ((0.2 * rate).round() as usize).max(1));
        let trend = moving_average(&low, ((2.0 * rate).round() as usize).max(1));
        let mut burst: Vec<f64> = low.iter().zip(&trend).map(|(a, b)| a - b).collect();
        let peak = burst.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let scale = if peak > 0.0 {
            epoch.relative_amplitude * pulse_amplitude / peak
        } else {
            0.0
        };
        for (k, v) in burst.iter_mut().enumerate() {
            let envelope = 0.5 * (1.0 - (2.0 * PI * k as f64 / (len - 1) as f64).cos());
            *v *= scale * envelope;
        }
        for (s, b) in out.samples[start..].iter_mut().zip(&burst) {
            *s += b;
        }
    }
    Ok(out)
}

fn moving_average(x: &[f64], width: usize) -> Vec<f64> {
    let half = width / 2;
    let n = x.len();
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    for v in x {
        prefix.push(prefix.last().unwrap() + v);
    }
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(n);
            (prefix[hi] - prefix[lo]) / (hi - lo) as f64
        })
        .collect()
}

/// Ground truth plus rendered signal for a configuration.
pub fn generate(cfg: &SynthConfig) -> Result<(GroundTruth, PpgSignal)> {
    let gt = generate_rr_trace(cfg)?;
    let ppg = render_ppg(&gt, cfg)?;
    Ok((gt, ppg))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hrv::sdnn;
    use crate::signal::{detect_peaks, PeakConfig};

    fn constant(bpm: f64, duration_s: f64) -> SynthConfig {
        SynthConfig {
            duration_s,
            base_hr_bpm: bpm,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn constant_rr_is_exact() {
        let gt = generate_rr_trace(&constant(60.0, 60.0)).unwrap();
        assert_eq!(gt.rr.len(), 60);
        assert!(gt.rr.intervals_ms().iter().all(|r| (r - 1000.0).abs() < 1e-9));
    }

    #[test]
    fn beat_times_match_intervals() {
        let cfg = SynthConfig::preset(Activity::OfficeWork, 300.0, 9);
        let gt = generate_rr_trace(&cfg).unwrap();
        for (i, rr) in gt.rr.intervals_ms().iter().enumerate() {
            let dt = (gt.beat_times_s[i + 1] - gt.beat_times_s[i]) * 1000.0;
            assert!((dt - rr).abs() < 1e-6);
        }
    }

    #[test]
    fn jitter_sets_sdnn() {
        let cfg = SynthConfig {
            duration_s: 3600.0,
            rr_jitter_ms: 30.0,
            seed: 11,
            ..constant(60.0, 3600.0)
        };
        let gt = generate_rr_trace(&cfg).unwrap();
        let s = sdnn(&gt.rr).unwrap().value_ms;
        assert!((s - 30.0).abs() < 3.0, "sdnn {s}");
    }

    #[test]
    fn same_seed_same_trace() {
        let cfg = SynthConfig::preset(Activity::Sleep, 120.0, 4);
        assert_eq!(generate(&cfg).unwrap(), generate(&cfg).unwrap());
        let other = SynthConfig { seed: 5, ..cfg.clone() };
        assert_ne!(generate_rr_trace(&cfg).unwrap(), generate_rr_trace(&other).unwrap());
    }

    #[test]
    fn noiseless_render_peaks_every_second() {
        let cfg = constant(60.0, 30.0);
        let gt = generate_rr_trace(&cfg).unwrap();
        let ppg = render_ppg(&gt, &cfg).unwrap();
        let peaks = detect_peaks(&ppg, &PeakConfig::default()).unwrap();
        assert!(peaks.len() >= 28);
        for w in peaks.windows(2) {
            assert!((24..=26).contains(&(w[1] - w[0])), "{peaks:?}");
        }
    }

    #[test]
    fn pulse_peaks_at_beat_time() {
        let cfg = constant(60.0, 10.0);
        let gt = generate_rr_trace(&cfg).unwrap();
        let ppg = render_pulses(&gt, &cfg).unwrap();
        assert!((ppg.samples[25 * 3] - 1.0).abs() < 1e-12);
        assert!(ppg.samples.iter().all(|v| (0.0..=1.0 + 1e-12).contains(v)));
    }

    #[test]
    fn gain_scales_exactly() {
        let cfg = SynthConfig::preset(Activity::Sit, 60.0, 2).noiseless();
        let gt = generate_rr_trace(&cfg).unwrap();
        let unit = render_ppg(&gt, &cfg).unwrap();
        let g = 1.7;
        let scaled = render_ppg(
            &gt,
            &SynthConfig {
                sensor_bias_gain: g,
                ..cfg
            },
        )
        .unwrap();
        for (a, b) in unit.samples.iter().zip(&scaled.samples) {
            assert_eq!(a * g, *b);
        }
    }

    #[test]
    fn zero_rate_leaves_signal_untouched() {
        let cfg = constant(70.0, 60.0);
        let gt = generate_rr_trace(&cfg).unwrap();
        let ppg = render_pulses(&gt, &cfg).unwrap();
        assert_eq!(inject_motion_artifacts(&ppg, &cfg).unwrap(), ppg);
    }

    #[test]
    fn artifacts_are_bounded_and_deterministic() {
        let cfg = SynthConfig {
            artifact_rate_per_min: 6.0,
            ..constant(70.0, 120.0)
        };
        let gt = generate_rr_trace(&cfg).unwrap();
        let clean = render_pulses(&gt, &cfg).unwrap();
        let a = inject_motion_artifacts(&clean, &cfg).unwrap();
        assert_eq!(a, inject_motion_artifacts(&clean, &cfg).unwrap());
        assert_ne!(a, clean);
        // overlapping bursts can add, each alone is at most 3x the pulse
        let max_dev = a
            .samples
            .iter()
            .zip(&clean.samples)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        let epochs = artifact_epochs(120.0, &cfg).unwrap();
        assert!(max_dev <= 3.0 * epochs.len() as f64);
        assert!(max_dev > 0.5);
    }

    #[test]
    fn interval_lookup() {
        let gt = GroundTruth::new(
            RrSeries::new(vec![1000.0, 500.0, 800.0]).unwrap(),
            vec![0.0, 1.0, 1.5, 2.3],
        )
        .unwrap();
        assert_eq!(gt.interval_at(0.2), 1000.0);
        assert_eq!(gt.interval_at(1.2), 500.0);
        assert_eq!(gt.interval_at(9.0), 800.0);
        assert_eq!(gt.intervals_within(0.0, 1.6), &[1000.0, 500.0]);
        assert_eq!(gt.intervals_within(0.5, 2.4), &[500.0, 800.0]);
        assert!(gt.intervals_within(0.5, 1.2).is_empty());
    }

    #[test]
    fn config_validation() {
        assert!(SynthConfig {
            base_hr_bpm: 25.0,
            ..SynthConfig::default()
        }
        .validate()
        .is_err());
        assert!(SynthConfig {
            duration_s: 0.0,
            ..SynthConfig::default()
        }
        .validate()
        .is_err());
        assert!(SynthConfig {
            sampling_rate_hz: -1.0,
            ..SynthConfig::default()
        }
        .validate()
        .is_err());
        for a in Activity::ALL {
            SynthConfig::preset(a, 100.0, 0).validate().unwrap();
            assert_eq!(a.name().parse::<Activity>().unwrap(), a);
        }
    }
}
