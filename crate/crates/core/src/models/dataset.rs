//! Windowed datasets built from smoothed heart rates and ground truth.

use crate::error::{Error, Result};
use crate::hrv::{rough_hrv_ms, HrvMetricKind};
use crate::signal::{RawHrSeries, SmoothedHrSeries};
use crate::synth::GroundTruth;

/// What a dataset's labels measure.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    /// SDNN or RMSSD over the window, in ms.
    Hrv(HrvMetricKind),
    /// Instantaneous heart rate, in bpm.
    Hr,
}

/// One feature vector with its label. For HRV datasets the features are
/// `n` smoothed HRs followed by the rough HRV of those HRs; for HR datasets
/// they are the `k` most recent rough HR estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: Vec<f64>,
    pub label: f64,
    /// End of the window the sample describes.
    pub time_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    samples: Vec<Sample>,
    target: Target,
    /// Monitoring length `n` in seconds for HRV data, `k` estimates for HR data.
    window: usize,
}

impl Dataset {
    /// Samples must be time-ordered and share one feature length.
    pub fn new(samples: Vec<Sample>, target: Target, window: usize) -> Result<Self> {
        if let Some(first) = samples.first() {
            let d = first.features.len();
            if let Some(bad) = samples.iter().find(|s| s.features.len() != d) {
                return Err(Error::FeatureLengthMismatch {
                    expected: d,
                    actual: bad.features.len(),
                });
            }
        }
        if samples.windows(2).any(|w| w[1].time_s < w[0].time_s) {
            return Err(Error::InvalidConfig("dataset samples must be time-ordered".to_string()));
        }
        Ok(Self {
            samples,
            target,
            window,
        })
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn target(&self) -> Target {
        self.target
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.samples.first().map_or(0, |s| s.features.len())
    }

    pub fn labels(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.label).collect()
    }

    /// Row-major feature matrix.
    pub(crate) fn feature_matrix(&self) -> Vec<f64> {
        self.samples.iter().flat_map(|s| s.features.iter().copied()).collect()
    }

    fn with_samples(&self, samples: Vec<Sample>) -> Dataset {
        Dataset {
            samples,
            target: self.target,
            window: self.window,
        }
    }
}

/// Sliding windows of `n_s` smoothed HRs, advanced by `stride_s` seconds.
///
/// The window of `shr[i..i + n]` covers `[start + i, start + i + n)`; its
/// label is the true HRV over the RR intervals whose two beats both fall in
/// that span. Fewer than two such intervals is an [`Error::EmptyWindow`].
pub fn build_hrv_dataset(
    shr: &SmoothedHrSeries,
    gt: &GroundTruth,
    n_s: usize,
    kind: HrvMetricKind,
    stride_s: usize,
) -> Result<Dataset> {
    if n_s < 2 || stride_s == 0 {
        return Err(Error::InvalidConfig(
            "monitoring length must be at least 2 s and stride at least 1 s".to_string(),
        ));
    }
    if shr.len() < n_s {
        return Err(Error::TraceTooShort {
            available: shr.len(),
            required: n_s,
        });
    }
    let hr = shr.values();
    let mut samples = Vec::with_capacity((hr.len() - n_s) / stride_s + 1);
    for i in (0..=hr.len() - n_s).step_by(stride_s) {
        let window = &hr[i..i + n_s];
        let start_s = shr.start_time_s() + i as f64;
        let end_s = start_s + n_s as f64;
        let truth = gt.intervals_within(start_s, end_s);
        if truth.len() < 2 {
            return Err(Error::EmptyWindow { window_end_s: end_s });
        }
        let mut features = Vec::with_capacity(n_s + 1);
        features.extend_from_slice(window);
        features.push(rough_hrv_ms(window, kind)?);
        samples.push(Sample {
            features,
            label: kind.compute(truth)?,
            time_s: end_s,
        });
    }
    Dataset::new(samples, Target::Hrv(kind), n_s)
}

/// Each sample holds `k` consecutive rough HRs; its label is the true heart
/// rate `60000 / RR` of the interval containing the newest estimate's time.
pub fn build_hr_dataset(raw: &RawHrSeries, gt: &GroundTruth, k: usize) -> Result<Dataset> {
    if k == 0 {
        return Err(Error::InvalidConfig("k must be at least 1".to_string()));
    }
    if raw.len() < k {
        return Err(Error::TraceTooShort {
            available: raw.len(),
            required: k,
        });
    }
    let values = raw.values();
    let samples = (k - 1..values.len())
        .map(|j| {
            let t = raw.time_of(j);
            Sample {
                features: values[j + 1 - k..=j].to_vec(),
                label: 60_000.0 / gt.interval_at(t),
                time_s: t,
            }
        })
        .collect();
    Dataset::new(samples, Target::Hr, k)
}

/// First `ceil(fraction * m)` samples train, the rest test. Both parts are
/// kept non-empty by moving one sample across when rounding would empty one.
pub fn chronological_split(d: &Dataset, train_fraction: f64) -> Result<(Dataset, Dataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let m = d.len();
    if m < 2 {
        return Err(Error::TooFewSamples { len: m });
    }
    let n_train = ((train_fraction * m as f64).ceil() as usize).clamp(1, m - 1);
    let (train, test) = d.samples.split_at(n_train);
    Ok((d.with_samples(train.to_vec()), d.with_samples(test.to_vec())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hrv::RrSeries;

    fn toy(m: usize) -> Dataset {
        let samples = (0..m)
            .map(|i| Sample {
                features: vec![i as f64],
                label: 1.0 + i as f64,
                time_s: i as f64,
            })
            .collect();
        Dataset::new(samples, Target::Hr, 1).unwrap()
    }

    fn uniform_truth(rr_ms: f64, beats: usize) -> GroundTruth {
        let times = (0..beats).map(|i| i as f64 * rr_ms / 1000.0).collect();
        GroundTruth::new(RrSeries::new(vec![rr_ms; beats - 1]).unwrap(), times).unwrap()
    }

    #[test]
    fn split_sizes() {
        let (tr, te) = chronological_split(&toy(10), 0.8).unwrap();
        assert_eq!((tr.len(), te.len()), (8, 2));
        assert!(tr.samples().last().unwrap().time_s < te.samples()[0].time_s);
        let (tr, te) = chronological_split(&toy(2), 0.8).unwrap();
        assert_eq!((tr.len(), te.len()), (1, 1));
        assert!(matches!(
            chronological_split(&toy(1), 0.8),
            Err(Error::TooFewSamples { len: 1 })
        ));
        assert!(chronological_split(&toy(5), 1.0).is_err());
    }

    #[test]
    fn hrv_window_count() {
        let shr = SmoothedHrSeries::new(0.0, vec![60.0; 3600]).unwrap();
        let gt = uniform_truth(1000.0, 3602);
        // constant truth has zero HRV, which is still a valid label
        let d = build_hrv_dataset(&shr, &gt, 300, HrvMetricKind::Rmssd, 1).unwrap();
        assert_eq!(d.len(), 3301);
        assert_eq!(d.n_features(), 301);
        assert!(d.samples().iter().all(|s| s.label == 0.0 && s.features[300] == 0.0));
        let strided = build_hrv_dataset(&shr, &gt, 300, HrvMetricKind::Rmssd, 10).unwrap();
        assert_eq!(strided.len(), 331);
    }

    #[test]
    fn hrv_errors() {
        let shr = SmoothedHrSeries::new(0.0, vec![60.0; 20]).unwrap();
        let gt = uniform_truth(1000.0, 30);
        assert!(matches!(
            build_hrv_dataset(&shr, &gt, 30, HrvMetricKind::Sdnn, 1),
            Err(Error::TraceTooShort { .. })
        ));
        let late = SmoothedHrSeries::new(100.0, vec![60.0; 20]).unwrap();
        assert!(matches!(
            build_hrv_dataset(&late, &gt, 10, HrvMetricKind::Sdnn, 1),
            Err(Error::EmptyWindow { .. })
        ));
    }

    #[test]
    fn hr_dataset_shape() {
        let raw = RawHrSeries::new(8.0, vec![60.0; 40]).unwrap();
        let gt = uniform_truth(1000.0, 30);
        let d = build_hr_dataset(&raw, &gt, 10).unwrap();
        assert_eq!(d.len(), 31);
        assert!(d.samples().iter().all(|s| s.features.len() == 10 && s.label == 60.0));
        assert_eq!(d.samples()[0].time_s, 8.0 + 9.0 * 0.25);
        assert!(matches!(
            build_hr_dataset(&raw, &gt, 41),
            Err(Error::TraceTooShort { .. })
        ));
    }

    #[test]
    fn dataset_rejects_ragged_features() {
        let samples = vec![
            Sample {
                features: vec![1.0],
                label: 1.0,
                time_s: 0.0,
            },
            Sample {
                features: vec![1.0, 2.0],
                label: 1.0,
                time_s: 1.0,
            },
        ];
        assert!(Dataset::new(samples, Target::Hr, 1).is_err());
    }
}
