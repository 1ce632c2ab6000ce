use proptest::prelude::*;

use ppg_hrv::hrv::{mape, rmssd, sdnn};
use ppg_hrv::models::{
    chronological_split, random_search, train_dt, train_knn, train_rf, Dataset, Distance, HyperparamSpace,
    MlpTrainingConfig, ModelKind, Sample, Target,
};
use ppg_hrv::signal::{detect_peaks, smooth, zscore_adjust, PeakConfig};
use ppg_hrv::synth::{generate, SynthConfig};
use ppg_hrv::{PpgSignal, RawHrSeries, RrSeries, ZScoreConfig};

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300)
}

fn rr_series() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(300.0..1500.0f64, 2..120)
}

fn dataset() -> impl Strategy<Value = Dataset> {
    (1usize..4, 4usize..60).prop_flat_map(|(d, m)| {
        prop::collection::vec((prop::collection::vec(-50.0..50.0f64, d), 1.0..200.0f64), m).prop_map(move |rows| {
            let samples = rows
                .into_iter()
                .enumerate()
                .map(|(i, (features, label))| Sample {
                    features,
                    label,
                    time_s: i as f64,
                })
                .collect();
            Dataset::new(samples, Target::Hr, d).unwrap()
        })
    })
}

fn label_range(d: &Dataset) -> (f64, f64) {
    d.labels()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &y| {
            (lo.min(y), hi.max(y))
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn hrv_non_negative_and_scale_equivariant(rr in rr_series(), c in 0.1..10.0f64, t in -200.0..200.0f64) {
        let base = RrSeries::new(rr.clone()).unwrap();
        let s = sdnn(&base).unwrap().value_ms;
        let r = rmssd(&base).unwrap().value_ms;
        prop_assert!(s >= 0.0 && r >= 0.0);

        let scaled = RrSeries::new(rr.iter().map(|v| v * c).collect()).unwrap();
        prop_assert!(close(sdnn(&scaled).unwrap().value_ms, c * s, 1e-12) || s == 0.0);
        prop_assert!(close(rmssd(&scaled).unwrap().value_ms, c * r, 1e-12) || r == 0.0);

        let shifted = RrSeries::new(rr.iter().map(|v| v + t).collect()).unwrap();
        // shifting changes the rounding of the mean, so allow a few ulps of the interval size
        prop_assert!((sdnn(&shifted).unwrap().value_ms - s).abs() <= 1e-9 * 1500.0);
        prop_assert!((rmssd(&shifted).unwrap().value_ms - r).abs() <= 1e-9 * 1500.0);
    }

    #[test]
    fn sdnn_is_permutation_invariant(rr in rr_series(), seed in any::<u64>()) {
        let mut shuffled = rr.clone();
        let n = shuffled.len();
        let mut state = seed;
        for i in (1..n).rev() {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            shuffled.swap(i, (state >> 33) as usize % (i + 1));
        }
        let a = sdnn(&RrSeries::new(rr).unwrap()).unwrap().value_ms;
        let b = sdnn(&RrSeries::new(shuffled).unwrap()).unwrap().value_ms;
        prop_assert!(close(a, b, 1e-9) || (a - b).abs() < 1e-9);
    }

    #[test]
    fn mape_zero_iff_equal(truth in prop::collection::vec(1.0..1000.0f64, 1..50), k in 0usize..50, d in 0.001..10.0f64) {
        prop_assert_eq!(mape(&truth, &truth).unwrap(), 0.0);
        let mut est = truth.clone();
        let i = k % est.len();
        est[i] += d;
        prop_assert!(mape(&est, &truth).unwrap() > 0.0);
    }

    #[test]
    fn zscore_keeps_inliers_and_bounds_replacements(
        base in prop::collection::vec(55.0..85.0f64, 12..80),
        spikes in prop::collection::vec((0usize..80, 150.0..240.0f64), 0..3),
        z in 1.0..4.0f64,
    ) {
        let mut x = base;
        for (i, v) in spikes {
            let n = x.len();
            x[i % n] = v;
        }
        let n = x.len() as f64;
        let mean = x.iter().sum::<f64>() / n;
        let sd = (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        let out = zscore_adjust(&RawHrSeries::new(0.0, x.clone()).unwrap(), &ZScoreConfig::new(z).unwrap()).unwrap();
        let y = out.values();
        prop_assert_eq!(y.len(), x.len());
        for i in 0..x.len() {
            if (x[i] - mean).abs() <= z * sd {
                prop_assert_eq!(y[i], x[i]);
            } else {
                // neighbours actually used: adjusted left, raw right
                let used: Vec<f64> = match i {
                    0 => vec![x[1]],
                    i if i == x.len() - 1 => vec![y[i - 1]],
                    i => vec![y[i - 1], x[i + 1]],
                };
                let lo = used.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = used.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(y[i] >= lo - 1e-12 && y[i] <= hi + 1e-12);
            }
        }
    }

    #[test]
    fn smooth_length_and_mean(x in prop::collection::vec(40.0..180.0f64, 4..200)) {
        let s = smooth(&RawHrSeries::new(0.0, x.clone()).unwrap()).unwrap();
        let used = x.len() / 4 * 4;
        prop_assert_eq!(s.len(), x.len() / 4);
        let a = s.values().iter().sum::<f64>() / s.len() as f64;
        let b = x[..used].iter().sum::<f64>() / used as f64;
        prop_assert!(close(a, b, 1e-9));
    }

    #[test]
    fn peaks_are_translation_invariant(bpm in 45.0..160.0f64, offset in -1e3..1e3f64, seed in 0u64..1000) {
        let cfg = SynthConfig {
            duration_s: 20.0,
            base_hr_bpm: bpm,
            rr_jitter_ms: 20.0,
            additive_noise_sigma: 0.05,
            seed,
            ..SynthConfig::default()
        };
        let (_, ppg) = generate(&cfg).unwrap();
        let moved = PpgSignal::new(ppg.sampling_rate_hz, ppg.samples.iter().map(|v| v + offset).collect(), 0.0).unwrap();
        let a = detect_peaks(&ppg, &PeakConfig::default()).unwrap();
        let b = detect_peaks(&moved, &PeakConfig::default()).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn trees_predict_within_label_range(d in dataset(), depth in 3usize..12, seed in any::<u64>(), q in prop::collection::vec(-80.0..80.0f64, 3)) {
        let (lo, hi) = label_range(&d);
        let x = &q[..d.n_features()];
        let dt = train_dt(&d, depth, seed).unwrap().predict(x).unwrap();
        prop_assert!(dt >= lo && dt <= hi);
        let rf = train_rf(&d, 3, depth, seed).unwrap().predict(x).unwrap();
        prop_assert!(rf >= lo - 1e-9 * hi.abs() && rf <= hi + 1e-9 * hi.abs());
    }

    #[test]
    fn knn_full_k_is_global_mean(d in dataset(), q in prop::collection::vec(-80.0..80.0f64, 3)) {
        prop_assume!(d.len() <= 30);
        let mean = d.labels().iter().sum::<f64>() / d.len() as f64;
        let p = train_knn(&d, d.len(), Distance::Manhattan).unwrap().predict(&q[..d.n_features()]).unwrap();
        prop_assert!(close(p, mean, 1e-12));
    }

    #[test]
    fn trainers_are_deterministic(d in dataset(), seed in any::<u64>()) {
        prop_assert_eq!(train_dt(&d, 6, seed).unwrap(), train_dt(&d, 6, seed).unwrap());
        prop_assert_eq!(train_rf(&d, 4, 6, seed).unwrap(), train_rf(&d, 4, 6, seed).unwrap());
    }

    #[test]
    fn split_preserves_order(d in dataset(), frac in 0.05..0.95f64) {
        let (train, test) = chronological_split(&d, frac).unwrap();
        prop_assert!(!train.is_empty() && !test.is_empty());
        let joined: Vec<Sample> = train.samples().iter().chain(test.samples()).cloned().collect();
        prop_assert_eq!(joined.as_slice(), d.samples());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn search_stays_in_space(d in dataset(), seed in any::<u64>(), kind in prop::sample::select(vec![ModelKind::Dt, ModelKind::Rf, ModelKind::Knn])) {
        prop_assume!(d.len() >= 20);
        let space = HyperparamSpace::default();
        let out = random_search(&d, 0.2, kind, &space, 3, seed, &MlpTrainingConfig::default()).unwrap();
        prop_assert!(space.contains(&out.model.meta().hyperparams));
        prop_assert!(out.candidates.iter().all(|c| space.contains(&c.hyperparams)));
    }
}

#[test]
fn rmssd_depends_on_order() {
    let a = rmssd(&RrSeries::new(vec![800.0, 900.0, 1000.0]).unwrap())
        .unwrap()
        .value_ms;
    let b = rmssd(&RrSeries::new(vec![800.0, 1000.0, 900.0]).unwrap())
        .unwrap()
        .value_ms;
    assert_ne!(a, b);
}
