//! Compound-and-direct heart rate variability inference from PPG signals.
//!
//! The pipeline turns a raw light-intensity trace into four rough heart-rate
//! estimates per second ([`signal::ppg_to_hr`]), removes gross outliers
//! ([`signal::zscore_adjust`]), averages them down to one value per second
//! ([`signal::smooth`]) and feeds windows of those values, together with a
//! rough HRV computed from them, to a small regressor that predicts SDNN or
//! RMSSD directly ([`models`]).
//!
//! Supporting pieces:
//! - [`hrv`]: time-domain HRV metrics and MAPE.
//! - [`amplification`]: how RR estimation errors blow up once converted to HRV.
//! - [`synth`]: synthetic PPG traces with exact RR ground truth.
//! - [`experiment`]: CSV exchange formats and the end-to-end experiment runner.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod amplification;
pub mod error;
pub mod experiment;
pub mod hrv;
pub mod models;
pub mod signal;
pub mod synth;

pub use error::{Error, ErrorClass, Result};
pub use hrv::{HrvMetricKind, HrvValue, RrSeries};
pub use signal::{PpgSignal, RawHrSeries, SmoothedHrSeries, ZScoreConfig};
pub use synth::{Activity, GroundTruth, SynthConfig};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Deterministic RNG for a `(seed, stream)` pair. Streams are independent.
pub(crate) fn seeded_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// SplitMix64 finalizer; derives child seeds from a parent seed and an index.
pub(crate) fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
