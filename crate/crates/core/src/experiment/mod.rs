//! End-to-end evaluation: traces in, MAPE / size / latency tables out.
//!
//! Every cell of the matrix `sources x metrics x lengths x models` builds a
//! windowed dataset, splits it chronologically, tunes the model by random
//! search on the training part and scores both the compound estimate and the
//! rough HRV baseline on the same test windows.

mod io;

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use io::{
    ingest_ppg_csv, ingest_rr_csv, write_atomic, write_dataset_csv, write_hr_csv, write_ppg_csv, write_rr_csv,
    RATE_TOLERANCE,
};

use crate::amplification::{self, AmplificationRow};
use crate::derive_seed;
use crate::error::{Error, Result};
use crate::hrv::{mape, HrvMetricKind};
use crate::models::{
    bench_inference, build_hrv_dataset, chronological_split, random_search, serialized_size, HyperparamSpace,
    MlpTrainingConfig, ModelKind, TrainedModel,
};
use crate::signal::{Pipeline, PpgSignal, SmoothedHrSeries};
use crate::synth::{generate, Activity, GroundTruth, SynthConfig};

pub const RESULTS_HEADER: &str = "activity,metric,n_s,model,mape_pct,sigproc_mape_pct,model_bytes,latency_us_mean";
pub const TRACE_HEADER: &str = "window_end_s,truth_ms,sigproc_ms,model_ms";

/// A recorded trace pair used in place of a synthetic preset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputTrace {
    pub name: String,
    pub ppg: PathBuf,
    pub rr: PathBuf,
    pub sampling_rate_hz: f64,
}

/// Where a trace comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum TraceSource {
    Synth(SynthConfig),
    Files(InputTrace),
}

impl TraceSource {
    pub fn load(&self) -> Result<(GroundTruth, PpgSignal)> {
        match self {
            TraceSource::Synth(cfg) => generate(cfg),
            TraceSource::Files(input) => Ok((
                ingest_rr_csv(&input.rr)?,
                ingest_ppg_csv(&input.ppg, input.sampling_rate_hz)?,
            )),
        }
    }
}

/// Experiment description, normally read from TOML.
///
/// ```toml
/// output_dir = "out"
/// seed = 42
/// activities = ["sit", "sleep", "office_work"]
/// duration_s = 3600.0
/// metrics = ["rmssd", "sdnn"]
/// lengths_s = [30, 60, 120, 180, 240, 300]
/// models = ["dt", "rf", "knn", "mlp"]
/// search_budget = 10
///
/// [[inputs]]
/// name = "subject1"
/// ppg = "subject1_ppg.csv"
/// rr = "subject1_rr.csv"
/// sampling_rate_hz = 25.0
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub output_dir: PathBuf,
    pub seed: u64,
    /// Synthetic presets to generate.
    pub activities: Vec<Activity>,
    pub duration_s: f64,
    /// Drop additive noise and motion artifacts from the presets.
    pub noiseless: bool,
    pub inputs: Vec<InputTrace>,
    pub metrics: Vec<HrvMetricKind>,
    pub lengths_s: Vec<usize>,
    pub models: Vec<ModelKind>,
    pub search_budget: usize,
    pub stride_s: usize,
    pub train_fraction: f64,
    pub val_fraction: f64,
    /// Timed predictions per model; 0 leaves the latency column empty,
    /// which keeps the results file a pure function of the config.
    pub bench_repetitions: usize,
    pub write_traces: bool,
    pub mlp: MlpTrainingConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            output_dir: PathBuf::from("out"),
            seed: 42,
            activities: Activity::ALL.to_vec(),
            duration_s: 3600.0,
            noiseless: false,
            inputs: Vec::new(),
            metrics: HrvMetricKind::ALL.to_vec(),
            lengths_s: vec![30, 60, 120, 180, 240, 300],
            models: ModelKind::ALL.to_vec(),
            search_budget: 10,
            stride_s: 1,
            train_fraction: 0.8,
            val_fraction: 0.2,
            bench_repetitions: 10_000,
            write_traces: true,
            mlp: MlpTrainingConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidConfig(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if self.activities.is_empty() && self.inputs.is_empty() {
            return fail("at least one activity or input trace is required");
        }
        if self.metrics.is_empty() {
            return fail("at least one metric is required");
        }
        if self.lengths_s.is_empty() {
            return fail("at least one monitoring length is required");
        }
        if self.lengths_s.iter().any(|&n| n < 2) {
            return fail("monitoring lengths must be at least 2 s");
        }
        if self.models.is_empty() {
            return fail("at least one model is required");
        }
        if self.search_budget == 0 {
            return fail("search budget must be at least 1");
        }
        if self.stride_s == 0 {
            return fail("stride must be at least 1 s");
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return fail("train fraction must lie in (0, 1)");
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return fail("validation fraction must lie in (0, 1)");
        }
        if self.bench_repetitions != 0 && self.bench_repetitions < 100 {
            return fail("bench repetitions must be 0 or at least 100");
        }
        if !self.activities.is_empty() && !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return fail("duration must be positive");
        }
        let mut names: Vec<&str> = self.sources_names();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return fail("trace names must be unique");
        }
        self.mlp.validate()
    }

    fn sources_names(&self) -> Vec<&str> {
        self.activities
            .iter()
            .map(|a| a.name())
            .chain(self.inputs.iter().map(|i| i.name.as_str()))
            .collect()
    }

    /// Named trace sources in config order. Preset seeds derive from the
    /// experiment seed and the activity, not from list position.
    pub fn sources(&self) -> Vec<(String, TraceSource)> {
        let synth = self.activities.iter().map(|&a| {
            let index = Activity::ALL.iter().position(|x| *x == a).expect("known activity") as u64;
            let mut cfg = SynthConfig::preset(a, self.duration_s, derive_seed(self.seed, index));
            if self.noiseless {
                cfg = cfg.noiseless();
            }
            (a.name().to_string(), TraceSource::Synth(cfg))
        });
        let files = self
            .inputs
            .iter()
            .map(|i| (i.name.clone(), TraceSource::Files(i.clone())));
        synth.chain(files).collect()
    }
}

/// Coordinates of one experiment cell.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellId {
    pub source: String,
    pub metric: HrvMetricKind,
    pub n_s: usize,
    pub model: ModelKind,
}

impl CellId {
    /// Seed for this cell's search, stable under reordering of the config.
    pub fn seed(&self, base: u64) -> u64 {
        // FNV-1a over the cell name
        let h = self.to_string().bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
            (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
        });
        derive_seed(base, h)
    }

    fn file_stem(&self) -> String {
        format!("{}_{}_{}_{}", self.source, self.metric, self.n_s, self.model)
    }
}

impl fmt::Display for CellId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}s/{}", self.source, self.metric, self.n_s, self.model)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub activity: String,
    pub metric: HrvMetricKind,
    pub n_s: usize,
    pub model: ModelKind,
    pub mape_pct: f64,
    pub sigproc_mape_pct: f64,
    pub model_bytes: usize,
    pub latency_us_mean: Option<f64>,
}

/// Paired per-window estimates on the test split.
#[derive(Debug, Clone, PartialEq)]
pub struct TracePoint {
    pub window_end_s: f64,
    pub truth_ms: f64,
    pub sigproc_ms: f64,
    pub model_ms: f64,
}

#[derive(Debug)]
pub struct CellOutcome {
    pub row: ResultRow,
    pub trace: Vec<TracePoint>,
    pub model: TrainedModel,
}

#[derive(Debug)]
pub struct CellFailure {
    pub cell: CellId,
    pub error: Error,
}

#[derive(Debug, Default)]
pub struct RunReport {
    pub rows: Vec<ResultRow>,
    pub failures: Vec<CellFailure>,
}

/// A trace after the signal-processing chain.
#[derive(Debug, Clone)]
pub struct PreparedTrace {
    pub truth: GroundTruth,
    pub smoothed: SmoothedHrSeries,
}

pub fn prepare_trace(source: &TraceSource) -> Result<PreparedTrace> {
    let (truth, ppg) = source.load()?;
    let smoothed = Pipeline::default().run(&ppg)?;
    Ok(PreparedTrace { truth, smoothed })
}

/// Shared knobs for evaluating one cell.
#[derive(Debug, Clone)]
pub struct CellSettings {
    pub stride_s: usize,
    pub train_fraction: f64,
    pub val_fraction: f64,
    pub search_budget: usize,
    pub bench_repetitions: usize,
    pub space: HyperparamSpace,
    pub mlp: MlpTrainingConfig,
}

impl From<&ExperimentConfig> for CellSettings {
    fn from(cfg: &ExperimentConfig) -> Self {
        Self {
            stride_s: cfg.stride_s,
            train_fraction: cfg.train_fraction,
            val_fraction: cfg.val_fraction,
            search_budget: cfg.search_budget,
            bench_repetitions: cfg.bench_repetitions,
            space: HyperparamSpace::default(),
            mlp: cfg.mlp.clone(),
        }
    }
}

/// Builds, tunes and scores one cell.
pub fn evaluate_cell(trace: &PreparedTrace, cell: &CellId, settings: &CellSettings, seed: u64) -> Result<CellOutcome> {
    let data = build_hrv_dataset(&trace.smoothed, &trace.truth, cell.n_s, cell.metric, settings.stride_s)?;
    let (train, test) = chronological_split(&data, settings.train_fraction)?;
    let search = random_search(
        &train,
        settings.val_fraction,
        cell.model,
        &settings.space,
        settings.search_budget,
        seed,
        &settings.mlp,
    )?;
    let model = search.model;
    let predicted = model.predict_many(test.samples())?;
    let truth = test.labels();
    let sigproc: Vec<f64> = test.samples().iter().map(|s| s.features[cell.n_s]).collect();
    let latency_us_mean = if settings.bench_repetitions > 0 {
        let probes: Vec<Vec<f64>> = test.samples().iter().map(|s| s.features.clone()).collect();
        Some(bench_inference(&model, &probes, settings.bench_repetitions)?.mean_us)
    } else {
        None
    };
    let row = ResultRow {
        activity: cell.source.clone(),
        metric: cell.metric,
        n_s: cell.n_s,
        model: cell.model,
        mape_pct: mape(&predicted, &truth)?,
        sigproc_mape_pct: mape(&sigproc, &truth)?,
        model_bytes: serialized_size(&model),
        latency_us_mean,
    };
    let trace = test
        .samples()
        .iter()
        .zip(&predicted)
        .zip(&sigproc)
        .map(|((s, &m), &r)| TracePoint {
            window_end_s: s.time_s,
            truth_ms: s.label,
            sigproc_ms: r,
            model_ms: m,
        })
        .collect();
    Ok(CellOutcome { row, trace, model })
}

pub fn results_csv(rows: &[ResultRow]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    }
    if rows.is_empty() {
        return Ok(format!("{RESULTS_HEADER}\n").into_bytes());
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

pub fn trace_csv(points: &[TracePoint]) -> Vec<u8> {
    let mut out = format!("{TRACE_HEADER}\n");
    for p in points {
        out.push_str(&format!(
            "{},{},{},{}\n",
            p.window_end_s, p.truth_ms, p.sigproc_ms, p.model_ms
        ));
    }
    out.into_bytes()
}

/// Runs the whole matrix, writing `results.csv` and, when enabled, one trace
/// file per cell under `traces/`. Failing cells are logged and reported;
/// the remaining cells still run.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunReport> {
    cfg.validate()?;
    let settings = CellSettings::from(cfg);
    let sources = cfg.sources();
    let prepared: BTreeMap<String, Result<PreparedTrace>> = sources
        .par_iter()
        .map(|(name, src)| {
            log::info!("preparing trace {name}");
            (name.clone(), prepare_trace(src))
        })
        .collect();

    let mut cells = Vec::new();
    for (name, _) in &sources {
        for &metric in &cfg.metrics {
            for &n_s in &cfg.lengths_s {
                for &model in &cfg.models {
                    cells.push(CellId {
                        source: name.clone(),
                        metric,
                        n_s,
                        model,
                    });
                }
            }
        }
    }

    let outcomes: Vec<(CellId, Result<ResultRow>)> = cells
        .into_par_iter()
        .map(|cell| {
            let result = match &prepared[&cell.source] {
                Err(e) => Err(clone_error(e)),
                Ok(trace) => evaluate_cell(trace, &cell, &settings, cell.seed(cfg.seed)).and_then(|out| {
                    if cfg.write_traces {
                        let path = cfg.output_dir.join("traces").join(format!("{}.csv", cell.file_stem()));
                        write_atomic(&path, &trace_csv(&out.trace))?;
                    }
                    log::info!(
                        "{cell}: compound {:.2}% vs sig-proc {:.2}%",
                        out.row.mape_pct,
                        out.row.sigproc_mape_pct
                    );
                    Ok(out.row)
                }),
            };
            (cell, result)
        })
        .collect();

    let mut report = RunReport::default();
    for (cell, result) in outcomes {
        match result {
            Ok(row) => report.rows.push(row),
            Err(error) => {
                log::error!("{cell} failed: {error}");
                report.failures.push(CellFailure { cell, error });
            }
        }
    }
    write_atomic(&cfg.output_dir.join("results.csv"), &results_csv(&report.rows)?)?;
    Ok(report)
}

/// Errors are not `Clone` (they may wrap I/O errors); this keeps the class
/// and message when one trace failure has to be reported for many cells.
fn clone_error(e: &Error) -> Error {
    use Error::*;
    match e {
        EmptySignal => EmptySignal,
        SignalTooShort { duration_s, required_s } => SignalTooShort {
            duration_s: *duration_s,
            required_s: *required_s,
        },
        TooShort { len, required } => TooShort {
            len: *len,
            required: *required,
        },
        TooFewIntervals { len } => TooFewIntervals { len: *len },
        InvalidInterval { index, value } => InvalidInterval {
            index: *index,
            value: *value,
        },
        LengthMismatch { estimates, truths } => LengthMismatch {
            estimates: *estimates,
            truths: *truths,
        },
        ZeroTruth { index } => ZeroTruth { index: *index },
        InvalidTarget { target_pct } => InvalidTarget {
            target_pct: *target_pct,
        },
        InvalidConfig(m) => InvalidConfig(m.clone()),
        TraceTooShort { available, required } => TraceTooShort {
            available: *available,
            required: *required,
        },
        EmptyWindow { window_end_s } => EmptyWindow {
            window_end_s: *window_end_s,
        },
        TooFewSamples { len } => TooFewSamples { len: *len },
        EmptyDataset => EmptyDataset,
        KTooLarge { k, available } => KTooLarge {
            k: *k,
            available: *available,
        },
        InvalidHyperparams(m) => InvalidHyperparams(m.clone()),
        DivergedLoss { epoch } => DivergedLoss { epoch: *epoch },
        FeatureLengthMismatch { expected, actual } => FeatureLengthMismatch {
            expected: *expected,
            actual: *actual,
        },
        SearchFailed => SearchFailed,
        Decode(m) => Decode(m.clone()),
        Parse { line, message } => Parse {
            line: *line,
            message: message.clone(),
        },
        NonMonotoneTime { line } => NonMonotoneTime { line: *line },
        RateMismatch {
            inferred_hz,
            declared_hz,
        } => RateMismatch {
            inferred_hz: *inferred_hz,
            declared_hz: *declared_hz,
        },
        Io(io) => Io(std::io::Error::new(io.kind(), io.to_string())),
    }
}

/// Amplification table over the reference base trace, written as CSV.
pub fn run_amplification(levels_pct: &[f64], trials: usize, seed: u64, out: &Path) -> Result<Vec<AmplificationRow>> {
    let base = amplification::reference_base_trace(seed)?;
    let rows = amplification::amplification_table(&base, levels_pct, trials, amplification::REFERENCE_WINDOW_S, seed)?;
    let mut buf = Vec::new();
    amplification::write_csv(&rows, &mut buf)?;
    write_atomic(out, &buf)?;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        let cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        assert_eq!(ExperimentConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn partial_toml_uses_defaults() {
        let cfg = ExperimentConfig::from_toml("activities = [\"office_work\"]\nmodels = [\"dt\"]\nlengths_s = [300]\n")
            .unwrap();
        assert_eq!(cfg.activities, vec![Activity::OfficeWork]);
        assert_eq!(cfg.search_budget, 10);
        assert!(ExperimentConfig::from_toml("bogus = 1").is_err());
    }

    #[test]
    fn empty_axes_are_rejected() {
        for cfg in [
            ExperimentConfig {
                models: vec![],
                ..Default::default()
            },
            ExperimentConfig {
                metrics: vec![],
                ..Default::default()
            },
            ExperimentConfig {
                lengths_s: vec![],
                ..Default::default()
            },
            ExperimentConfig {
                activities: vec![],
                ..Default::default()
            },
            ExperimentConfig {
                bench_repetitions: 50,
                ..Default::default()
            },
        ] {
            assert!(matches!(cfg.validate(), Err(Error::InvalidConfig(_))));
        }
    }

    #[test]
    fn zero_models_fail_before_any_work() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig {
            models: vec![],
            output_dir: dir.path().join("out"),
            ..Default::default()
        };
        assert!(matches!(run_experiment(&cfg), Err(Error::InvalidConfig(_))));
        assert!(!dir.path().join("out").exists());
    }

    #[test]
    fn cell_seeds_differ() {
        let a = CellId {
            source: "sit".into(),
            metric: HrvMetricKind::Rmssd,
            n_s: 60,
            model: ModelKind::Dt,
        };
        let b = CellId { n_s: 120, ..a.clone() };
        assert_ne!(a.seed(1), b.seed(1));
        assert_eq!(a.seed(1), a.clone().seed(1));
    }

    #[test]
    fn results_header_matches() {
        let row = ResultRow {
            activity: "sit".into(),
            metric: HrvMetricKind::Sdnn,
            n_s: 30,
            model: ModelKind::Knn,
            mape_pct: 1.5,
            sigproc_mape_pct: 20.0,
            model_bytes: 100,
            latency_us_mean: None,
        };
        let text = String::from_utf8(results_csv(&[row]).unwrap()).unwrap();
        assert_eq!(text, format!("{RESULTS_HEADER}\nsit,sdnn,30,knn,1.5,20.0,100,\n"));
        assert_eq!(
            String::from_utf8(results_csv(&[]).unwrap()).unwrap(),
            format!("{RESULTS_HEADER}\n")
        );
    }
}
