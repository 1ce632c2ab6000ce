use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use ppg_hrv::experiment::{
    self, evaluate_cell, prepare_trace, write_atomic, write_hr_csv, write_ppg_csv, write_rr_csv, CellId, CellSettings,
    ExperimentConfig, InputTrace, PreparedTrace, TraceSource,
};
use ppg_hrv::hrv::mape;
use ppg_hrv::models::{self, build_hrv_dataset, chronological_split, ModelKind};
use ppg_hrv::signal::Pipeline;
use ppg_hrv::synth::generate;
use ppg_hrv::{Activity, ErrorClass, HrvMetricKind, SynthConfig};
use rand::{Rng, SeedableRng};

/// PPG heart-rate-variability toolkit.
#[derive(Parser, Debug)]
#[command(name = "ppg-hrv", version, about)]
struct Cli {
    /// TOML experiment config; command-line flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic PPG trace with its RR ground truth.
    Synth {
        #[arg(long)]
        activity: Option<Activity>,
        #[arg(long)]
        duration: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Disable additive noise and motion artifacts.
        #[arg(long)]
        noiseless: bool,
        /// Directory receiving ppg.csv and rr.csv.
        #[arg(long)]
        out: PathBuf,
    },
    /// Turn a PPG CSV into one smoothed heart rate per second.
    Process {
        #[arg(long)]
        ppg: PathBuf,
        #[arg(long)]
        rate: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Tune one model by random search and save it.
    Train {
        #[command(flatten)]
        cell: CellArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a saved model against the sig-proc baseline on the test split.
    Eval {
        #[command(flatten)]
        trace: TraceArgs,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        metric: Option<HrvMetricKind>,
        /// Also write the per-window estimates here.
        #[arg(long)]
        trace_out: Option<PathBuf>,
    },
    /// Run the full experiment matrix from the config.
    Run {
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        budget: Option<usize>,
        /// Timed predictions per model; 0 disables latency measurement.
        #[arg(long)]
        bench_reps: Option<usize>,
    },
    /// RR-to-HRV error amplification table.
    Amplify {
        #[arg(long, value_delimiter = ',', default_values_t = [0.0, 1.0, 2.0, 3.0, 4.0, 5.0])]
        levels: Vec<f64>,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Time single predictions of a saved model.
    Bench {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        reps: usize,
        #[arg(long)]
        seed: Option<u64>,
    },
}

/// Trace selection: a synthetic preset, or recorded PPG and RR files.
#[derive(Args, Debug)]
struct TraceArgs {
    #[arg(long, conflicts_with_all = ["ppg", "rr"])]
    activity: Option<Activity>,
    #[arg(long)]
    duration: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    noiseless: bool,
    #[arg(long, requires_all = ["rr", "rate"])]
    ppg: Option<PathBuf>,
    #[arg(long, requires = "ppg")]
    rr: Option<PathBuf>,
    #[arg(long)]
    rate: Option<f64>,
}

#[derive(Args, Debug)]
struct CellArgs {
    #[command(flatten)]
    trace: TraceArgs,
    #[arg(long)]
    metric: Option<HrvMetricKind>,
    /// Monitoring length in seconds.
    #[arg(long)]
    length: Option<usize>,
    #[arg(long)]
    model: Option<ModelKind>,
    #[arg(long)]
    budget: Option<usize>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    match e.chain().find_map(|c| c.downcast_ref::<ppg_hrv::Error>()) {
        Some(err) => match err.class() {
            ErrorClass::Config => 1,
            ErrorClass::Data => 2,
            ErrorClass::Internal => 3,
        },
        None if e.downcast_ref::<ConfigError>().is_some() => 1,
        None => 3,
    }
}

#[derive(Debug)]
struct ConfigError(String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn config_error(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    match cli.command {
        Command::Synth {
            activity,
            duration,
            seed,
            noiseless,
            out,
        } => {
            let trace = TraceArgs {
                activity,
                duration,
                seed,
                noiseless,
                ppg: None,
                rr: None,
                rate: None,
            };
            let TraceSource::Synth(synth) = trace_source(&trace, &cfg)? else {
                unreachable!("no files given");
            };
            synth_cmd(&synth, &out)
        }
        Command::Process { ppg, rate, out } => {
            let signal = experiment::ingest_ppg_csv(&ppg, rate)?;
            let smoothed = Pipeline::default().run(&signal)?;
            let mut buf = Vec::new();
            write_hr_csv(&smoothed, &mut buf)?;
            write_atomic(&out, &buf)?;
            println!("{} smoothed heart rates written to {}", smoothed.len(), out.display());
            Ok(())
        }
        Command::Train { cell, out } => train_cmd(&cell, &cfg, &out),
        Command::Eval {
            trace,
            model,
            metric,
            trace_out,
        } => eval_cmd(&trace, &cfg, &model, metric, trace_out.as_deref()),
        Command::Run {
            out,
            seed,
            budget,
            bench_reps,
        } => {
            let mut cfg = cfg;
            if let Some(out) = out {
                cfg.output_dir = out;
            }
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            if let Some(budget) = budget {
                cfg.search_budget = budget;
            }
            if let Some(reps) = bench_reps {
                cfg.bench_repetitions = reps;
            }
            run_cmd(&cfg)
        }
        Command::Amplify {
            levels,
            trials,
            seed,
            out,
        } => {
            let rows = experiment::run_amplification(&levels, trials, seed.unwrap_or(cfg.seed), &out)?;
            println!("{:>8} {:>10} {:>10}", "rr_mape", "rmssd_mape", "sdnn_mape");
            for r in rows {
                println!(
                    "{:>8.2} {:>10.3} {:>10.3}",
                    r.rr_mape_pct, r.rmssd_mape_pct, r.sdnn_mape_pct
                );
            }
            Ok(())
        }
        Command::Bench { model, reps, seed } => bench_cmd(&model, reps, seed.unwrap_or(cfg.seed)),
    }
}

fn trace_source(args: &TraceArgs, cfg: &ExperimentConfig) -> anyhow::Result<TraceSource> {
    if let (Some(ppg), Some(rr)) = (&args.ppg, &args.rr) {
        let rate = args.rate.ok_or_else(|| config_error("--rate is required with --ppg"))?;
        return Ok(TraceSource::Files(InputTrace {
            name: "input".to_string(),
            ppg: ppg.clone(),
            rr: rr.clone(),
            sampling_rate_hz: rate,
        }));
    }
    let overridden = ExperimentConfig {
        activities: match args.activity {
            Some(a) => vec![a],
            None => cfg.activities.clone(),
        },
        duration_s: args.duration.unwrap_or(cfg.duration_s),
        seed: args.seed.unwrap_or(cfg.seed),
        noiseless: args.noiseless || cfg.noiseless,
        ..cfg.clone()
    };
    if args.activity.is_none() && overridden.activities.is_empty() {
        if let Some(first) = cfg.inputs.first() {
            return Ok(TraceSource::Files(first.clone()));
        }
        return Err(config_error("no trace selected: pass --activity or --ppg/--rr/--rate"));
    }
    let (_, source) = overridden.sources().into_iter().next().expect("at least one activity");
    if let TraceSource::Synth(s) = &source {
        s.validate()?;
    }
    Ok(source)
}

fn synth_cmd(cfg: &SynthConfig, out: &Path) -> anyhow::Result<()> {
    let (gt, ppg) = generate(cfg)?;
    let mut buf = Vec::new();
    write_ppg_csv(&ppg, &mut buf)?;
    write_atomic(&out.join("ppg.csv"), &buf)?;
    buf.clear();
    write_rr_csv(&gt, &mut buf)?;
    write_atomic(&out.join("rr.csv"), &buf)?;
    println!(
        "{} samples at {} Hz and {} beats written to {}",
        ppg.samples.len(),
        ppg.sampling_rate_hz,
        gt.beat_times_s.len(),
        out.display()
    );
    Ok(())
}

fn first_or<T: Copy>(flag: Option<T>, values: &[T], what: &str) -> anyhow::Result<T> {
    flag.or_else(|| values.first().copied())
        .ok_or_else(|| config_error(format!("no {what} given")))
}

fn train_cmd(args: &CellArgs, cfg: &ExperimentConfig, out: &Path) -> anyhow::Result<()> {
    let mut settings = CellSettings::from(cfg);
    if let Some(budget) = args.budget {
        if budget == 0 {
            return Err(config_error("--budget must be at least 1"));
        }
        settings.search_budget = budget;
    }
    settings.bench_repetitions = 0;
    let cell = CellId {
        source: "cli".to_string(),
        metric: first_or(args.metric, &cfg.metrics, "metric")?,
        n_s: first_or(args.length, &cfg.lengths_s, "monitoring length")?,
        model: first_or(args.model, &cfg.models, "model")?,
    };
    let trace = prepare(&args.trace, cfg)?;
    let outcome = evaluate_cell(&trace, &cell, &settings, cell.seed(args.trace.seed.unwrap_or(cfg.seed)))
        .with_context(|| format!("training {cell}"))?;
    write_atomic(out, &models::encode(&outcome.model))?;
    println!("model     {}", outcome.model.meta().hyperparams);
    println!("bytes     {}", outcome.row.model_bytes);
    println!(
        "test MAPE {:.3}% (sig-proc only {:.3}%)",
        outcome.row.mape_pct, outcome.row.sigproc_mape_pct
    );
    Ok(())
}

fn prepare(args: &TraceArgs, cfg: &ExperimentConfig) -> anyhow::Result<PreparedTrace> {
    Ok(prepare_trace(&trace_source(args, cfg)?)?)
}

fn eval_cmd(
    args: &TraceArgs,
    cfg: &ExperimentConfig,
    model_path: &Path,
    metric: Option<HrvMetricKind>,
    trace_out: Option<&Path>,
) -> anyhow::Result<()> {
    let bytes = fs::read(model_path).with_context(|| format!("reading {}", model_path.display()))?;
    let model = models::decode(&bytes)?;
    let metric = first_or(metric, &cfg.metrics, "metric")?;
    let n_s = model.n_features() - 1;
    let trace = prepare(args, cfg)?;
    let data = build_hrv_dataset(&trace.smoothed, &trace.truth, n_s, metric, cfg.stride_s)?;
    let (_, test) = chronological_split(&data, cfg.train_fraction)?;
    let predicted = model.predict_many(test.samples())?;
    let sigproc: Vec<f64> = test.samples().iter().map(|s| s.features[n_s]).collect();
    let truth = test.labels();
    println!("windows   {}", test.len());
    println!("compound  {:.3}%", mape(&predicted, &truth)?);
    println!("sig-proc  {:.3}%", mape(&sigproc, &truth)?);
    if let Some(path) = trace_out {
        let points: Vec<_> = test
            .samples()
            .iter()
            .zip(&predicted)
            .map(|(s, &m)| experiment::TracePoint {
                window_end_s: s.time_s,
                truth_ms: s.label,
                sigproc_ms: s.features[n_s],
                model_ms: m,
            })
            .collect();
        write_atomic(path, &experiment::trace_csv(&points))?;
    }
    Ok(())
}

fn run_cmd(cfg: &ExperimentConfig) -> anyhow::Result<()> {
    let report = experiment::run_experiment(cfg)?;
    println!("{}", experiment::RESULTS_HEADER.replace(',', "\t"));
    for r in &report.rows {
        println!(
            "{}\t{}\t{}\t{}\t{:.3}\t{:.3}\t{}\t{}",
            r.activity,
            r.metric,
            r.n_s,
            r.model,
            r.mape_pct,
            r.sigproc_mape_pct,
            r.model_bytes,
            r.latency_us_mean.map_or(String::new(), |l| format!("{l:.3}"))
        );
    }
    println!("results written to {}", cfg.output_dir.join("results.csv").display());
    if let Some(first) = report.failures.into_iter().next() {
        return Err(anyhow::Error::new(first.error).context(format!("cell {} failed", first.cell)));
    }
    Ok(())
}

fn bench_cmd(model_path: &Path, reps: usize, seed: u64) -> anyhow::Result<()> {
    let bytes = fs::read(model_path).with_context(|| format!("reading {}", model_path.display()))?;
    let model = models::decode(&bytes)?;
    if reps < 100 {
        bail!(config_error("--reps must be at least 100"));
    }
    // heart-rate-like probes; the last slot holds a plausible rough HRV
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let probes: Vec<Vec<f64>> = (0..256)
        .map(|_| {
            let mut p: Vec<f64> = (0..model.n_features()).map(|_| rng.random_range(50.0..110.0)).collect();
            if let Some(last) = p.last_mut() {
                *last = rng.random_range(1.0..80.0);
            }
            p
        })
        .collect();
    let stats = models::bench_inference(&model, &probes, reps)?;
    println!("model  {}", model.meta().hyperparams);
    println!("reps   {}", stats.repetitions);
    println!("min    {:.3} us", stats.min_us);
    println!("mean   {:.3} us", stats.mean_us);
    println!("p99    {:.3} us", stats.p99_us);
    Ok(())
}
