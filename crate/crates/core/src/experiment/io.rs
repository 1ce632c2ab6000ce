//! CSV exchange formats.
//!
//! | file      | header                                      |
//! |-----------|---------------------------------------------|
//! | PPG       | `time_s,value`                              |
//! | RR        | `beat_time_s,rr_ms` (beat closing the interval) |
//! | HR        | `time_s,hr_bpm`                             |
//! | dataset   | `window_end_time_s,f0..f{d-1},label`        |
//! | results   | see [`super::RESULTS_HEADER`]               |
//! | trace     | see [`super::TRACE_HEADER`]                 |
//!
//! Reals are written in shortest round-trip form, so reading a file back
//! reproduces the in-memory values exactly.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::hrv::RrSeries;
use crate::models::Dataset;
use crate::signal::{PpgSignal, SmoothedHrSeries};
use crate::synth::GroundTruth;

/// Maximum relative gap between the inferred and declared sampling rates.
pub const RATE_TOLERANCE: f64 = 0.01;

/// Writes to `<path>.tmp` and renames over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = Path::new(&tmp);
    {
        let mut f = fs::File::create(tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(tmp, path)?;
    Ok(())
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Parse {
            line,
            message: format!("{other:?}"),
        },
    }
}

/// Reads a two-column numeric CSV with the given header, returning
/// `(line, a, b)` per row. Empty second fields parse as NaN.
fn read_pairs(path: &Path, header: [&str; 2]) -> Result<Vec<(u64, f64, f64)>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(csv_error)?;
    let found = reader.headers().map_err(csv_error)?.clone();
    if found.iter().collect::<Vec<_>>() != header {
        return Err(Error::Parse {
            line: 1,
            message: format!(
                "expected header `{}`, found `{}`",
                header.join(","),
                found.iter().collect::<Vec<_>>().join(",")
            ),
        });
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(csv_error)?;
        let line = record.position().map_or(0, |p| p.line());
        let field = |i: usize| -> Result<f64> {
            let raw = record.get(i).unwrap_or("");
            let v: f64 = raw.parse().map_err(|_| Error::Parse {
                line,
                message: format!("`{raw}` is not a number"),
            })?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::Parse {
                    line,
                    message: format!("non-finite value `{raw}`"),
                })
            }
        };
        rows.push((line, field(0)?, field(1)?));
    }
    Ok(rows)
}

/// Loads `time_s,value` rows. Times must increase strictly and their median
/// spacing must match `declared_rate_hz` within 1%.
pub fn ingest_ppg_csv(path: &Path, declared_rate_hz: f64) -> Result<PpgSignal> {
    let rows = read_pairs(path, ["time_s", "value"])?;
    if rows.len() < 2 {
        return Err(Error::Parse {
            line: rows.first().map_or(1, |r| r.0),
            message: format!("{} samples; at least 2 are needed", rows.len()),
        });
    }
    if let Some(w) = rows.windows(2).find(|w| !(w[1].1 > w[0].1)) {
        return Err(Error::NonMonotoneTime { line: w[1].0 });
    }
    let mut deltas: Vec<f64> = rows.windows(2).map(|w| w[1].1 - w[0].1).collect();
    deltas.sort_by(f64::total_cmp);
    let mid = deltas.len() / 2;
    let median = if deltas.len() % 2 == 1 {
        deltas[mid]
    } else {
        0.5 * (deltas[mid - 1] + deltas[mid])
    };
    let inferred_hz = 1.0 / median;
    if !((inferred_hz - declared_rate_hz).abs() <= RATE_TOLERANCE * declared_rate_hz) {
        return Err(Error::RateMismatch {
            inferred_hz,
            declared_hz: declared_rate_hz,
        });
    }
    PpgSignal::new(declared_rate_hz, rows.iter().map(|r| r.2).collect(), rows[0].1)
}

/// Loads `beat_time_s,rr_ms` rows. Each row names the beat that closes an
/// interval; the opening beat of the first interval is `t - rr / 1000`.
pub fn ingest_rr_csv(path: &Path) -> Result<GroundTruth> {
    let rows = read_pairs(path, ["beat_time_s", "rr_ms"])?;
    let Some(first) = rows.first() else {
        return Err(Error::Parse {
            line: 1,
            message: "no beats".to_string(),
        });
    };
    if let Some(w) = rows.windows(2).find(|w| !(w[1].1 > w[0].1)) {
        return Err(Error::NonMonotoneTime { line: w[1].0 });
    }
    if let Some(bad) = rows.iter().find(|r| !(r.2 > 0.0)) {
        return Err(Error::Parse {
            line: bad.0,
            message: format!("RR interval must be positive, got {}", bad.2),
        });
    }
    let mut times = Vec::with_capacity(rows.len() + 1);
    times.push(first.1 - first.2 / 1000.0);
    times.extend(rows.iter().map(|r| r.1));
    let rr = RrSeries::new(rows.iter().map(|r| r.2).collect())?;
    GroundTruth::new(rr, times).map_err(|e| Error::Parse {
        line: first.0,
        message: e.to_string(),
    })
}

pub fn write_ppg_csv<W: io::Write>(signal: &PpgSignal, mut out: W) -> Result<()> {
    writeln!(out, "time_s,value")?;
    for (i, v) in signal.samples.iter().enumerate() {
        writeln!(out, "{},{}", signal.time_of(i), v)?;
    }
    Ok(())
}

pub fn write_rr_csv<W: io::Write>(gt: &GroundTruth, mut out: W) -> Result<()> {
    writeln!(out, "beat_time_s,rr_ms")?;
    for (t, rr) in gt.beat_times_s[1..].iter().zip(gt.rr.intervals_ms()) {
        writeln!(out, "{t},{rr}")?;
    }
    Ok(())
}

/// One row per smoothed estimate, stamped with the start of its second.
pub fn write_hr_csv<W: io::Write>(shr: &SmoothedHrSeries, mut out: W) -> Result<()> {
    writeln!(out, "time_s,hr_bpm")?;
    for (i, v) in shr.values().iter().enumerate() {
        writeln!(out, "{},{}", shr.start_time_s() + i as f64, v)?;
    }
    Ok(())
}

pub fn write_dataset_csv<W: io::Write>(d: &Dataset, mut out: W) -> Result<()> {
    write!(out, "window_end_time_s")?;
    for i in 0..d.n_features() {
        write!(out, ",f{i}")?;
    }
    writeln!(out, ",label")?;
    for s in d.samples() {
        write!(out, "{}", s.time_s)?;
        for f in &s.features {
            write!(out, ",{f}")?;
        }
        writeln!(out, ",{}", s.label)?;
    }
    Ok(())
}
