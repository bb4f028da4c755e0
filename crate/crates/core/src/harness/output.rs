//! On-disk layout of a run.
//!
//! ```text
//! OUT/manifest.json      configuration echo, seeds, row counts
//! OUT/summary.json       aggregates across replications
//! OUT/metadata.json      wall-clock timestamp (the only non-reproducible file)
//! OUT/rep-NNNN/steps.csv t, forecaster, forecast, x, b1.., a1..
//! OUT/rep-NNNN/...       posterior, switch, period and report files
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::config::{Experiment, ExperimentConfig};
use crate::harness::experiment::{summarize_replication, ExperimentSummary, ReplicationSummary, RunRecord};
use crate::harness::rng::RNG_NAME;
use crate::scoring::{forecast_gap_series, ConvergenceReport, ScoreReport};
use crate::srf::QOccupancy;

pub const STEPS_FILE: &str = "steps.csv";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const SUMMARY_FILE: &str = "summary.json";
pub const METADATA_FILE: &str = "metadata.json";
pub const SCORE_FILE: &str = "score.json";

/// Decimal rendering with 12 significant digits.
pub fn fmt_num(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    let exponent = v.abs().log10().floor() as i32;
    let decimals = (11 - exponent).max(0) as usize;
    format!("{v:.decimals$}")
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).map_err(|e| csv_error(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Integrity(format!("{}: {other:?}", path.display())),
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Integrity(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Integrity(format!("{}: {e}", path.display())))
}

pub fn replication_dir(out: &Path, replication: u64) -> PathBuf {
    out.join(format!("rep-{replication:04}"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub replication: u64,
    pub seed: u64,
    pub dir: String,
    pub steps_rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub rng: String,
    pub master_seed: u64,
    pub horizon: usize,
    pub forecasters: Vec<String>,
    pub pre_variables: usize,
    pub post_variables: usize,
    pub replications: Vec<ManifestEntry>,
    pub config: ExperimentConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct PairJson {
    current: String,
    alternate: String,
    steps: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct StateJson {
    index: u64,
    block: u64,
    current: String,
    alternate: String,
    count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct OccupancyJson {
    version: u32,
    pair_steps: Vec<PairJson>,
    k: Option<usize>,
    periods: Option<u64>,
    states: Vec<StateJson>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedConvergence {
    pub a: String,
    pub b: String,
    pub report: ConvergenceReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceFile {
    pub version: u32,
    pub comparisons: Vec<NamedConvergence>,
}

fn steps_header(exp: &Experiment) -> Vec<String> {
    let schema = exp.space.schema();
    let mut header: Vec<String> = ["t", "forecaster", "forecast", "x"].iter().map(|s| s.to_string()).collect();
    header.extend((1..=schema.q()).map(|i| format!("b{i}")));
    header.extend((1..=schema.r()).map(|i| format!("a{i}")));
    header
}

/// Writes the per-replication files and returns that replication's summary.
pub fn write_replication(out: &Path, exp: &Experiment, record: &RunRecord) -> Result<(ManifestEntry, ReplicationSummary)> {
    let dir = replication_dir(out, record.replication);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let names = &exp.space;
    let model_name = |id: crate::ModelId| names.spec(id).name.clone();

    let path = dir.join(STEPS_FILE);
    let mut w = csv_writer(&path)?;
    w.write_record(steps_header(exp)).map_err(|e| csv_error(&path, e))?;
    let series = record.series();
    let mut rows = 0;
    for (t, obs) in record.stream.iter().enumerate() {
        for (name, f) in &series {
            let mut row = vec![(t + 1).to_string(), name.to_string(), fmt_num(f[t]), (obs.x as u8).to_string()];
            row.extend(obs.b.iter().map(|v| v.to_string()));
            row.extend(obs.a.iter().map(|v| v.to_string()));
            w.write_record(&row).map_err(|e| csv_error(&path, e))?;
            rows += 1;
        }
    }
    w.flush().map_err(|e| Error::io(&path, e))?;

    if let Some(m) = &record.mixture {
        if !m.posteriors.is_empty() {
            let path = dir.join("mixture_posterior.csv");
            let mut w = csv_writer(&path)?;
            let mut header = vec!["t".to_string()];
            header.extend(exp.space.models().iter().map(|m| m.name.clone()));
            w.write_record(&header).map_err(|e| csv_error(&path, e))?;
            for (t, post) in m.posteriors.iter().enumerate() {
                let mut row = vec![(t + 1).to_string()];
                row.extend(post.iter().map(|&v| fmt_num(v)));
                w.write_record(&row).map_err(|e| csv_error(&path, e))?;
            }
            w.flush().map_err(|e| Error::io(&path, e))?;
        }
    }

    if let Some(sr) = &record.sr {
        let path = dir.join("sr_switches.csv");
        let mut w = csv_writer(&path)?;
        w.write_record(["t", "from", "to", "log_score_diff"]).map_err(|e| csv_error(&path, e))?;
        for s in &sr.switches {
            w.write_record([s.t.to_string(), model_name(s.from), model_name(s.to), fmt_num(s.log_score_diff)])
                .map_err(|e| csv_error(&path, e))?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
    }

    if let Some(srf) = &record.srf {
        let path = dir.join("srf_periods.csv");
        let mut w = csv_writer(&path)?;
        w.write_record(["n", "k", "current", "alternate", "log_lik_current", "log_lik_alternate", "chosen"])
            .map_err(|e| csv_error(&path, e))?;
        for d in &srf.decisions {
            w.write_record([
                d.n.to_string(),
                d.k.to_string(),
                model_name(d.current),
                model_name(d.alternate),
                fmt_num(d.log_lik_current),
                fmt_num(d.log_lik_alternate),
                model_name(d.chosen),
            ])
            .map_err(|e| csv_error(&path, e))?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
        write_json(&dir.join("srf_occupancy.json"), &occupancy_json(exp, &srf.pair_steps, srf.q_occupancy.as_ref()))?;
    }

    let realized: Vec<(&str, Vec<f64>)> = series.iter().map(|(n, f)| (*n, record.realized(f))).collect();
    write_json(&dir.join(SCORE_FILE), &ScoreReport::from_series(&realized)?)?;

    let mut comparisons = Vec::new();
    for (name, f) in series.iter().skip(1) {
        comparisons.push(NamedConvergence {
            a: name.to_string(),
            b: "truth".into(),
            report: forecast_gap_series(f, &record.truth, &exp.run.epsilons, exp.run.windows)?,
        });
    }
    if let (Some(sr), Some(m)) = (&record.sr, &record.mixture) {
        comparisons.push(NamedConvergence {
            a: "sr".into(),
            b: "mixture".into(),
            report: forecast_gap_series(&sr.forecasts, &m.forecasts, &exp.run.epsilons, exp.run.windows)?,
        });
    }
    write_json(&dir.join("convergence.json"), &ConvergenceFile { version: 1, comparisons })?;

    let entry = ManifestEntry {
        replication: record.replication,
        seed: record.seed,
        dir: dir.file_name().unwrap().to_string_lossy().into_owned(),
        steps_rows: rows,
    };
    Ok((entry, summarize_replication(exp, record)?))
}

fn occupancy_json(exp: &Experiment, pairs: &[crate::srf::PairOccupancy], q: Option<&QOccupancy>) -> OccupancyJson {
    let name = |id: crate::ModelId| exp.space.spec(id).name.clone();
    OccupancyJson {
        version: 1,
        pair_steps: pairs
            .iter()
            .map(|p| PairJson { current: name(p.current), alternate: name(p.alternate), steps: p.steps })
            .collect(),
        k: q.map(|q| q.codec.k),
        periods: q.map(|q| q.periods),
        states: q
            .map(|q| {
                q.counts
                    .iter()
                    .map(|(&index, &count)| {
                        let (block, c, a) = q.codec.decode(index);
                        StateJson { index, block, current: name(c), alternate: name(a), count }
                    })
                    .collect()
            })
            .unwrap_or_default(),
    }
}

pub fn write_run_files(
    out: &Path,
    exp: &Experiment,
    config: &ExperimentConfig,
    master: u64,
    mut entries: Vec<ManifestEntry>,
    summary: &ExperimentSummary,
) -> Result<()> {
    entries.sort_by_key(|e| e.replication);
    let manifest = Manifest {
        version: 1,
        rng: RNG_NAME.into(),
        master_seed: master,
        horizon: exp.run.horizon,
        forecasters: exp.forecaster_names().iter().map(|s| s.to_string()).collect(),
        pre_variables: exp.space.schema().q(),
        post_variables: exp.space.schema().r(),
        replications: entries,
        config: config.clone(),
    };
    write_json(&out.join(MANIFEST_FILE), &manifest)?;
    write_json(&out.join(SUMMARY_FILE), summary)?;
    let secs = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or_default();
    write_json(&out.join(METADATA_FILE), &BTreeMap::from([("created_unix_seconds", secs)]))
}

/// A `steps.csv` read back and validated.
#[derive(Debug, Clone, PartialEq)]
pub struct StoredSteps {
    pub forecasters: Vec<String>,
    /// `forecasts[i][t]` for forecaster `i`.
    pub forecasts: Vec<Vec<f64>>,
    pub x: Vec<bool>,
}

impl StoredSteps {
    pub fn series(&self, name: &str) -> Result<&[f64]> {
        self.forecasters
            .iter()
            .position(|n| n == name)
            .map(|i| self.forecasts[i].as_slice())
            .ok_or_else(|| Error::NotApplicable(format!("forecaster `{name}` is not in this run")))
    }

    pub fn realized(&self, name: &str) -> Result<Vec<f64>> {
        Ok(self.series(name)?.iter().zip(&self.x).map(|(&p, &x)| crate::prob_of_realized(p, x)).collect())
    }
}

pub fn read_steps(path: &Path, manifest: &Manifest) -> Result<StoredSteps> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let bad = |msg: String| Error::Integrity(format!("{}: {msg}", path.display()));
    let header: Vec<String> = reader.headers().map_err(|e| csv_error(path, e))?.iter().map(String::from).collect();
    let expected_width = 4 + manifest.pre_variables + manifest.post_variables;
    if header.len() != expected_width || header[..4] != ["t", "forecaster", "forecast", "x"] {
        return Err(bad(format!("unexpected header {header:?}")));
    }
    let names = &manifest.forecasters;
    let mut forecasts = vec![Vec::with_capacity(manifest.horizon); names.len()];
    let mut x = Vec::with_capacity(manifest.horizon);
    let mut rows = 0usize;
    for (i, row) in reader.records().enumerate() {
        let row = row.map_err(|e| csv_error(path, e))?;
        let line = i + 2;
        if row.len() != expected_width {
            return Err(bad(format!("line {line} has {} fields", row.len())));
        }
        let t = i / names.len() + 1;
        let slot = i % names.len();
        if row[0] != t.to_string() || row[1] != names[slot] {
            return Err(bad(format!("line {line} is `{},{}`, expected `{t},{}`", &row[0], &row[1], names[slot])));
        }
        let p: f64 = row[2].parse().map_err(|_| bad(format!("line {line}: bad forecast `{}`", &row[2])))?;
        if !(0.0..=1.0).contains(&p) {
            return Err(bad(format!("line {line}: forecast {p} outside [0, 1]")));
        }
        let xv = match &row[3] {
            "0" => false,
            "1" => true,
            other => return Err(bad(format!("line {line}: outcome `{other}` is not 0 or 1"))),
        };
        if slot == 0 {
            x.push(xv);
        } else if x[t - 1] != xv {
            return Err(bad(format!("line {line}: outcome disagrees with the other rows of step {t}")));
        }
        forecasts[slot].push(p);
        rows += 1;
    }
    let expected = manifest.horizon * names.len();
    if rows != expected {
        return Err(bad(format!("{rows} data rows, expected {expected}")));
    }
    Ok(StoredSteps { forecasters: names.clone(), forecasts, x })
}
