//! Running a configuration and writing its CSV series and JSON summary.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use memstab_core::{decay_rate_fit, run, NormSeries, SeriesKind};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, ModeKind};
use crate::error::{AppError, Result};

pub const CSV_HEADER: [&str; 5] = ["t", "norm_y", "norm_err", "norm_yhat", "norm_input"];

/// Fitted rates and final values of one run, with the configuration echoed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub config: ExperimentConfig,
    pub steps: usize,
    pub k: f64,
    pub nodes: usize,
    /// Fit window `[t_a, t_b]`.
    pub window: [f64; 2],
    /// Decay rate of `ln |y|` (negative means growth); absent when the fit is undefined.
    pub rate_y: Option<f64>,
    pub rate_err: Option<f64>,
    pub final_norm_y: f64,
    pub final_norm_err: f64,
    pub final_norm_yhat: f64,
    pub final_norm_input: f64,
    pub max_norm_err: f64,
    pub wall_time_s: f64,
}

/// Default fit window: the second half of the run.
pub fn tail_window(t_final: f64) -> [f64; 2] {
    [0.5 * t_final, t_final]
}

/// Rate of `which` over `window`, or `None` when the fit is not defined.
pub fn fitted_rate(series: &NormSeries, which: SeriesKind, window: [f64; 2]) -> Option<f64> {
    decay_rate_fit(series, which, window[0], window[1]).ok().map(|(r, _)| r)
}

/// Runs `config` in memory.
pub fn simulate(config: &ExperimentConfig) -> Result<(NormSeries, RunSummary)> {
    config.validate()?;
    let start = Instant::now();
    let mesh = config.mesh()?;
    let layout = config.layout()?;
    let scenario = config.scenario(&mesh)?;
    let series = run(&scenario, &mesh, Some(&layout))?;
    let wall = start.elapsed().as_secs_f64();
    let window = tail_window(config.t_final);
    let last = |kind: SeriesKind| *series.get(kind).last().expect("at least the initial sample");
    let summary = RunSummary {
        config: config.clone(),
        steps: scenario.num_steps(),
        k: scenario.k,
        nodes: mesh.num_nodes(),
        window,
        rate_y: fitted_rate(&series, SeriesKind::Y, window),
        rate_err: match config.mode {
            ModeKind::Free => None,
            _ => fitted_rate(&series, SeriesKind::Err, window),
        },
        final_norm_y: last(SeriesKind::Y),
        final_norm_err: last(SeriesKind::Err),
        final_norm_yhat: last(SeriesKind::Yhat),
        final_norm_input: last(SeriesKind::Input),
        max_norm_err: series.max(SeriesKind::Err),
        wall_time_s: wall,
    };
    Ok((series, summary))
}

/// Writes the series as CSV with 17 significant digits per value.
pub fn write_csv<W: Write>(series: &NormSeries, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for i in 0..series.len() {
        let row = [
            series.times[i],
            series.norm_y[i],
            series.norm_err[i],
            series.norm_yhat[i],
            series.norm_input[i],
        ];
        w.write_record(row.iter().map(|v| format!("{v:.16e}")))?;
    }
    w.flush().map_err(|e| AppError::io("<csv>", e))?;
    Ok(())
}

/// Reads a CSV written by [`write_csv`]; `k` is taken from the first time step.
pub fn read_csv<R: Read>(input: R) -> Result<NormSeries> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != CSV_HEADER {
        return Err(AppError::config(format!("unexpected CSV header {header:?}")));
    }
    let mut cols: [Vec<f64>; 5] = Default::default();
    for rec in r.records() {
        let rec = rec?;
        for (c, field) in cols.iter_mut().zip(rec.iter()) {
            c.push(
                field
                    .parse()
                    .map_err(|_| AppError::config(format!("bad number `{field}`")))?,
            );
        }
    }
    let [times, norm_y, norm_err, norm_yhat, norm_input] = cols;
    Ok(NormSeries {
        k: if times.len() > 1 { times[1] - times[0] } else { 0.0 },
        times,
        norm_y,
        norm_err,
        norm_yhat,
        norm_input,
    })
}

/// Paths of the CSV and JSON outputs of `config` under `dir`.
pub fn output_paths(dir: &Path, config: &ExperimentConfig) -> (PathBuf, PathBuf) {
    (
        dir.join(format!("{}.csv", config.name)),
        dir.join(format!("{}.json", config.name)),
    )
}

/// Runs `config` and writes `<name>.csv` and `<name>.json` into `dir`.
pub fn execute(config: &ExperimentConfig, dir: &Path) -> Result<RunSummary> {
    let (series, summary) = simulate(config)?;
    fs::create_dir_all(dir).map_err(|e| AppError::io(dir, e))?;
    let (csv_path, json_path) = output_paths(dir, config);
    let file = fs::File::create(&csv_path).map_err(|e| AppError::io(&csv_path, e))?;
    write_csv(&series, std::io::BufWriter::new(file))?;
    let json = serde_json::to_string_pretty(&summary)?;
    fs::write(&json_path, json + "\n").map_err(|e| AppError::io(&json_path, e))?;
    Ok(summary)
}

/// Independent runs in parallel; results keep the input order.
pub fn execute_all(configs: &[ExperimentConfig], dir: &Path) -> Vec<Result<RunSummary>> {
    configs.par_iter().map(|c| execute(c, dir)).collect()
}

/// [`simulate`] over many configurations in parallel.
pub fn simulate_all(configs: &[ExperimentConfig]) -> Vec<Result<(NormSeries, RunSummary)>> {
    configs.par_iter().map(simulate).collect()
}

pub fn read_summary(path: &Path) -> Result<RunSummary> {
    let text = fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}
