//! The experiment commands. Each one computes its table in memory and then
//! writes CSV files plus a manifest into the output directory.
//!
//! Seeds: the synthetic noise draw uses `derive_seed(seed, [0])`; a forecast
//! of method `k` (spade4=0, seir=1, sueir=2, seir_beta_t=3) on the first `m`
//! samples, repetition `r`, uses `derive_seed(seed, [1, k, m, r])`. Plain
//! forecasts, evaluations, sweeps and interval point forecasts are repetition
//! 0, so the same cell gets the same model in every command.

use std::path::PathBuf;

use super::config::{Dataset, ExperimentConfig, Method};
use super::output::{manifest, write_atomic, Table};
use crate::benchmarks::{fit_benchmark, predict_benchmark, FitSpec, ModelKind};
use crate::error::{Error, Result};
use crate::intervals::interval_forecast;
use crate::ode::{simulate_sueir_observable, CompartmentState, SueirParams};
use crate::seeding::derive_seed;
use crate::spade4::{forecast, ForecastResult};
use crate::timeseries::{
    extract_window, inject_noise, load_csv, normalize, relative_error, seven_day_average, to_csv,
    NoiseSpec, TimeSeries,
};

const NOISE_STREAM: u64 = 0;
const RUN_STREAM: u64 = 1;

pub fn run_seed(master: u64, method: Method, m: usize, rep: usize) -> u64 {
    derive_seed(master, &[RUN_STREAM, method.index(), m as u64, rep as u64])
}

/// Model input and scoring reference for one experiment.
#[derive(Clone, Debug, PartialEq)]
pub struct Prepared {
    /// What the forecasters are trained on.
    pub observed: TimeSeries,
    /// What forecasts are scored against: the clean curve for synthetic
    /// data, the preprocessed observations otherwise.
    pub truth: TimeSeries,
    /// Population in the units of `observed`.
    pub population: f64,
    /// Known `I(0)` for the compartmental fits, if any.
    pub initial_infected: Option<f64>,
}

/// Clean and noisy synthetic series (the latter without any averaging).
pub fn synthetic_series(cfg: &ExperimentConfig) -> Result<(TimeSeries, TimeSeries)> {
    let clean = simulate_sueir_observable(
        &SueirParams::synthetic_reference(),
        CompartmentState::synthetic_reference(),
        cfg.synthetic_days,
    )?;
    let noisy = inject_noise(
        &clean,
        &NoiseSpec {
            eta: cfg.noise_eta,
            seed: derive_seed(cfg.seed, &[NOISE_STREAM]),
        },
    )?;
    Ok((clean, noisy))
}

pub fn prepare(cfg: &ExperimentConfig) -> Result<Prepared> {
    let window = |s: &TimeSeries| match cfg.wave_window {
        Some((a, b)) => extract_window(s, a, b),
        None => Ok(s.clone()),
    };
    let average = |s: TimeSeries| {
        if cfg.seven_day_average {
            seven_day_average(&s)
        } else {
            Ok(s)
        }
    };
    match &cfg.dataset {
        Dataset::Synthetic => {
            let (clean, noisy) = synthetic_series(cfg)?;
            let truth = window(&clean)?;
            let observed = average(window(&noisy)?)?;
            Ok(Prepared {
                initial_infected: truth.values().first().copied(),
                observed,
                truth,
                population: 1.0,
            })
        }
        Dataset::File(path) => {
            let mut s = average(window(&load_csv(path)?)?)?;
            let mut population = 1.0;
            if let Some(n) = &cfg.normalization {
                s = normalize(&s, n);
                population = n.normalized_population();
            }
            Ok(Prepared {
                truth: s.clone(),
                observed: s,
                population,
                initial_infected: None,
            })
        }
    }
}

fn model_kind(method: Method) -> Option<ModelKind> {
    match method {
        Method::Spade4 => None,
        Method::Seir => Some(ModelKind::Seir),
        Method::Sueir => Some(ModelKind::Sueir),
        Method::SeirBetaT => Some(ModelKind::SeirBetaT),
    }
}

/// Forecast of `method` trained on the first `m` observed samples.
pub fn method_forecast(
    cfg: &ExperimentConfig,
    data: &Prepared,
    method: Method,
    m: usize,
    seed: u64,
) -> Result<ForecastResult> {
    if m > data.observed.len() {
        return Err(Error::InsufficientData(format!(
            "training size {m} exceeds the {} available samples",
            data.observed.len()
        )));
    }
    let train = data.observed.prefix(m)?;
    match model_kind(method) {
        None => forecast(
            &train,
            &cfg.embedding,
            &cfg.rfm.with_seed(seed),
            cfg.horizon,
        ),
        Some(kind) => {
            let spec = FitSpec {
                target_kind: cfg.target,
                restarts: cfg.restarts,
                steps_per_sample: cfg.steps_per_sample,
                initial_infected: data.initial_infected,
                seed,
                exec: cfg.rfm.exec,
                ..FitSpec::new(kind)
            };
            let fit = fit_benchmark(&train, &spec, data.population)?;
            predict_benchmark(&fit, &train, cfg.horizon)
        }
    }
}

/// The `horizon` true values following the first `m` samples.
pub fn holdout(data: &Prepared, m: usize, horizon: usize) -> Result<&[f64]> {
    data.truth.values().get(m..m + horizon).ok_or_else(|| {
        Error::MissingHoldout(format!(
            "m={m} with horizon {horizon} needs {} samples, have {}",
            m + horizon,
            data.truth.len()
        ))
    })
}

fn cells(cfg: &ExperimentConfig) -> Vec<(Method, usize)> {
    cfg.methods
        .iter()
        .flat_map(|&method| cfg.train_sizes.iter().map(move |&m| (method, m)))
        .collect()
}

fn forecast_cells(
    cfg: &ExperimentConfig,
    data: &Prepared,
) -> Result<Vec<((Method, usize), ForecastResult)>> {
    let cells = cells(cfg);
    cfg.rfm
        .exec
        .map_items(&cells, |&(method, m)| {
            method_forecast(cfg, data, method, m, run_seed(cfg.seed, method, m, 0))
                .map(|f| ((method, m), f))
        })
        .into_iter()
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct ErrorRow {
    pub method: Method,
    pub m: usize,
    pub relative_error: f64,
}

pub fn evaluate(cfg: &ExperimentConfig, data: &Prepared) -> Result<Vec<ErrorRow>> {
    for &m in &cfg.train_sizes {
        holdout(data, m, cfg.horizon)?;
    }
    forecast_cells(cfg, data)?
        .into_iter()
        .map(|((method, m), f)| {
            Ok(ErrorRow {
                method,
                m,
                relative_error: relative_error(holdout(data, m, cfg.horizon)?, &f.values)?,
            })
        })
        .collect()
}

/// Per-day minimum, median and maximum over `runs` SPADE4 seeds.
#[derive(Clone, Debug, PartialEq)]
pub struct Band {
    pub m: usize,
    pub days: Vec<f64>,
    pub min: Vec<f64>,
    pub median: Vec<f64>,
    pub max: Vec<f64>,
    /// Every run, `[run][lead]`.
    pub runs: Vec<Vec<f64>>,
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

pub fn stability_band(
    cfg: &ExperimentConfig,
    data: &Prepared,
    m: usize,
    runs: usize,
) -> Result<Band> {
    if runs == 0 {
        return Err(Error::InvalidParameter("runs must be at least 1".into()));
    }
    let forecasts = cfg
        .rfm
        .exec
        .map(runs, |r| {
            method_forecast(
                cfg,
                data,
                Method::Spade4,
                m,
                run_seed(cfg.seed, Method::Spade4, m, r),
            )
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let days = (0..cfg.horizon).map(|k| forecasts[0].day(k)).collect();
    let mut band = Band {
        m,
        days,
        min: Vec::new(),
        median: Vec::new(),
        max: Vec::new(),
        runs: forecasts.iter().map(|f| f.values.clone()).collect(),
    };
    for k in 0..cfg.horizon {
        let mut col: Vec<f64> = forecasts.iter().map(|f| f.values[k]).collect();
        col.sort_by(f64::total_cmp);
        band.min.push(col[0]);
        band.median.push(median(&col));
        band.max.push(col[col.len() - 1]);
    }
    Ok(band)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub p: usize,
    pub m: usize,
    /// `None` when the training set is too short for this `p`.
    pub relative_error: Option<f64>,
}

pub fn embedding_sweep(
    cfg: &ExperimentConfig,
    data: &Prepared,
    p_values: &[usize],
) -> Result<Vec<SweepRow>> {
    let grid: Vec<(usize, usize)> = p_values
        .iter()
        .flat_map(|&p| cfg.train_sizes.iter().map(move |&m| (p, m)))
        .collect();
    cfg.rfm
        .exec
        .map_items(&grid, |&(p, m)| {
            let truth = holdout(data, m, cfg.horizon)?;
            let cell = ExperimentConfig {
                embedding: cfg.embedding.with_p(p),
                ..cfg.clone()
            };
            if p == 0 || m < cell.embedding.span() + 1 {
                return Ok(SweepRow {
                    p,
                    m,
                    relative_error: None,
                });
            }
            let seed = run_seed(cfg.seed, Method::Spade4, m, 0);
            match method_forecast(&cell, data, Method::Spade4, m, seed) {
                Ok(f) => Ok(SweepRow {
                    p,
                    m,
                    relative_error: Some(relative_error(truth, &f.values)?),
                }),
                Err(Error::InsufficientData(_)) => Ok(SweepRow {
                    p,
                    m,
                    relative_error: None,
                }),
                Err(e) => Err(e),
            }
        })
        .into_iter()
        .collect()
}

fn finish(
    cfg: &ExperimentConfig,
    command: &str,
    mut files: Vec<(PathBuf, String)>,
) -> Result<Vec<PathBuf>> {
    let names: Vec<PathBuf> = files.iter().map(|(p, _)| p.clone()).collect();
    let manifest_path = cfg.out_dir.join(format!("manifest_{command}.txt"));
    files.push((
        manifest_path,
        manifest(command, &cfg.identity(), cfg.seed, &names),
    ));
    for (path, text) in &files {
        write_atomic(path, text)?;
    }
    Ok(files.into_iter().map(|(p, _)| p).collect())
}

fn fmt_day(d: f64) -> String {
    crate::timeseries::format_day(d)
}

pub fn cmd_simulate(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    if cfg.dataset != Dataset::Synthetic {
        return Err(Error::InvalidParameter(
            "simulate needs `dataset = synthetic`".into(),
        ));
    }
    let (_, noisy) = synthetic_series(cfg)?;
    finish(
        cfg,
        "simulate",
        vec![(cfg.out_dir.join("synthetic.csv"), to_csv(&noisy))],
    )
}

pub fn cmd_forecast(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let data = prepare(cfg)?;
    let results = forecast_cells(cfg, &data)?;
    let mut files = Vec::new();
    for ((method, m), f) in &results {
        files.push((
            cfg.out_dir
                .join(format!("forecast_{}_m{m}.csv", method.name())),
            to_csv(&f.to_series()?),
        ));
    }
    for &m in &cfg.train_sizes {
        let Ok(truth) = holdout(&data, m, cfg.horizon) else {
            continue;
        };
        let mut header = vec!["day", "truth"];
        header.extend(cfg.methods.iter().map(|x| x.name()));
        let mut table = Table::new(&header);
        let row_of: Vec<&ForecastResult> = cfg
            .methods
            .iter()
            .map(|&method| {
                &results
                    .iter()
                    .find(|((a, b), _)| *a == method && *b == m)
                    .expect("every cell was forecast")
                    .1
            })
            .collect();
        for (k, t) in truth.iter().enumerate() {
            let mut cells = vec![fmt_day(row_of[0].day(k)), t.to_string()];
            cells.extend(row_of.iter().map(|f| f.values[k].to_string()));
            table.row(&cells);
        }
        files.push((
            cfg.out_dir.join(format!("forecast_m{m}.csv")),
            table.as_str().to_string(),
        ));
    }
    finish(cfg, "forecast", files)
}

pub fn cmd_evaluate(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let data = prepare(cfg)?;
    let rows = evaluate(cfg, &data)?;
    let mut table = Table::new(&["method", "m", "relative_error"]);
    for r in &rows {
        table.row(&[
            r.method.name().into(),
            r.m.to_string(),
            r.relative_error.to_string(),
        ]);
    }
    finish(
        cfg,
        "evaluate",
        vec![(cfg.out_dir.join("errors.csv"), table.as_str().into())],
    )
}

pub fn cmd_interval(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let data = prepare(cfg)?;
    let (m1, m2) = cfg.interval_split()?;
    let rfm = cfg.rfm.with_seed(run_seed(cfg.seed, Method::Spade4, m2, 0));
    let iv = interval_forecast(&data.observed, m1, m2, cfg.horizon, &cfg.embedding, &rfm)?;
    let mut table = Table::new(&["day", "point", "lo95", "hi95"]);
    for k in 0..iv.point.values.len() {
        table.row(&[
            fmt_day(iv.point.day(k)),
            iv.point.values[k].to_string(),
            iv.lo[k].to_string(),
            iv.hi[k].to_string(),
        ]);
    }
    finish(
        cfg,
        "interval",
        vec![(cfg.out_dir.join("interval.csv"), table.as_str().into())],
    )
}

pub fn cmd_stability(cfg: &ExperimentConfig, runs: usize) -> Result<Vec<PathBuf>> {
    let data = prepare(cfg)?;
    let mut files = Vec::new();
    for &m in &cfg.train_sizes {
        let band = stability_band(cfg, &data, m, runs)?;
        let mut table = Table::new(&["day", "min", "median", "max"]);
        for k in 0..band.days.len() {
            table.row(&[
                fmt_day(band.days[k]),
                band.min[k].to_string(),
                band.median[k].to_string(),
                band.max[k].to_string(),
            ]);
        }
        files.push((
            cfg.out_dir.join(format!("stability_m{m}.csv")),
            table.as_str().into(),
        ));
    }
    finish(cfg, "stability", files)
}

pub fn cmd_embedding_sweep(cfg: &ExperimentConfig, p_values: &[usize]) -> Result<Vec<PathBuf>> {
    let data = prepare(cfg)?;
    let rows = embedding_sweep(cfg, &data, p_values)?;
    let mut table = Table::new(&["p", "m", "relative_error"]);
    for r in &rows {
        let err = r
            .relative_error
            .map_or("unavailable".into(), |e| e.to_string());
        table.row(&[r.p.to_string(), r.m.to_string(), err]);
    }
    finish(
        cfg,
        "embed-sweep",
        vec![(cfg.out_dir.join("embed_sweep.csv"), table.as_str().into())],
    )
}
