//! Experiment configuration: a flat `key = value` text file.
//!
//! Grammar: one assignment per line, `#` starts a comment, blank lines are
//! ignored, list values are comma separated. A `preset = NAME` line (anywhere
//! in the file) loads the named preset first; every other key then overrides
//! it. Unknown and repeated keys are errors.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::benchmarks::TargetKind;
use crate::embedding::{EmbeddingConfig, SmoothingWindow};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::rfm::{LassoMethod, ObjectiveScaling};
use crate::spade4::{RfmConfig, DEFAULT_HORIZON};
use crate::timeseries::NormalizationSpec;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Dataset {
    /// SuEIR reference outbreak, observed as daily `I(t) / P`.
    Synthetic,
    File(PathBuf),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Method {
    Spade4,
    Seir,
    Sueir,
    SeirBetaT,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::Spade4,
        Method::Seir,
        Method::Sueir,
        Method::SeirBetaT,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Spade4 => "spade4",
            Method::Seir => "seir",
            Method::Sueir => "sueir",
            Method::SeirBetaT => "seir_beta_t",
        }
    }

    /// Stable index used in seed paths.
    pub fn index(self) -> u64 {
        match self {
            Method::Spade4 => 0,
            Method::Seir => 1,
            Method::Sueir => 2,
            Method::SeirBetaT => 3,
        }
    }

    fn parse(s: &str) -> Option<Method> {
        Method::ALL.into_iter().find(|m| m.name() == s)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub preset: Option<String>,
    pub dataset: Dataset,
    /// Inclusive day range cut from the raw series; day indices restart at 0.
    pub wave_window: Option<(i64, i64)>,
    pub seven_day_average: bool,
    /// Divide the data by `c * P`. Ignored for the synthetic series, which is
    /// already a population fraction.
    pub normalization: Option<NormalizationSpec>,
    /// Relative noise level for synthetic data.
    pub noise_eta: f64,
    pub synthetic_days: usize,
    pub train_sizes: Vec<usize>,
    pub methods: Vec<Method>,
    pub horizon: usize,
    pub embedding: EmbeddingConfig,
    /// Feature and solver settings; the seed is replaced per run.
    pub rfm: RfmConfig,
    pub target: TargetKind,
    pub restarts: usize,
    pub steps_per_sample: usize,
    pub interval_m1: Option<usize>,
    pub interval_m2: Option<usize>,
    pub runs: usize,
    pub p_values: Vec<usize>,
    pub out_dir: PathBuf,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            preset: None,
            dataset: Dataset::Synthetic,
            wave_window: None,
            seven_day_average: false,
            normalization: None,
            noise_eta: 0.0,
            synthetic_days: 180,
            train_sizes: vec![81, 125],
            methods: vec![Method::Spade4, Method::Seir, Method::Sueir],
            horizon: DEFAULT_HORIZON,
            embedding: EmbeddingConfig::default(),
            rfm: RfmConfig::default(),
            target: TargetKind::Active,
            restarts: 100,
            steps_per_sample: 5,
            interval_m1: None,
            interval_m2: None,
            runs: 100,
            p_values: vec![5, 7, 9, 11, 14],
            out_dir: PathBuf::from("out"),
            seed: 0,
        }
    }
}

pub const PRESETS: [&str; 6] = [
    "ebola-guinea",
    "zika-giradot",
    "flu-china",
    "covid-canada-w2",
    "covid-canada-w5",
    "synthetic-sueir",
];

/// Built-in experiment settings for the shipped datasets. Real-data presets
/// expect `data/<name>.csv` (day,value) relative to the working directory
/// or the config file.
pub fn preset(name: &str) -> Result<ExperimentConfig> {
    let base = ExperimentConfig {
        preset: Some(name.to_string()),
        ..ExperimentConfig::default()
    };
    let file = |n: &str| Dataset::File(PathBuf::from(format!("data/{n}.csv")));
    let norm = |p: f64, c: f64| Some(NormalizationSpec::new(p, c).expect("preset constants"));
    let all_methods = Method::ALL.to_vec();
    let cfg = match name {
        "synthetic-sueir" => ExperimentConfig {
            train_sizes: vec![81, 97, 100, 104, 125],
            interval_m1: Some(105),
            interval_m2: Some(125),
            ..base
        },
        "ebola-guinea" => ExperimentConfig {
            dataset: file(name),
            normalization: norm(135e6, 1e-3),
            train_sizes: vec![172, 286],
            methods: all_methods,
            target: TargetKind::Cumulative,
            embedding: EmbeddingConfig::default().with_smoothing(10),
            ..base
        },
        "zika-giradot" => ExperimentConfig {
            dataset: file(name),
            normalization: norm(95e3, 1.0),
            train_sizes: vec![27, 65],
            methods: all_methods,
            target: TargetKind::Cumulative,
            embedding: EmbeddingConfig::default().with_smoothing(10),
            interval_m1: Some(45),
            interval_m2: Some(65),
            ..base
        },
        "flu-china" => ExperimentConfig {
            dataset: file(name),
            normalization: norm(7e8, 1e-5),
            // the error table reports 38 where the dataset table lists 44
            train_sizes: vec![38, 44, 64],
            methods: all_methods,
            target: TargetKind::Cumulative,
            embedding: EmbeddingConfig::default().with_smoothing(10),
            interval_m1: Some(44),
            interval_m2: Some(64),
            ..base
        },
        "covid-canada-w2" => ExperimentConfig {
            dataset: file("covid-canada"),
            wave_window: Some((200, 380)),
            seven_day_average: true,
            normalization: norm(3.8e7, 0.1),
            train_sizes: vec![54, 90, 99, 108, 117, 126, 135, 144],
            methods: all_methods,
            ..base
        },
        "covid-canada-w5" => ExperimentConfig {
            dataset: file("covid-canada"),
            wave_window: Some((650, 704)),
            seven_day_average: true,
            normalization: norm(3.8e7, 0.1),
            train_sizes: vec![27, 32, 35, 38, 41, 43, 46],
            methods: all_methods,
            ..base
        },
        other => {
            return Err(Error::InvalidParameter(format!(
                "unknown preset {other:?}; expected one of {}",
                PRESETS.join(", ")
            )))
        }
    };
    Ok(cfg)
}

fn config_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Config {
        line,
        msg: msg.into(),
    }
}

fn parse_num<T: std::str::FromStr>(line: usize, key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| config_err(line, format!("{key}: cannot parse {v:?}")))
}

fn parse_list<T: std::str::FromStr>(line: usize, key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',')
        .map(|s| parse_num(line, key, s.trim()))
        .collect()
}

fn parse_optional<T: std::str::FromStr>(line: usize, key: &str, v: &str) -> Result<Option<T>> {
    if v == "auto" || v == "none" {
        Ok(None)
    } else {
        parse_num(line, key, v).map(Some)
    }
}

fn parse_bool(line: usize, key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(config_err(
            line,
            format!("{key}: expected true or false, got {v:?}"),
        )),
    }
}

/// Splits the text into `(line, key, value)` triples.
fn assignments(text: &str) -> Result<Vec<(usize, String, String)>> {
    let mut out: Vec<(usize, String, String)> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let Some((key, value)) = body.split_once('=') else {
            return Err(config_err(
                line,
                format!("expected `key = value`, found {body:?}"),
            ));
        };
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() || value.is_empty() {
            return Err(config_err(line, "empty key or value"));
        }
        if let Some((first, ..)) = out.iter().find(|(_, k, _)| k == key) {
            return Err(config_err(
                line,
                format!("{key} already set on line {first}"),
            ));
        }
        out.push((line, key.to_string(), value.to_string()));
    }
    Ok(out)
}

/// Parses a config file body. Relative dataset paths are kept as written;
/// see [`ExperimentConfig::resolve_paths`].
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let pairs = assignments(text)?;
    let mut cfg = match pairs.iter().find(|(_, k, _)| k == "preset") {
        Some((line, _, name)) => preset(name).map_err(|e| config_err(*line, e.to_string()))?,
        None => ExperimentConfig::default(),
    };
    let mut population: Option<Option<f64>> = None;
    let mut scale: Option<f64> = None;
    for (line, key, v) in &pairs {
        let (line, v) = (*line, v.as_str());
        match key.as_str() {
            "preset" => {}
            "dataset" => {
                cfg.dataset = if v == "synthetic" {
                    Dataset::Synthetic
                } else {
                    Dataset::File(PathBuf::from(v))
                }
            }
            "wave_window" => {
                cfg.wave_window = if v == "none" {
                    None
                } else {
                    match parse_list::<i64>(line, key, v)?[..] {
                        [a, b] => Some((a, b)),
                        _ => return Err(config_err(line, "wave_window needs two days")),
                    }
                }
            }
            "seven_day_average" => cfg.seven_day_average = parse_bool(line, key, v)?,
            "population" => population = Some(parse_optional(line, key, v)?),
            "scale" => scale = Some(parse_num(line, key, v)?),
            "noise_eta" => cfg.noise_eta = parse_num(line, key, v)?,
            "synthetic_days" => cfg.synthetic_days = parse_num(line, key, v)?,
            "train_sizes" => cfg.train_sizes = parse_list(line, key, v)?,
            "methods" => {
                cfg.methods = v
                    .split(',')
                    .map(|s| {
                        Method::parse(s.trim()).ok_or_else(|| {
                            config_err(line, format!("unknown method {:?}", s.trim()))
                        })
                    })
                    .collect::<Result<_>>()?
            }
            "horizon" => cfg.horizon = parse_num(line, key, v)?,
            "p" => cfg.embedding.p = parse_num(line, key, v)?,
            "tau" => cfg.embedding.tau = parse_num(line, key, v)?,
            "smooth_s" => cfg.embedding.smooth_s = parse_num(line, key, v)?,
            "smoothing_window" => {
                cfg.embedding.window = match v {
                    "shifted" => SmoothingWindow::Shifted,
                    "centered" => SmoothingWindow::Centered,
                    _ => return Err(config_err(line, format!("unknown smoothing window {v:?}"))),
                }
            }
            "features_per_sample" => cfg.rfm.features_per_sample = parse_num(line, key, v)?,
            "n_features" => cfg.rfm.n_features = parse_optional(line, key, v)?,
            "max_features" => cfg.rfm.max_features = parse_optional(line, key, v)?,
            "lambda_grid" => cfg.rfm.lambda_grid = parse_list(line, key, v)?,
            "lasso_method" => {
                cfg.rfm.lasso.method = match v {
                    "active_set" => LassoMethod::ActiveSet,
                    "coordinate_descent" => LassoMethod::CoordinateDescent,
                    _ => return Err(config_err(line, format!("unknown lasso method {v:?}"))),
                }
            }
            "lasso_scaling" => {
                cfg.rfm.lasso.scaling = match v {
                    "plain" => ObjectiveScaling::Plain,
                    "per_sample" => ObjectiveScaling::PerSample,
                    _ => return Err(config_err(line, format!("unknown lasso scaling {v:?}"))),
                }
            }
            "lasso_tol" => cfg.rfm.lasso.tol = parse_num(line, key, v)?,
            "lasso_max_iter" => cfg.rfm.lasso.max_iter = parse_num(line, key, v)?,
            "target" => {
                cfg.target = match v {
                    "active" => TargetKind::Active,
                    "cumulative" => TargetKind::Cumulative,
                    _ => return Err(config_err(line, format!("unknown target {v:?}"))),
                }
            }
            "restarts" => cfg.restarts = parse_num(line, key, v)?,
            "steps_per_sample" => cfg.steps_per_sample = parse_num(line, key, v)?,
            "interval_m1" => cfg.interval_m1 = parse_optional(line, key, v)?,
            "interval_m2" => cfg.interval_m2 = parse_optional(line, key, v)?,
            "runs" => cfg.runs = parse_num(line, key, v)?,
            "p_values" => cfg.p_values = parse_list(line, key, v)?,
            "exec" => {
                cfg.rfm.exec = match v {
                    "parallel" => Exec::Parallel,
                    "sequential" => Exec::Sequential,
                    _ => return Err(config_err(line, format!("unknown exec mode {v:?}"))),
                }
            }
            "out" => cfg.out_dir = PathBuf::from(v),
            "seed" => cfg.seed = parse_num(line, key, v)?,
            other => return Err(config_err(line, format!("unknown key {other:?}"))),
        }
    }
    match (population, scale) {
        (Some(None), _) => cfg.normalization = None,
        (Some(Some(p)), c) => {
            cfg.normalization = Some(NormalizationSpec::new(p, c.unwrap_or(1.0))?)
        }
        (None, Some(c)) => {
            let p = cfg.normalization.map(|n| n.population).ok_or_else(|| {
                Error::InvalidParameter("scale given without a population".into())
            })?;
            cfg.normalization = Some(NormalizationSpec::new(p, c)?);
        }
        (None, None) => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

fn join<T: std::fmt::Display>(xs: &[T]) -> String {
    xs.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(", ")
}

fn opt<T: std::fmt::Display>(x: &Option<T>) -> String {
    x.as_ref().map_or("auto".into(), |v| v.to_string())
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = parse_config(&text)?;
        cfg.resolve_paths(path.parent().unwrap_or(Path::new("")));
        Ok(cfg)
    }

    /// Interprets a relative dataset path against `base` when the file
    /// exists there.
    pub fn resolve_paths(&mut self, base: &Path) {
        if let Dataset::File(p) = &self.dataset {
            if p.is_relative() && base.join(p).exists() {
                self.dataset = Dataset::File(base.join(p));
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if self.train_sizes.is_empty() {
            return bad("train_sizes is empty".into());
        }
        if self.methods.is_empty() {
            return bad("methods is empty".into());
        }
        if self.horizon == 0 {
            return bad("horizon must be at least 1".into());
        }
        if self.embedding.p == 0 || self.embedding.tau == 0 || self.embedding.smooth_s == 0 {
            return bad("p, tau and smooth_s must be at least 1".into());
        }
        if let Some(&m) = self
            .train_sizes
            .iter()
            .find(|&&m| m < self.embedding.span() + 1)
        {
            return bad(format!(
                "training size {m} is too small for p={} tau={}",
                self.embedding.p, self.embedding.tau
            ));
        }
        if !(self.noise_eta >= 0.0 && self.noise_eta.is_finite()) {
            return bad(format!(
                "noise_eta must be non-negative, got {}",
                self.noise_eta
            ));
        }
        if let Some((a, b)) = self.wave_window {
            if a > b {
                return Err(Error::InvalidWindow { start: a, end: b });
            }
        }
        if self.rfm.lambda_grid.is_empty() || self.rfm.lambda_grid.iter().any(|l| !(*l > 0.0)) {
            return bad("lambda_grid must hold positive values".into());
        }
        if self.restarts == 0 || self.steps_per_sample == 0 || self.runs == 0 {
            return bad("restarts, steps_per_sample and runs must be at least 1".into());
        }
        if self.p_values.contains(&0) {
            return bad("p_values must be positive".into());
        }
        Ok(())
    }

    /// Every setting, one `key = value` line each, in a fixed order. Parsing
    /// the output gives back the same config; its hash identifies a run.
    pub fn canonical(&self) -> String {
        let mut s = String::new();
        let dataset = match &self.dataset {
            Dataset::Synthetic => "synthetic".to_string(),
            Dataset::File(p) => p.display().to_string(),
        };
        let window = self
            .wave_window
            .map_or("none".into(), |(a, b)| format!("{a}, {b}"));
        let methods: Vec<&str> = self.methods.iter().map(|m| m.name()).collect();
        let lasso = &self.rfm.lasso;
        let lines: Vec<(&str, String)> = vec![
            ("dataset", dataset),
            ("wave_window", window),
            ("seven_day_average", self.seven_day_average.to_string()),
            ("population", opt(&self.normalization.map(|n| n.population))),
            (
                "scale",
                self.normalization
                    .map_or(1.0, |n| n.scale_fraction)
                    .to_string(),
            ),
            ("noise_eta", self.noise_eta.to_string()),
            ("synthetic_days", self.synthetic_days.to_string()),
            ("train_sizes", join(&self.train_sizes)),
            ("methods", methods.join(", ")),
            ("horizon", self.horizon.to_string()),
            ("p", self.embedding.p.to_string()),
            ("tau", self.embedding.tau.to_string()),
            ("smooth_s", self.embedding.smooth_s.to_string()),
            (
                "smoothing_window",
                match self.embedding.window {
                    SmoothingWindow::Shifted => "shifted".into(),
                    SmoothingWindow::Centered => "centered".into(),
                },
            ),
            (
                "features_per_sample",
                self.rfm.features_per_sample.to_string(),
            ),
            ("n_features", opt(&self.rfm.n_features)),
            ("max_features", opt(&self.rfm.max_features)),
            ("lambda_grid", join(&self.rfm.lambda_grid)),
            (
                "lasso_method",
                match lasso.method {
                    LassoMethod::ActiveSet => "active_set".into(),
                    LassoMethod::CoordinateDescent => "coordinate_descent".into(),
                },
            ),
            (
                "lasso_scaling",
                match lasso.scaling {
                    ObjectiveScaling::Plain => "plain".into(),
                    ObjectiveScaling::PerSample => "per_sample".into(),
                },
            ),
            ("lasso_tol", lasso.tol.to_string()),
            ("lasso_max_iter", lasso.max_iter.to_string()),
            (
                "target",
                match self.target {
                    TargetKind::Active => "active".into(),
                    TargetKind::Cumulative => "cumulative".into(),
                },
            ),
            ("restarts", self.restarts.to_string()),
            ("steps_per_sample", self.steps_per_sample.to_string()),
            ("interval_m1", opt(&self.interval_m1)),
            ("interval_m2", opt(&self.interval_m2)),
            ("runs", self.runs.to_string()),
            ("p_values", join(&self.p_values)),
            (
                "exec",
                match self.rfm.exec {
                    Exec::Parallel => "parallel".into(),
                    Exec::Sequential => "sequential".into(),
                },
            ),
            ("out", self.out_dir.display().to_string()),
            ("seed", self.seed.to_string()),
        ];
        for (k, v) in lines {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    /// The canonical text without the output directory: two runs of the
    /// same experiment written to different places share this.
    pub fn identity(&self) -> String {
        self.canonical()
            .lines()
            .filter(|l| !l.starts_with("out = "))
            .map(|l| format!("{l}\n"))
            .collect()
    }

    /// Backtest split for intervals: configured values, else `m2` = the
    /// largest training size and `m1 = m2 - 20`.
    pub fn interval_split(&self) -> Result<(usize, usize)> {
        let m2 = self
            .interval_m2
            .unwrap_or_else(|| self.train_sizes.iter().copied().max().unwrap_or(0));
        let m1 = match self.interval_m1 {
            Some(m1) => m1,
            None => m2.checked_sub(20).ok_or_else(|| {
                Error::InvalidParameter(format!("interval_m2={m2} leaves no room for backtests"))
            })?,
        };
        Ok((m1, m2))
    }
}
