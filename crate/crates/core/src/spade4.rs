//! The delay-embedding forecaster: learn `dy/dt = f(h)` with a sparse random
//! feature model, then roll the series forward with explicit Euler steps.

use nalgebra::DMatrix;

use crate::embedding::{
    build_delay_dataset, estimate_derivative, smooth_derivative_with, EmbeddingConfig,
};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::rfm::{
    feature_matrix, sample_basis, select_lambda, LassoMethod, LassoOptions, RandomFeatureBasis,
    SparseCoefficients, DEFAULT_LAMBDA_GRID,
};
use crate::timeseries::TimeSeries;

/// Forecast horizon used throughout (one week of daily data).
pub const DEFAULT_HORIZON: usize = 7;

#[derive(Clone, Debug, PartialEq)]
pub struct RfmConfig {
    /// Explicit feature count; `None` means `features_per_sample * m`.
    pub n_features: Option<usize>,
    pub features_per_sample: usize,
    /// Optional upper bound on the feature count.
    pub max_features: Option<usize>,
    pub seed: u64,
    pub lambda_grid: Vec<f64>,
    pub lasso: LassoOptions,
    pub exec: Exec,
}

impl Default for RfmConfig {
    fn default() -> Self {
        RfmConfig {
            n_features: None,
            features_per_sample: 50,
            max_features: None,
            seed: 0,
            lambda_grid: DEFAULT_LAMBDA_GRID.to_vec(),
            lasso: LassoOptions {
                method: LassoMethod::ActiveSet,
                ..LassoOptions::default()
            },
            exec: Exec::default(),
        }
    }
}

impl RfmConfig {
    pub fn with_seed(&self, seed: u64) -> Self {
        RfmConfig {
            seed,
            ..self.clone()
        }
    }

    pub fn feature_count(&self, m: usize) -> usize {
        let n = self
            .n_features
            .unwrap_or(self.features_per_sample * m)
            .max(1);
        match self.max_features {
            Some(cap) => n.min(cap.max(1)),
            None => n,
        }
    }
}

/// Point forecast for the `horizon` samples following the training data.
#[derive(Clone, Debug, PartialEq)]
pub struct ForecastResult {
    pub first_day: f64,
    pub dt: f64,
    pub values: Vec<f64>,
}

impl ForecastResult {
    pub fn horizon(&self) -> usize {
        self.values.len()
    }

    pub fn day(&self, k: usize) -> f64 {
        self.first_day + k as f64 * self.dt
    }

    pub fn to_series(&self) -> Result<TimeSeries> {
        if self.first_day.fract() != 0.0 {
            return Err(Error::InvalidSampling(
                "forecast does not start on an integer day".into(),
            ));
        }
        TimeSeries::new(self.first_day as i64, self.dt, self.values.clone())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Spade4Model {
    pub basis: RandomFeatureBasis,
    pub coeffs: SparseCoefficients,
    pub cfg: EmbeddingConfig,
    /// The last `cfg.span()` observations, oldest first.
    pub train_tail: Vec<f64>,
    pub dt: f64,
    pub last_day: f64,
}

impl Spade4Model {
    /// Learned derivative at a delay vector (newest value first).
    pub fn derivative_at(&self, h: &[f64]) -> Result<f64> {
        self.basis.evaluate(h, &self.coeffs)
    }

    /// Closed-loop Euler rollout: later delay vectors contain earlier
    /// forecasts. Forecasts are floored at zero.
    pub fn predict(&self, horizon: usize) -> Result<ForecastResult> {
        if horizon == 0 {
            return Err(Error::InvalidParameter("horizon must be at least 1".into()));
        }
        let (p, tau) = (self.cfg.p, self.cfg.tau);
        let mut history = self.train_tail.clone();
        history.reserve(horizon);
        let mut h = vec![0.0; p];
        let mut out = Vec::with_capacity(horizon);
        for step in 0..horizon {
            let k = history.len() - 1;
            for (j, slot) in h.iter_mut().enumerate() {
                *slot = history[k - j * tau];
            }
            let next = (history[k] + self.dt * self.derivative_at(&h)?).max(0.0);
            if !next.is_finite() {
                return Err(Error::ForecastDivergence { step: step + 1 });
            }
            history.push(next);
            out.push(next);
        }
        Ok(ForecastResult {
            first_day: self.last_day + self.dt,
            dt: self.dt,
            values: out,
        })
    }
}

/// Derivative targets for a training series: finite differences, then the
/// smoothing filter when `smooth_s > 1`.
pub fn derivative_targets(train: &TimeSeries, cfg: &EmbeddingConfig) -> Result<Vec<f64>> {
    let d = estimate_derivative(train)?;
    Ok(if cfg.smooth_s > 1 {
        smooth_derivative_with(&d, cfg.smooth_s, cfg.window)
    } else {
        d
    })
}

/// Training data for the sparse regression: the feature matrix and targets.
pub fn training_problem(
    train: &TimeSeries,
    cfg: &EmbeddingConfig,
    basis: &RandomFeatureBasis,
) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let targets = derivative_targets(train, cfg)?;
    let data = build_delay_dataset(train, cfg, &targets)?;
    let a = feature_matrix(basis, data.inputs())?;
    Ok((a, data.targets().to_vec()))
}

pub fn fit(train: &TimeSeries, cfg: &EmbeddingConfig, rfm: &RfmConfig) -> Result<Spade4Model> {
    cfg.validate()?;
    let m = train.len();
    let span = cfg.span();
    if m < span + 1 {
        return Err(Error::InsufficientData(format!(
            "training series of length {m} needs at least {} samples for p={}, tau={}",
            span + 1,
            cfg.p,
            cfg.tau
        )));
    }
    let basis = sample_basis(cfg.p, rfm.feature_count(m), rfm.seed)?;
    let (a, z) = training_problem(train, cfg, &basis)?;
    let (_, coeffs) = select_lambda(&a, &z, &rfm.lambda_grid, &rfm.lasso, rfm.exec)?;
    Ok(Spade4Model {
        basis,
        coeffs,
        cfg: *cfg,
        train_tail: train.values()[m - span..].to_vec(),
        dt: train.dt(),
        last_day: train.last_day(),
    })
}

pub fn forecast(
    train: &TimeSeries,
    cfg: &EmbeddingConfig,
    rfm: &RfmConfig,
    horizon: usize,
) -> Result<ForecastResult> {
    fit(train, cfg, rfm)?.predict(horizon)
}
