//! 95% prediction intervals from backtested forecast errors.

use crate::embedding::EmbeddingConfig;
use crate::error::{Error, Result};
use crate::seeding;
use crate::spade4::{forecast, ForecastResult, RfmConfig};
use crate::timeseries::TimeSeries;

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.96;

/// Signed forecast errors, indexed `[lead][backtest]`.
#[derive(Clone, Debug, PartialEq)]
pub struct BacktestResiduals {
    pub v: Vec<Vec<f64>>,
    pub m1: usize,
    pub m2: usize,
}

impl BacktestResiduals {
    pub fn horizon(&self) -> usize {
        self.v.len()
    }

    pub fn backtests(&self) -> usize {
        self.v.first().map_or(0, Vec::len)
    }

    /// Root-mean-square error at each lead time across backtests.
    pub fn sigma(&self) -> Vec<f64> {
        self.v
            .iter()
            .map(|row| (row.iter().map(|e| e * e).sum::<f64>() / row.len() as f64).sqrt())
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IntervalResult {
    pub point: ForecastResult,
    pub sigma: Vec<f64>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl IntervalResult {
    /// Bands `point -/+ z * sigma`, the lower one floored at zero.
    pub fn from_sigma(point: ForecastResult, sigma: Vec<f64>, z: f64) -> Result<Self> {
        if sigma.len() != point.values.len() {
            return Err(Error::LengthMismatch {
                left: point.values.len(),
                right: sigma.len(),
            });
        }
        let lo = point
            .values
            .iter()
            .zip(&sigma)
            .map(|(p, s)| (p - z * s).max(0.0))
            .collect();
        let hi = point
            .values
            .iter()
            .zip(&sigma)
            .map(|(p, s)| p + z * s)
            .collect();
        Ok(IntervalResult {
            point,
            sigma,
            lo,
            hi,
        })
    }

    pub fn contains(&self, k: usize, value: f64) -> bool {
        self.lo[k] <= value && value <= self.hi[k]
    }
}

fn check_split(data: &TimeSeries, m1: usize, m2: usize, horizon: usize) -> Result<()> {
    if horizon == 0 {
        return Err(Error::InvalidParameter("horizon must be at least 1".into()));
    }
    if m1 + horizon >= m2 {
        return Err(Error::InvalidParameter(format!(
            "backtest split needs m1 < m2 - T (got m1={m1}, m2={m2}, T={horizon})"
        )));
    }
    if data.len() < m2 {
        return Err(Error::InsufficientData(format!(
            "backtesting up to m2={m2} needs that many samples, series has {}",
            data.len()
        )));
    }
    Ok(())
}

/// Backtest `i` (zero-based) trains on the first `m1 + i` samples with its
/// own derived seed and is scored against the next `horizon` observations.
pub fn backtest_residuals(
    data: &TimeSeries,
    m1: usize,
    m2: usize,
    horizon: usize,
    cfg: &EmbeddingConfig,
    rfm: &RfmConfig,
) -> Result<BacktestResiduals> {
    check_split(data, m1, m2, horizon)?;
    let runs = m2 - m1 - horizon;
    let y = data.values();
    let columns = rfm.exec.map(runs, |i| -> Result<Vec<f64>> {
        let len = m1 + i;
        let run_cfg = rfm.with_seed(seeding::derive_seed(rfm.seed, &[i as u64]));
        let f = forecast(&data.prefix(len)?, cfg, &run_cfg, horizon)?;
        Ok(f.values
            .iter()
            .zip(&y[len..len + horizon])
            .map(|(p, o)| p - o)
            .collect())
    });
    let columns = columns.into_iter().collect::<Result<Vec<_>>>()?;
    let v = (0..horizon)
        .map(|lead| columns.iter().map(|c| c[lead]).collect())
        .collect();
    Ok(BacktestResiduals { v, m1, m2 })
}

/// Point forecast from the first `m2` samples with bands from the backtest
/// errors of [`backtest_residuals`].
pub fn interval_forecast(
    data: &TimeSeries,
    m1: usize,
    m2: usize,
    horizon: usize,
    cfg: &EmbeddingConfig,
    rfm: &RfmConfig,
) -> Result<IntervalResult> {
    let residuals = backtest_residuals(data, m1, m2, horizon, cfg, rfm)?;
    let point = forecast(&data.prefix(m2)?, cfg, rfm, horizon)?;
    IntervalResult::from_sigma(point, residuals.sigma(), Z95)
}
