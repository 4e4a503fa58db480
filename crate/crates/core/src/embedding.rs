//! Finite-difference derivative targets, the derivative smoothing filter, and
//! delay-vector datasets.

use crate::error::{Error, Result};
use crate::timeseries::TimeSeries;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum SmoothingWindow {
    /// `[k + 2 - s, k + 1]`: one step ahead of the current index, zero padded.
    #[default]
    Shifted,
    /// Window centred on `k`, zero padded.
    Centered,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EmbeddingConfig {
    /// Embedding dimension.
    pub p: usize,
    /// Delay in samples.
    pub tau: usize,
    /// Smoothing strength; 1 disables the filter.
    pub smooth_s: usize,
    pub window: SmoothingWindow,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        EmbeddingConfig {
            p: 9,
            tau: 1,
            smooth_s: 1,
            window: SmoothingWindow::Shifted,
        }
    }
}

impl EmbeddingConfig {
    pub fn with_p(self, p: usize) -> Self {
        EmbeddingConfig { p, ..self }
    }

    pub fn with_smoothing(self, smooth_s: usize) -> Self {
        EmbeddingConfig { smooth_s, ..self }
    }

    /// Number of consecutive samples one delay vector reaches back over.
    pub fn span(&self) -> usize {
        (self.p - 1) * self.tau + 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.p == 0 || self.tau == 0 || self.smooth_s == 0 {
            return Err(Error::InvalidParameter(format!(
                "embedding needs p, tau, s >= 1 (got p={}, tau={}, s={})",
                self.p, self.tau, self.smooth_s
            )));
        }
        Ok(())
    }
}

/// Forward difference at the first sample, central differences inside,
/// backward difference at the last sample.
pub fn estimate_derivative(s: &TimeSeries) -> Result<Vec<f64>> {
    let y = s.values();
    let m = y.len();
    if m < 2 {
        return Err(Error::InsufficientData(format!(
            "derivative estimation needs at least 2 samples, got {m}"
        )));
    }
    let dt = s.dt();
    let mut d = Vec::with_capacity(m);
    d.push((y[1] - y[0]) / dt);
    d.extend(y.windows(3).map(|w| (w[2] - w[0]) / (2.0 * dt)));
    d.push((y[m - 1] - y[m - 2]) / dt);
    Ok(d)
}

/// Averaging filter over the shifted window `[k + 2 - s, k + 1]`, treating
/// entries outside the series as zero.
pub fn smooth_derivative(d: &[f64], s: usize) -> Vec<f64> {
    smooth_derivative_with(d, s, SmoothingWindow::Shifted)
}

pub fn smooth_derivative_with(d: &[f64], s: usize, window: SmoothingWindow) -> Vec<f64> {
    let s = s.max(1);
    let m = d.len() as isize;
    let (back, ahead) = match window {
        SmoothingWindow::Shifted => (s as isize - 2, 1),
        SmoothingWindow::Centered => ((s as isize - 1) / 2, s as isize / 2),
    };
    (0..m)
        .map(|k| {
            let lo = (k - back).max(0);
            let hi = (k + ahead).min(m - 1);
            let sum: f64 = if lo <= hi {
                d[lo as usize..=hi as usize].iter().sum()
            } else {
                0.0
            };
            sum / s as f64
        })
        .collect()
}

/// `[y_k, y_{k - tau}, ..., y_{k - (p-1) tau}]`, newest first.
pub fn delay_vector(values: &[f64], k: usize, p: usize, tau: usize) -> Vec<f64> {
    (0..p).map(|j| values[k - j * tau]).collect()
}

/// Paired delay vectors and derivative targets. Rows are stored contiguously.
#[derive(Clone, Debug, PartialEq)]
pub struct DelayDataset {
    p: usize,
    inputs: Vec<f64>,
    targets: Vec<f64>,
    /// Zero-based series index of the first row.
    first_index: usize,
}

impl DelayDataset {
    pub fn rows(&self) -> usize {
        self.targets.len()
    }

    pub fn dim(&self) -> usize {
        self.p
    }

    pub fn input(&self, row: usize) -> &[f64] {
        &self.inputs[row * self.p..(row + 1) * self.p]
    }

    pub fn inputs(&self) -> impl ExactSizeIterator<Item = &[f64]> {
        self.inputs.chunks_exact(self.p)
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    /// Series indices covered by the rows, zero-based and inclusive.
    pub fn index_range(&self) -> (usize, usize) {
        (self.first_index, self.first_index + self.rows() - 1)
    }
}

pub fn build_delay_dataset(
    s: &TimeSeries,
    cfg: &EmbeddingConfig,
    targets: &[f64],
) -> Result<DelayDataset> {
    cfg.validate()?;
    let y = s.values();
    let m = y.len();
    if targets.len() != m {
        return Err(Error::LengthMismatch {
            left: m,
            right: targets.len(),
        });
    }
    let span = cfg.span();
    if m < span {
        return Err(Error::InsufficientData(format!(
            "series of length {m} is shorter than one delay vector (p={}, tau={})",
            cfg.p, cfg.tau
        )));
    }
    let first = span - 1;
    let mut inputs = Vec::with_capacity((m - first) * cfg.p);
    for k in first..m {
        inputs.extend((0..cfg.p).map(|j| y[k - j * cfg.tau]));
    }
    Ok(DelayDataset {
        p: cfg.p,
        inputs,
        targets: targets[first..].to_vec(),
        first_index: first,
    })
}
