//! Uniformly sampled scalar series, CSV ingestion, preprocessing and the
//! relative forecast error.

use std::fs;
use std::path::Path;

use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::seeding;

/// Uniformly sampled observations. Sample `k` (zero-based) sits at day
/// `t0 + k * dt`.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeSeries {
    t0: i64,
    dt: f64,
    values: Vec<f64>,
}

impl TimeSeries {
    pub fn new(t0: i64, dt: f64, values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptySeries);
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidSampling(format!(
                "dt must be positive, got {dt}"
            )));
        }
        Ok(TimeSeries { t0, dt, values })
    }

    /// Daily series starting at day 0.
    pub fn daily(values: Vec<f64>) -> Result<Self> {
        Self::new(0, 1.0, values)
    }

    pub fn t0(&self) -> i64 {
        self.t0
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    /// Always false; kept for API symmetry with `len`.
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn day(&self, index: usize) -> f64 {
        self.t0 as f64 + index as f64 * self.dt
    }

    pub fn last_day(&self) -> f64 {
        self.day(self.len() - 1)
    }

    /// First `len` samples.
    pub fn prefix(&self, len: usize) -> Result<Self> {
        if len == 0 || len > self.len() {
            return Err(Error::InsufficientData(format!(
                "prefix of length {len} requested from a series of length {}",
                self.len()
            )));
        }
        Ok(TimeSeries {
            t0: self.t0,
            dt: self.dt,
            values: self.values[..len].to_vec(),
        })
    }

    /// Samples `start..start + len`, keeping absolute day indices.
    pub fn segment(&self, start: usize, len: usize) -> Result<Self> {
        if len == 0 || start + len > self.len() {
            return Err(Error::InsufficientData(format!(
                "segment [{start}, {}) requested from a series of length {}",
                start + len,
                self.len()
            )));
        }
        let shift = start as f64 * self.dt;
        if shift.fract() != 0.0 {
            return Err(Error::InvalidSampling(
                "segment start does not fall on an integer day".into(),
            ));
        }
        Ok(TimeSeries {
            t0: self.t0 + shift as i64,
            dt: self.dt,
            values: self.values[start..start + len].to_vec(),
        })
    }

    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Self::new(self.t0, self.dt, values)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormalizationSpec {
    pub population: f64,
    /// Fraction of the population used as the normalization unit.
    pub scale_fraction: f64,
}

impl NormalizationSpec {
    pub fn new(population: f64, scale_fraction: f64) -> Result<Self> {
        if !(population > 0.0 && population.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "population must be positive, got {population}"
            )));
        }
        if !(scale_fraction > 0.0 && scale_fraction <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "scale fraction must lie in (0, 1], got {scale_fraction}"
            )));
        }
        Ok(NormalizationSpec {
            population,
            scale_fraction,
        })
    }

    pub fn divisor(&self) -> f64 {
        self.population * self.scale_fraction
    }

    /// Population expressed in normalized units.
    pub fn normalized_population(&self) -> f64 {
        self.population / self.divisor()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseSpec {
    /// Standard deviation of the Gaussian multiplier.
    pub eta: f64,
    pub seed: u64,
}

/// Parses a two-column `day,value` file with one header row.
pub fn load_csv(path: impl AsRef<Path>) -> Result<TimeSeries> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_csv(&text)
}

pub fn parse_csv(text: &str) -> Result<TimeSeries> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim().eq_ignore_ascii_case("day,value") => {}
        Some((_, header)) => {
            return Err(Error::Parse {
                line: 1,
                msg: format!("expected header \"day,value\", found {:?}", header.trim()),
            })
        }
        None => return Err(Error::EmptySeries),
    }

    let mut days: Vec<i64> = Vec::new();
    let mut values = Vec::new();
    let mut step: Option<i64> = None;
    for (idx, raw) in lines {
        let line = idx + 1;
        let row = raw.trim();
        if row.is_empty() {
            continue;
        }
        let mut fields = row.split(',');
        let (Some(day), Some(value), None) = (fields.next(), fields.next(), fields.next()) else {
            return Err(Error::Parse {
                line,
                msg: format!("expected two comma-separated fields, found {row:?}"),
            });
        };
        let day: i64 = day.trim().parse().map_err(|_| Error::Parse {
            line,
            msg: format!("day {:?} is not an integer", day.trim()),
        })?;
        let value: f64 = value.trim().parse().map_err(|_| Error::Parse {
            line,
            msg: format!("value {:?} is not numeric", value.trim()),
        })?;
        if !value.is_finite() {
            return Err(Error::Parse {
                line,
                msg: format!("value {value} is not finite"),
            });
        }
        if let Some(&prev) = days.last() {
            let found = day - prev;
            match step {
                None if found <= 0 => {
                    return Err(Error::Parse {
                        line,
                        msg: format!("day {day} does not increase"),
                    })
                }
                None => step = Some(found),
                Some(expected) if expected != found => {
                    return Err(Error::NonUniformStep {
                        line,
                        expected,
                        found,
                    })
                }
                Some(_) => {}
            }
        }
        days.push(day);
        values.push(value);
    }

    if values.is_empty() {
        return Err(Error::EmptySeries);
    }
    TimeSeries::new(days[0], step.unwrap_or(1) as f64, values)
}

pub fn format_day(day: f64) -> String {
    if day.fract() == 0.0 {
        format!("{}", day as i64)
    } else {
        format!("{day}")
    }
}

pub fn to_csv(series: &TimeSeries) -> String {
    let mut out = String::from("day,value\n");
    for (k, v) in series.values().iter().enumerate() {
        out.push_str(&format!("{},{}\n", format_day(series.day(k)), v));
    }
    out
}

/// Trailing seven-day mean, truncated at the start of the series.
pub fn seven_day_average(s: &TimeSeries) -> Result<TimeSeries> {
    if s.dt() != 1.0 {
        return Err(Error::InvalidSampling(format!(
            "seven-day average needs daily sampling, got dt = {}",
            s.dt()
        )));
    }
    let v = s.values();
    let averaged = (0..v.len())
        .map(|k| {
            let lo = k.saturating_sub(6);
            v[lo..=k].iter().sum::<f64>() / (k - lo + 1) as f64
        })
        .collect();
    s.with_values(averaged)
}

pub fn normalize(s: &TimeSeries, n: &NormalizationSpec) -> TimeSeries {
    let d = n.divisor();
    TimeSeries {
        t0: s.t0,
        dt: s.dt,
        values: s.values.iter().map(|v| v / d).collect(),
    }
}

pub fn denormalize(s: &TimeSeries, n: &NormalizationSpec) -> TimeSeries {
    let d = n.divisor();
    TimeSeries {
        t0: s.t0,
        dt: s.dt,
        values: s.values.iter().map(|v| v * d).collect(),
    }
}

/// `y_k + eps_k * max|y|` with `eps_k ~ N(0, eta)` i.i.d.
pub fn inject_noise(s: &TimeSeries, spec: &NoiseSpec) -> Result<TimeSeries> {
    if !(spec.eta >= 0.0 && spec.eta.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "noise level must be non-negative, got {}",
            spec.eta
        )));
    }
    if spec.eta == 0.0 {
        return Ok(s.clone());
    }
    let scale = s.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let normal = Normal::new(0.0, spec.eta).expect("validated noise level");
    let mut rng = seeding::rng(spec.seed);
    let values = s
        .values
        .iter()
        .map(|v| v + normal.sample(&mut rng) * scale)
        .collect();
    s.with_values(values)
}

/// Sub-series covering `[start_day, end_day]` with `t0` reset to 0.
pub fn extract_window(s: &TimeSeries, start_day: i64, end_day: i64) -> Result<TimeSeries> {
    if start_day > end_day {
        return Err(Error::InvalidWindow {
            start: start_day,
            end: end_day,
        });
    }
    let out_of_range = || Error::WindowOutOfRange {
        start: start_day,
        end: end_day,
        first: s.day(0),
        last: s.last_day(),
    };
    let index_of = |day: i64| -> Option<usize> {
        let pos = (day - s.t0) as f64 / s.dt;
        (pos >= 0.0 && pos.fract() == 0.0 && (pos as usize) < s.len()).then_some(pos as usize)
    };
    let lo = index_of(start_day).ok_or_else(out_of_range)?;
    let hi = index_of(end_day).ok_or_else(out_of_range)?;
    TimeSeries::new(0, s.dt, s.values[lo..=hi].to_vec())
}

/// `sqrt(sum (truth - predicted)^2 / sum truth^2)`.
pub fn relative_error(truth: &[f64], predicted: &[f64]) -> Result<f64> {
    if truth.len() != predicted.len() {
        return Err(Error::LengthMismatch {
            left: truth.len(),
            right: predicted.len(),
        });
    }
    let denom: f64 = truth.iter().map(|t| t * t).sum();
    if denom == 0.0 {
        return Err(Error::ZeroDenominator);
    }
    let num: f64 = truth
        .iter()
        .zip(predicted)
        .map(|(t, p)| (t - p) * (t - p))
        .sum();
    Ok((num / denom).sqrt())
}

pub fn relative_error_series(truth: &TimeSeries, predicted: &TimeSeries) -> Result<f64> {
    relative_error(truth.values(), predicted.values())
}
