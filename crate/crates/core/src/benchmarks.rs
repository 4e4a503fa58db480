//! Compartmental benchmark forecasters fitted by least squares: SEIR,
//! SuEIR (with a discovery fraction) and SEIR with a Legendre-series
//! transmission rate.

use rand::Rng;

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::ode::{
    rk4_step, CompartmentState, Compartmental, SeirParams, SueirParams, Transmission,
    TransmissionBasis,
};
use crate::optim::{nelder_mead, NelderMeadOptions};
use crate::rfm::bic_from_rss;
use crate::seeding;
use crate::spade4::ForecastResult;
use crate::timeseries::TimeSeries;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelKind {
    Seir,
    Sueir,
    SeirBetaT,
}

/// Which model output is compared with the observations.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum TargetKind {
    /// `I(t)`
    #[default]
    Active,
    /// `I(t) + R(t)`
    Cumulative,
}

pub const DEFAULT_E0_MULTIPLIERS: [f64; 9] = [0.0, 1.0, 5.0, 10.0, 15.0, 20.0, 25.0, 50.0, 80.0];

/// Range of the log-uniform draw for initial rates.
const RATE_RANGE: (f64, f64) = (1e-3, 1e1);

/// Fitted rates are confined to this range (per sampling interval). Without
/// a bound the least-squares optimum can drift to stiff rates that the fixed
/// integration step cannot follow past the training window; with the default
/// five steps per interval the largest rate keeps `h * rate <= 2`.
const RATE_BOUNDS: (f64, f64) = (1e-4, 1e1);

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn rate_from(x: f64) -> f64 {
    let (a, b) = (RATE_BOUNDS.0.ln(), RATE_BOUNDS.1.ln());
    (a + (b - a) * logistic(x)).exp()
}

fn rate_to(rate: f64) -> f64 {
    let (a, b) = (RATE_BOUNDS.0.ln(), RATE_BOUNDS.1.ln());
    logit(((rate.ln() - a) / (b - a)).clamp(1e-9, 1.0 - 1e-9))
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitSpec {
    pub model_kind: ModelKind,
    pub target_kind: TargetKind,
    pub restarts: usize,
    pub e0_multipliers: Vec<f64>,
    /// Legendre orders tried for [`ModelKind::SeirBetaT`].
    pub q_grid: Vec<usize>,
    /// Known `I(0)`; `None` takes the first training observation.
    pub initial_infected: Option<f64>,
    pub seed: u64,
    pub optimizer: NelderMeadOptions,
    /// RK4 steps per sampling interval inside the fit loss.
    pub steps_per_sample: usize,
    pub exec: Exec,
}

impl FitSpec {
    pub fn new(model_kind: ModelKind) -> Self {
        FitSpec {
            model_kind,
            target_kind: TargetKind::Active,
            restarts: 100,
            e0_multipliers: DEFAULT_E0_MULTIPLIERS.to_vec(),
            q_grid: (1..=6).collect(),
            initial_infected: None,
            seed: 0,
            optimizer: NelderMeadOptions::default(),
            steps_per_sample: 5,
            exec: Exec::default(),
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        FitSpec {
            seed,
            ..self.clone()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.restarts == 0 {
            return Err(Error::InvalidParameter(
                "restarts must be at least 1".into(),
            ));
        }
        if self.e0_multipliers.is_empty() || self.e0_multipliers.iter().any(|k| !(*k >= 0.0)) {
            return Err(Error::InvalidParameter(
                "E(0) multipliers must be non-empty and non-negative".into(),
            ));
        }
        if self.steps_per_sample == 0 {
            return Err(Error::InvalidParameter(
                "steps_per_sample must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum FittedParams {
    Seir {
        beta: f64,
        sigma: f64,
        gamma: f64,
    },
    Sueir {
        beta: f64,
        sigma: f64,
        gamma: f64,
        mu: f64,
    },
    SeirBetaT {
        basis: TransmissionBasis,
        sigma: f64,
        gamma: f64,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchmarkFit {
    pub params: FittedParams,
    pub e0: f64,
    pub initial: CompartmentState,
    pub train_sse: f64,
    /// Legendre order, for time-varying transmission only.
    pub q: Option<usize>,
    pub target_kind: TargetKind,
    pub population: f64,
    /// RK4 steps per sample used in the fit, reused for prediction.
    pub steps_per_sample: usize,
}

enum Model {
    Seir(SeirParams),
    Sueir(SueirParams),
}

fn build_model(params: &FittedParams, population: f64) -> Model {
    match params {
        FittedParams::Seir { beta, sigma, gamma } => Model::Seir(SeirParams {
            beta: Transmission::Constant(*beta),
            sigma: *sigma,
            gamma: *gamma,
            population,
        }),
        FittedParams::Sueir {
            beta,
            sigma,
            gamma,
            mu,
        } => Model::Sueir(SueirParams {
            beta: *beta,
            sigma: *sigma,
            gamma: *gamma,
            mu: *mu,
            population,
        }),
        FittedParams::SeirBetaT {
            basis,
            sigma,
            gamma,
        } => Model::Seir(SeirParams {
            beta: Transmission::TimeVarying(basis.clone()),
            sigma: *sigma,
            gamma: *gamma,
            population,
        }),
    }
}

fn target_of(y: &[f64; 4], kind: TargetKind) -> f64 {
    match kind {
        TargetKind::Active => y[2],
        TargetKind::Cumulative => y[2] + y[3],
    }
}

/// Calls `visit(k, target)` for samples `k = 0..samples`; stops early and
/// returns false if the state stops being finite or `visit` returns false.
fn simulate(
    model: &Model,
    initial: &CompartmentState,
    dt: f64,
    steps_per_sample: usize,
    samples: usize,
    kind: TargetKind,
    visit: impl FnMut(usize, f64) -> bool,
) -> bool {
    match model {
        Model::Seir(p) => simulate_with(p, initial, dt, steps_per_sample, samples, kind, visit),
        Model::Sueir(p) => simulate_with(p, initial, dt, steps_per_sample, samples, kind, visit),
    }
}

fn simulate_with<M: Compartmental>(
    model: &M,
    initial: &CompartmentState,
    dt: f64,
    steps_per_sample: usize,
    samples: usize,
    kind: TargetKind,
    mut visit: impl FnMut(usize, f64) -> bool,
) -> bool {
    let h = dt / steps_per_sample as f64;
    let mut y = initial.to_array();
    if samples == 0 || !visit(0, target_of(&y, kind)) {
        return samples == 0;
    }
    for k in 1..samples {
        let t0 = initial.t + (k - 1) as f64 * dt;
        for j in 0..steps_per_sample {
            y = rk4_step(|t, y| model.derivative(t, y), t0 + j as f64 * h, &y, h);
        }
        if !y.iter().all(|v| v.is_finite()) || !visit(k, target_of(&y, kind)) {
            return false;
        }
    }
    true
}

fn sse(
    model: &Model,
    initial: &CompartmentState,
    train: &TimeSeries,
    steps_per_sample: usize,
    kind: TargetKind,
) -> f64 {
    let obs = train.values();
    let mut total = 0.0;
    let ok = simulate(
        model,
        initial,
        train.dt(),
        steps_per_sample,
        obs.len(),
        kind,
        |k, v| {
            total += (v - obs[k]).powi(2);
            true
        },
    );
    if ok {
        total
    } else {
        f64::INFINITY
    }
}

/// Unconstrained coordinates for each model family. Rates live on a bounded
/// log scale and the discovery fraction on a logit scale; Legendre weights
/// beyond the first are stored relative to the first.
struct Coordinates {
    kind: ModelKind,
    q: usize,
    t_min: f64,
    t_max: f64,
}

impl Coordinates {
    fn dim(&self) -> usize {
        match self.kind {
            ModelKind::Seir => 3,
            ModelKind::Sueir => 4,
            ModelKind::SeirBetaT => self.q + 3,
        }
    }

    fn decode(&self, x: &[f64]) -> Option<FittedParams> {
        let p = match self.kind {
            ModelKind::Seir => FittedParams::Seir {
                beta: rate_from(x[0]),
                sigma: rate_from(x[1]),
                gamma: rate_from(x[2]),
            },
            ModelKind::Sueir => FittedParams::Sueir {
                beta: rate_from(x[0]),
                sigma: rate_from(x[1]),
                gamma: rate_from(x[2]),
                mu: logistic(x[3]),
            },
            ModelKind::SeirBetaT => {
                let xi0 = rate_from(x[0]);
                let mut coeffs = Vec::with_capacity(self.q + 1);
                coeffs.push(xi0);
                coeffs.extend(x[1..=self.q].iter().map(|u| xi0 * u));
                FittedParams::SeirBetaT {
                    basis: TransmissionBasis::new(coeffs, self.t_min, self.t_max).ok()?,
                    sigma: rate_from(x[self.q + 1]),
                    gamma: rate_from(x[self.q + 2]),
                }
            }
        };
        Some(p)
    }

    fn random_start(&self, rng: &mut impl Rng) -> Vec<f64> {
        let (lo, hi) = (RATE_RANGE.0.ln(), RATE_RANGE.1.ln());
        let mut x: Vec<f64> = (0..3)
            .map(|_| rate_to(rng.random_range(lo..hi).exp()))
            .collect();
        match self.kind {
            ModelKind::Seir => {}
            ModelKind::Sueir => {
                let mu: f64 = rng.random_range(1e-6..1.0 - 1e-6);
                x.push(logit(mu));
            }
            ModelKind::SeirBetaT => {
                // [xi_0, sigma, gamma] drawn above; relative weights go in between
                let rel: Vec<f64> = (0..self.q).map(|_| rng.random_range(-0.5..0.5)).collect();
                x.splice(1..1, rel);
            }
        }
        x
    }
}

fn check_inputs(train: &TimeSeries, spec: &FitSpec, population: f64, free: usize) -> Result<()> {
    spec.validate()?;
    if !(population > 0.0 && population.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "population must be positive, got {population}"
        )));
    }
    if train.len() < free + 1 {
        return Err(Error::InsufficientData(format!(
            "{} training samples cannot identify {free} parameters",
            train.len()
        )));
    }
    Ok(())
}

/// Restarts seeds depend only on `(seed, q, e0 index, restart)`, so adding
/// restarts never makes the best fit worse.
fn fit_order(
    train: &TimeSeries,
    spec: &FitSpec,
    population: f64,
    coords: &Coordinates,
) -> Result<BenchmarkFit> {
    check_inputs(train, spec, population, coords.dim())?;
    let i0 = spec.initial_infected.unwrap_or(train.values()[0]);
    if !(i0 >= 0.0 && i0.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "initial infective level must be non-negative, got {i0}"
        )));
    }
    let candidates: Vec<(usize, f64)> = spec
        .e0_multipliers
        .iter()
        .enumerate()
        .map(|(idx, k)| (idx, k * i0))
        .filter(|(_, e0)| population - e0 - i0 >= 0.0)
        .collect();
    if candidates.is_empty() {
        return Err(Error::InvalidParameter(
            "every E(0) candidate exceeds the population".into(),
        ));
    }
    let t0 = train.t0() as f64;
    let restarts = spec.restarts;
    let runs = spec.exec.map(candidates.len() * restarts, |task| {
        let (idx, e0) = candidates[task / restarts];
        let restart = task % restarts;
        let seed = seeding::derive_seed(spec.seed, &[coords.q as u64, idx as u64, restart as u64]);
        let mut rng = seeding::rng(seed);
        let x0 = coords.random_start(&mut rng);
        let initial = CompartmentState::new(t0, population - e0 - i0, e0, i0, 0.0);
        let loss = |x: &[f64]| match coords.decode(x) {
            Some(p) => sse(
                &build_model(&p, population),
                &initial,
                train,
                spec.steps_per_sample,
                spec.target_kind,
            ),
            None => f64::INFINITY,
        };
        let best = nelder_mead(loss, &x0, &spec.optimizer);
        (best, e0, initial)
    });
    let (best, e0, initial) = runs
        .into_iter()
        .filter(|(m, _, _)| m.f.is_finite())
        .min_by(|a, b| a.0.f.total_cmp(&b.0.f))
        .ok_or_else(|| Error::FitFailure("every restart diverged".into()))?;
    let params = coords
        .decode(&best.x)
        .ok_or_else(|| Error::FitFailure("optimum decodes to invalid parameters".into()))?;
    Ok(BenchmarkFit {
        params,
        e0,
        initial,
        train_sse: best.f,
        q: (coords.kind == ModelKind::SeirBetaT).then_some(coords.q),
        target_kind: spec.target_kind,
        population,
        steps_per_sample: spec.steps_per_sample,
    })
}

/// Least-squares fit of a constant-rate model (SEIR or SuEIR), searching the
/// E(0) grid and `spec.restarts` random starts per grid point.
pub fn fit_benchmark(train: &TimeSeries, spec: &FitSpec, population: f64) -> Result<BenchmarkFit> {
    if spec.model_kind == ModelKind::SeirBetaT {
        return fit_seir_beta_t(train, spec, population);
    }
    let coords = Coordinates {
        kind: spec.model_kind,
        q: 0,
        t_min: 0.0,
        t_max: 0.0,
    };
    fit_order(train, spec, population, &coords)
}

/// SEIR with `beta(t) = sum_k xi_k P_k(x)` on the training span; the order
/// is chosen from `spec.q_grid` by BIC with `q + 3` free parameters.
pub fn fit_seir_beta_t(
    train: &TimeSeries,
    spec: &FitSpec,
    population: f64,
) -> Result<BenchmarkFit> {
    if spec.q_grid.is_empty() {
        return Err(Error::InvalidParameter("q grid is empty".into()));
    }
    let (t_min, t_max) = (train.t0() as f64, train.last_day());
    if !(t_max > t_min) {
        return Err(Error::InsufficientData(
            "time-varying transmission needs a training span longer than one sample".into(),
        ));
    }
    let n = train.len();
    let mut best: Option<(f64, BenchmarkFit)> = None;
    for &q in &spec.q_grid {
        let coords = Coordinates {
            kind: ModelKind::SeirBetaT,
            q,
            t_min,
            t_max,
        };
        let fit = fit_order(train, spec, population, &coords)?;
        let bic = bic_from_rss(fit.train_sse, n, q + 3);
        if best.as_ref().is_none_or(|(b, _)| bic < *b) {
            best = Some((bic, fit));
        }
    }
    Ok(best.expect("q grid is non-empty").1)
}

/// Integrates the fitted model through the training span and `horizon`
/// further samples and returns the last `horizon` target values.
pub fn predict_benchmark(
    fit: &BenchmarkFit,
    train: &TimeSeries,
    horizon: usize,
) -> Result<ForecastResult> {
    if horizon == 0 {
        return Err(Error::InvalidParameter("horizon must be at least 1".into()));
    }
    let model = build_model(&fit.params, fit.population);
    let m = train.len();
    let mut values = Vec::with_capacity(horizon);
    let ok = simulate(
        &model,
        &fit.initial,
        train.dt(),
        fit.steps_per_sample.max(1),
        m + horizon,
        fit.target_kind,
        |k, v| {
            if k >= m {
                values.push(v);
            }
            true
        },
    );
    if !ok {
        return Err(Error::Divergence {
            t: fit.initial.t + (m + values.len()) as f64 * train.dt(),
        });
    }
    Ok(ForecastResult {
        first_day: train.last_day() + train.dt(),
        dt: train.dt(),
        values,
    })
}

/// Fitted time-varying transmission evaluated over the training span.
pub fn transmission_profile(fit: &BenchmarkFit, times: &[f64]) -> Vec<f64> {
    let model = build_model(&fit.params, fit.population);
    match model {
        Model::Seir(p) => times.iter().map(|&t| p.beta.rate_at(t)).collect(),
        Model::Sueir(p) => vec![p.beta; times.len()],
    }
}
