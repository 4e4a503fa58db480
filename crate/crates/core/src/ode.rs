//! Compartmental epidemic models and a fixed-step RK4 integrator.

use crate::error::{Error, Result};
use crate::timeseries::TimeSeries;

/// Time derivative of `(S, E, I, R)`.
pub type Derivative = [f64; 4];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CompartmentState {
    pub t: f64,
    pub s: f64,
    pub e: f64,
    pub i: f64,
    pub r: f64,
}

impl CompartmentState {
    pub fn new(t: f64, s: f64, e: f64, i: f64, r: f64) -> Self {
        CompartmentState { t, s, e, i, r }
    }

    pub fn from_array(t: f64, y: [f64; 4]) -> Self {
        CompartmentState::new(t, y[0], y[1], y[2], y[3])
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.s, self.e, self.i, self.r]
    }

    pub fn total(&self) -> f64 {
        self.s + self.e + self.i + self.r
    }

    fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

/// Any autonomous or time-dependent right-hand side over `(S, E, I, R)`.
pub trait Compartmental: Sync {
    fn derivative(&self, t: f64, y: &[f64; 4]) -> Derivative;
}

/// Legendre evaluation via the Bonnet recurrence
/// `(k+1) P_{k+1} = (2k+1) x P_k - k P_{k-1}`.
pub fn legendre_eval(order: usize, x: f64) -> f64 {
    let (mut prev, mut cur) = (1.0, x);
    if order == 0 {
        return prev;
    }
    for k in 1..order {
        let k = k as f64;
        let next = ((2.0 * k + 1.0) * x * cur - k * prev) / (k + 1.0);
        prev = cur;
        cur = next;
    }
    cur
}

/// `beta(t) = sum_k xi_k P_k(x)` with `x` the affine image of `t` in `[-1, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct TransmissionBasis {
    coeffs: Vec<f64>,
    t_min: f64,
    t_max: f64,
}

impl TransmissionBasis {
    pub fn new(coeffs: Vec<f64>, t_min: f64, t_max: f64) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::InvalidParameter(
                "transmission basis needs at least one coefficient".into(),
            ));
        }
        if !(t_min < t_max) {
            return Err(Error::InvalidParameter(format!(
                "basis domain [{t_min}, {t_max}] is empty"
            )));
        }
        Ok(TransmissionBasis {
            coeffs,
            t_min,
            t_max,
        })
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.t_min, self.t_max)
    }

    fn eval_unchecked(&self, t: f64) -> f64 {
        let x = (2.0 * t - self.t_max - self.t_min) / (self.t_max - self.t_min);
        // Run the recurrence once instead of once per order.
        let mut sum = self.coeffs[0];
        if self.coeffs.len() > 1 {
            let (mut prev, mut cur) = (1.0, x);
            sum += self.coeffs[1] * cur;
            for (k, xi) in self.coeffs.iter().enumerate().skip(2) {
                let j = (k - 1) as f64;
                let next = ((2.0 * j + 1.0) * x * cur - j * prev) / (j + 1.0);
                prev = cur;
                cur = next;
                sum += xi * cur;
            }
        }
        sum
    }

    pub fn beta_of_t(&self, t: f64) -> Result<f64> {
        if !(t >= self.t_min && t <= self.t_max) {
            return Err(Error::Domain {
                t,
                min: self.t_min,
                max: self.t_max,
            });
        }
        Ok(self.eval_unchecked(t))
    }

    /// Holds the rate at the nearest endpoint outside the fitted window, which
    /// is how the model is run forward past the training span.
    pub fn beta_clamped(&self, t: f64) -> f64 {
        self.eval_unchecked(t.clamp(self.t_min, self.t_max))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Transmission {
    Constant(f64),
    TimeVarying(TransmissionBasis),
}

impl Transmission {
    /// Rate used inside the dynamics; a time-varying rate is floored at 0.
    pub fn rate_at(&self, t: f64) -> f64 {
        match self {
            Transmission::Constant(b) => *b,
            Transmission::TimeVarying(basis) => basis.beta_clamped(t).max(0.0),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SeirParams {
    pub beta: Transmission,
    pub sigma: f64,
    pub gamma: f64,
    pub population: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SueirParams {
    pub beta: f64,
    pub sigma: f64,
    pub gamma: f64,
    /// Discovery rate in `[0, 1]`.
    pub mu: f64,
    pub population: f64,
}

impl SueirParams {
    /// Parameters and population of the synthetic benchmark outbreak.
    pub fn synthetic_reference() -> Self {
        let initial = CompartmentState::synthetic_reference();
        SueirParams {
            beta: 3.0 / 14.0,
            sigma: 0.25,
            gamma: 1.0 / 14.0,
            mu: 0.75,
            population: initial.total(),
        }
    }
}

impl CompartmentState {
    /// `S = 1e6, E = 0, I = 1, R = 0` at day 0.
    pub fn synthetic_reference() -> Self {
        CompartmentState::new(0.0, 1e6, 0.0, 1.0, 0.0)
    }
}

pub fn seir_rhs(state: &CompartmentState, params: &SeirParams) -> Derivative {
    params.derivative(state.t, &state.to_array())
}

pub fn sueir_rhs(state: &CompartmentState, params: &SueirParams) -> Derivative {
    params.derivative(state.t, &state.to_array())
}

impl Compartmental for SeirParams {
    fn derivative(&self, t: f64, y: &[f64; 4]) -> Derivative {
        let [s, e, i, _] = *y;
        // rate over population first keeps the division off the state chain
        let infection = self.beta.rate_at(t) / self.population * s * i;
        let onset = self.sigma * e;
        let removal = self.gamma * i;
        [-infection, infection - onset, onset - removal, removal]
    }
}

impl Compartmental for SueirParams {
    fn derivative(&self, _t: f64, y: &[f64; 4]) -> Derivative {
        let [s, e, i, _] = *y;
        let infection = self.beta / self.population * (i + e) * s;
        let onset = self.sigma * e;
        let removal = self.gamma * i;
        [
            -infection,
            infection - onset,
            self.mu * onset - removal,
            removal,
        ]
    }
}

impl<F> Compartmental for F
where
    F: Fn(f64, &[f64; 4]) -> Derivative + Sync,
{
    fn derivative(&self, t: f64, y: &[f64; 4]) -> Derivative {
        self(t, y)
    }
}

/// One classical fourth-order Runge-Kutta step.
pub fn rk4_step<const N: usize>(
    f: impl Fn(f64, &[f64; N]) -> [f64; N],
    t: f64,
    y: &[f64; N],
    h: f64,
) -> [f64; N] {
    let axpy = |a: &[f64; N], k: &[f64; N], s: f64| -> [f64; N] {
        std::array::from_fn(|i| a[i] + s * k[i])
    };
    let k1 = f(t, y);
    let k2 = f(t + 0.5 * h, &axpy(y, &k1, 0.5 * h));
    let k3 = f(t + 0.5 * h, &axpy(y, &k2, 0.5 * h));
    let k4 = f(t + h, &axpy(y, &k3, h));
    std::array::from_fn(|i| y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
}

/// RK4 states at every step, including the initial state.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub step: f64,
    pub states: Vec<CompartmentState>,
}

impl Trajectory {
    pub fn last(&self) -> &CompartmentState {
        self.states
            .last()
            .expect("trajectory holds the initial state")
    }

    /// Every state whose time is an integer multiple of `interval` past the start.
    pub fn sample_every(&self, interval: f64) -> Result<Vec<CompartmentState>> {
        let stride = steps_per(interval, self.step)?;
        Ok(self.states.iter().step_by(stride).copied().collect())
    }

    pub fn daily(&self) -> Result<Vec<CompartmentState>> {
        self.sample_every(1.0)
    }
}

fn steps_per(interval: f64, step: f64) -> Result<usize> {
    let ratio = interval / step;
    let stride = ratio.round();
    if stride < 1.0 || (ratio - stride).abs() > 1e-9 * ratio.max(1.0) {
        return Err(Error::InvalidParameter(format!(
            "sampling interval {interval} is not a whole number of steps of {step}"
        )));
    }
    Ok(stride as usize)
}

fn check_step(step: f64, horizon: f64) -> Result<usize> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "step must be positive, got {step}"
        )));
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "horizon must be positive, got {horizon}"
        )));
    }
    Ok(((horizon / step).round() as usize).max(1))
}

/// Fixed-step RK4 from `initial.t` to `initial.t + horizon`. The step is
/// adjusted so that a whole number of steps spans the horizon.
pub fn integrate<M: Compartmental + ?Sized>(
    model: &M,
    initial: CompartmentState,
    step: f64,
    horizon: f64,
) -> Result<Trajectory> {
    let n = check_step(step, horizon)?;
    let h = horizon / n as f64;
    let mut states = Vec::with_capacity(n + 1);
    states.push(initial);
    let mut y = initial.to_array();
    for k in 1..=n {
        let t = initial.t + (k - 1) as f64 * h;
        y = rk4_step(|t, y| model.derivative(t, y), t, &y, h);
        let state = CompartmentState::from_array(initial.t + k as f64 * h, y);
        if !state.is_finite() {
            return Err(Error::Divergence { t: state.t });
        }
        states.push(state);
    }
    Ok(Trajectory { step: h, states })
}

/// Integrates with `steps_per_sample` RK4 steps between recorded samples and
/// keeps only the samples; `samples` includes the initial state.
pub fn integrate_sampled<M: Compartmental + ?Sized>(
    model: &M,
    initial: CompartmentState,
    sample_interval: f64,
    steps_per_sample: usize,
    samples: usize,
) -> Result<Vec<CompartmentState>> {
    if steps_per_sample == 0 || !(sample_interval > 0.0) {
        return Err(Error::InvalidParameter(
            "sampling needs a positive interval and at least one step".into(),
        ));
    }
    let h = sample_interval / steps_per_sample as f64;
    let mut out = Vec::with_capacity(samples);
    if samples == 0 {
        return Ok(out);
    }
    out.push(initial);
    let mut y = initial.to_array();
    for k in 1..samples {
        let t0 = initial.t + (k - 1) as f64 * sample_interval;
        for j in 0..steps_per_sample {
            y = rk4_step(|t, y| model.derivative(t, y), t0 + j as f64 * h, &y, h);
        }
        let state = CompartmentState::from_array(initial.t + k as f64 * sample_interval, y);
        if !state.is_finite() {
            return Err(Error::Divergence { t: state.t });
        }
        out.push(state);
    }
    Ok(out)
}

/// Integration step used for synthetic data generation.
pub const SYNTHETIC_STEP: f64 = 0.01;

/// Daily `I(t) / P` over days `0..=horizon_days`.
pub fn simulate_sueir_observable(
    params: &SueirParams,
    initial: CompartmentState,
    horizon_days: usize,
) -> Result<TimeSeries> {
    if horizon_days == 0 {
        return Err(Error::InvalidParameter(
            "horizon must be at least one day".into(),
        ));
    }
    let traj = integrate(params, initial, SYNTHETIC_STEP, horizon_days as f64)?;
    let values = traj
        .daily()?
        .iter()
        .map(|s| s.i / params.population)
        .collect();
    TimeSeries::new(initial.t.round() as i64, 1.0, values)
}
