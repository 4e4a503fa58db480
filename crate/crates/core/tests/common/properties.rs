//! Randomised invariants, one function per property. Each runs on a caller
//! supplied `TestRunner` so the invariant suite and the acceptance runner
//! share the definitions.

use proptest::collection::vec;
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};

use spade4::embedding::{
    build_delay_dataset, estimate_derivative, smooth_derivative, EmbeddingConfig,
};
use spade4::intervals::{BacktestResiduals, IntervalResult, Z95};
use spade4::ode::{
    integrate, legendre_eval, seir_rhs, sueir_rhs, CompartmentState, SeirParams, SueirParams,
    Transmission,
};
use spade4::rfm::{
    feature_matrix, lasso_solve, sample_basis, LassoMethod, LassoOptions, SparseCoefficients,
    DEFAULT_LAMBDA_GRID,
};
use spade4::spade4::{fit, ForecastResult, RfmConfig, Spade4Model};
use spade4::timeseries::{
    denormalize, inject_noise, normalize, parse_csv, relative_error, seven_day_average, to_csv,
    NoiseSpec, NormalizationSpec, TimeSeries,
};
use spade4::Exec;

use super::{gaussian_matrix, gaussian_vec, kkt_holds, orthonormal};

pub type Property = fn(&mut TestRunner) -> Result<(), String>;

pub const CASES: u32 = 256;

/// Deterministic runner so failures reproduce.
pub fn runner(cases: u32) -> TestRunner {
    let config = Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    };
    TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha))
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1e-300)
}

fn rng_from(seed: u64) -> rand_chacha::ChaCha8Rng {
    rand::SeedableRng::seed_from_u64(seed)
}

fn series() -> impl Strategy<Value = Vec<f64>> {
    vec(0.0f64..1e3, 2..60)
}

pub fn seven_day_average_constant(r: &mut TestRunner) -> Result<(), String> {
    r.run(&(0.0f64..1e6, 1usize..50), |(c, n)| {
        let s = TimeSeries::daily(vec![c; n]).unwrap();
        let avg = seven_day_average(&s).unwrap();
        prop_assert_eq!(avg.len(), n);
        prop_assert!(avg.values().iter().all(|v| close(*v, c, 1e-14)));
        Ok(())
    })
    .map_err(|e| e.to_string())
}

pub fn normalize_round_trip(r: &mut TestRunner) -> Result<(), String> {
    r.run(&(series(), 1.0f64..1e9, 1e-6f64..1.0), |(v, p, c)| {
        let s = TimeSeries::daily(v).unwrap();
        let n = NormalizationSpec::new(p, c).unwrap();
        let back = denormalize(&normalize(&s, &n), &n);
        for (a, b) in s.values().iter().zip(back.values()) {
            prop_assert!(close(*a, *b, 4.0 * f64::EPSILON), "{} vs {}", a, b);
        }
        Ok(())
    })
    .map_err(|e| e.to_string())
}

pub fn relative_error_identity_and_scale(r: &mut TestRunner) -> Result<(), String> {
    let strat = (
        vec((0.1f64..10.0, -10.0f64..10.0), 1..20),
        1e-3f64..1e3,
        any::<bool>(),
    );
    r.run(&strat, |(pairs, alpha, flip)| {
        let (a, b): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        prop_assert_eq!(relative_error(&a, &a).unwrap(), 0.0);
        let alpha = if flip { -alpha } else { alpha };
        let sa: Vec<f64> = a.iter().map(|x| alpha * x).collect();
        let sb: Vec<f64> = b.iter().map(|x| alpha * x).collect();
        let e1 = relative_error(&a, &b).unwrap();
        let e2 = relative_error(&sa, &sb).unwrap();
        prop_assert!(close(e1, e2, 1e-12), "{} vs {}", e1, e2);
        Ok(())
    })
    .map_err(|e| e.to_string())
}

pub fn noise_is_reproducible(r: &mut TestRunner) -> Result<(), String> {
    r.run(&(series(), 0.0f64..0.5, any::<u64>()), |(v, eta, seed)| {
        let s = TimeSeries::daily(v).unwrap();
        let spec = NoiseSpec { eta, seed };
        let a = inject_noise(&s, &spec).unwrap();
        let b = inject_noise(&s, &spec).unwrap();
        prop_assert_eq!(a.values(), b.values());
        Ok(())
    })
    .map_err(|e| e.to_string())
}

fn state() -> impl Strategy<Value = CompartmentState> {
    (
        0.0f64..1e6,
        0.0f64..1e4,
        0.0f64..1e4,
        0.0f64..1e5,
        0.0f64..200.0,
    )
        .prop_map(|(s, e, i, r, t)| CompartmentState::new(t, s, e, i, r))
}

/// Floating sums of four terms cancel to rounding, not to an exact zero.
fn rounding_bound(d: &[f64; 4]) -> f64 {
    8.0 * f64::EPSILON * d.iter().map(|v| v.abs()).sum::<f64>()
}

pub fn seir_conserves_population(r: &mut TestRunner) -> Result<(), String> {
    let strat = (state(), 0.01f64..2.0, 0.01f64..1.0, 0.01f64..1.0);
    r.run(&strat, |(st, beta, sigma, gamma)| {
        let params = SeirParams {
            beta: Transmission::Constant(beta),
            sigma,
            gamma,
            population: st.total().max(1.0),
        };
        let d = seir_rhs(&st, &params);
        let sum: f64 = d.iter().sum();
        prop_assert!(sum.abs() <= rounding_bound(&d), "sum {} for {:?}", sum, d);
        Ok(())
    })
    .map_err(|e| e.to_string())
}

pub fn sueir_loses_undiscovered_exposed(r: &mut TestRunner) -> Result<(), String> {
    let strat = (
        state(),
        0.01f64..2.0,
        0.01f64..1.0,
        0.01f64..1.0,
        0.0f64..=1.0,
    );
    r.run(&strat, |(st, beta, sigma, gamma, mu)| {
        let params = SueirParams {
            beta,
            sigma,
            gamma,
            mu,
            population: st.total().max(1.0),
        };
        let d = sueir_rhs(&st, &params);
        let sum: f64 = d.iter().sum();
        let expected = (mu - 1.0) * sigma * st.e;
        let bound = rounding_bound(&d) + 4.0 * f64::EPSILON * expected.abs();
        prop_assert!((sum - expected).abs() <= bound, "{} vs {}", sum, expected);
        Ok(())
    })
    .map_err(|e| e.to_string())
}

pub fn legendre_recurrence_and_bound(r: &mut TestRunner) -> Result<(), String> {
    r.run(&(-1.0f64..=1.0, 1usize..10), |(x, k)| {
        let (pm, p0, pp) = (
            legendre_eval(k - 1, x),
            legendre_eval(k, x),
            legendre_eval(k + 1, x),
        );
        let kf = k as f64;
        let lhs = (kf + 1.0) * pp;
        let rhs = (2.0 * kf + 1.0) * x * p0 - kf * pm;
        prop_assert!((lhs - rhs).abs() <= 1e-13, "{} vs {}", lhs, rhs);
        for order in 0..=10 {
            prop_assert!(legendre_eval(order, x).abs() <= 1.0 + 1e-14);
        }
        Ok(())
    })
    .map_err(|e| e.to_string())
}

pub fn trajectories_stay_non_negative(r: &mut TestRunner) -> Result<(), String> {
    let strat = (
        state(),
        0.05f64..2.0,
        0.01f64..1.0,
        0.01f64..1.0,
        0.0f64..=1.0,
    );
    r.run(&strat, |(st, beta, sigma, gamma, mu)| {
        let st = CompartmentState { t: 0.0, ..st };
        let params = SueirParams {
            beta,
            sigma,
            gamma,
            mu,
            population: st.total().max(1.0),
        };
        let traj = integrate(&params, st, 0.05, 60.0).unwrap();
        for s in &traj.states {
            prop_assert!(s.to_array().iter().all(|v| *v >= -1e-12), "{:?}", s);
        }
        Ok(())
    })
    .map_err(|e| e.to_string())
}

pub fn delay_dataset_shape_and_rows(r: &mut TestRunner) -> Result<(), String> {
    r.run(&(vec(-5.0f64..5.0, 3..60), 1usize..12), |(v, p)| {
        prop_assume!(v.len() > p);
        let m = v.len();
        let s = TimeSeries::daily(v.clone()).unwrap();
        let cfg = EmbeddingConfig::default().with_p(p);
        let targets = vec![0.0; m];
        let d = build_delay_dataset(&s, &cfg, &targets).unwrap();
        prop_assert_eq!(d.rows(), m - p + 1);
        prop_assert_eq!(d.dim(), p);
        for row in 0..d.rows() {
            let k = row + p - 1;
            let mut h = d.input(row).to_vec();
            h.reverse();
            prop_assert_eq!(&h[..], &v[k + 1 - p..=k]);
        }
        Ok(())
    })
    .map_err(|e| e.to_string())
}

pub fn smoothing_is_linear(r: &mut TestRunner) -> Result<(), String> {
    let strat = (
        vec((-5.0f64..5.0, -5.0f64..5.0), 1..50),
        -3.0f64..3.0,
        -3.0f64..3.0,
        1usize..20,
    );
    r.run(&strat, |(pairs, alpha, beta, s)| {
        let (a, b): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let mix: Vec<f64> = a
            .iter()
            .zip(&b)
            .map(|(x, y)| alpha * x + beta * y)
            .collect();
        let lhs = smooth_derivative(&mix, s);
        let (sa, sb) = (smooth_derivative(&a, s), smooth_derivative(&b, s));
        for k in 0..lhs.len() {
            let rhs = alpha * sa[k] + beta * sb[k];
            prop_assert!(
                (lhs[k] - rhs).abs() <= 1e-12 * (1.0 + rhs.abs()),
                "{} vs {}",
                lhs[k],
                rhs
            );
        }
        Ok(())
    })
    .map_err(|e| e.to_string())
}

pub fn derivative_exact_on_affine(r: &mut TestRunner) -> Result<(), String> {
    r.run(
        &(-10.0f64..10.0, -100.0f64..100.0, 2usize..50),
        |(slope, offset, m)| {
            let v = (0..m).map(|k| offset + slope * k as f64).collect();
            let d = estimate_derivative(&TimeSeries::daily(v).unwrap()).unwrap();
            prop_assert!(d
                .iter()
                .all(|x| (x - slope).abs() <= 1e-11 * (1.0 + offset.abs())));
            Ok(())
        },
    )
    .map_err(|e| e.to_string())
}

pub fn lasso_kkt_residuals(r: &mut TestRunner) -> Result<(), String> {
    r.run(
        &(any::<u64>(), 0.1f64..10.0, any::<bool>()),
        |(seed, lambda, active)| {
            let mut rng = rng_from(seed);
            let a = gaussian_matrix(&mut rng, 10, 15);
            let z = gaussian_vec(&mut rng, 10);
            let opts = LassoOptions {
                method: if active {
                    LassoMethod::ActiveSet
                } else {
                    LassoMethod::CoordinateDescent
                },
                ..LassoOptions::default()
            };
            let c = lasso_solve(&a, &z, lambda, &opts).unwrap();
            prop_assert!(c.converged);
            prop_assert!(kkt_holds(&a, &z, c.values(), lambda, opts.tol));
            Ok(())
        },
    )
    .map_err(|e| e.to_string())
}

pub fn lasso_objective_never_increases(r: &mut TestRunner) -> Result<(), String> {
    r.run(&(any::<u64>(), 0.01f64..10.0), |(seed, lambda)| {
        let mut rng = rng_from(seed);
        let a = gaussian_matrix(&mut rng, 12, 20);
        let z = gaussian_vec(&mut rng, 12);
        let opts = LassoOptions {
            trace: true,
            ..LassoOptions::default()
        };
        let c = lasso_solve(&a, &z, lambda, &opts).unwrap();
        for w in c.objective_trace.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-13) + 1e-15, "{} -> {}", w[0], w[1]);
        }
        Ok(())
    })
    .map_err(|e| e.to_string())
}

pub fn features_are_non_negative(r: &mut TestRunner) -> Result<(), String> {
    r.run(
        &(any::<u64>(), 1usize..12, vec(-10.0f64..10.0, 12 * 8)),
        |(seed, p, pool)| {
            let basis = sample_basis(p, 30, seed).unwrap();
            let rows: Vec<&[f64]> = pool.chunks_exact(12).map(|c| &c[..p]).collect();
            let a = feature_matrix(&basis, rows).unwrap();
            prop_assert!(a.iter().all(|v| *v >= 0.0));
            Ok(())
        },
    )
    .map_err(|e| e.to_string())
}

pub fn orthonormal_support_shrinks_with_lambda(r: &mut TestRunner) -> Result<(), String> {
    r.run(&(any::<u64>(), vec(-23.0f64..-11.5, 8)), |(seed, log_w)| {
        let mut rng = rng_from(seed);
        let q = orthonormal(&mut rng, 8);
        let w = nalgebra::DVector::from_iterator(8, log_w.iter().map(|l| l.exp()));
        let z: Vec<f64> = (&q * w).iter().copied().collect();
        let mut grid = DEFAULT_LAMBDA_GRID.to_vec();
        grid.sort_by(f64::total_cmp);
        let nnz: Vec<usize> = grid
            .iter()
            .map(|&l| {
                lasso_solve(&q, &z, l, &LassoOptions::default())
                    .unwrap()
                    .nnz
            })
            .collect();
        prop_assert!(nnz.windows(2).all(|w| w[1] <= w[0]), "{:?}", nnz);
        Ok(())
    })
    .map_err(|e| e.to_string())
}

fn small_rfm(seed: u64) -> RfmConfig {
    RfmConfig {
        n_features: Some(40),
        seed,
        exec: Exec::Sequential,
        ..RfmConfig::default()
    }
}

/// Logistic-like growth curves with a little wiggle.
fn epidemic_curve() -> impl Strategy<Value = TimeSeries> {
    (20usize..40, 0.05f64..0.3, 10.0f64..40.0, 0.0f64..0.01).prop_map(|(m, rate, mid, wiggle)| {
        let v = (0..m)
            .map(|k| {
                let t = k as f64;
                1.0 / (1.0 + (-rate * (t - mid)).exp()) + wiggle * (0.7 * t).sin()
            })
            .collect();
        TimeSeries::daily(v).unwrap()
    })
}

pub fn forecasts_are_deterministic(r: &mut TestRunner) -> Result<(), String> {
    r.run(&(epidemic_curve(), any::<u64>()), |(s, seed)| {
        let cfg = EmbeddingConfig::default().with_p(5);
        let a = fit(&s, &cfg, &small_rfm(seed)).unwrap().predict(7).unwrap();
        let b = fit(&s, &cfg, &small_rfm(seed)).unwrap().predict(7).unwrap();
        prop_assert_eq!(a, b);
        Ok(())
    })
    .map_err(|e| e.to_string())
}

pub fn rollout_prefix_consistency(r: &mut TestRunner) -> Result<(), String> {
    r.run(
        &(epidemic_curve(), any::<u64>(), 1usize..10, 0usize..10),
        |(s, seed, t1, extra)| {
            let cfg = EmbeddingConfig::default().with_p(5);
            let model = fit(&s, &cfg, &small_rfm(seed)).unwrap();
            let short = model.predict(t1).unwrap();
            let long = model.predict(t1 + extra).unwrap();
            prop_assert_eq!(&short.values[..], &long.values[..t1]);
            Ok(())
        },
    )
    .map_err(|e| e.to_string())
}

pub fn zero_model_holds_last_value(r: &mut TestRunner) -> Result<(), String> {
    r.run(
        &(vec(0.0f64..5.0, 9), any::<u64>(), 1usize..20),
        |(tail, seed, horizon)| {
            let n = 25;
            let model = Spade4Model {
                basis: sample_basis(9, n, seed).unwrap(),
                coeffs: SparseCoefficients::zeros(n, 1e-6),
                cfg: EmbeddingConfig::default(),
                train_tail: tail.clone(),
                dt: 1.0,
                last_day: 8.0,
            };
            let f = model.predict(horizon).unwrap();
            prop_assert!(f.values.iter().all(|v| *v == tail[8]));
            Ok(())
        },
    )
    .map_err(|e| e.to_string())
}

pub fn interval_band_identities(r: &mut TestRunner) -> Result<(), String> {
    let lead = vec(prop_oneof![Just(0.0), -1.0f64..1.0], 1..6);
    let strat = (vec(lead, 1..8), vec(0.0f64..2.0, 8));
    r.run(&strat, |(rows, point)| {
        let width = rows[0].len();
        let v: Vec<Vec<f64>> = rows
            .into_iter()
            .map(|mut row| {
                row.resize(width, 0.0);
                row
            })
            .collect();
        let horizon = v.len();
        let residuals = BacktestResiduals { v, m1: 0, m2: 0 };
        let sigma = residuals.sigma();
        for (s, row) in sigma.iter().zip(&residuals.v) {
            prop_assert_eq!(*s == 0.0, row.iter().all(|e| *e == 0.0));
        }
        let p = ForecastResult {
            first_day: 1.0,
            dt: 1.0,
            values: point[..horizon].to_vec(),
        };
        let iv = IntervalResult::from_sigma(p.clone(), sigma.clone(), Z95).unwrap();
        for (k, (&v, &s)) in p.values.iter().zip(&sigma).enumerate() {
            prop_assert_eq!(iv.hi[k], v + Z95 * s);
            prop_assert_eq!(iv.lo[k], (v - Z95 * s).max(0.0));
            prop_assert!(iv.contains(k, v));
        }
        Ok(())
    })
    .map_err(|e| e.to_string())
}

pub fn csv_round_trip(r: &mut TestRunner) -> Result<(), String> {
    r.run(&(-1000i64..1000, vec(-1e12f64..1e12, 1..40)), |(t0, v)| {
        let s = TimeSeries::new(t0, 1.0, v).unwrap();
        prop_assert_eq!(parse_csv(&to_csv(&s)).unwrap(), s);
        Ok(())
    })
    .map_err(|e| e.to_string())
}

pub const ALL: &[(&str, Property)] = &[
    (
        "seven-day average fixes constants",
        seven_day_average_constant,
    ),
    ("normalization round trip", normalize_round_trip),
    (
        "relative error identity and scale",
        relative_error_identity_and_scale,
    ),
    ("noise reproducibility", noise_is_reproducible),
    ("SEIR conservation", seir_conserves_population),
    (
        "SuEIR conservation defect",
        sueir_loses_undiscovered_exposed,
    ),
    (
        "Legendre recurrence and bound",
        legendre_recurrence_and_bound,
    ),
    ("trajectory non-negativity", trajectories_stay_non_negative),
    ("delay dataset shape", delay_dataset_shape_and_rows),
    ("smoothing linearity", smoothing_is_linear),
    (
        "derivative exact on affine data",
        derivative_exact_on_affine,
    ),
    ("LASSO KKT residuals", lasso_kkt_residuals),
    ("LASSO objective monotone", lasso_objective_never_increases),
    ("ReLU features non-negative", features_are_non_negative),
    (
        "orthonormal support path",
        orthonormal_support_shrinks_with_lambda,
    ),
    ("forecast determinism", forecasts_are_deterministic),
    ("rollout prefix consistency", rollout_prefix_consistency),
    ("zero model is constant", zero_model_holds_last_value),
    ("interval band identities", interval_band_identities),
    ("CSV round trip", csv_round_trip),
];
