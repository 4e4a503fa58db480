//! Derivative-free minimisation by the Nelder-Mead simplex method.

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NelderMeadOptions {
    pub max_iter: usize,
    /// Converged once the objective values over the simplex differ by at
    /// most `f_tol` and every vertex lies within `x_tol` of the best one
    /// (max-norm). The default leaves the vertex test off.
    pub f_tol: f64,
    pub x_tol: f64,
    /// Edge length of the initial simplex along each axis.
    pub initial_step: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        NelderMeadOptions {
            max_iter: 2000,
            f_tol: 1e-10,
            x_tol: f64::INFINITY,
            initial_step: 0.25,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

/// Minimises `f` from `x0`. Non-finite objective values are treated as
/// `+inf`, so infeasible regions simply repel the simplex.
pub fn nelder_mead(f: impl Fn(&[f64]) -> f64, x0: &[f64], opts: &NelderMeadOptions) -> Minimum {
    let n = x0.len();
    let evaluations = std::cell::Cell::new(0);
    let eval = |x: &[f64]| {
        evaluations.set(evaluations.get() + 1);
        let v = f(x);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };
    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    simplex.push(x0.to_vec());
    for i in 0..n {
        let mut x = x0.to_vec();
        x[i] += opts.initial_step;
        simplex.push(x);
    }
    let mut values: Vec<f64> = simplex.iter().map(|x| eval(x)).collect();
    if n == 0 {
        return Minimum {
            x: Vec::new(),
            f: values[0],
            iterations: 0,
            evaluations: evaluations.get(),
            converged: true,
        };
    }

    let mut order: Vec<usize> = (0..=n).collect();
    let mut iterations = 0;
    let mut converged = false;
    let mut centroid = vec![0.0; n];
    let mut trial = vec![0.0; n];
    let mut trial2 = vec![0.0; n];
    while iterations < opts.max_iter {
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        let (best, worst, second) = (order[0], order[n], order[n - 1]);
        let spread = values[worst] - values[best];
        let width = order[1..]
            .iter()
            .flat_map(|&k| {
                simplex[k]
                    .iter()
                    .zip(&simplex[best])
                    .map(|(x, b)| (x - b).abs())
            })
            .fold(0.0, f64::max);
        if values[best].is_finite() && spread <= opts.f_tol && width <= opts.x_tol {
            converged = true;
            break;
        }
        iterations += 1;

        centroid.iter_mut().for_each(|c| *c = 0.0);
        for &k in &order[..n] {
            for (c, x) in centroid.iter_mut().zip(&simplex[k]) {
                *c += x / n as f64;
            }
        }
        let along = |out: &mut Vec<f64>, t: f64| {
            for ((o, c), w) in out.iter_mut().zip(&centroid).zip(&simplex[worst]) {
                *o = c + t * (c - w);
            }
        };

        along(&mut trial, 1.0);
        let f_r = eval(&trial);
        if f_r < values[best] {
            along(&mut trial2, 2.0);
            let f_e = eval(&trial2);
            if f_e < f_r {
                simplex[worst].copy_from_slice(&trial2);
                values[worst] = f_e;
            } else {
                simplex[worst].copy_from_slice(&trial);
                values[worst] = f_r;
            }
            continue;
        }
        if f_r < values[second] {
            simplex[worst].copy_from_slice(&trial);
            values[worst] = f_r;
            continue;
        }
        // contraction, outside if the reflection helped at all
        let (t, bound) = if f_r < values[worst] {
            (0.5, f_r)
        } else {
            (-0.5, values[worst])
        };
        along(&mut trial2, t);
        let f_c = eval(&trial2);
        if f_c < bound {
            simplex[worst].copy_from_slice(&trial2);
            values[worst] = f_c;
            continue;
        }
        // shrink towards the best vertex
        let anchor = simplex[best].clone();
        for &k in &order[1..] {
            for (x, a) in simplex[k].iter_mut().zip(&anchor) {
                *x = a + 0.5 * (*x - a);
            }
            values[k] = eval(&simplex[k]);
        }
    }
    let best = (0..=n)
        .min_by(|&a, &b| values[a].total_cmp(&values[b]))
        .expect("non-empty simplex");
    Minimum {
        x: simplex[best].clone(),
        f: values[best],
        iterations,
        evaluations: evaluations.get(),
        converged,
    }
}
