//! Random feature regression: basis sampling, feature matrices, an l1-penalised
//! least-squares solver and BIC-based choice of the penalty.

use nalgebra::DMatrix;
use rand_distr::{Distribution, Normal, Uniform};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::seeding;

/// Penalty values searched when fitting the derivative model.
pub const DEFAULT_LAMBDA_GRID: [f64; 8] = [1e-6, 5e-6, 1e-7, 5e-7, 1e-8, 5e-8, 1e-9, 5e-9];

/// Coefficients with magnitude at or below this count as zero.
pub const ZERO_THRESHOLD: f64 = 1e-12;

/// Lower bound applied to the residual sum of squares inside the BIC.
pub const RSS_FLOOR: f64 = 1e-30;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Activation {
    #[default]
    Relu,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
        }
    }
}

/// Frozen first layer: `phi(<h, w_j> + b_j)` for `j = 0..N`.
#[derive(Clone, Debug, PartialEq)]
pub struct RandomFeatureBasis {
    p: usize,
    /// Row `j` holds `w_j`.
    weights: Vec<f64>,
    biases: Vec<f64>,
    activation: Activation,
    seed: u64,
}

impl RandomFeatureBasis {
    /// Builds a basis from explicit weights (row-major, one row per feature).
    pub fn from_parts(
        p: usize,
        weights: Vec<f64>,
        biases: Vec<f64>,
        activation: Activation,
    ) -> Result<Self> {
        if p == 0 || biases.is_empty() {
            return Err(Error::InvalidParameter(
                "basis needs p >= 1 and at least one feature".into(),
            ));
        }
        if weights.len() != p * biases.len() {
            return Err(Error::DimensionMismatch {
                expected: p * biases.len(),
                found: weights.len(),
            });
        }
        Ok(RandomFeatureBasis {
            p,
            weights,
            biases,
            activation,
            seed: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.biases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.biases.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.p
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn weight(&self, j: usize) -> &[f64] {
        &self.weights[j * self.p..(j + 1) * self.p]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn biases(&self) -> &[f64] {
        &self.biases
    }

    #[inline]
    pub fn feature(&self, j: usize, h: &[f64]) -> f64 {
        let dot: f64 = self.weight(j).iter().zip(h).map(|(w, x)| w * x).sum();
        self.activation.apply(dot + self.biases[j])
    }

    fn check_dim(&self, h: &[f64]) -> Result<()> {
        if h.len() != self.p {
            return Err(Error::DimensionMismatch {
                expected: self.p,
                found: h.len(),
            });
        }
        Ok(())
    }

    /// `sum_j c_j phi(<h, w_j> + b_j)`, skipping zero coefficients.
    pub fn evaluate(&self, h: &[f64], coeffs: &SparseCoefficients) -> Result<f64> {
        self.check_dim(h)?;
        if coeffs.len() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                found: coeffs.len(),
            });
        }
        Ok(coeffs
            .values()
            .iter()
            .enumerate()
            .filter(|(_, c)| **c != 0.0)
            .map(|(j, c)| c * self.feature(j, h))
            .sum())
    }
}

/// Weights i.i.d. `N(0, 1)`, biases i.i.d. `U[0, 2 pi)`, reproducible from `seed`.
pub fn sample_basis(p: usize, n: usize, seed: u64) -> Result<RandomFeatureBasis> {
    if p == 0 || n == 0 {
        return Err(Error::InvalidParameter(format!(
            "basis needs p >= 1 and N >= 1 (got p={p}, N={n})"
        )));
    }
    let mut rng = seeding::rng(seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let weights = (0..n * p).map(|_| normal.sample(&mut rng)).collect();
    let uniform = Uniform::new(0.0, std::f64::consts::TAU).expect("non-empty range");
    let biases = (0..n).map(|_| uniform.sample(&mut rng)).collect();
    Ok(RandomFeatureBasis {
        p,
        weights,
        biases,
        activation: Activation::Relu,
        seed,
    })
}

/// Rows are inputs, columns are features.
pub fn feature_matrix<'a, I>(basis: &RandomFeatureBasis, inputs: I) -> Result<DMatrix<f64>>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let rows: Vec<&[f64]> = inputs.into_iter().collect();
    for h in &rows {
        basis.check_dim(h)?;
    }
    Ok(DMatrix::from_fn(rows.len(), basis.len(), |k, j| {
        basis.feature(j, rows[k])
    }))
}

/// How the data-fit term is weighted against the l1 penalty.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ObjectiveScaling {
    /// `||Ac - z||^2 + lambda ||c||_1`
    #[default]
    Plain,
    /// `||Ac - z||^2 / (2n) + lambda ||c||_1`
    PerSample,
}

impl ObjectiveScaling {
    pub fn factor(self, rows: usize) -> f64 {
        match self {
            ObjectiveScaling::Plain => 1.0,
            ObjectiveScaling::PerSample => 1.0 / (2.0 * rows as f64),
        }
    }
}

/// Solver engine behind [`lasso_solve`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum LassoMethod {
    /// Cyclic coordinate descent with soft-thresholding.
    #[default]
    CoordinateDescent,
    /// Sign-pattern active-set search (exact least-squares solves on the
    /// current support with a line search over sign changes), finished by
    /// coordinate descent sweeps.
    ActiveSet,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LassoOptions {
    pub method: LassoMethod,
    /// Stop once the largest coordinate change in a sweep falls below this.
    pub tol: f64,
    /// Maximum number of coordinate sweeps (full or active-set).
    pub max_iter: usize,
    pub scaling: ObjectiveScaling,
    /// Record the objective after every sweep.
    pub trace: bool,
}

impl Default for LassoOptions {
    fn default() -> Self {
        LassoOptions {
            method: LassoMethod::CoordinateDescent,
            tol: 1e-10,
            max_iter: 100_000,
            scaling: ObjectiveScaling::Plain,
            trace: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SparseCoefficients {
    c: Vec<f64>,
    pub lambda: f64,
    pub nnz: usize,
    pub converged: bool,
    pub iterations: usize,
    /// Largest KKT violation, in coefficient units (see [`kkt_residual`]).
    pub kkt_residual: f64,
    pub objective_trace: Vec<f64>,
}

impl SparseCoefficients {
    pub fn from_values(c: Vec<f64>, lambda: f64) -> Self {
        let nnz = count_nonzero(&c);
        SparseCoefficients {
            c,
            lambda,
            nnz,
            converged: true,
            iterations: 0,
            kkt_residual: 0.0,
            objective_trace: Vec::new(),
        }
    }

    pub fn zeros(n: usize, lambda: f64) -> Self {
        Self::from_values(vec![0.0; n], lambda)
    }

    pub fn values(&self) -> &[f64] {
        &self.c
    }

    pub fn len(&self) -> usize {
        self.c.len()
    }

    pub fn is_empty(&self) -> bool {
        self.c.is_empty()
    }
}

fn count_nonzero(c: &[f64]) -> usize {
    c.iter().filter(|v| v.abs() > ZERO_THRESHOLD).count()
}

fn col(a: &DMatrix<f64>, j: usize) -> &[f64] {
    let n = a.nrows();
    &a.as_slice()[j * n..(j + 1) * n]
}

#[inline]
fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

fn residual(a: &DMatrix<f64>, z: &[f64], c: &[f64]) -> Vec<f64> {
    let mut r = z.to_vec();
    for (j, &cj) in c.iter().enumerate() {
        if cj != 0.0 {
            for (ri, aij) in r.iter_mut().zip(col(a, j)) {
                *ri -= aij * cj;
            }
        }
    }
    r
}

pub fn objective(
    a: &DMatrix<f64>,
    z: &[f64],
    c: &[f64],
    lambda: f64,
    scaling: ObjectiveScaling,
) -> f64 {
    let r = residual(a, z, c);
    scaling.factor(a.nrows()) * dot(&r, &r) + lambda * c.iter().map(|v| v.abs()).sum::<f64>()
}

/// Largest violation of the first-order optimality conditions, divided by
/// `w ||A_j||^2` (with `w` the data-fit weight) so it is measured on the
/// same scale as a coefficient update.
pub fn kkt_residual(
    a: &DMatrix<f64>,
    z: &[f64],
    c: &[f64],
    lambda: f64,
    scaling: ObjectiveScaling,
) -> f64 {
    let w = scaling.factor(a.nrows());
    let r = residual(a, z, c);
    (0..a.ncols())
        .map(|j| {
            let aj = col(a, j);
            let sq = dot(aj, aj);
            if sq == 0.0 {
                return 0.0;
            }
            // gradient of the smooth part: 2w <A_j, Ac - z>
            let g = -2.0 * w * dot(aj, &r);
            let viol = if c[j] != 0.0 {
                (g + lambda * c[j].signum()).abs()
            } else {
                (g.abs() - lambda).max(0.0)
            };
            viol / (w * sq)
        })
        .fold(0.0, f64::max)
}

fn check_problem(a: &DMatrix<f64>, z: &[f64], lambda: f64) -> Result<()> {
    if a.nrows() != z.len() {
        return Err(Error::DimensionMismatch {
            expected: a.nrows(),
            found: z.len(),
        });
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "lambda must be non-negative, got {lambda}"
        )));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("feature matrix"));
    }
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("target vector"));
    }
    Ok(())
}

struct Solver<'a> {
    a: &'a DMatrix<f64>,
    col_sq: Vec<f64>,
    /// Soft-threshold level `lambda / (2w)`.
    threshold: f64,
    c: Vec<f64>,
    r: Vec<f64>,
}

impl Solver<'_> {
    /// Exact minimisation along coordinate `j`; returns `|delta c_j|`.
    #[inline]
    fn update(&mut self, j: usize) -> f64 {
        let sq = self.col_sq[j];
        if sq == 0.0 {
            return 0.0;
        }
        let aj = col(self.a, j);
        let old = self.c[j];
        let rho = dot(aj, &self.r) + sq * old;
        let new = soft_threshold(rho, self.threshold) / sq;
        let delta = new - old;
        if delta != 0.0 {
            for (ri, aij) in self.r.iter_mut().zip(aj) {
                *ri -= aij * delta;
            }
            self.c[j] = new;
        }
        delta.abs()
    }

    fn sweep(&mut self, coords: impl Iterator<Item = usize>) -> f64 {
        coords.map(|j| self.update(j)).fold(0.0, f64::max)
    }
}

/// Sign-pattern active-set search for `||Ac - z||^2 + gamma ||c||_1`.
///
/// Each step solves the unconstrained quadratic on the current support with
/// the signs held fixed, then moves towards that point, stopping at the best
/// objective among the endpoint and every sign change on the way. The
/// objective never increases. When the support columns are dependent the
/// search instead slides along their null space, which leaves the residual
/// alone and lowers the penalty until a coefficient reaches zero. Returns the
/// coefficients and the step count.
fn active_set_search(
    a: &DMatrix<f64>,
    z: &[f64],
    gamma: f64,
    mut c: Vec<f64>,
) -> (Vec<f64>, usize) {
    let (n, p) = (a.nrows(), a.ncols());
    let max_steps = 20 * n.max(1) + 100;
    let mut r = residual(a, z, &c);
    let mut support: Vec<usize> = (0..p).filter(|&j| c[j] != 0.0).collect();
    let mut signs: Vec<f64> = support.iter().map(|&j| c[j].signum()).collect();
    let penalised =
        |c: &[f64], r: &[f64]| dot(r, r) + gamma * c.iter().map(|v| v.abs()).sum::<f64>();
    let mut steps = 0;
    // Set after a full step to the reduced optimum, where the support
    // conditions hold by construction and only rounding could disturb them.
    let mut on_target = false;

    while steps < max_steps {
        // gradient of the smooth part: -2 A^T r
        let grad = a.tr_mul(&nalgebra::DVector::from_column_slice(&r)) * -2.0;
        let scale = gamma.max(f64::MIN_POSITIVE) * 1e-9;
        let support_optimal = on_target
            || support
                .iter()
                .all(|&j| (grad[j] + gamma * c[j].signum()).abs() <= scale + 1e-9 * grad[j].abs());
        if support_optimal {
            let mut best = None;
            for j in (0..p).filter(|&j| c[j] == 0.0) {
                let g = grad[j];
                if g.abs() > gamma * (1.0 + 1e-12)
                    && best.is_none_or(|(_, b): (usize, f64)| g.abs() > b.abs())
                {
                    best = Some((j, g));
                }
            }
            match best {
                None => break,
                Some((j, g)) => {
                    support.push(j);
                    signs.push(-g.signum());
                }
            }
        }
        steps += 1;

        let k = support.len();
        let sub = DMatrix::from_fn(n, k, |i, q| a[(i, support[q])]);
        let Some(target) = signed_least_squares(&sub, z, &signs, gamma) else {
            if !null_step(&sub, &support, gamma, &mut c, &mut r)
                && !coordinate_step(a, gamma, &mut c, &mut r)
            {
                break;
            }
            support = (0..p).filter(|&j| c[j] != 0.0).collect();
            signs = support.iter().map(|&j| c[j].signum()).collect();
            on_target = false;
            continue;
        };
        let old: Vec<f64> = support.iter().map(|&j| c[j]).collect();
        let delta: Vec<f64> = target.iter().zip(&old).map(|(t, o)| t - o).collect();
        let dr: Vec<f64> = (0..n)
            .map(|i| (0..k).map(|q| sub[(i, q)] * delta[q]).sum())
            .collect();

        let at = |t: f64| -> f64 {
            let rr: f64 = r
                .iter()
                .zip(&dr)
                .map(|(ri, di)| (ri - t * di).powi(2))
                .sum();
            rr + gamma
                * old
                    .iter()
                    .zip(&delta)
                    .map(|(o, d)| (o + t * d).abs())
                    .sum::<f64>()
        };
        let start = penalised(&c, &r);
        let mut best_t = 1.0;
        let mut best_f = at(1.0);
        for q in 0..k {
            if old[q] != 0.0 && (old[q] + delta[q]).signum() != old[q].signum() {
                let t = -old[q] / delta[q];
                if t > 0.0 && t < 1.0 {
                    let f = at(t);
                    if f < best_f {
                        best_f = f;
                        best_t = t;
                    }
                }
            }
        }
        // A flat step is still progress when it drops a coefficient.
        if !(best_f < start || (best_f <= start && best_t < 1.0)) {
            // Degenerate reduced problem: move along the support's null space,
            // or failing that take one exact coordinate step.
            if !null_step(&sub, &support, gamma, &mut c, &mut r)
                && !coordinate_step(a, gamma, &mut c, &mut r)
            {
                break;
            }
            support = (0..p).filter(|&j| c[j] != 0.0).collect();
            signs = support.iter().map(|&j| c[j].signum()).collect();
            on_target = false;
            continue;
        }

        for q in 0..k {
            let j = support[q];
            let crossing = old[q] != 0.0 && (-old[q] / delta[q] - best_t).abs() <= 1e-15 * best_t;
            c[j] = if crossing {
                0.0
            } else {
                old[q] + best_t * delta[q]
            };
        }
        on_target = best_t == 1.0;
        r = residual(a, z, &c);
        let kept: Vec<usize> = support.iter().copied().filter(|&j| c[j] != 0.0).collect();
        support = kept;
        signs = support.iter().map(|&j| c[j].signum()).collect();
    }
    (c, steps)
}

/// Moves `c` along a null vector of the support columns `sub` in the
/// direction where the l1 penalty does not grow, up to the first coefficient
/// that reaches zero. Returns false when no such move lowers the objective.
fn null_step(
    sub: &DMatrix<f64>,
    support: &[usize],
    gamma: f64,
    c: &mut [f64],
    r: &mut Vec<f64>,
) -> bool {
    let eig = (sub.transpose() * sub).symmetric_eigen();
    let Some(q_min) = (0..eig.eigenvalues.len())
        .min_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]))
    else {
        return false;
    };
    let d = eig.eigenvectors.column(q_min);
    let old: Vec<f64> = support.iter().map(|&j| c[j]).collect();
    let slope = |dir: f64| -> f64 {
        old.iter()
            .zip(d.iter())
            .map(|(o, dq)| {
                if *o != 0.0 {
                    o.signum() * dir * dq
                } else {
                    dq.abs()
                }
            })
            .sum()
    };
    let dir = if slope(1.0) <= slope(-1.0) { 1.0 } else { -1.0 };
    if slope(dir) > 0.0 {
        return false;
    }
    let Some((hit, t)) = old
        .iter()
        .zip(d.iter())
        .enumerate()
        .filter(|(_, (o, dq))| **o != 0.0 && o.signum() * dir * **dq < 0.0)
        .map(|(q, (o, dq))| (q, (o / (dir * dq)).abs()))
        .min_by(|x, y| x.1.total_cmp(&y.1))
    else {
        return false;
    };
    let before = dot(r, r) + gamma * old.iter().map(|v| v.abs()).sum::<f64>();
    let moved: Vec<f64> = old
        .iter()
        .zip(d.iter())
        .enumerate()
        .map(|(q, (o, dq))| if q == hit { 0.0 } else { o + t * dir * dq })
        .collect();
    let mut r_new = r.clone();
    for (q, col_q) in sub.column_iter().enumerate() {
        let step = moved[q] - old[q];
        if step != 0.0 {
            for (ri, ai) in r_new.iter_mut().zip(col_q.iter()) {
                *ri -= step * ai;
            }
        }
    }
    let after = dot(&r_new, &r_new) + gamma * moved.iter().map(|v| v.abs()).sum::<f64>();
    if after > before {
        return false;
    }
    for (&j, v) in support.iter().zip(moved) {
        c[j] = v;
    }
    *r = r_new;
    true
}

/// Exact minimisation along the coordinate with the largest KKT violation.
/// Returns false when that leaves the coefficients unchanged.
fn coordinate_step(a: &DMatrix<f64>, gamma: f64, c: &mut [f64], r: &mut [f64]) -> bool {
    let mut worst = (0, 0.0);
    for (j, &cj) in c.iter().enumerate() {
        let g = -2.0 * dot(col(a, j), r);
        let v = if cj == 0.0 {
            g.abs() - gamma
        } else {
            (g + gamma * cj.signum()).abs()
        };
        if v > worst.1 {
            worst = (j, v);
        }
    }
    let j = worst.0;
    let aj = col(a, j);
    let sq = dot(aj, aj);
    if worst.1 <= 0.0 || sq == 0.0 {
        return false;
    }
    let next = soft_threshold(dot(aj, r) + sq * c[j], 0.5 * gamma) / sq;
    let step = next - c[j];
    if step == 0.0 {
        return false;
    }
    c[j] = next;
    for (ri, ai) in r.iter_mut().zip(aj) {
        *ri -= step * ai;
    }
    true
}

/// Minimiser of `||Ax - z||^2 + gamma s^T x` via a thin QR of `A`, or `None`
/// when `A` is numerically rank deficient.
fn signed_least_squares(
    a: &DMatrix<f64>,
    z: &[f64],
    signs: &[f64],
    gamma: f64,
) -> Option<Vec<f64>> {
    let k = a.ncols();
    if k == 0 || k > a.nrows() {
        return None;
    }
    let qr = a.clone().qr();
    let r = qr.r();
    let diag_max = (0..k).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    if (0..k).any(|i| r[(i, i)].abs() <= 1e-13 * diag_max) {
        return None;
    }
    // R x = Q^T z - R^{-T} (gamma / 2) s
    let qtz = qr.q().transpose() * nalgebra::DVector::from_column_slice(z);
    let half = nalgebra::DVector::from_iterator(k, signs.iter().map(|s| 0.5 * gamma * s));
    let u = r.transpose().solve_lower_triangular(&half)?;
    let x = r.solve_upper_triangular(&(qtz - u))?;
    x.iter()
        .all(|v| v.is_finite())
        .then(|| x.iter().copied().collect())
}

#[inline]
pub fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

/// Minimises the penalised least-squares objective selected by `opts`.
/// Coordinate descent (optionally after an active-set search) decides
/// convergence: the largest update in a full sweep is below `opts.tol` and
/// the KKT residual is within `10 * tol`.
pub fn lasso_solve(
    a: &DMatrix<f64>,
    z: &[f64],
    lambda: f64,
    opts: &LassoOptions,
) -> Result<SparseCoefficients> {
    lasso_solve_from(a, z, lambda, opts, None)
}

/// As [`lasso_solve`], starting from `init` instead of zero.
pub fn lasso_solve_from(
    a: &DMatrix<f64>,
    z: &[f64],
    lambda: f64,
    opts: &LassoOptions,
    init: Option<&[f64]>,
) -> Result<SparseCoefficients> {
    check_problem(a, z, lambda)?;
    let n = a.ncols();
    let c = match init {
        Some(c0) if c0.len() == n => c0.to_vec(),
        Some(c0) => {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: c0.len(),
            })
        }
        None => vec![0.0; n],
    };
    let w = opts.scaling.factor(a.nrows());
    let (c, mut iterations) = match opts.method {
        LassoMethod::CoordinateDescent => (c, 0),
        LassoMethod::ActiveSet => active_set_search(a, z, lambda / w, c),
    };
    let mut s = Solver {
        a,
        col_sq: (0..n).map(|j| dot(col(a, j), col(a, j))).collect(),
        threshold: lambda / (2.0 * w),
        r: residual(a, z, &c),
        c,
    };

    let mut trace = Vec::new();
    let mut record = |s: &Solver| {
        if opts.trace {
            trace.push(objective(a, z, &s.c, lambda, opts.scaling));
        }
    };
    record(&s);

    let mut converged = false;
    let mut kkt = f64::INFINITY;
    let budget = opts.max_iter + iterations;
    while iterations < budget {
        let full = s.sweep(0..n);
        iterations += 1;
        record(&s);
        if full < opts.tol {
            kkt = kkt_residual(a, z, &s.c, lambda, opts.scaling);
            if kkt <= 10.0 * opts.tol {
                converged = true;
                break;
            }
        }
        // Sweep the current support until it settles, then re-check everything.
        let active: Vec<usize> = (0..n).filter(|&j| s.c[j] != 0.0).collect();
        while iterations < budget {
            let moved = s.sweep(active.iter().copied());
            iterations += 1;
            record(&s);
            if moved < opts.tol {
                break;
            }
        }
    }
    if !converged {
        kkt = kkt_residual(a, z, &s.c, lambda, opts.scaling);
    }

    let nnz = count_nonzero(&s.c);
    Ok(SparseCoefficients {
        c: s.c,
        lambda,
        nnz,
        converged,
        iterations,
        kkt_residual: kkt,
        objective_trace: trace,
    })
}

/// `n ln(RSS / n) + nnz ln(n)`, with RSS floored at [`RSS_FLOOR`].
pub fn bic_score(a: &DMatrix<f64>, z: &[f64], c: &SparseCoefficients) -> f64 {
    let r = residual(a, z, c.values());
    bic_from_rss(dot(&r, &r), a.nrows(), c.nnz)
}

/// `n ln(RSS / n) + k ln n` with the RSS floored at [`RSS_FLOOR`].
pub fn bic_from_rss(rss: f64, n: usize, k: usize) -> f64 {
    let n = n as f64;
    n * (rss.max(RSS_FLOOR) / n).ln() + k as f64 * n.ln()
}

/// Solves every grid value and keeps the fit with the lowest BIC; exact ties
/// go to the larger penalty.
pub fn select_lambda(
    a: &DMatrix<f64>,
    z: &[f64],
    grid: &[f64],
    opts: &LassoOptions,
    exec: Exec,
) -> Result<(f64, SparseCoefficients)> {
    if grid.is_empty() {
        return Err(Error::InvalidParameter("lambda grid is empty".into()));
    }
    check_problem(a, z, 0.0)?;
    let fits = exec.map_items(grid, |&lambda| {
        lasso_solve(a, z, lambda, opts).map(|c| (bic_score(a, z, &c), c))
    });
    let mut best: Option<(f64, SparseCoefficients)> = None;
    for fit in fits {
        let (score, c) = fit?;
        let better = match &best {
            None => true,
            Some((s, b)) => score < *s || (score == *s && c.lambda > b.lambda),
        };
        if better {
            best = Some((score, c));
        }
    }
    let (_, c) = best.expect("grid is non-empty");
    Ok((c.lambda, c))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn basis_is_deterministic_and_in_range() {
        let a = sample_basis(4, 100, 11).unwrap();
        let b = sample_basis(4, 100, 11).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, sample_basis(4, 100, 12).unwrap());
        assert!(a
            .biases()
            .iter()
            .all(|&b| (0.0..std::f64::consts::TAU).contains(&b)));
        assert!(sample_basis(0, 3, 1).is_err());
        assert!(sample_basis(3, 0, 1).is_err());
    }

    #[test]
    fn weight_moments() {
        let basis = sample_basis(10, 10_000, 5).unwrap();
        let w = basis.weights();
        let n = w.len() as f64;
        let mean = w.iter().sum::<f64>() / n;
        let var = w.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        // 3-sigma bounds: sd(mean) = 1/sqrt(n), sd(var) ~ sqrt(2/n)
        assert!(mean.abs() < 3.0 / n.sqrt(), "mean {mean}");
        assert!((var - 1.0).abs() < 3.0 * (2.0 / n).sqrt(), "var {var}");
    }

    #[test]
    fn feature_examples() {
        let basis = RandomFeatureBasis::from_parts(2, vec![1.0, -1.0], vec![0.0], Activation::Relu)
            .unwrap();
        let a = feature_matrix(&basis, [&[2.0, 3.0][..], &[3.0, 2.0][..]]).unwrap();
        assert_eq!(a[(0, 0)], 0.0);
        assert_eq!(a[(1, 0)], 1.0);

        let basis =
            RandomFeatureBasis::from_parts(2, vec![0.3, 0.8], vec![1.7], Activation::Relu).unwrap();
        let a = feature_matrix(&basis, [&[0.0, 0.0][..]]).unwrap();
        assert_eq!(a[(0, 0)], 1.7);

        assert!(matches!(
            feature_matrix(&basis, [&[1.0][..]]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn orthonormal_soft_threshold() {
        let a = DMatrix::<f64>::identity(2, 2);
        let c = lasso_solve(&a, &[1.0, 0.2], 0.3, &LassoOptions::default()).unwrap();
        assert!((c.values()[0] - 0.85).abs() < 1e-10);
        assert!((c.values()[1] - 0.05).abs() < 1e-10);
        assert!(c.converged);
    }

    #[test]
    fn unregularised_limit_is_least_squares() {
        let a = DMatrix::from_row_slice(3, 3, &[2.0, 0.5, 0.1, 0.3, 1.5, -0.2, 0.0, 0.4, 1.0]);
        let z = [1.0, -2.0, 0.5];
        let c = lasso_solve(&a, &z, 0.0, &LassoOptions::default()).unwrap();
        let exact = a
            .clone()
            .lu()
            .solve(&nalgebra::DVector::from_column_slice(&z))
            .unwrap();
        for (x, y) in c.values().iter().zip(exact.iter()) {
            assert!((x - y).abs() < 1e-9, "{x} vs {y}");
        }
    }

    #[test]
    fn large_lambda_gives_zero() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 0.5, -1.0, 3.0, 0.0]);
        let z = [1.0, 2.0, -1.0];
        let at_z = a.transpose() * nalgebra::DVector::from_column_slice(&z);
        let lambda_max = 2.0 * at_z.amax();
        let c = lasso_solve(&a, &z, lambda_max, &LassoOptions::default()).unwrap();
        assert_eq!(c.nnz, 0);
        let c = lasso_solve(&a, &z, 0.9 * lambda_max, &LassoOptions::default()).unwrap();
        assert!(c.nnz > 0);
    }

    #[test]
    fn per_sample_scaling_rescales_lambda() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 0.5, -1.0, 3.0, 0.0]);
        let z = [1.0, 2.0, -1.0];
        let opts = LassoOptions::default();
        let plain = lasso_solve(&a, &z, 0.6, &opts).unwrap();
        // (1/2n) ||.||^2 + l |c|  has the same minimiser as ||.||^2 + 2n l |c|
        let scaled = lasso_solve(
            &a,
            &z,
            0.1,
            &LassoOptions {
                scaling: ObjectiveScaling::PerSample,
                ..opts
            },
        )
        .unwrap();
        for (x, y) in plain.values().iter().zip(scaled.values()) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn rejects_bad_input() {
        let a = DMatrix::from_row_slice(2, 1, &[1.0, f64::NAN]);
        assert!(matches!(
            lasso_solve(&a, &[1.0, 1.0], 0.1, &LassoOptions::default()),
            Err(Error::NonFinite(_))
        ));
        let a = DMatrix::<f64>::identity(2, 2);
        assert!(lasso_solve(&a, &[1.0], 0.1, &LassoOptions::default()).is_err());
        assert!(lasso_solve(&a, &[1.0, 0.0], -1.0, &LassoOptions::default()).is_err());
    }

    #[test]
    fn non_convergence_is_flagged() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.999, 0.999, 1.0]);
        let opts = LassoOptions {
            max_iter: 2,
            ..Default::default()
        };
        let c = lasso_solve(&a, &[1.0, -1.0], 1e-6, &opts).unwrap();
        assert!(!c.converged);
        assert_eq!(c.iterations, 2);
    }

    #[test]
    fn bic_examples() {
        let a = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0, 2.0, 0.0]);
        let z = [1.0, 2.0, 0.0, -1.0];
        let zero = SparseCoefficients::zeros(2, 0.0);
        let zz: f64 = z.iter().map(|v| v * v).sum();
        assert_relative_eq!(
            bic_score(&a, &z, &zero),
            4.0 * (zz / 4.0).ln(),
            epsilon = 1e-12
        );

        let dense = SparseCoefficients::from_values(vec![0.0, 1e-3], 0.0);
        let mut sparse_equal_rss = dense.clone();
        sparse_equal_rss.nnz = 0;
        assert!(bic_score(&a, &z, &sparse_equal_rss) < bic_score(&a, &z, &dense));

        let exact = DMatrix::<f64>::identity(2, 2);
        let perfect = SparseCoefficients::from_values(vec![1.0, 2.0], 0.0);
        let b = bic_score(&exact, &[1.0, 2.0], &perfect);
        assert!(b.is_finite());
        assert_relative_eq!(b, 2.0 * (RSS_FLOOR / 2.0).ln() + 2.0 * 2f64.ln());
    }

    #[test]
    fn single_value_grid() {
        let a = DMatrix::<f64>::identity(3, 3);
        let (lambda, c) = select_lambda(
            &a,
            &[1.0, 0.5, 0.0],
            &[0.25],
            &LassoOptions::default(),
            Exec::Sequential,
        )
        .unwrap();
        assert_eq!(lambda, 0.25);
        assert_eq!(c.lambda, 0.25);
        assert!(select_lambda(
            &a,
            &[1.0, 0.5, 0.0],
            &[],
            &LassoOptions::default(),
            Exec::Sequential
        )
        .is_err());
        assert_eq!(DEFAULT_LAMBDA_GRID.len(), 8);
    }

    #[test]
    fn ties_prefer_larger_lambda() {
        // Both penalties zero out the (tiny) target: identical BIC.
        let a = DMatrix::<f64>::identity(2, 2);
        let (lambda, _) = select_lambda(
            &a,
            &[1e-3, 0.0],
            &[0.5, 1.0, 0.75],
            &LassoOptions::default(),
            Exec::Sequential,
        )
        .unwrap();
        assert_eq!(lambda, 1.0);
    }

    #[test]
    fn active_set_matches_coordinate_descent() {
        use rand::Rng;
        let mut rng = seeding::rng(3);
        for trial in 0..20 {
            let (n, p) = (12, 30);
            let a = DMatrix::from_fn(n, p, |_, _| rng.random_range(-1.0..1.0));
            let z: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let lambda = [1e-3, 1e-2, 1e-1, 1.0][trial % 4];
            let cd = lasso_solve(&a, &z, lambda, &LassoOptions::default()).unwrap();
            let opts = LassoOptions {
                method: LassoMethod::ActiveSet,
                ..Default::default()
            };
            let fs = lasso_solve(&a, &z, lambda, &opts).unwrap();
            assert!(fs.converged, "trial {trial}");
            let (f_cd, f_fs) = (
                objective(&a, &z, cd.values(), lambda, ObjectiveScaling::Plain),
                objective(&a, &z, fs.values(), lambda, ObjectiveScaling::Plain),
            );
            // coordinate descent can stall on p > n at small penalties
            assert!(f_fs <= f_cd + 1e-9 * f_cd.max(1.0), "{f_cd} vs {f_fs}");
            if cd.converged {
                assert!(
                    (f_cd - f_fs).abs() <= 1e-9 * f_cd.max(1.0),
                    "{f_cd} vs {f_fs}"
                );
            }
            assert!(fs.kkt_residual <= 1e-9);
        }
    }

    #[test]
    fn active_set_handles_duplicate_columns() {
        let a = DMatrix::from_row_slice(3, 3, &[1.0, 1.0, 0.0, 2.0, 2.0, 1.0, 0.5, 0.5, -1.0]);
        let opts = LassoOptions {
            method: LassoMethod::ActiveSet,
            ..Default::default()
        };
        let c = lasso_solve(&a, &[1.0, 2.0, 0.0], 1e-4, &opts).unwrap();
        assert!(c.converged);
        let cd = lasso_solve(&a, &[1.0, 2.0, 0.0], 1e-4, &LassoOptions::default()).unwrap();
        let f = |c: &SparseCoefficients| {
            objective(
                &a,
                &[1.0, 2.0, 0.0],
                c.values(),
                1e-4,
                ObjectiveScaling::Plain,
            )
        };
        assert!((f(&c) - f(&cd)).abs() < 1e-10);
    }
}
