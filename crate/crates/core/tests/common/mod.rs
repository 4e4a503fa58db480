#![allow(dead_code)]

pub mod properties;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Accelerated proximal gradient (FISTA with gradient restart) for
/// `||Ac - z||^2 + lambda ||c||_1`. Written against the objective directly and
/// shares no code with the library solvers.
pub fn ista(a: &DMatrix<f64>, z: &[f64], lambda: f64, max_iter: usize) -> Vec<f64> {
    let n = a.ncols();
    let zt = nalgebra::DVector::from_column_slice(z);
    // Lipschitz constant of the smooth gradient: 2 * sigma_max(A)^2
    let l = 2.0 * a.singular_values().max().powi(2);
    let step = 1.0 / l;
    let shrink = |v: f64| v.signum() * (v.abs() - lambda * step).max(0.0);

    let mut x = nalgebra::DVector::zeros(n);
    let mut y = x.clone();
    let mut t = 1.0f64;
    for _ in 0..max_iter {
        let grad = a.tr_mul(&(a * &y - &zt)) * 2.0;
        let x_next = (&y - grad * step).map(shrink);
        let diff = &x_next - &x;
        // restart momentum when it points uphill
        if (&y - &x_next).dot(&diff) > 0.0 {
            t = 1.0;
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        y = &x_next + diff.clone() * ((t - 1.0) / t_next);
        let done = diff.amax() <= 1e-15 * x_next.amax().max(1.0);
        x = x_next;
        t = t_next;
        if done {
            break;
        }
    }
    x.as_slice().to_vec()
}

pub fn plain_objective(a: &DMatrix<f64>, z: &[f64], c: &[f64], lambda: f64) -> f64 {
    let r = a * nalgebra::DVector::from_column_slice(c) - nalgebra::DVector::from_column_slice(z);
    r.norm_squared() + lambda * c.iter().map(|v| v.abs()).sum::<f64>()
}

/// Optimality conditions in the form `|2<A_j, Ac - z> + lambda sign(c_j)| <
/// 10 tol ||A_j||^2` on the support and `|2<A_j, Ac - z>| <= lambda + 10 tol
/// ||A_j||^2` off it.
pub fn kkt_holds(a: &DMatrix<f64>, z: &[f64], c: &[f64], lambda: f64, tol: f64) -> bool {
    let r = a * nalgebra::DVector::from_column_slice(c) - nalgebra::DVector::from_column_slice(z);
    (0..a.ncols()).all(|j| {
        let aj = a.column(j);
        let g = 2.0 * aj.dot(&r);
        let slack = 10.0 * tol * aj.norm_squared();
        if c[j] != 0.0 {
            (g + lambda * c[j].signum()).abs() < slack
        } else {
            g.abs() <= lambda + slack
        }
    })
}

pub fn gaussian_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

pub fn gaussian_vec(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

/// An `n x n` orthogonal matrix from the QR factor of a Gaussian matrix.
pub fn orthonormal(rng: &mut impl Rng, n: usize) -> DMatrix<f64> {
    gaussian_matrix(rng, n, n).qr().q()
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
