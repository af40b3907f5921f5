#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use vmpost_core::GaussianDist;

/// Minimum of `c^T x` over the transportation polytope with row sums `p`
/// and column sums `q`, by enumerating every basic solution.
pub fn transport_by_vertices(cost: &DMatrix<f64>, p: &[f64], q: &[f64]) -> (f64, DMatrix<f64>) {
    let (r, c) = (p.len(), q.len());
    let vars = r * c;
    let mut a = DMatrix::zeros(r + c, vars);
    for i in 0..r {
        for j in 0..c {
            a[(i, i * c + j)] = 1.0;
            a[(r + j, i * c + j)] = 1.0;
        }
    }
    let b = DVector::from_iterator(r + c, p.iter().chain(q).cloned());
    let basis_size = r + c - 1;
    let mut best = (f64::INFINITY, DMatrix::zeros(r, c));
    for subset in combinations(vars, basis_size) {
        let sub = DMatrix::from_fn(r + c, basis_size, |i, k| a[(i, subset[k])]);
        let svd = sub.clone().svd(true, true);
        if svd.singular_values.iter().filter(|&&s| s > 1e-9).count() < basis_size {
            continue;
        }
        let xb = svd.solve(&b, 1e-12).unwrap();
        if (&sub * &xb - &b).amax() > 1e-10 || xb.iter().any(|&v| v < -1e-12) {
            continue;
        }
        let mut plan = DMatrix::zeros(r, c);
        let mut value = 0.0;
        for (k, &v) in subset.iter().enumerate() {
            plan[(v / c, v % c)] = xb[k].max(0.0);
            value += cost[(v / c, v % c)] * xb[k];
        }
        if value < best.0 {
            best = (value, plan);
        }
    }
    best
}

pub fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(k);
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    rec(0, n, k, &mut cur, &mut out);
    out
}

pub fn random_simplex(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..k).map(|_| 0.1 + rng.random::<f64>()).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

pub fn random_gaussian(rng: &mut ChaCha8Rng, dim: usize, spread: f64) -> GaussianDist {
    let mean = DVector::from_fn(dim, |_, _| spread * (rng.random::<f64>() - 0.5));
    let a = DMatrix::from_fn(dim, dim, |_, _| rng.random::<f64>() - 0.5);
    let cov = &a * a.transpose() + DMatrix::identity(dim, dim) * 0.2;
    GaussianDist::new(mean, (&cov + cov.transpose()) * 0.5).unwrap()
}
