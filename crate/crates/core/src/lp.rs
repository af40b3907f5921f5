//! Dense two-phase primal simplex for `min c^T x  s.t.  A x = b, x >= 0`.
//!
//! Pivoting follows Bland's rule (lowest eligible index for both the entering
//! and the leaving variable), so the method terminates on degenerate
//! problems such as transport polytopes. Redundant equality rows are detected
//! at the end of phase one and dropped. The final primal and dual values are
//! recomputed from the optimal basis with an LU solve against the original
//! data rather than read off the accumulated tableau.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LpError {
    #[error("problem is infeasible")]
    Infeasible,
    #[error("problem is unbounded")]
    Unbounded,
    #[error("iteration limit of {0} pivots reached")]
    IterationLimit(usize),
    #[error("malformed problem: {0}")]
    Malformed(String),
}

const PIVOT_TOL: f64 = 1e-11;
const COST_TOL: f64 = 1e-11;

#[derive(Debug, Clone)]
pub struct LpProblem {
    c: Vec<f64>,
    a: DMatrix<f64>,
    b: Vec<f64>,
}

impl LpProblem {
    pub fn new(c: Vec<f64>, a: DMatrix<f64>, b: Vec<f64>) -> Result<Self, LpError> {
        if a.ncols() != c.len() || a.nrows() != b.len() {
            return Err(LpError::Malformed(format!(
                "A is {}x{}, c has {} entries, b has {}",
                a.nrows(),
                a.ncols(),
                c.len(),
                b.len()
            )));
        }
        if c.is_empty() {
            return Err(LpError::Malformed("no variables".into()));
        }
        if c.iter().chain(b.iter()).chain(a.iter()).any(|v| !v.is_finite()) {
            return Err(LpError::Malformed("non-finite data".into()));
        }
        Ok(Self { c, a, b })
    }

    pub fn cost(&self) -> &[f64] {
        &self.c
    }

    pub fn constraints(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn rhs(&self) -> &[f64] {
        &self.b
    }

    pub fn num_vars(&self) -> usize {
        self.c.len()
    }

    /// `max_i |(A x - b)_i|`.
    pub fn residual(&self, x: &[f64]) -> f64 {
        let ax = &self.a * DVector::from_column_slice(x);
        ax.iter().zip(&self.b).map(|(l, r)| (l - r).abs()).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    /// Simplex multipliers, one per original row (zero for dropped rows).
    pub duals: Vec<f64>,
    pub iterations: usize,
    pub status: LpStatus,
}

struct Tableau {
    rows: Vec<Vec<f64>>,
    /// Reduced-cost row; the last entry holds `-objective`.
    cost: Vec<f64>,
    basis: Vec<usize>,
    width: usize,
}

impl Tableau {
    fn rhs(&self) -> usize {
        self.width - 1
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let p = self.rows[row][col];
        for v in self.rows[row].iter_mut() {
            *v /= p;
        }
        let pivot_row = self.rows[row].clone();
        for (i, r) in self.rows.iter_mut().enumerate() {
            if i == row {
                continue;
            }
            let f = r[col];
            if f != 0.0 {
                for (v, pv) in r.iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
                r[col] = 0.0;
            }
        }
        let f = self.cost[col];
        if f != 0.0 {
            for (v, pv) in self.cost.iter_mut().zip(&pivot_row) {
                *v -= f * pv;
            }
            self.cost[col] = 0.0;
        }
        self.basis[row] = col;
    }

    /// Bland's-rule simplex over columns `0..eligible`.
    fn optimize(&mut self, eligible: usize, limit: usize, used: &mut usize) -> Result<(), LpError> {
        let rhs = self.rhs();
        loop {
            let entering = (0..eligible).find(|&j| self.cost[j] < -COST_TOL);
            let Some(col) = entering else {
                return Ok(());
            };
            let mut leave: Option<(usize, f64)> = None;
            for (i, r) in self.rows.iter().enumerate() {
                if r[col] > PIVOT_TOL {
                    let ratio = r[rhs].max(0.0) / r[col];
                    leave = match leave {
                        None => Some((i, ratio)),
                        Some((bi, br)) => {
                            let tie = (ratio - br).abs() <= 1e-12 * (1.0 + br.abs());
                            if ratio < br && !tie || tie && self.basis[i] < self.basis[bi] {
                                Some((i, ratio))
                            } else {
                                Some((bi, br))
                            }
                        }
                    };
                }
            }
            let Some((row, _)) = leave else {
                return Err(LpError::Unbounded);
            };
            if *used >= limit {
                return Err(LpError::IterationLimit(limit));
            }
            self.pivot(row, col);
            *used += 1;
        }
    }
}

/// Solves the LP with the default pivot limit.
pub fn solve_lp(problem: &LpProblem) -> Result<LpSolution, LpError> {
    let limit = 1000 + 100 * (problem.num_vars() + problem.b.len());
    solve_lp_with_limit(problem, limit)
}

pub fn solve_lp_with_limit(problem: &LpProblem, limit: usize) -> Result<LpSolution, LpError> {
    let (r, n) = (problem.a.nrows(), problem.a.ncols());
    let width = n + r + 1;
    let sign: Vec<f64> = problem.b.iter().map(|&v| if v < 0.0 { -1.0 } else { 1.0 }).collect();

    let mut rows = Vec::with_capacity(r);
    for i in 0..r {
        let mut row = vec![0.0; width];
        for j in 0..n {
            row[j] = sign[i] * problem.a[(i, j)];
        }
        row[n + i] = 1.0;
        row[width - 1] = sign[i] * problem.b[i];
        rows.push(row);
    }
    // phase one: minimise the sum of artificials
    let mut cost = vec![0.0; width];
    for row in &rows {
        for j in 0..n {
            cost[j] -= row[j];
        }
        cost[width - 1] -= row[width - 1];
    }
    let mut tab = Tableau {
        rows,
        cost,
        basis: (n..n + r).collect(),
        width,
    };
    let mut used = 0;
    tab.optimize(n + r, limit, &mut used)?;
    let infeasibility = -tab.cost[width - 1];
    let b_scale = 1.0 + problem.b.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if infeasibility > 1e-9 * b_scale {
        return Err(LpError::Infeasible);
    }

    // drive artificials out of the basis; rows where that is impossible are redundant
    let mut kept: Vec<usize> = (0..r).collect();
    let mut i = 0;
    while i < tab.rows.len() {
        if tab.basis[i] >= n {
            let replacement = (0..n)
                .filter(|&j| tab.rows[i][j].abs() > 1e-9)
                .max_by(|&a, &b| tab.rows[i][a].abs().total_cmp(&tab.rows[i][b].abs()));
            match replacement {
                Some(col) => {
                    tab.pivot(i, col);
                    used += 1;
                }
                None => {
                    tab.rows.remove(i);
                    tab.basis.remove(i);
                    kept.remove(i);
                    continue;
                }
            }
        }
        i += 1;
    }

    // phase two
    let mut cost = vec![0.0; width];
    cost[..n].copy_from_slice(&problem.c);
    for (row, &bv) in tab.rows.iter().zip(&tab.basis) {
        let cb = problem.c[bv];
        if cb != 0.0 {
            for (v, rv) in cost.iter_mut().zip(row) {
                *v -= cb * rv;
            }
        }
    }
    tab.cost = cost;
    tab.optimize(n, limit, &mut used)?;

    let (x, duals) = recover(problem, &tab, &kept, &sign);
    let objective = problem.c.iter().zip(&x).map(|(c, v)| c * v).sum();
    Ok(LpSolution {
        x,
        objective,
        duals,
        iterations: used,
        status: LpStatus::Optimal,
    })
}

/// Primal and dual values from the final basis, solved against the original data.
fn recover(problem: &LpProblem, tab: &Tableau, kept: &[usize], sign: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = problem.c.len();
    let k = kept.len();
    let rhs = tab.rhs();
    let mut x = vec![0.0; n];
    let mut duals = vec![0.0; problem.b.len()];
    if k == 0 {
        return (x, duals);
    }
    let basis_matrix = DMatrix::from_fn(k, k, |i, j| problem.a[(kept[i], tab.basis[j])]);
    let b = DVector::from_fn(k, |i, _| problem.b[kept[i]]);
    let cb = DVector::from_fn(k, |j, _| problem.c[tab.basis[j]]);
    let lu = basis_matrix.clone().lu();
    let solved = lu
        .solve(&b)
        .filter(|xb| xb.iter().all(|v| v.is_finite() && *v >= -1e-9));
    match solved {
        Some(xb) => {
            for (j, &bv) in tab.basis.iter().enumerate() {
                x[bv] = xb[j];
            }
        }
        None => {
            for (row, &bv) in tab.rows.iter().zip(&tab.basis) {
                x[bv] = row[rhs];
            }
        }
    }
    for v in x.iter_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    match basis_matrix.transpose().lu().solve(&cb) {
        Some(y) => {
            for (i, &row) in kept.iter().enumerate() {
                duals[row] = y[i];
            }
        }
        None => {
            // artificial columns of kept rows carry -y (times the row sign flip)
            for &row in kept {
                duals[row] = -tab.cost[n + row] * sign[row];
            }
        }
    }
    (x, duals)
}
