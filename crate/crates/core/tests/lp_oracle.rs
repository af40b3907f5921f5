mod common;

use common::transport_by_vertices;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vmpost_core::lp::{solve_lp, LpProblem};

fn transport_lp(cost: &DMatrix<f64>, p: &[f64], q: &[f64]) -> LpProblem {
    let (r, c) = (p.len(), q.len());
    let mut a = DMatrix::zeros(r + c, r * c);
    for i in 0..r {
        for j in 0..c {
            a[(i, i * c + j)] = 1.0;
            a[(r + j, i * c + j)] = 1.0;
        }
    }
    let costs = (0..r * c).map(|v| cost[(v / c, v % c)]).collect();
    // keep the redundant row: the solver must cope with rank deficiency
    LpProblem::new(costs, a, p.iter().chain(q).cloned().collect()).unwrap()
}

#[test]
fn random_transport_matches_vertex_enumeration() {
    for seed in 0..30u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = common::random_simplex(&mut rng, 3);
        let q = common::random_simplex(&mut rng, 3);
        let cost = DMatrix::from_fn(3, 3, |_, _| rng.random::<f64>() * 5.0);
        let (expected, _) = transport_by_vertices(&cost, &p, &q);
        let lp = transport_lp(&cost, &p, &q);
        let sol = solve_lp(&lp).unwrap();
        assert!((sol.objective - expected).abs() < 1e-9, "seed {seed}");
        assert!(lp.residual(&sol.x) < 1e-10);
        assert!(sol.x.iter().all(|&v| v >= -1e-12));
    }
}

#[test]
fn duals_are_feasible_and_tight() {
    for seed in 0..30u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let p = common::random_simplex(&mut rng, 3);
        let q = common::random_simplex(&mut rng, 2);
        let cost = DMatrix::from_fn(3, 2, |_, _| rng.random::<f64>());
        let lp = transport_lp(&cost, &p, &q);
        let sol = solve_lp(&lp).unwrap();
        let a = lp.constraints();
        let dual_obj: f64 = lp.rhs().iter().zip(&sol.duals).map(|(b, y)| b * y).sum();
        for j in 0..lp.num_vars() {
            let aty: f64 = (0..a.nrows()).map(|i| a[(i, j)] * sol.duals[i]).sum();
            assert!(aty <= lp.cost()[j] + 1e-9, "reduced cost negative at {j}");
        }
        assert!((dual_obj - sol.objective).abs() < 1e-9);
        // weak duality against an arbitrary feasible point: the product plan
        let product: Vec<f64> = (0..6).map(|v| p[v / 2] * q[v % 2]).collect();
        let primal: f64 = product.iter().zip(lp.cost()).map(|(x, c)| x * c).sum();
        assert!(dual_obj <= primal + 1e-12);
    }
}
