//! Simulation studies and the penguins analysis.

use std::time::Instant;

use nalgebra::DVector;

pub mod gaussian;
pub mod gmm;
pub mod lda;
pub mod penguins;

/// Child seed for the stream identified by `path`, derived from `seed` with
/// the SplitMix64 finaliser so that parallel tasks get independent,
/// reproducible generators.
pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    let mut state = splitmix(seed ^ 0x6a09_e667_f3bc_c908);
    for &p in path {
        state = splitmix(state ^ splitmix(p.wrapping_add(0x9e37_79b9_7f4a_7c15)));
    }
    state
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// `multiplier * max |x|` over the inliers.
pub fn outlier_value(inliers: &[f64], multiplier: f64) -> f64 {
    multiplier * inliers.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Coordinatewise [`outlier_value`].
pub fn outlier_vector(inliers: &[DVector<f64>], multiplier: f64) -> DVector<f64> {
    let dim = inliers[0].len();
    DVector::from_fn(dim, |j, _| {
        let column: Vec<f64> = inliers.iter().map(|x| x[j]).collect();
        outlier_value(&column, multiplier)
    })
}

/// Accumulated wall-clock time.
#[derive(Debug, Default, Clone, Copy)]
pub struct Timer {
    total: f64,
}

impl Timer {
    pub fn time<T>(&mut self, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.total += start.elapsed().as_secs_f64();
        out
    }

    pub fn seconds(&self) -> f64 {
        self.total
    }
}
