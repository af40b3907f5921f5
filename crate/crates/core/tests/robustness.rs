use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use vmpost_core::median::{gaussian_geometric_median, metric_median, DistanceKind, DEFAULT_FIXED_POINT_ITERS};
use vmpost_core::{GaussianDist, SubsetPosteriorSet};

#[test]
fn medians_ignore_three_contaminated_subsets() {
    let (m, bad, dim) = (10usize, 3usize, 2usize);
    let mut average_hits = 0;
    for trial in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(trial);
        let noise = Normal::<f64>::new(0.0, 0.1).unwrap();
        let posts: Vec<GaussianDist> = (0..m)
            .map(|j| {
                let shift = if j < bad { 100.0 } else { 0.0 };
                let mean = DVector::from_fn(dim, |_, _| 2.0 + shift + noise.sample(&mut rng));
                let scale = 0.05 * (1.0 + noise.sample(&mut rng).abs());
                GaussianDist::new(mean, DMatrix::identity(dim, dim) * scale).unwrap()
            })
            .collect();
        let inliers = &posts[bad..];
        let consensus = inliers.iter().fold(DVector::zeros(dim), |acc, g| acc + g.mean()) / inliers.len() as f64;
        let spread = inliers
            .iter()
            .map(|g| (g.mean() - &consensus).norm())
            .fold(0.0, f64::max);
        let set = SubsetPosteriorSet::from_posteriors(posts.clone()).unwrap();

        let geo = gaussian_geometric_median(&set, DEFAULT_FIXED_POINT_ITERS, None).unwrap();
        assert!(
            (geo.result.mean() - &consensus).norm() <= 3.0 * spread,
            "trial {trial}: geometric"
        );
        let met = metric_median(&set, &DistanceKind::BuresW2).unwrap();
        assert!(
            met.index >= bad,
            "trial {trial}: metric median picked a contaminated subset"
        );
        assert!((met.posterior.mean() - &consensus).norm() <= 3.0 * spread);

        let average = posts.iter().fold(DVector::zeros(dim), |acc, g| acc + g.mean()) / m as f64;
        if (average - &consensus).norm() <= 3.0 * spread {
            average_hits += 1;
        }
    }
    assert_eq!(average_hits, 0);
}
