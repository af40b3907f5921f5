//! Highest-density regions of 2D densities evaluated on a regular grid.

use nalgebra::DVector;
use rayon::prelude::*;

/// Axis-aligned box `[x0, x1] x [y0, y1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub x: (f64, f64),
    pub y: (f64, f64),
}

impl Bounds {
    /// Range of the points widened by `sds` sample standard deviations on
    /// each side, per coordinate.
    pub fn around(points: &[DVector<f64>], sds: f64) -> Self {
        let axis = |j: usize| {
            let vals: Vec<f64> = points.iter().map(|p| p[j]).collect();
            let n = vals.len() as f64;
            let mean = vals.iter().sum::<f64>() / n;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
            let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
            let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            (lo - sds * sd, hi + sds * sd)
        };
        Self { x: axis(0), y: axis(1) }
    }
}

/// Density values at the centres of a `size x size` grid, row-major with
/// `y` as the row index.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityGrid {
    pub bounds: Bounds,
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub values: Vec<f64>,
}

/// A highest-density region on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub level: f64,
    /// Density threshold: the region is `{density >= threshold}`.
    pub threshold: f64,
    pub inside: Vec<bool>,
    pub area: f64,
}

fn centres(range: (f64, f64), size: usize) -> Vec<f64> {
    let step = (range.1 - range.0) / size as f64;
    (0..size).map(|i| range.0 + (i as f64 + 0.5) * step).collect()
}

impl DensityGrid {
    pub fn evaluate<F>(bounds: Bounds, size: usize, density: F) -> Self
    where
        F: Fn(&DVector<f64>) -> f64 + Sync,
    {
        let xs = centres(bounds.x, size);
        let ys = centres(bounds.y, size);
        let values: Vec<f64> = ys
            .par_iter()
            .flat_map_iter(|&y| {
                xs.iter()
                    .map(|&x| {
                        let v = density(&DVector::from_vec(vec![x, y]));
                        if v.is_finite() && v > 0.0 {
                            v
                        } else {
                            0.0
                        }
                    })
                    .collect::<Vec<_>>()
            })
            .collect();
        Self { bounds, xs, ys, values }
    }

    pub fn nx(&self) -> usize {
        self.xs.len()
    }

    pub fn ny(&self) -> usize {
        self.ys.len()
    }

    pub fn cell_area(&self) -> f64 {
        let dx = (self.bounds.x.1 - self.bounds.x.0) / self.nx() as f64;
        let dy = (self.bounds.y.1 - self.bounds.y.0) / self.ny() as f64;
        dx * dy
    }

    pub fn value(&self, ix: usize, iy: usize) -> f64 {
        self.values[iy * self.nx() + ix]
    }

    /// Smallest set of cells, taken in decreasing density, whose share of
    /// the grid mass reaches `level`.
    pub fn hdr(&self, level: f64) -> Region {
        let total: f64 = self.values.iter().sum();
        let mut order: Vec<usize> = (0..self.values.len()).collect();
        order.sort_by(|&a, &b| self.values[b].total_cmp(&self.values[a]).then(a.cmp(&b)));
        let mut inside = vec![false; self.values.len()];
        let mut acc = 0.0;
        let mut threshold = 0.0;
        let mut cells = 0usize;
        if total > 0.0 {
            for &i in &order {
                inside[i] = true;
                cells += 1;
                acc += self.values[i];
                threshold = self.values[i];
                if acc / total >= level {
                    break;
                }
            }
        }
        Region {
            level,
            threshold,
            inside,
            area: cells as f64 * self.cell_area(),
        }
    }

    /// Local maxima at least `rel_floor` times the maximum, as
    /// `(x, y, density)`. A cell must beat its neighbours later in raster
    /// order strictly and earlier ones weakly, so a flat top counts once.
    pub fn local_maxima(&self, rel_floor: f64) -> Vec<(f64, f64, f64)> {
        let max = self.values.iter().cloned().fold(0.0, f64::max);
        let (nx, ny) = (self.nx() as isize, self.ny() as isize);
        let mut out = Vec::new();
        for iy in 0..ny {
            for ix in 0..nx {
                let v = self.value(ix as usize, iy as usize);
                if v <= 0.0 || v < rel_floor * max {
                    continue;
                }
                let mut peak = true;
                'scan: for dy in -1..=1 {
                    for dx in -1..=1 {
                        let (jx, jy) = (ix + dx, iy + dy);
                        if (dx, dy) == (0, 0) || jx < 0 || jy < 0 || jx >= nx || jy >= ny {
                            continue;
                        }
                        let u = self.value(jx as usize, jy as usize);
                        let later = (jy, jx) > (iy, ix);
                        if u > v || (later && u == v) {
                            peak = false;
                            break 'scan;
                        }
                    }
                }
                if peak {
                    out.push((self.xs[ix as usize], self.ys[iy as usize], v));
                }
            }
        }
        out
    }
}

/// Fraction of `points` whose density reaches the region threshold.
pub fn coverage<F>(region: &Region, points: &[DVector<f64>], density: F) -> f64
where
    F: Fn(&DVector<f64>) -> f64,
{
    if points.is_empty() {
        return 0.0;
    }
    let hits = points.iter().filter(|p| density(p) >= region.threshold).count();
    hits as f64 / points.len() as f64
}
