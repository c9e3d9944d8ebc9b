use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::PointSet;
use crate::error::{invalid, Error, Result};
use crate::tensor_field::FrequencyLayout;

const START_RESOLUTION: usize = 64;
const MAX_RESOLUTION: usize = 4096;

/// Distance used for covering radii on `[-1/2, 1/2]^m`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Wrap {
    /// `‖<x - y>‖∞`, the sup-distance on the unit torus.
    Torus,
    /// `‖x - y‖∞` inside the cube.
    Box,
}

/// `sup_y min_{x ∈ P} dist(y, x)`; `value` is a lower bound attained at a probe point and
/// `upper` a certified upper bound. Both coincide when the computation is exact.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoveringEstimate {
    pub value: f64,
    pub upper: f64,
    /// Probe resolution per axis, `None` for exact computations.
    pub resolution: Option<usize>,
    pub points: usize,
}

#[inline]
fn axis_dist(a: f64, b: f64, wrap: Wrap) -> f64 {
    let d = (a - b).abs();
    match wrap {
        Wrap::Torus => d.min(1.0 - d),
        Wrap::Box => d,
    }
}

fn covering_1d(p: &PointSet, wrap: Wrap) -> f64 {
    let mut xs: Vec<f64> = p.iter().map(|q| q[0]).collect();
    xs.sort_by(f64::total_cmp);
    let mut gap = 0.0_f64;
    for w in xs.windows(2) {
        gap = gap.max(w[1] - w[0]);
    }
    let (first, last) = (xs[0], xs[xs.len() - 1]);
    match wrap {
        Wrap::Torus => gap.max(1.0 - (last - first)) / 2.0,
        Wrap::Box => (gap / 2.0).max(first + 0.5).max(0.5 - last),
    }
}

/// Buckets of points on a `b × b` grid over the cube, stored in CSR form.
struct Buckets {
    b: usize,
    start: Vec<usize>,
    pts: Vec<(f64, f64)>,
}

impl Buckets {
    fn new(p: &PointSet) -> Self {
        let n = p.len();
        let b = ((n as f64 / 2.0).sqrt().ceil() as usize).clamp(1, 2048);
        let cell = |v: f64| (((v + 0.5) * b as f64) as usize).min(b - 1);
        let mut count = vec![0usize; b * b + 1];
        for q in p.iter() {
            count[cell(q[1]) * b + cell(q[0]) + 1] += 1;
        }
        for k in 1..count.len() {
            count[k] += count[k - 1];
        }
        let mut fill = count.clone();
        let mut pts = vec![(0.0, 0.0); n];
        for q in p.iter() {
            let k = cell(q[1]) * b + cell(q[0]);
            pts[fill[k]] = (q[0], q[1]);
            fill[k] += 1;
        }
        Self { b, start: count, pts }
    }

    fn bucket(&self, ix: usize, iy: usize) -> &[(f64, f64)] {
        let k = iy * self.b + ix;
        &self.pts[self.start[k]..self.start[k + 1]]
    }

    /// Nearest distance from `(x, y)`, or any value `≤ floor` once it is known to be below it.
    fn nearest(&self, x: f64, y: f64, wrap: Wrap, floor: f64) -> f64 {
        let b = self.b as i64;
        let h = 1.0 / self.b as f64;
        let cx = (((x + 0.5) * self.b as f64) as i64).min(b - 1);
        let cy = (((y + 0.5) * self.b as f64) as i64).min(b - 1);
        let mut best = f64::INFINITY;
        let scan = |pts: &[(f64, f64)], best: &mut f64| {
            for &(px, py) in pts {
                let d = axis_dist(px, x, wrap).max(axis_dist(py, y, wrap));
                if d < *best {
                    *best = d;
                }
            }
        };
        let mut k = 0i64;
        loop {
            if wrap == Wrap::Torus && 2 * k + 1 >= b {
                scan(&self.pts, &mut best);
                return best;
            }
            let mut any = false;
            for iy in cy - k..=cy + k {
                for ix in cx - k..=cx + k {
                    if (iy - cy).abs() != k && (ix - cx).abs() != k {
                        continue;
                    }
                    let (jx, jy) = match wrap {
                        Wrap::Torus => (ix.rem_euclid(b), iy.rem_euclid(b)),
                        Wrap::Box => {
                            if ix < 0 || iy < 0 || ix >= b || iy >= b {
                                continue;
                            }
                            (ix, iy)
                        }
                    };
                    any = true;
                    scan(self.bucket(jx as usize, jy as usize), &mut best);
                }
            }
            // Buckets in ring k + 1 are at least k * h away.
            if best <= k as f64 * h || best <= floor || (!any && wrap == Wrap::Box) {
                return best;
            }
            k += 1;
        }
    }
}

fn probe_max(buckets: &Buckets, res: usize, wrap: Wrap) -> f64 {
    let step = 1.0 / res as f64;
    (0..res)
        .into_par_iter()
        .map(|iy| {
            let y = -0.5 + (iy as f64 + 0.5) * step;
            let mut row = 0.0_f64;
            for ix in 0..res {
                let x = -0.5 + (ix as f64 + 0.5) * step;
                row = row.max(buckets.nearest(x, y, wrap, row));
            }
            row
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold(0.0, f64::max)
}

/// Covering radius of `P` in `[-1/2, 1/2]^m` for `m ≤ 2`.
///
/// In one dimension the value is exact. In two dimensions the farthest point is searched on
/// a grid of cell-centre probes, doubling the resolution from 64 until the value moves by
/// less than 5% and the probe spacing is at most a quarter of the value (capped at 4096).
pub fn covering_radius(p: &PointSet, wrap: Wrap) -> Result<CoveringEstimate> {
    if p.is_empty() {
        return invalid("covering radius of an empty point set");
    }
    match p.dim() {
        1 => {
            let v = covering_1d(p, wrap);
            Ok(CoveringEstimate {
                value: v,
                upper: v,
                resolution: None,
                points: p.len(),
            })
        }
        2 => {
            let buckets = Buckets::new(p);
            let mut res = START_RESOLUTION;
            let mut prev = probe_max(&buckets, res, wrap);
            loop {
                if res >= MAX_RESOLUTION {
                    break;
                }
                let next = probe_max(&buckets, 2 * res, wrap);
                res *= 2;
                let settled = (next - prev).abs() < 0.05 * next.max(prev);
                prev = next;
                if settled && res as f64 * prev >= 4.0 {
                    break;
                }
            }
            Ok(CoveringEstimate {
                value: prev,
                upper: prev + 0.5 / res as f64,
                resolution: Some(res),
                points: p.len(),
            })
        }
        m => Err(Error::Unsupported(format!("covering radius in dimension {m}"))),
    }
}

/// `θ_{λ_i}(R)`: torus covering radius of the orbit set `<λ_i t>`, `t = j + k/ℓ`.
pub fn theta_quasi(lambda: &[f64], r: usize, ell: usize) -> Result<CoveringEstimate> {
    if r == 0 || ell == 0 {
        return invalid("theta needs R >= 1 and l >= 1");
    }
    let p = PointSet::kronecker(lambda, r, ell)?;
    covering_radius(&p, Wrap::Torus)
}

/// `θ_λ(R) = max_i θ_{λ_i}(R)`.
pub fn theta_layout(layout: &FrequencyLayout, r: usize, ell: usize) -> Result<CoveringEstimate> {
    let mut worst: Option<CoveringEstimate> = None;
    for lam in layout.directions() {
        let e = theta_quasi(lam, r, ell)?;
        if worst.is_none_or(|w| e.value > w.value) {
            worst = Some(e);
        }
    }
    Ok(worst.expect("layout has at least one direction"))
}

/// `½ D^{1/m}`, the covering radius forced by an empty cube lying inside the unit cube.
///
/// Empty cubes touching the boundary (or wrapping on the torus) only give `r ≤ D^{1/m}`, so
/// twice this value is the bound that holds for every point set.
pub fn covering_from_discrepancy(d: f64, m: usize) -> Result<f64> {
    if !(0.0..=1.0).contains(&d) {
        return invalid(format!("discrepancy must lie in [0, 1], got {d}"));
    }
    if m == 0 {
        return invalid("dimension must be positive");
    }
    Ok(0.5 * d.powf(1.0 / m as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ap_metrics::discrepancy_exact;

    fn brute(p: &PointSet, wrap: Wrap, res: usize) -> f64 {
        let mut worst = 0.0_f64;
        for iy in 0..=res {
            for ix in 0..=res {
                let y = [-0.5 + ix as f64 / res as f64, -0.5 + iy as f64 / res as f64];
                let near = p
                    .iter()
                    .map(|q| axis_dist(q[0], y[0], wrap).max(axis_dist(q[1], y[1], wrap)))
                    .fold(f64::INFINITY, f64::min);
                worst = worst.max(near);
            }
        }
        worst
    }

    #[test]
    fn four_point_orbit() {
        let e = theta_quasi(&[1.0], 1, 2).unwrap();
        assert_eq!(e.value, 0.25);
        assert_eq!(e.upper, 0.25);
    }

    #[test]
    fn equispaced_covering_matches_half_discrepancy() {
        for n in [1usize, 3, 10, 50] {
            let xs = (0..n).map(|k| -0.5 + (k as f64 + 0.5) / n as f64).collect();
            let p = PointSet::new(1, xs).unwrap();
            let c = covering_radius(&p, Wrap::Box).unwrap().value;
            let bound = covering_from_discrepancy(discrepancy_exact(&p).unwrap(), 1).unwrap();
            assert!((c - 0.5 / n as f64).abs() < 1e-12);
            assert!((bound - c).abs() < 1e-12);
        }
    }

    #[test]
    fn covering_from_discrepancy_arithmetic() {
        assert_eq!(covering_from_discrepancy(1.0, 2).unwrap(), 0.5);
        assert_eq!(covering_from_discrepancy(1.0 / 16.0, 1).unwrap(), 1.0 / 32.0);
        assert!(covering_from_discrepancy(1.5, 1).is_err());
    }

    #[test]
    fn grid_estimate_brackets_brute_force() {
        for seed in 0..6 {
            let p = PointSet::random(2, 30, seed).unwrap();
            for wrap in [Wrap::Torus, Wrap::Box] {
                let e = covering_radius(&p, wrap).unwrap();
                let b = brute(&p, wrap, 400);
                assert!(e.value <= b + 1.0 / 400.0 && b <= e.upper + 1e-12, "{wrap:?}: {e:?} vs {b}");
                assert!(e.upper - e.value <= e.value / 4.0 + 1e-12);
            }
        }
    }

    #[test]
    fn dense_rational_orbit_covers_to_grid_resolution() {
        // λ = (1, 1/64), ℓ = 64: the orbit is a sheared 64 x 64 grid.
        let e = theta_quasi(&[1.0, 1.0 / 64.0], 64, 64).unwrap();
        assert!(e.value <= 1.0 / 64.0, "{e:?}");
        let k = 16;
        let grid: Vec<f64> = (0..k * k)
            .flat_map(|i| [-0.5 + ((i % k) as f64 + 0.5) / k as f64, -0.5 + ((i / k) as f64 + 0.5) / k as f64])
            .collect();
        let e = covering_radius(&PointSet::new(2, grid).unwrap(), Wrap::Torus).unwrap();
        assert!(e.value <= 0.5 / k as f64 + 1e-12 && e.upper >= 0.5 / k as f64, "{e:?}");
    }
}
