use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::sync::atomic::{AtomicU64, Ordering};

use super::{DecayKind, DecayReport};
use crate::error::{invalid, Result};
use crate::tensor_field::{CoefficientTensorField, TensorValue};

/// Largest inner search grid accepted by `estimate_rho`.
const MAX_Z_POINTS: usize = 1 << 24;
/// Test points used to rank shifts before the full comparison.
const PRESCREEN: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BallNorm {
    /// `‖z‖∞ ≤ R`
    Infinity,
    /// `|z| ≤ R`
    Euclidean,
}

/// Sampling budgets for the sup-inf-sup in `ρ(R)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RhoBudget {
    /// Outer shifts `y`, uniform in `[-y_half_width, y_half_width]^d`.
    pub y_samples: usize,
    pub y_half_width: f64,
    /// Spacing of the inner grid of candidate shifts `z`.
    pub z_spacing: f64,
    /// Points `x`, uniform in `[-test_half_width, test_half_width]^d`, for `‖·‖∞`.
    pub test_points: usize,
    pub test_half_width: f64,
}

impl Default for RhoBudget {
    fn default() -> Self {
        Self {
            y_samples: 64,
            y_half_width: 1024.0,
            z_spacing: 1.0 / 256.0,
            test_points: 4096,
            test_half_width: 64.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RhoEstimate {
    pub r: f64,
    pub value: f64,
    /// `L s √d / 2`: how much a grid of spacing `s` can overestimate the inner infimum.
    pub grid_tolerance: f64,
    pub z_points: usize,
    pub norm: BallNorm,
    pub budget: RhoBudget,
    pub seed: u64,
}

fn z_grid(d: usize, r: f64, s: f64, norm: BallNorm) -> Result<Vec<Vec<f64>>> {
    let k = (r / s + 1e-9).floor() as i64;
    let per_axis = (2 * k + 1) as usize;
    if per_axis.checked_pow(d as u32).is_none_or(|n| n > MAX_Z_POINTS) {
        return invalid(format!(
            "inner grid of {per_axis}^{d} shifts exceeds the budget limit {MAX_Z_POINTS}; increase z_spacing"
        ));
    }
    let mut out = Vec::new();
    let mut idx = vec![-k; d];
    loop {
        let z: Vec<f64> = idx.iter().map(|&i| i as f64 * s).collect();
        let inside = match norm {
            BallNorm::Infinity => true,
            BallNorm::Euclidean => z.iter().map(|v| v * v).sum::<f64>() <= r * r * (1.0 + 1e-12),
        };
        if inside {
            out.push(z);
        }
        let mut done = true;
        for a in 0..d {
            if idx[a] < k {
                idx[a] += 1;
                done = false;
                break;
            }
            idx[a] = -k;
        }
        if done {
            break;
        }
    }
    // Shortest shifts first so that ties resolve toward small |z|.
    out.sort_by(|a, b| {
        let na: f64 = a.iter().map(|v| v * v).sum();
        let nb: f64 = b.iter().map(|v| v * v).sum();
        na.total_cmp(&nb)
    });
    Ok(out)
}

/// `sup_k ‖A(x_k + y) − A(x_k + z)‖`, abandoned as soon as it reaches `cap`.
fn shifted_gap(
    field: &CoefficientTensorField,
    xs: &[Vec<f64>],
    ay: &[TensorValue],
    z: &[f64],
    order: &[usize],
    cap: f64,
    scratch: &mut (Vec<f64>, TensorValue),
) -> f64 {
    let (p, a) = scratch;
    let mut sup = 0.0_f64;
    for &k in order {
        for (pi, (xi, zi)) in p.iter_mut().zip(xs[k].iter().zip(z)) {
            *pi = xi + zi;
        }
        field.evaluate_into(p, a);
        sup = sup.max(a.max_abs_diff(&ay[k]));
        if sup >= cap {
            return sup;
        }
    }
    sup
}

/// Sampled `ρ(R) = sup_y inf_{‖z‖≤R} ‖A(·+y) − A(·+z)‖∞`.
///
/// The outer sup runs over `budget.y_samples` random shifts, the inner inf over the grid
/// `z_spacing · Z^d` inside the ball and the function norm over `budget.test_points` random
/// points. The random streams depend only on the seed and budget, and the shift grid nests
/// across `R`, so estimates for increasing `R` with a common seed are nonincreasing.
pub fn estimate_rho(
    field: &CoefficientTensorField,
    r: f64,
    budget: &RhoBudget,
    norm: BallNorm,
    seed: u64,
) -> Result<RhoEstimate> {
    if !(r > 0.0) || !r.is_finite() {
        return invalid("R must be positive");
    }
    if budget.y_samples == 0 || budget.test_points == 0 {
        return invalid("rho budgets need at least one outer shift and one test point");
    }
    if !(budget.z_spacing > 0.0) || !(budget.y_half_width >= 0.0) || !(budget.test_half_width >= 0.0) {
        return invalid("rho budget widths and spacing must be positive");
    }
    let d = field.d();
    let (dd, m) = (field.d(), field.m());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut uniform = |w: f64| -> Vec<f64> {
        (0..d)
            .map(|_| if w > 0.0 { rng.random_range(-w..w) } else { 0.0 })
            .collect()
    };
    let ys: Vec<Vec<f64>> = (0..budget.y_samples).map(|_| uniform(budget.y_half_width)).collect();
    let xs: Vec<Vec<f64>> = (0..budget.test_points)
        .map(|_| uniform(budget.test_half_width))
        .collect();
    let zs = z_grid(d, r, budget.z_spacing, norm)?;
    let head = PRESCREEN.min(xs.len());
    let all: Vec<usize> = (0..xs.len()).collect();

    let global = AtomicU64::new(0.0_f64.to_bits());
    let per_y: Vec<f64> = ys
        .par_iter()
        .map(|y| {
            let ay: Vec<TensorValue> = xs
                .iter()
                .map(|x| {
                    let p: Vec<f64> = x.iter().zip(y).map(|(a, b)| a + b).collect();
                    let mut t = TensorValue::zeros(dd, m);
                    field.evaluate_into(&p, &mut t);
                    t
                })
                .collect();
            let mut scratch = (vec![0.0; d], TensorValue::zeros(dd, m));
            let mut ranked: Vec<(f64, usize)> = zs
                .iter()
                .enumerate()
                .map(|(i, z)| {
                    (
                        shifted_gap(field, &xs, &ay, z, &all[..head], f64::INFINITY, &mut scratch),
                        i,
                    )
                })
                .collect();
            ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let mut best = f64::INFINITY;
            for &(lower, i) in &ranked {
                if lower >= best {
                    break;
                }
                let floor = f64::from_bits(global.load(Ordering::Relaxed));
                if best < floor {
                    // This y cannot raise the outer supremum.
                    break;
                }
                let g = shifted_gap(field, &xs, &ay, &zs[i], &all, best, &mut scratch);
                best = best.min(g);
            }
            global.fetch_max(best.to_bits(), Ordering::Relaxed);
            best
        })
        .collect();
    let value = per_y.into_iter().fold(0.0, f64::max);
    let lip = field.lipschitz_bound();
    Ok(RhoEstimate {
        r,
        value,
        grid_tolerance: lip * budget.z_spacing * (d as f64).sqrt() / 2.0,
        z_points: zs.len(),
        norm,
        budget: *budget,
        seed,
    })
}

/// `ρ` at each radius, with budgets, norm and seed in the metadata.
pub fn rho_report(
    field: &CoefficientTensorField,
    radii: &[f64],
    budget: &RhoBudget,
    norm: BallNorm,
    seed: u64,
) -> Result<DecayReport> {
    let estimates = radii
        .iter()
        .map(|&r| estimate_rho(field, r, budget, norm, seed))
        .collect::<Result<Vec<_>>>()?;
    let tol = estimates.iter().map(|e| e.grid_tolerance).fold(0.0, f64::max);
    Ok(DecayReport::new(DecayKind::Rho, estimates.iter().map(|e| (e.r, e.value)).collect())?
        .with_meta("ball_norm", norm)
        .with_meta("budget", budget)
        .with_meta("seed", seed)
        .with_meta("grid_tolerance", tol))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_budget() -> RhoBudget {
        RhoBudget {
            y_samples: 8,
            y_half_width: 100.0,
            z_spacing: 1.0 / 64.0,
            test_points: 256,
            test_half_width: 16.0,
        }
    }

    #[test]
    fn periodic_field_has_vanishing_rho() {
        let f = CoefficientTensorField::scalar_trig(1, 2.0, &[(vec![1.0], 0.0, 1.0)]).unwrap();
        let e = estimate_rho(&f, 1.0, &small_budget(), BallNorm::Infinity, 1).unwrap();
        // y is off the z grid, so only the grid tolerance remains.
        assert!(e.value <= e.grid_tolerance, "{e:?}");
    }

    #[test]
    fn constant_field_has_zero_rho() {
        let f = CoefficientTensorField::constant(TensorValue::scalar(2, 3.0));
        let e = estimate_rho(&f, 0.5, &small_budget(), BallNorm::Euclidean, 0).unwrap();
        assert_eq!(e.value, 0.0);
        assert_eq!(e.grid_tolerance, 0.0);
    }

    #[test]
    fn zero_budget_is_rejected() {
        let f = CoefficientTensorField::constant(TensorValue::identity(1, 1));
        let b = RhoBudget {
            y_samples: 0,
            ..small_budget()
        };
        assert!(estimate_rho(&f, 1.0, &b, BallNorm::Infinity, 0).is_err());
        assert!(estimate_rho(&f, 0.0, &small_budget(), BallNorm::Infinity, 0).is_err());
    }

    #[test]
    fn grid_is_nested_and_sorted() {
        let a = z_grid(2, 0.5, 0.25, BallNorm::Euclidean).unwrap();
        assert_eq!(a.len(), 13);
        assert_eq!(a[0], vec![0.0, 0.0]);
        let b = z_grid(2, 0.5, 0.25, BallNorm::Infinity).unwrap();
        assert_eq!(b.len(), 25);
    }
}
