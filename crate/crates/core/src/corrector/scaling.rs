use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{on_window, solve_corrector, CorrectorConfig, CorrectorSet, Protocol};
use crate::ap_metrics::{least_squares, DecayKind, DecayReport};
use crate::error::{invalid, Result};
use crate::fd_solver::{Boundary, GridFunction, NormKind, Window};
use crate::tensor_field::{CoefficientTensorField, TensorValue};

/// Node average of `Σ_k |g_k|²` over the cube of side `side` centred at `center`,
/// wrapping on periodic grids.
fn cube_mean_square(grads: &[&GridFunction], center: &[f64], side: f64) -> Result<f64> {
    let grid = grads[0].grid();
    let d = grid.d();
    let m = grads[0].m();
    let mut lo = Vec::with_capacity(d);
    let mut hi = Vec::with_capacity(d);
    for a in 0..d {
        let h = grid.h(a);
        let f = ((center[a] - side / 2.0 - grid.lo()[a]) / h - 1e-9).ceil() as i64;
        let l = ((center[a] + side / 2.0 - grid.lo()[a]) / h + 1e-9).floor() as i64;
        if grid.bc() != Boundary::Periodic && (f < 0 || l >= grid.nodes_on_axis(a) as i64) {
            return invalid("averaging cube leaves the grid");
        }
        lo.push(f);
        hi.push(l);
    }
    let mut k = lo.clone();
    let mut idx = vec![0usize; d];
    let (mut sum, mut count) = (0.0, 0usize);
    loop {
        for a in 0..d {
            idx[a] = k[a].rem_euclid(grid.nodes_on_axis(a) as i64) as usize;
        }
        let p = grid.linear_index(&idx);
        for g in grads {
            for c in 0..m {
                let v = g.values()[p * m + c];
                sum += v * v;
            }
        }
        count += 1;
        let mut done = true;
        for a in 0..d {
            if k[a] < hi[a] {
                k[a] += 1;
                done = false;
                break;
            }
            k[a] = lo[a];
        }
        if done {
            break;
        }
    }
    Ok(sum / count as f64)
}

fn window_center(w: &Window) -> Vec<f64> {
    w.lo.iter().zip(&w.hi).map(|(a, b)| (a + b) / 2.0).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradientMeans {
    pub t: f64,
    /// `(r, ⟨|∇χ_T|²⟩_{Q_r}^{1/2})` for `r ∈ {T/8, T/4, T/2, T}`.
    pub samples: Vec<(f64, f64)>,
    /// Least-squares `σ` in `mean ≈ C (T/r)^σ`.
    pub fitted_sigma: Option<f64>,
    pub fitted_constant: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrectorScalings {
    /// `(T, T⁻¹ ‖χ_T‖_∞)`
    pub sup_over_t: DecayReport,
    /// `(T, [χ_T]_{C^σ} / T^{1−σ})`
    pub holder_ratio: DecayReport,
    pub gradient_means: Vec<GradientMeans>,
}

/// Sup-norm, Hölder and windowed-gradient scalings across a ladder of screening lengths.
pub fn corrector_scalings(sets: &[CorrectorSet], sigma: f64, pair_budget: usize) -> Result<CorrectorScalings> {
    if sets.len() < 3 {
        return invalid("scalings need at least three screening lengths");
    }
    if !(sigma > 0.0 && sigma < 1.0) {
        return invalid("sigma must lie in (0, 1)");
    }
    let mut sup = Vec::new();
    let mut holder = Vec::new();
    let mut grads = Vec::new();
    for set in sets {
        let t = set.t();
        sup.push((t, set.sup_norm() / t));
        let mut hs: f64 = 0.0;
        let mut radii = Vec::new();
        let center = window_center(set.window());
        let full: Vec<Vec<GridFunction>> = (0..set.d() * set.m())
            .map(|c| set.chi(c / set.m(), c % set.m()).gradient())
            .collect();
        let refs: Vec<&GridFunction> = full.iter().flatten().collect();
        for c in 0..set.d() * set.m() {
            hs = hs.max(set.window_chi(c / set.m(), c % set.m())?.holder_seminorm(sigma, pair_budget)?);
        }
        holder.push((t, hs / t.powf(1.0 - sigma)));
        for r in [t / 8.0, t / 4.0, t / 2.0, t] {
            radii.push((r, cube_mean_square(&refs, &center, r)?.sqrt()));
        }
        let pts: Vec<(f64, f64)> = radii
            .iter()
            .filter(|(_, v)| *v > 0.0)
            .map(|(r, v)| ((t / r).ln(), v.ln()))
            .collect();
        let (fitted_sigma, fitted_constant) = if pts.len() >= 3 {
            let (s, c, _) = least_squares(&pts);
            (Some(s), Some(c.exp()))
        } else {
            (None, None)
        };
        grads.push(GradientMeans {
            t,
            samples: radii,
            fitted_sigma,
            fitted_constant,
        });
    }
    Ok(CorrectorScalings {
        sup_over_t: DecayReport::new(DecayKind::Other, sup)?.with_meta("quantity", "sup_chi_over_T"),
        holder_ratio: DecayReport::new(DecayKind::Other, holder)?
            .with_meta("quantity", "holder_ratio")
            .with_meta("sigma", sigma),
        gradient_means: grads,
    })
}

/// `⟨|∇χ_T − ∇χ_{2T}|²⟩^{1/2}` on the window of the smallest `T`, per dyadic pair.
///
/// Metadata `tail_sums[k] = Σ_{i≥k} value_i` bounds `⟨|ψ − ∇χ_{T_k}|²⟩^{1/2}` up to the
/// truncation of the ladder.
pub fn gradient_cauchy_decay(sets: &[CorrectorSet]) -> Result<DecayReport> {
    if sets.len() < 2 {
        return invalid("Cauchy decay needs at least two screening lengths");
    }
    let mut order: Vec<&CorrectorSet> = sets.iter().collect();
    order.sort_by(|a, b| a.t().total_cmp(&b.t()));
    let first = order[0];
    for w in order.windows(2) {
        if (w[1].t() / w[0].t() - 2.0).abs() > 1e-9 {
            return invalid("screening lengths must be dyadic");
        }
        if w[1].protocol() != first.protocol()
            || w[1].grid().spacing() != first.grid().spacing()
            || w[1].d() != first.d()
            || w[1].m() != first.m()
        {
            return invalid("corrector sets must share protocol and grid spacing");
        }
    }
    let window = first.window().clone();
    let (d, m) = (first.d(), first.m());
    let restricted = |set: &CorrectorSet| -> Result<Vec<GridFunction>> {
        let mut out = Vec::new();
        for c in 0..d * m {
            for g in set.chi(c / m, c % m).gradient() {
                out.push(if set.protocol() == Protocol::Periodic {
                    g
                } else {
                    g.restrict(&window)?
                });
            }
        }
        Ok(out)
    };
    let grads = order.par_iter().map(|s| restricted(s)).collect::<Result<Vec<_>>>()?;
    let mut samples = Vec::new();
    for (k, pair) in grads.windows(2).enumerate() {
        let grid = pair[0][0].grid().clone();
        let mut dens = vec![0.0; grid.node_count()];
        for (a, b) in pair[0].iter().zip(&pair[1]) {
            if a.grid() != b.grid() {
                return invalid("corrector grids are not node-aligned on the window");
            }
            for (p, o) in dens.iter_mut().enumerate() {
                for c in 0..m {
                    let diff = a.values()[p * m + c] - b.values()[p * m + c];
                    *o += diff * diff;
                }
            }
        }
        let mean = GridFunction::from_values(&grid, 1, dens)?.mean()[0];
        samples.push((order[k].t(), mean.max(0.0).sqrt()));
    }
    let tails: Vec<f64> = (0..samples.len()).map(|k| samples[k..].iter().map(|s| s.1).sum()).collect();
    Ok(DecayReport::new(DecayKind::Other, samples)?
        .with_meta("quantity", "gradient_cauchy_pair_norm")
        .with_meta("window", &window)
        .with_meta("tail_sums", tails))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TranslationRow {
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    /// `‖χ_T(·+y) − χ_T(·+z)‖_∞` on the window.
    pub chi_diff: f64,
    /// `‖A(·+y) − A(·+z)‖_∞` at the window nodes.
    pub field_diff: f64,
    /// `chi_diff / (T · field_diff)`, absent when the pair was skipped.
    pub ratio: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TranslationReport {
    pub t: f64,
    pub rows: Vec<TranslationRow>,
    pub skipped: usize,
    pub max_ratio: Option<f64>,
    pub min_ratio: Option<f64>,
}

/// Compares correctors of translated fields against `T` times the field difference.
pub fn translation_response(
    field: &CoefficientTensorField,
    config: &CorrectorConfig,
    pairs: &[(Vec<f64>, Vec<f64>)],
    min_denominator: f64,
) -> Result<TranslationReport> {
    let mut shifts: Vec<&Vec<f64>> = Vec::new();
    for (y, z) in pairs {
        for s in [y, z] {
            if !shifts.contains(&s) {
                shifts.push(s);
            }
        }
    }
    let sets = shifts
        .par_iter()
        .map(|s| solve_corrector(&field.translated(s)?, config))
        .collect::<Result<Vec<_>>>()?;
    let find = |s: &Vec<f64>| shifts.iter().position(|x| *x == s).expect("collected above");
    let t = config.t;
    let (d, m) = (field.d(), field.m());
    let mut rows = Vec::new();
    for (y, z) in pairs {
        let (sy, sz) = (&sets[find(y)], &sets[find(z)]);
        let mut chi_diff: f64 = 0.0;
        for c in 0..d * m {
            let a = sy.window_chi(c / m, c % m)?;
            let b = sz.window_chi(c / m, c % m)?;
            chi_diff = chi_diff.max(a.sub(&b)?.norm(NormKind::Linf));
        }
        let nodes = on_window(&GridFunction::zeros(sy.grid(), 1), sy.window())?;
        let g = nodes.grid();
        let field_diff = (0..g.node_count())
            .into_par_iter()
            .map_init(
                || (vec![0.0; d], vec![0.0; d], TensorValue::zeros(d, m), TensorValue::zeros(d, m)),
                |(py, pz, ay, az), idx| {
                    g.position(idx, py);
                    pz.copy_from_slice(py);
                    py.iter_mut().zip(y).for_each(|(p, s)| *p += s);
                    pz.iter_mut().zip(z).for_each(|(p, s)| *p += s);
                    field.evaluate_into(py, ay);
                    field.evaluate_into(pz, az);
                    ay.max_abs_diff(az)
                },
            )
            .reduce(|| 0.0, f64::max);
        let ratio = (field_diff >= min_denominator).then(|| chi_diff / (t * field_diff));
        rows.push(TranslationRow {
            y: y.clone(),
            z: z.clone(),
            chi_diff,
            field_diff,
            ratio,
        });
    }
    let ratios: Vec<f64> = rows.iter().filter_map(|r| r.ratio).collect();
    Ok(TranslationReport {
        t,
        skipped: rows.len() - ratios.len(),
        max_ratio: ratios.iter().copied().reduce(f64::max),
        min_ratio: ratios.iter().copied().reduce(f64::min),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor_field::FrequencyLayout;

    fn periodic_1d() -> CoefficientTensorField {
        CoefficientTensorField::scalar_trig(1, 2.0, &[(vec![1.0], 0.0, 1.0)])
            .unwrap()
            .certified(1024, 0)
            .unwrap()
    }

    fn golden_1d() -> CoefficientTensorField {
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        let layout = FrequencyLayout::independent(vec![vec![1.0, phi]]).unwrap();
        CoefficientTensorField::scalar_quasi_periodic(layout, 2.0, &[(vec![1, 0], 0.0, 0.5), (vec![0, 1], 0.0, 0.5)])
            .unwrap()
            .certified(4096, 0)
            .unwrap()
    }

    #[test]
    fn periodic_scalings() {
        let f = periodic_1d();
        let sets: Vec<CorrectorSet> = [16.0, 32.0, 64.0, 128.0]
            .iter()
            .map(|&t| solve_corrector(&f, &CorrectorConfig::new(t, 1.0 / 256.0)).unwrap())
            .collect();
        let s = corrector_scalings(&sets, 0.5, 1 << 14).unwrap();
        let v: Vec<f64> = s.sup_over_t.values().collect();
        for w in v.windows(2) {
            assert!((w[0] / w[1] - 2.0).abs() < 0.05, "{v:?}");
        }
        let c = gradient_cauchy_decay(&sets).unwrap();
        let p: Vec<f64> = c.values().collect();
        assert!(p.windows(2).all(|w| w[1] < w[0]), "{p:?}");
    }

    #[test]
    fn constant_scalings_vanish() {
        let f = CoefficientTensorField::constant(TensorValue::identity(1, 1)).certified(1, 0).unwrap();
        let sets: Vec<CorrectorSet> = [2.0, 4.0, 8.0]
            .iter()
            .map(|&t| solve_corrector(&f, &CorrectorConfig::new(t, 1.0 / 64.0)).unwrap())
            .collect();
        let s = corrector_scalings(&sets, 0.5, 1024).unwrap();
        assert!(s.sup_over_t.values().all(|v| v == 0.0));
        assert!(s.holder_ratio.values().all(|v| v == 0.0));
        assert!(gradient_cauchy_decay(&sets).unwrap().values().all(|v| v == 0.0));
    }

    #[test]
    fn translation_pairs() {
        let cfg = CorrectorConfig::new(4.0, 1.0 / 16.0);
        let f = periodic_1d();
        let r = translation_response(&f, &cfg, &[(vec![0.3], vec![0.3]), (vec![0.25], vec![1.25])], 1e-8).unwrap();
        assert_eq!(r.skipped, 2);
        let g = golden_1d();
        let pairs = vec![(vec![0.0], vec![1.3]), (vec![2.0], vec![7.5]), (vec![4.1], vec![9.0])];
        let r = translation_response(&g, &cfg, &pairs, 1e-8).unwrap();
        assert_eq!(r.skipped, 0);
        assert!(r.max_ratio.unwrap() / r.min_ratio.unwrap() <= 50.0);
    }
}
