use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{on_window, window_ranges, CorrectorSet, Protocol};
use crate::error::{invalid, Result};
use crate::fd_solver::{
    solve, Boundary, BoxGrid, DiscreteFlux, DiscreteOperator, GridFunction, NormKind, SolveOptions, Window,
};
use crate::tensor_field::{CoefficientTensorField, Ellipticity, TensorValue};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MatrixSource {
    Approximate { t: f64 },
    Reference,
}

/// Constant effective tensor `â[i][j][α][β]` with its ellipticity check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HomogenizedMatrix {
    pub entries: Vec<Vec<Vec<Vec<f64>>>>,
    pub source: MatrixSource,
    /// Extreme Rayleigh quotients of the symmetric part.
    pub ellipticity: Option<Ellipticity>,
    /// Whether the quotients lie inside the bounds certified for the field.
    pub ellipticity_ok: bool,
}

impl HomogenizedMatrix {
    pub fn new(tensor: &TensorValue, source: MatrixSource, bounds: Option<&Ellipticity>) -> Self {
        let ellipticity = Ellipticity::of_tensor(tensor).ok();
        let ellipticity_ok = match (ellipticity, bounds) {
            (Some(e), Some(b)) => {
                let tol = 1e-3 * b.mu_inv_check;
                e.mu >= b.mu - tol && e.mu_inv_check <= b.mu_inv_check + tol
            }
            (Some(_), None) => true,
            (None, _) => false,
        };
        Self {
            entries: tensor.to_nested(),
            source,
            ellipticity,
            ellipticity_ok,
        }
    }

    pub fn tensor(&self) -> TensorValue {
        TensorValue::from_nested(&self.entries).expect("entries come from a tensor")
    }

    pub fn get(&self, i: usize, j: usize, alpha: usize, beta: usize) -> f64 {
        self.entries[i][j][alpha][beta]
    }
}

/// Window mean of each flux component `(i, α)`, index `i·m + α`.
fn flux_window_mean(flux: &DiscreteFlux, ranges: Option<&[(usize, usize)]>) -> Vec<f64> {
    let g = flux.grid();
    let (d, m) = (g.d(), flux.m());
    let mut out = vec![0.0; d * m];
    let mut k = vec![0usize; d];
    let trapezoid = |a: usize, ka: usize, r: &[(usize, usize)]| {
        let (f, l) = r[a];
        if ka < f || ka > l {
            0.0
        } else if ka == f || ka == l {
            0.5
        } else {
            1.0
        }
    };
    for i in 0..d {
        let face = flux.face(i);
        let (mut s, mut wsum) = (vec![0.0; m], 0.0);
        for idx in 0..g.node_count() {
            g.multi_index(idx, &mut k);
            let w: f64 = match ranges {
                None => 1.0,
                Some(r) => (0..d)
                    .map(|a| {
                        if a == i {
                            if k[a] >= r[a].0 && k[a] < r[a].1 {
                                1.0
                            } else {
                                0.0
                            }
                        } else {
                            trapezoid(a, k[a], r)
                        }
                    })
                    .product(),
            };
            if w == 0.0 {
                continue;
            }
            wsum += w;
            for c in 0..m {
                s[c] += w * face[idx * m + c];
            }
        }
        for c in 0..m {
            out[i * m + c] = s[c] / wsum;
        }
    }
    if let Some(cell) = flux.cell() {
        let (mut s, mut wsum) = (vec![0.0; d * m], 0.0);
        for idx in 0..g.node_count() {
            g.multi_index(idx, &mut k);
            let inside = match ranges {
                None => true,
                Some(r) => (0..d).all(|a| k[a] >= r[a].0 && k[a] < r[a].1),
            };
            if !inside {
                continue;
            }
            wsum += 1.0;
            for (sv, cv) in s.iter_mut().zip(&cell[idx * d * m..(idx + 1) * d * m]) {
                *sv += cv;
            }
        }
        for (o, sv) in out.iter_mut().zip(&s) {
            *o += sv / wsum;
        }
    }
    out
}

fn check_field(field: &CoefficientTensorField, set: &CorrectorSet) -> Result<()> {
    if field.d() != set.d() || field.m() != set.m() {
        return invalid("field shape differs from the corrector set");
    }
    Ok(())
}

/// `â_{T,ij}^{αβ} = ⟨a_ij^{αβ}⟩ + ⟨a_ik^{αγ} ∂_k χ_{T,j}^{γβ}⟩` from window means of the discrete
/// flux of `P_j^β + χ_{T,j}^β`, so that constants are reproduced exactly.
pub fn homogenized_matrix(field: &CoefficientTensorField, set: &CorrectorSet) -> Result<HomogenizedMatrix> {
    check_field(field, set)?;
    let (d, m) = (set.d(), set.m());
    let op = set.operator();
    let ranges = window_ranges(set.grid(), set.window())?;
    let mut t = TensorValue::zeros(d, m);
    for j in 0..d {
        for beta in 0..m {
            let a = flux_window_mean(&op.flux(set.chi(j, beta).values()), ranges.as_deref());
            let b = flux_window_mean(&op.affine_flux(j, beta), ranges.as_deref());
            for i in 0..d {
                for alpha in 0..m {
                    t.set(i, j, alpha, beta, a[i * m + alpha] + b[i * m + alpha]);
                }
            }
        }
    }
    Ok(HomogenizedMatrix::new(
        &t,
        MatrixSource::Approximate { t: set.t() },
        field.certificate(),
    ))
}

/// One-dimensional reference `â = ⟨A⁻¹⟩⁻¹` by midpoint quadrature over `[0, length]`.
pub fn reference_matrix_1d(field: &CoefficientTensorField, length: f64, samples: usize) -> Result<HomogenizedMatrix> {
    if field.d() != 1 {
        return invalid("the harmonic-mean reference is one-dimensional");
    }
    if !(length > 0.0) || samples == 0 {
        return invalid("quadrature needs a positive length and sample count");
    }
    let m = field.m();
    let h = length / samples as f64;
    let sum = (0..samples)
        .into_par_iter()
        .fold(
            || (DMatrix::<f64>::zeros(m, m), TensorValue::zeros(1, m)),
            |(mut acc, mut t), k| {
                field.evaluate_into(&[(k as f64 + 0.5) * h], &mut t);
                let inv = t.block_matrix().try_inverse().unwrap_or_else(|| DMatrix::from_element(m, m, f64::NAN));
                acc += inv;
                (acc, t)
            },
        )
        .map(|(acc, _)| acc)
        .collect::<Vec<_>>()
        .into_iter()
        .fold(DMatrix::<f64>::zeros(m, m), |a, b| a + b);
    let mean = sum / samples as f64;
    let Some(hat) = mean.try_inverse() else {
        return invalid("mean of A⁻¹ is singular");
    };
    let entries: Vec<f64> = (0..m).flat_map(|a| (0..m).map(move |b| (a, b))).map(|(a, b)| hat[(a, b)]).collect();
    let t = TensorValue::from_entries(1, m, entries)?;
    Ok(HomogenizedMatrix::new(&t, MatrixSource::Reference, field.certificate()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyResidual {
    pub j: usize,
    pub beta: usize,
    /// `⟨A∇χ·∇χ⟩ + T⁻²⟨|χ|²⟩`
    pub lhs: f64,
    /// `−⟨(A*∇χ)_j^β⟩`
    pub rhs: f64,
    pub residual: f64,
    /// `|residual| / (|lhs| + |rhs| + 1)`
    pub relative: f64,
}

/// Window-averaged energy identity with node-centred gradients and `A` at the nodes.
pub fn energy_identity_residual(field: &CoefficientTensorField, set: &CorrectorSet) -> Result<Vec<EnergyResidual>> {
    check_field(field, set)?;
    let (d, m) = (set.d(), set.m());
    let grid = set.grid();
    let kappa = set.operator().kappa();
    let mut out = Vec::with_capacity(d * m);
    for j in 0..d {
        for beta in 0..m {
            let chi = set.chi(j, beta);
            let grad = chi.gradient();
            let mut dens = vec![0.0; grid.node_count() * 2];
            dens.par_chunks_mut(2).enumerate().for_each_init(
                || (vec![0.0; d], TensorValue::zeros(d, m)),
                |(x, a), (idx, o)| {
                    grid.position(idx, x);
                    field.evaluate_into(x, a);
                    let g = |k: usize, c: usize| grad[k].values()[idx * m + c];
                    let mut lhs = 0.0;
                    let mut rhs = 0.0;
                    for i in 0..d {
                        for k in 0..d {
                            for al in 0..m {
                                for ga in 0..m {
                                    lhs += a.get(i, k, al, ga) * g(k, ga) * g(i, al);
                                }
                            }
                        }
                    }
                    for c in 0..m {
                        let v = chi.values()[idx * m + c];
                        lhs += kappa * v * v;
                    }
                    for k in 0..d {
                        for ga in 0..m {
                            rhs -= a.get(k, j, ga, beta) * g(k, ga);
                        }
                    }
                    o[0] = lhs;
                    o[1] = rhs;
                },
            );
            let means = on_window(&GridFunction::from_values(grid, 2, dens)?, set.window())?.mean();
            let residual = means[0] - means[1];
            out.push(EnergyResidual {
                j,
                beta,
                lhs: means[0],
                rhs: means[1],
                residual,
                relative: residual.abs() / (means[0].abs() + means[1].abs() + 1.0),
            });
        }
    }
    Ok(out)
}

/// `B_T = â − A − A∇χ_T` at the nodes of a region, with its window mean.
#[derive(Clone, Debug)]
pub struct FluxTensor {
    t: f64,
    d: usize,
    m: usize,
    grid: BoxGrid,
    window: Window,
    values: Vec<f64>,
    mean: TensorValue,
}

impl FluxTensor {
    /// From node samples on `grid` (periodic, or non-periodic with `window` inside), one
    /// tensor per node in `TensorValue` entry order.
    pub fn from_samples(t: f64, grid: BoxGrid, window: Window, m: usize, values: Vec<f64>) -> Result<Self> {
        let d = grid.d();
        let per = d * d * m * m;
        if values.len() != grid.node_count() * per {
            return invalid("flux tensor samples do not match the grid");
        }
        if values.iter().any(|v| !v.is_finite()) {
            return invalid("flux tensor samples must be finite");
        }
        let gf = GridFunction::from_values(&grid, per, values)?;
        let mean = TensorValue::from_entries(d, m, on_window(&gf, &window)?.mean())?;
        Ok(Self {
            t,
            d,
            m,
            grid,
            window,
            values: gf.into_values(),
            mean,
        })
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn grid(&self) -> &BoxGrid {
        &self.grid
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    /// `⟨B_T⟩` over the window.
    pub fn mean(&self) -> &TensorValue {
        &self.mean
    }

    pub fn entry_count(&self) -> usize {
        self.d * self.d * self.m * self.m
    }

    /// One entry of `B_T` as a scalar grid function.
    pub fn entry(&self, e: usize) -> GridFunction {
        let per = self.entry_count();
        let v = self.values.iter().skip(e).step_by(per).copied().collect();
        GridFunction::from_values(&self.grid, 1, v).expect("finite samples")
    }

    /// `max |B_T|` over the window, entrywise.
    pub fn sup_norm(&self) -> f64 {
        (0..self.entry_count())
            .map(|e| on_window(&self.entry(e), &self.window).map_or(f64::NAN, |g| g.norm(NormKind::Linf)))
            .fold(0.0, f64::max)
    }
}

/// Samples `B_T` on the box minus a strip of `flux_margin·T`, or on the period cell.
///
/// Fluxes are the discrete face and cell fluxes averaged to the nodes, so the window mean
/// of `B_T` is `â − Â_T` up to quadrature.
pub fn flux_tensor(field: &CoefficientTensorField, set: &CorrectorSet, a_hat: &HomogenizedMatrix) -> Result<FluxTensor> {
    check_field(field, set)?;
    let (d, m) = (set.d(), set.m());
    let hat = a_hat.tensor();
    if hat.d() != d || hat.m() != m {
        return invalid("homogenized matrix shape differs from the corrector set");
    }
    let full = set.grid();
    let per = d * d * m * m;
    let (region, offset) = match set.protocol() {
        Protocol::Periodic => (full.clone(), vec![0usize; d]),
        Protocol::Truncated => {
            let cfg = set.config();
            if !(cfg.flux_margin >= 0.0) || cfg.flux_margin >= cfg.buffer {
                return invalid("flux_margin must lie in [0, buffer)");
            }
            let margin = ((cfg.flux_margin * set.t() / full.h(0)).ceil() as usize).max(1);
            let lo = (0..d).map(|a| full.coordinate(a, margin)).collect();
            let hi = (0..d).map(|a| full.coordinate(a, full.cells()[a] - margin)).collect();
            let cells = full.cells().iter().map(|c| c - 2 * margin).collect();
            (BoxGrid::new(lo, hi, cells, Boundary::Free)?, vec![margin; d])
        }
    };
    let op = set.operator();
    let fluxes: Vec<(DiscreteFlux, DiscreteFlux)> = (0..d * m)
        .map(|c| (op.flux(set.chi(c / m, c % m).values()), op.affine_flux(c / m, c % m)))
        .collect();
    let mut values = vec![0.0; region.node_count() * per];
    values.par_chunks_mut(per).enumerate().for_each_init(
        || (vec![0usize; d], vec![0usize; d]),
        |(k, src), (idx, o)| {
            region.multi_index(idx, k);
            for a in 0..d {
                src[a] = k[a] + offset[a];
            }
            let p = full.linear_index(src);
            o.copy_from_slice(hat.entries());
            for j in 0..d {
                for beta in 0..m {
                    let (fx, fa) = &fluxes[j * m + beta];
                    for i in 0..d {
                        let s = full.stride(i);
                        let prev = full.shift(src[i], i, -1).expect("region is interior");
                        let q = p + prev * s - src[i] * s;
                        for al in 0..m {
                            let mut v = 0.0;
                            for f in [fx, fa] {
                                v += 0.5 * (f.face(i)[p * m + al] + f.face(i)[q * m + al]);
                                if let Some(cell) = f.cell() {
                                    let mut cs = 0.0;
                                    for ox in [0i64, -1] {
                                        for oy in [0i64, -1] {
                                            let cx = full.shift(src[0], 0, ox).expect("interior");
                                            let cy = full.shift(src[1], 1, oy).expect("interior");
                                            let ci = cx + cy * full.stride(1);
                                            cs += cell[(ci * d + i) * m + al];
                                        }
                                    }
                                    v += cs / 4.0;
                                }
                            }
                            o[hat.index(i, j, al, beta)] -= v;
                        }
                    }
                }
            }
        },
    );
    FluxTensor::from_samples(set.t(), region, set.window().clone(), m, values)
}

/// Solutions `f` of `−Δf + T⁻²f = B_T − ⟨B_T⟩`, one per entry of `B_T`.
#[derive(Clone, Debug)]
pub struct FluxCorrector {
    pub t: f64,
    pub entries: Vec<GridFunction>,
    /// `T⁻² max ‖f‖_∞` on the window.
    pub scaled_sup: f64,
    /// `T⁻¹ max ‖∇f‖_∞` on the window.
    pub scaled_gradient: f64,
    pub iterations: Vec<usize>,
}

/// Screened Poisson solves for every entry of `B_T`, zero Dirichlet data on the region
/// boundary or periodic on the cell.
pub fn solve_flux_corrector(flux: &FluxTensor, opts: &SolveOptions) -> Result<FluxCorrector> {
    let t = flux.t;
    let grid = match flux.grid.bc() {
        Boundary::Periodic => flux.grid.clone(),
        _ => flux.grid.with_bc(Boundary::DirichletZero),
    };
    let d = grid.d();
    let laplace = CoefficientTensorField::constant(TensorValue::identity(d, 1)).with_certificate(Ellipticity {
        mu: 1.0,
        mu_inv_check: 1.0,
    });
    let op = DiscreteOperator::assemble(&laplace, &grid, 1.0 / (t * t))?;
    let solved = (0..flux.entry_count())
        .into_par_iter()
        .map(|e| {
            let b = flux.entry(e);
            let mean = flux.mean.entries()[e];
            let rhs: Vec<f64> = b.values().iter().map(|v| v - mean).collect();
            let rhs = GridFunction::from_values(&grid, 1, rhs)?;
            solve(&op, &rhs, opts)
        })
        .collect::<Result<Vec<_>>>()?;
    let window = if grid.bc() == Boundary::Periodic {
        grid.window()
    } else {
        flux.window.clone()
    };
    let mut sup: f64 = 0.0;
    let mut grad: f64 = 0.0;
    let mut iterations = Vec::new();
    let mut entries = Vec::new();
    for s in solved {
        sup = sup.max(on_window(&s.u, &window)?.norm(NormKind::Linf));
        for g in s.u.gradient() {
            grad = grad.max(on_window(&g, &window)?.norm(NormKind::Linf));
        }
        iterations.push(s.iterations);
        entries.push(s.u);
    }
    Ok(FluxCorrector {
        t,
        entries,
        scaled_sup: sup / (t * t),
        scaled_gradient: grad / t,
        iterations,
    })
}
