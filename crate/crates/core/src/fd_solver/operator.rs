use rayon::prelude::*;

use super::function::GridFunction;
use super::grid::{Boundary, BoxGrid};
use super::reduce::par_sum;
use crate::error::{invalid, Error, Result};
use crate::tensor_field::{CoefficientTensorField, TensorValue};

/// Discrete vector field in flux form: one `m`-vector per axis-`i` face (stored at the face's
/// lower node) and, in two dimensions, one `m`-vector per axis per cell (stored at the cell's
/// lower-left node).
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteFlux {
    grid: BoxGrid,
    m: usize,
    face: Vec<Vec<f64>>,
    cell: Option<Vec<f64>>,
}

impl DiscreteFlux {
    pub fn zeros(grid: &BoxGrid, m: usize, with_cells: bool) -> Self {
        let n = grid.node_count();
        Self {
            grid: grid.clone(),
            m,
            face: (0..grid.d()).map(|_| vec![0.0; n * m]).collect(),
            cell: with_cells.then(|| vec![0.0; n * grid.d() * m]),
        }
    }

    /// Face data `g_i(x)` sampled at face centres; no cell part.
    pub fn from_face_fn(grid: &BoxGrid, m: usize, g: impl Fn(usize, &[f64], &mut [f64]) + Sync) -> Self {
        let d = grid.d();
        let mut out = Self::zeros(grid, m, false);
        for (a, face) in out.face.iter_mut().enumerate() {
            let h = grid.h(a);
            face.par_chunks_mut(m).enumerate().for_each_init(
                || vec![0.0; d],
                |x, (idx, o)| {
                    grid.position(idx, x);
                    x[a] += h / 2.0;
                    g(a, x, o);
                },
            );
        }
        out
    }

    pub fn grid(&self) -> &BoxGrid {
        &self.grid
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// Face values along `axis`, `m` per node.
    pub fn face(&self, axis: usize) -> &[f64] {
        &self.face[axis]
    }

    /// Cell values, `d · m` per node.
    pub fn cell(&self) -> Option<&[f64]> {
        self.cell.as_deref()
    }
}

/// `D_i^c u` on the cell with lower-left node `idx`, written into `out` (length `m`).
#[inline]
fn cell_difference(grid: &BoxGrid, u: &[f64], m: usize, idx: usize, k: &[usize], axis: usize, out: &mut [f64]) -> bool {
    let other = 1 - axis;
    let (Some(ki), Some(kj)) = (grid.shift(k[axis], axis, 1), grid.shift(k[other], other, 1)) else {
        return false;
    };
    let si = grid.stride(axis);
    let sj = grid.stride(other);
    let p = idx;
    let pi = idx + ki * si - k[axis] * si;
    let pj = idx + kj * sj - k[other] * sj;
    let pij = pi + kj * sj - k[other] * sj;
    let inv = 1.0 / (2.0 * grid.h(axis));
    for c in 0..m {
        out[c] = ((u[pi * m + c] - u[p * m + c]) + (u[pij * m + c] - u[pj * m + c])) * inv;
    }
    true
}

/// Discrete `div g` at every node, the negative adjoint of the face and cell differences:
/// `Σ_x v(x) (div g)(x) h^d = −Σ_faces h^d D v · g_face − Σ_cells h^d D^c v · g_cell` whenever
/// `v` vanishes on the boundary (always, on periodic grids).
pub fn divergence(g: &DiscreteFlux) -> GridFunction {
    let grid = &g.grid;
    let d = grid.d();
    let m = g.m;
    let mut out = vec![0.0; grid.node_count() * m];
    out.par_chunks_mut(m).enumerate().for_each_init(
        || vec![0usize; d],
        |k, (idx, o)| {
            grid.multi_index(idx, k);
            for a in 0..d {
                let h = grid.h(a);
                let s = grid.stride(a);
                if grid.shift(k[a], a, 1).is_some() {
                    for c in 0..m {
                        o[c] += g.face[a][idx * m + c] / h;
                    }
                }
                if let Some(b) = grid.shift(k[a], a, -1) {
                    let j = idx + b * s - k[a] * s;
                    for c in 0..m {
                        o[c] -= g.face[a][j * m + c] / h;
                    }
                }
            }
            let Some(cell) = &g.cell else { return };
            // Cells containing this node: lower-left corners at offsets (0|-1, 0|-1).
            for ox in [0i64, -1] {
                for oy in [0i64, -1] {
                    let (Some(cx), Some(cy)) = (grid.shift(k[0], 0, ox), grid.shift(k[1], 1, oy)) else {
                        continue;
                    };
                    // The cell must actually contain the node.
                    if grid.shift(cx, 0, 1).is_none() || grid.shift(cy, 1, 1).is_none() {
                        continue;
                    }
                    let c_idx = cx + cy * grid.stride(1);
                    let signs = [if ox == 0 { -1.0 } else { 1.0 }, if oy == 0 { -1.0 } else { 1.0 }];
                    for a in 0..2 {
                        let f = signs[a] / (2.0 * grid.h(a));
                        for c in 0..m {
                            o[c] -= f * cell[(c_idx * 2 + a) * m + c];
                        }
                    }
                }
            }
        },
    );
    GridFunction::from_values(grid, m, out).expect("divergence of finite data is finite")
}

/// Conservative second-order discretisation of `−div(A ∇u) + κ u`.
///
/// The form is `Σ_faces h^d D_i v · a_ii D_i u + Σ_cells h^d Σ_{i≠j} D_i^c v · a_ij D_j^c u
/// + κ Σ h^d v u`, with diagonal blocks sampled at face centres and off-diagonal blocks at
/// cell centres. The transpose of the operator of `A` is the operator of `A*`.
#[derive(Clone, Debug)]
pub struct DiscreteOperator {
    grid: BoxGrid,
    m: usize,
    kappa: f64,
    symmetric: bool,
    mu: f64,
    pub(super) face: Vec<Vec<f64>>,
    cell: Option<Vec<f64>>,
    diag: Vec<f64>,
}

impl DiscreteOperator {
    /// Samples the field on faces and cells of `grid`. Needs an ellipticity certificate.
    pub fn assemble(field: &CoefficientTensorField, grid: &BoxGrid, kappa: f64) -> Result<Self> {
        let cert = field.certificate().ok_or(Error::MissingCertificate)?;
        let d = grid.d();
        if d > 2 {
            return Err(Error::Unsupported(format!("finite differences in dimension {d}")));
        }
        if field.d() != d {
            return invalid(format!("field has d = {}, grid has d = {d}", field.d()));
        }
        if !(kappa >= 0.0) || !kappa.is_finite() {
            return invalid("kappa must be finite and nonnegative");
        }
        if grid.bc() == Boundary::Free {
            return invalid("operators need a Dirichlet or periodic grid");
        }
        let m = field.m();
        let mm = m * m;
        let n = grid.node_count();
        let face: Vec<Vec<f64>> = (0..d)
            .map(|a| {
                let h = grid.h(a);
                let mut blk = vec![0.0; n * mm];
                blk.par_chunks_mut(mm).enumerate().for_each_init(
                    || (vec![0.0; d], TensorValue::zeros(d, m)),
                    |(x, t), (idx, o)| {
                        grid.position(idx, x);
                        x[a] += h / 2.0;
                        field.evaluate_into(x, t);
                        for al in 0..m {
                            for be in 0..m {
                                o[al * m + be] = t.get(a, a, al, be);
                            }
                        }
                    },
                );
                blk
            })
            .collect();
        let cell = (d == 2).then(|| {
            let (h0, h1) = (grid.h(0), grid.h(1));
            let mut blk = vec![0.0; n * 2 * mm];
            blk.par_chunks_mut(2 * mm).enumerate().for_each_init(
                || (vec![0.0; d], TensorValue::zeros(d, m)),
                |(x, t), (idx, o)| {
                    grid.position(idx, x);
                    x[0] += h0 / 2.0;
                    x[1] += h1 / 2.0;
                    field.evaluate_into(x, t);
                    for al in 0..m {
                        for be in 0..m {
                            o[al * m + be] = t.get(0, 1, al, be);
                            o[mm + al * m + be] = t.get(1, 0, al, be);
                        }
                    }
                },
            );
            blk
        });
        let mut op = Self {
            grid: grid.clone(),
            m,
            kappa,
            symmetric: field.is_symmetric(),
            mu: cert.two_sided(),
            face,
            cell,
            diag: Vec::new(),
        };
        op.diag = op.compute_diagonal();
        Ok(op)
    }

    pub fn grid(&self) -> &BoxGrid {
        &self.grid
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    /// Ellipticity constant of the sampled field.
    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub(crate) fn diagonal(&self) -> &[f64] {
        &self.diag
    }

    fn compute_diagonal(&self) -> Vec<f64> {
        let g = &self.grid;
        let (d, m, mm) = (g.d(), self.m, self.m * self.m);
        let mut diag = vec![0.0; g.node_count() * m];
        diag.par_chunks_mut(m).enumerate().for_each_init(
            || vec![0usize; d],
            |k, (idx, o)| {
                g.multi_index(idx, k);
                if g.is_boundary(idx) {
                    o.iter_mut().for_each(|v| *v = 1.0);
                    return;
                }
                for (c, oc) in o.iter_mut().enumerate() {
                    let mut s = self.kappa;
                    for a in 0..d {
                        let h2 = g.h(a) * g.h(a);
                        let st = g.stride(a);
                        s += self.face[a][idx * mm + c * m + c] / h2;
                        let b = g.shift(k[a], a, -1).expect("interior node");
                        let j = idx + b * st - k[a] * st;
                        s += self.face[a][j * mm + c * m + c] / h2;
                    }
                    if let Some(cell) = &self.cell {
                        let f = 1.0 / (4.0 * g.h(0) * g.h(1));
                        for ox in [0i64, -1] {
                            for oy in [0i64, -1] {
                                let cx = g.shift(k[0], 0, ox).expect("interior node");
                                let cy = g.shift(k[1], 1, oy).expect("interior node");
                                let ci = cx + cy * g.stride(1);
                                let sign = if ox == oy { 1.0 } else { -1.0 };
                                s += sign * f * (cell[ci * 2 * mm + c * m + c] + cell[ci * 2 * mm + mm + c * m + c]);
                            }
                        }
                    }
                    *oc = s;
                }
            },
        );
        diag
    }

    /// `A ∇_h u` in flux form.
    pub fn flux(&self, u: &[f64]) -> DiscreteFlux {
        let g = &self.grid;
        let (d, m, mm) = (g.d(), self.m, self.m * self.m);
        let mut out = DiscreteFlux::zeros(g, m, self.cell.is_some());
        for a in 0..d {
            let h = g.h(a);
            let st = g.stride(a);
            let coef = &self.face[a];
            out.face[a].par_chunks_mut(m).enumerate().for_each_init(
                || vec![0usize; d],
                |k, (idx, o)| {
                    g.multi_index(idx, k);
                    let Some(nx) = g.shift(k[a], a, 1) else { return };
                    let j = idx + nx * st - k[a] * st;
                    for al in 0..m {
                        let mut s = 0.0;
                        for be in 0..m {
                            s += coef[idx * mm + al * m + be] * (u[j * m + be] - u[idx * m + be]);
                        }
                        o[al] = s / h;
                    }
                },
            );
        }
        if let (Some(coef), Some(cell_out)) = (&self.cell, out.cell.as_mut()) {
            cell_out.par_chunks_mut(2 * m).enumerate().for_each_init(
                || (vec![0usize; d], vec![0.0; m], vec![0.0; m]),
                |(k, d0, d1), (idx, o)| {
                    g.multi_index(idx, k);
                    if !cell_difference(g, u, m, idx, k, 0, d0) {
                        return;
                    }
                    cell_difference(g, u, m, idx, k, 1, d1);
                    for al in 0..m {
                        let (mut s0, mut s1) = (0.0, 0.0);
                        for be in 0..m {
                            s0 += coef[idx * 2 * mm + al * m + be] * d1[be];
                            s1 += coef[idx * 2 * mm + mm + al * m + be] * d0[be];
                        }
                        o[al] = s0;
                        o[m + al] = s1;
                    }
                },
            );
        }
        out
    }

    /// Flux of `P_j^β(y) = y_j e_β`: face part `a_ii^{·β} δ_ij`, cell part `a_ij^{·β}`, `i ≠ j`.
    pub fn affine_flux(&self, j: usize, beta: usize) -> DiscreteFlux {
        let g = &self.grid;
        let (d, m, mm) = (g.d(), self.m, self.m * self.m);
        let mut out = DiscreteFlux::zeros(g, m, self.cell.is_some());
        let coef = &self.face[j];
        out.face[j].par_chunks_mut(m).enumerate().for_each_init(
            || vec![0usize; d],
            |k, (idx, o)| {
                g.multi_index(idx, k);
                if g.shift(k[j], j, 1).is_some() {
                    for al in 0..m {
                        o[al] = coef[idx * mm + al * m + beta];
                    }
                }
            },
        );
        if let (Some(coef), Some(cell_out)) = (&self.cell, out.cell.as_mut()) {
            let i = 1 - j;
            // Block (0,1) is stored first, so a_ij sits at offset 0 when i = 0.
            let off = if i == 0 { 0 } else { mm };
            cell_out.par_chunks_mut(2 * m).enumerate().for_each_init(
                || vec![0usize; d],
                |k, (idx, o)| {
                    g.multi_index(idx, k);
                    if g.shift(k[0], 0, 1).is_some() && g.shift(k[1], 1, 1).is_some() {
                        for al in 0..m {
                            o[i * m + al] = coef[idx * 2 * mm + off + al * m + beta];
                        }
                    }
                },
            );
        }
        out
    }

    /// `div(A ∇P_j^β)` with boundary rows cleared.
    pub fn corrector_rhs(&self, j: usize, beta: usize) -> GridFunction {
        let mut r = divergence(&self.affine_flux(j, beta));
        self.clear_boundary(r.values_mut());
        r
    }

    /// `div g` with boundary rows cleared, for right-hand sides.
    pub fn divergence_rhs(&self, g: &DiscreteFlux) -> Result<GridFunction> {
        if g.grid != self.grid || g.m != self.m {
            return invalid("flux lives on a different grid");
        }
        let mut r = divergence(g);
        self.clear_boundary(r.values_mut());
        Ok(r)
    }

    pub(crate) fn clear_boundary(&self, v: &mut [f64]) {
        if self.grid.bc() == Boundary::Periodic {
            return;
        }
        let m = self.m;
        v.par_chunks_mut(m).enumerate().for_each(|(idx, o)| {
            if self.grid.is_boundary(idx) {
                o.iter_mut().for_each(|x| *x = 0.0);
            }
        });
    }

    /// `L u`; reads boundary values of `u`, writes zero on boundary rows.
    pub fn apply_slice(&self, u: &[f64], out: &mut [f64]) {
        let div = divergence(&self.flux(u));
        out.par_iter_mut()
            .zip(div.values())
            .zip(u)
            .for_each(|((o, dv), uv)| *o = self.kappa * uv - dv);
        self.clear_boundary(out);
    }

    pub fn apply(&self, u: &GridFunction) -> Result<GridFunction> {
        if u.grid() != &self.grid || u.m() != self.m {
            return invalid("grid function lives on a different grid");
        }
        let mut out = vec![0.0; u.values().len()];
        self.apply_slice(u.values(), &mut out);
        GridFunction::from_values(&self.grid, self.m, out)
    }

    /// `Σ_x h^d u(x)·v(x)`.
    pub fn inner(&self, u: &[f64], v: &[f64]) -> f64 {
        self.grid.cell_volume() * super::reduce::dot(u, v)
    }

    /// `Σ_faces h^d |D_i u|²`, the discrete Dirichlet energy used for coercivity.
    pub fn gradient_energy(&self, u: &[f64]) -> f64 {
        let g = &self.grid;
        let (d, m) = (g.d(), self.m);
        let vol = g.cell_volume();
        par_sum(g.node_count(), |range| {
            let mut k = vec![0usize; d];
            let mut s = 0.0;
            for idx in range {
                g.multi_index(idx, &mut k);
                for a in 0..d {
                    let Some(nx) = g.shift(k[a], a, 1) else { continue };
                    let j = idx + nx * g.stride(a) - k[a] * g.stride(a);
                    for c in 0..m {
                        let du = (u[j * m + c] - u[idx * m + c]) / g.h(a);
                        s += du * du;
                    }
                }
            }
            s * vol
        })
    }
}
