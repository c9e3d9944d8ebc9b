use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::function::GridFunction;
use super::grid::Boundary;
use super::operator::DiscreteOperator;
use super::reduce::{dot, norm2};
use crate::error::{invalid, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMethod {
    /// Tridiagonal elimination, scalar one-dimensional problems.
    Direct,
    /// Jacobi-preconditioned conjugate gradients.
    Cg,
    /// Jacobi-preconditioned BiCGStab for nonsymmetric coefficients.
    BiCgStab,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    /// Stop when `‖b − Lu‖ ≤ rel_tol ‖b‖`.
    pub rel_tol: f64,
    pub max_iter: usize,
    /// Allow the direct path when it applies.
    pub direct: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            max_iter: 50_000,
            direct: true,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Solution {
    pub u: GridFunction,
    pub iterations: usize,
    /// Final relative residual.
    pub residual: f64,
    pub method: SolveMethod,
}

/// Solves `L u = rhs` with zero Dirichlet data, or on the torus.
///
/// On periodic grids the constant mode is split off: `mean(u) = mean(rhs)/κ`, and for `κ = 0`
/// the mean of `rhs` is discarded and `u` is returned with zero mean.
pub fn solve(op: &DiscreteOperator, rhs: &GridFunction, opts: &SolveOptions) -> Result<Solution> {
    solve_inner(op, rhs, None, opts)
}

/// Solves `L u = rhs` in the interior with `u = boundary` on the boundary nodes.
pub fn solve_with_boundary(
    op: &DiscreteOperator,
    rhs: &GridFunction,
    boundary: &GridFunction,
    opts: &SolveOptions,
) -> Result<Solution> {
    if op.grid().bc() != Boundary::DirichletZero {
        return invalid("boundary data needs a Dirichlet grid");
    }
    if boundary.grid() != op.grid() || boundary.m() != op.m() {
        return invalid("boundary data lives on a different grid");
    }
    solve_inner(op, rhs, Some(boundary), opts)
}

fn component_means(v: &[f64], m: usize) -> Vec<f64> {
    let n = (v.len() / m) as f64;
    (0..m)
        .map(|c| v.iter().skip(c).step_by(m).sum::<f64>() / n)
        .collect()
}

fn project_mean_zero(v: &mut [f64], m: usize) {
    let means = component_means(v, m);
    v.par_chunks_mut(m)
        .for_each(|o| o.iter_mut().zip(&means).for_each(|(x, mu)| *x -= mu));
}

fn solve_inner(
    op: &DiscreteOperator,
    rhs: &GridFunction,
    boundary: Option<&GridFunction>,
    opts: &SolveOptions,
) -> Result<Solution> {
    if rhs.grid() != op.grid() || rhs.m() != op.m() {
        return invalid("right-hand side lives on a different grid");
    }
    if !(opts.rel_tol > 0.0) {
        return invalid("rel_tol must be positive");
    }
    let grid = op.grid();
    let m = op.m();
    let n = rhs.values().len();
    let periodic = grid.bc() == Boundary::Periodic;

    // Reduced right-hand side b and offset u0 with u = u0 + w, L w = b.
    let mut b = rhs.values().to_vec();
    op.clear_boundary(&mut b);
    let mut u0 = vec![0.0; n];
    if periodic {
        let means = component_means(&b, m);
        project_mean_zero(&mut b, m);
        if op.kappa() > 0.0 {
            u0.par_chunks_mut(m)
                .for_each(|o| o.iter_mut().zip(&means).for_each(|(x, mu)| *x = mu / op.kappa()));
        }
    } else if let Some(g) = boundary {
        u0.par_chunks_mut(m).enumerate().for_each(|(idx, o)| {
            if grid.is_boundary(idx) {
                o.copy_from_slice(&g.values()[idx * m..(idx + 1) * m]);
            }
        });
        let mut lg = vec![0.0; n];
        op.apply_slice(&u0, &mut lg);
        b.par_iter_mut().zip(&lg).for_each(|(x, y)| *x -= y);
    }

    let bnorm = norm2(&b);
    let (mut w, iterations, method) = if bnorm == 0.0 {
        (vec![0.0; n], 0, SolveMethod::Cg)
    } else if opts.direct && grid.d() == 1 && m == 1 {
        let w = direct_1d(op, &b, periodic, opts.rel_tol)?;
        (w, 1, SolveMethod::Direct)
    } else if op.is_symmetric() {
        let (w, it) = pcg(op, &b, periodic, opts)?;
        (w, it, SolveMethod::Cg)
    } else {
        let (w, it) = bicgstab(op, &b, periodic, opts)?;
        (w, it, SolveMethod::BiCgStab)
    };
    if periodic {
        // Σ L w = κ Σ w and Σ b = 0, so the exact w has zero mean.
        project_mean_zero(&mut w, m);
    }
    let residual = if bnorm == 0.0 {
        0.0
    } else {
        let mut lw = vec![0.0; n];
        op.apply_slice(&w, &mut lw);
        let diff: Vec<f64> = b.iter().zip(&lw).map(|(x, y)| x - y).collect();
        norm2(&diff) / bnorm
    };
    let u: Vec<f64> = u0.iter().zip(&w).map(|(a, b)| a + b).collect();
    Ok(Solution {
        u: GridFunction::from_values(grid, m, u)?,
        iterations,
        residual,
        method,
    })
}

fn precondition(op: &DiscreteOperator, r: &[f64], z: &mut [f64], periodic: bool) {
    z.par_iter_mut()
        .zip(r)
        .zip(op.diagonal())
        .for_each(|((z, r), d)| *z = r / d);
    if periodic {
        project_mean_zero(z, op.m());
    }
}

fn pcg(op: &DiscreteOperator, b: &[f64], periodic: bool, opts: &SolveOptions) -> Result<(Vec<f64>, usize)> {
    let n = b.len();
    let target = opts.rel_tol * norm2(b);
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut z = vec![0.0; n];
    let mut ap = vec![0.0; n];
    precondition(op, &r, &mut z, periodic);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    for it in 1..=opts.max_iter {
        op.apply_slice(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::NonConverged {
                iterations: it,
                residual: norm2(&r) / norm2(b),
            });
        }
        let alpha = rz / pap;
        x.par_iter_mut().zip(&p).for_each(|(x, p)| *x += alpha * p);
        r.par_iter_mut().zip(&ap).for_each(|(r, a)| *r -= alpha * a);
        if norm2(&r) <= target {
            return Ok((x, it));
        }
        precondition(op, &r, &mut z, periodic);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        p.par_iter_mut().zip(&z).for_each(|(p, z)| *p = z + beta * *p);
    }
    Err(Error::NonConverged {
        iterations: opts.max_iter,
        residual: norm2(&r) / norm2(b),
    })
}

fn bicgstab(op: &DiscreteOperator, b: &[f64], periodic: bool, opts: &SolveOptions) -> Result<(Vec<f64>, usize)> {
    let n = b.len();
    let bnorm = norm2(b);
    let target = opts.rel_tol * bnorm;
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let r_hat = b.to_vec();
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut t = vec![0.0; n];
    for it in 1..=opts.max_iter {
        let rho_new = dot(&r_hat, &r);
        if rho_new == 0.0 || omega == 0.0 {
            break;
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        p.par_iter_mut()
            .zip(&r)
            .zip(&v)
            .for_each(|((p, r), v)| *p = r + beta * (*p - omega * v));
        precondition(op, &p, &mut y, periodic);
        op.apply_slice(&y, &mut v);
        alpha = rho / dot(&r_hat, &v);
        s.par_iter_mut()
            .zip(&r)
            .zip(&v)
            .for_each(|((s, r), v)| *s = r - alpha * v);
        x.par_iter_mut().zip(&y).for_each(|(x, y)| *x += alpha * y);
        if norm2(&s) <= target {
            return Ok((x, it));
        }
        precondition(op, &s, &mut z, periodic);
        op.apply_slice(&z, &mut t);
        let tt = dot(&t, &t);
        omega = if tt > 0.0 { dot(&t, &s) / tt } else { 0.0 };
        x.par_iter_mut().zip(&z).for_each(|(x, z)| *x += omega * z);
        r.par_iter_mut()
            .zip(&s)
            .zip(&t)
            .for_each(|((r, s), t)| *r = s - omega * t);
        if norm2(&r) <= target {
            return Ok((x, it));
        }
    }
    Err(Error::NonConverged {
        iterations: opts.max_iter,
        residual: norm2(&r) / bnorm,
    })
}

/// Thomas algorithm; `a` sub-, `b` main, `c` super-diagonal.
fn thomas(a: &[f64], b: &[f64], c: &[f64], r: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut cp = vec![0.0; n];
    let mut x = vec![0.0; n];
    let mut beta = b[0];
    x[0] = r[0] / beta;
    for i in 1..n {
        cp[i - 1] = c[i - 1] / beta;
        beta = b[i] - a[i] * cp[i - 1];
        x[i] = (r[i] - a[i] * x[i - 1]) / beta;
    }
    for i in (0..n - 1).rev() {
        x[i] -= cp[i] * x[i + 1];
    }
    x
}

/// Cyclic tridiagonal solve via Sherman–Morrison; `a[0]` couples to the last unknown and
/// `c[n-1]` to the first.
fn cyclic_thomas(a: &[f64], b: &[f64], c: &[f64], r: &[f64]) -> Vec<f64> {
    let n = b.len();
    let (alpha, beta) = (c[n - 1], a[0]);
    let gamma = -b[0];
    let mut bb = b.to_vec();
    bb[0] -= gamma;
    bb[n - 1] -= alpha * beta / gamma;
    let x = thomas(a, &bb, c, r);
    let mut u = vec![0.0; n];
    u[0] = gamma;
    u[n - 1] = alpha;
    let z = thomas(a, &bb, c, &u);
    let fact = (x[0] + beta * x[n - 1] / gamma) / (1.0 + z[0] + beta * z[n - 1] / gamma);
    x.iter().zip(&z).map(|(x, z)| x - fact * z).collect()
}

fn direct_1d(op: &DiscreteOperator, b: &[f64], periodic: bool, rel_tol: f64) -> Result<Vec<f64>> {
    let grid = op.grid();
    let h2 = grid.h(0) * grid.h(0);
    let face = &op.face[0];
    let kappa = op.kappa();
    let nodes = grid.node_count();
    // Row k: -f_{k-1} u_{k-1} + (f_{k-1} + f_k + κ h²) u_k - f_k u_{k+1}, all over h².
    let row = |k: usize| {
        let prev = face[(k + nodes - 1) % nodes];
        let next = face[k];
        (-prev / h2, (prev + next) / h2 + kappa, -next / h2)
    };
    let core = |rhs: &[f64]| -> Vec<f64> {
        if !periodic {
            let inner: Vec<usize> = (1..nodes - 1).collect();
            let (mut a, mut bd, mut c) = (vec![0.0; inner.len()], vec![0.0; inner.len()], vec![0.0; inner.len()]);
            for (i, &k) in inner.iter().enumerate() {
                (a[i], bd[i], c[i]) = row(k);
            }
            let r: Vec<f64> = inner.iter().map(|&k| rhs[k]).collect();
            let x = thomas(&a, &bd, &c, &r);
            let mut out = vec![0.0; nodes];
            out[1..nodes - 1].copy_from_slice(&x);
            out
        } else if kappa > 0.0 {
            let (mut a, mut bd, mut c) = (vec![0.0; nodes], vec![0.0; nodes], vec![0.0; nodes]);
            for k in 0..nodes {
                (a[k], bd[k], c[k]) = row(k);
            }
            cyclic_thomas(&a, &bd, &c, rhs)
        } else {
            // Pin node 0; rows 1..n-1 form a nonsingular tridiagonal system.
            let len = nodes - 1;
            let (mut a, mut bd, mut c) = (vec![0.0; len], vec![0.0; len], vec![0.0; len]);
            for i in 0..len {
                (a[i], bd[i], c[i]) = row(i + 1);
            }
            let x = thomas(&a, &bd, &c, &rhs[1..]);
            let mut out = vec![0.0; nodes];
            out[1..].copy_from_slice(&x);
            project_mean_zero(&mut out, 1);
            out
        }
    };
    let bnorm = norm2(b);
    let mut x = core(b);
    let mut lx = vec![0.0; nodes];
    for _ in 0..3 {
        op.apply_slice(&x, &mut lx);
        let mut res: Vec<f64> = b.iter().zip(&lx).map(|(b, l)| b - l).collect();
        if periodic {
            project_mean_zero(&mut res, 1);
        }
        if norm2(&res) <= rel_tol * bnorm {
            break;
        }
        let dx = core(&res);
        x.iter_mut().zip(&dx).for_each(|(x, d)| *x += d);
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonConverged {
            iterations: 1,
            residual: f64::INFINITY,
        });
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fd_solver::grid::BoxGrid;
    use crate::fd_solver::NormKind;
    use crate::tensor_field::{CoefficientTensorField, FieldKind, TensorValue, TrigTerm};
    use std::f64::consts::{PI, TAU};

    fn scalar_field(d: usize) -> CoefficientTensorField {
        let freq = vec![1.0; d];
        CoefficientTensorField::scalar_trig(d, 2.0, &[(freq, 0.5, 0.0)])
            .unwrap()
            .certified(256, 0)
            .unwrap()
    }

    #[test]
    fn thomas_and_cyclic_solve_small_systems() {
        let a = [0.0, -1.0, -1.0, -1.0];
        let b = [4.0, 4.0, 4.0, 4.0];
        let c = [-1.0, -1.0, -1.0, 0.0];
        let x = thomas(&a, &b, &c, &[3.0, 2.0, 2.0, 3.0]);
        for v in x {
            assert!((v - 1.0).abs() < 1e-14);
        }
        let a = [-1.0; 4];
        let c = [-1.0; 4];
        let x = cyclic_thomas(&a, &b, &c, &[2.0; 4]);
        for v in x {
            assert!((v - 1.0).abs() < 1e-14);
        }
    }

    /// `-(a u')' = f` with `a = 2 + cos 2πx`, `u = sin πx` on `[0,1]`.
    fn manufactured_1d(n: usize, direct: bool) -> f64 {
        let f = CoefficientTensorField::scalar_trig(1, 2.0, &[(vec![1.0], 1.0, 0.0)])
            .unwrap()
            .certified(64, 0)
            .unwrap();
        let g = BoxGrid::cube(1, 1.0, n, Boundary::DirichletZero).unwrap();
        let op = DiscreteOperator::assemble(&f, &g, 0.0).unwrap();
        let rhs = GridFunction::scalar(&g, |x| {
            let x = x[0];
            let a = 2.0 + (TAU * x).cos();
            let da = -TAU * (TAU * x).sin();
            -(da * PI * (PI * x).cos() - a * PI * PI * (PI * x).sin())
        });
        let opts = SolveOptions {
            direct,
            rel_tol: 1e-13,
            ..Default::default()
        };
        let sol = solve(&op, &rhs, &opts).unwrap();
        let exact = GridFunction::scalar(&g, |x| (PI * x[0]).sin());
        sol.u.sub(&exact).unwrap().norm(NormKind::Linf)
    }

    #[test]
    fn second_order_in_one_dimension() {
        let e1 = manufactured_1d(32, true);
        let e2 = manufactured_1d(64, true);
        let rate = (e1 / e2).log2();
        assert!((rate - 2.0).abs() < 0.1, "rate {rate}");
        assert!((manufactured_1d(64, false) - e2).abs() < 1e-9);
    }

    #[test]
    fn second_order_in_two_dimensions_with_cross_terms() {
        // u = sin πx sin πy, A = [[2, 0.5],[0.5, 1]] constant: f = π²(3 sin sin − cos cos)
        let mut t = TensorValue::zeros(2, 1);
        t.set(0, 0, 0, 0, 2.0);
        t.set(1, 1, 0, 0, 1.0);
        t.set(0, 1, 0, 0, 0.5);
        t.set(1, 0, 0, 0, 0.5);
        let f = CoefficientTensorField::constant(t).certified(1, 0).unwrap();
        let err = |n: usize| {
            let g = BoxGrid::cube(2, 1.0, n, Boundary::DirichletZero).unwrap();
            let op = DiscreteOperator::assemble(&f, &g, 0.0).unwrap();
            let rhs = GridFunction::scalar(&g, |x| {
                let (sx, sy) = ((PI * x[0]).sin(), (PI * x[1]).sin());
                let (cx, cy) = ((PI * x[0]).cos(), (PI * x[1]).cos());
                PI * PI * (3.0 * sx * sy - cx * cy)
            });
            let sol = solve(&op, &rhs, &SolveOptions::default()).unwrap();
            assert_eq!(sol.method, SolveMethod::Cg);
            let exact = GridFunction::scalar(&g, |x| (PI * x[0]).sin() * (PI * x[1]).sin());
            sol.u.sub(&exact).unwrap().norm(NormKind::Linf)
        };
        let rate = (err(16) / err(32)).log2();
        assert!((rate - 2.0).abs() < 0.2, "rate {rate}");
    }

    #[test]
    fn periodic_zero_kappa_returns_mean_zero() {
        for d in [1, 2] {
            let g = BoxGrid::cube(d, 1.0, 16, Boundary::Periodic).unwrap();
            let op = DiscreteOperator::assemble(&scalar_field(d), &g, 0.0).unwrap();
            let rhs = GridFunction::scalar(&g, |x| 1.0 + (TAU * x[0]).sin());
            let sol = solve(&op, &rhs, &SolveOptions::default()).unwrap();
            assert!(sol.u.mean()[0].abs() < 1e-12);
            assert!(sol.residual < 1e-9);
        }
    }

    #[test]
    fn periodic_kappa_recovers_mean() {
        let g = BoxGrid::cube(2, 1.0, 16, Boundary::Periodic).unwrap();
        let op = DiscreteOperator::assemble(&scalar_field(2), &g, 1e-4).unwrap();
        let rhs = GridFunction::scalar(&g, |x| 3e-4 + (TAU * x[1]).cos());
        let sol = solve(&op, &rhs, &SolveOptions::default()).unwrap();
        assert!((sol.u.mean()[0] - 3.0).abs() < 1e-9);
        let lu = op.apply(&sol.u).unwrap();
        let diff = lu.sub(&rhs).unwrap().norm(NormKind::Linf);
        assert!(diff < 1e-8, "{diff}");
    }

    #[test]
    fn boundary_lifting_reproduces_affine_data() {
        let g = BoxGrid::cube(2, 1.0, 12, Boundary::DirichletZero).unwrap();
        let c = CoefficientTensorField::constant(TensorValue::identity(2, 1)).certified(1, 0).unwrap();
        let op = DiscreteOperator::assemble(&c, &g, 0.0).unwrap();
        let affine = GridFunction::scalar(&g, |x| 1.0 + 2.0 * x[0] - x[1]);
        let sol = solve_with_boundary(&op, &GridFunction::zeros(&g, 1), &affine, &SolveOptions::default()).unwrap();
        assert!(sol.u.sub(&affine).unwrap().norm(NormKind::Linf) < 1e-9);
    }

    #[test]
    fn maximum_principle_for_nonnegative_data() {
        let g = BoxGrid::cube(2, 1.0, 16, Boundary::DirichletZero).unwrap();
        let op = DiscreteOperator::assemble(&scalar_field(2), &g, 0.0).unwrap();
        let rhs = GridFunction::scalar(&g, |_| 1.0);
        let sol = solve(&op, &rhs, &SolveOptions::default()).unwrap();
        assert!(sol.u.values().iter().all(|&v| v >= -1e-12));
    }

    #[test]
    fn nonsymmetric_field_uses_bicgstab() {
        let mut c0 = TensorValue::identity(2, 1);
        c0.scale(2.0);
        c0.set(0, 1, 0, 0, 0.4);
        c0.set(1, 0, 0, 0, -0.4);
        let mut c1 = TensorValue::zeros(2, 1);
        c1.set(0, 0, 0, 0, 0.5);
        let field = CoefficientTensorField::new(FieldKind::TrigPolynomial(vec![
            TrigTerm {
                freq: vec![0.0, 0.0],
                cos: c0,
                sin: TensorValue::zeros(2, 1),
            },
            TrigTerm {
                freq: vec![1.0, 1.0],
                cos: c1.clone(),
                sin: c1,
            },
        ]))
        .unwrap()
        .certified(256, 2)
        .unwrap();
        let g = BoxGrid::cube(2, 1.0, 16, Boundary::DirichletZero).unwrap();
        let op = DiscreteOperator::assemble(&field, &g, 0.0).unwrap();
        let rhs = GridFunction::scalar(&g, |x| (TAU * x[0]).sin());
        let sol = solve(&op, &rhs, &SolveOptions::default()).unwrap();
        assert_eq!(sol.method, SolveMethod::BiCgStab);
        assert!(sol.residual < 1e-9);
    }

    #[test]
    fn solves_are_bitwise_deterministic() {
        let g = BoxGrid::cube(2, 1.0, 24, Boundary::Periodic).unwrap();
        let op = DiscreteOperator::assemble(&scalar_field(2), &g, 0.01).unwrap();
        let rhs = GridFunction::scalar(&g, |x| (TAU * x[0]).sin() * (TAU * x[1]).cos());
        let a = solve(&op, &rhs, &SolveOptions::default()).unwrap();
        let b = solve(&op, &rhs, &SolveOptions::default()).unwrap();
        assert_eq!(a.u.values(), b.u.values());
        assert_eq!(a.iterations, b.iterations);
    }
}
