use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};

use super::grid::{Boundary, BoxGrid, Window};
use super::reduce::par_sum;
use crate::error::{invalid, Result};

const MAGIC: &[u8; 4] = b"GRDF";
const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum NormKind {
    L2,
    H1,
    Linf,
}

/// An `m`-component function on the nodes of a `BoxGrid`, component index fastest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridFunction {
    grid: BoxGrid,
    m: usize,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn zeros(grid: &BoxGrid, m: usize) -> Self {
        Self {
            grid: grid.clone(),
            m,
            values: vec![0.0; grid.node_count() * m],
        }
    }

    pub fn from_values(grid: &BoxGrid, m: usize, values: Vec<f64>) -> Result<Self> {
        if m == 0 || values.len() != grid.node_count() * m {
            return invalid(format!(
                "expected {} values for {} nodes and m = {m}",
                grid.node_count() * m,
                grid.node_count()
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return invalid("grid function values must be finite");
        }
        Ok(Self {
            grid: grid.clone(),
            m,
            values,
        })
    }

    /// Samples `f(x, out)` at every node.
    pub fn from_fn(grid: &BoxGrid, m: usize, f: impl Fn(&[f64], &mut [f64]) + Sync) -> Self {
        let d = grid.d();
        let mut values = vec![0.0; grid.node_count() * m];
        values.par_chunks_mut(m).enumerate().for_each_init(
            || vec![0.0; d],
            |x, (idx, out)| {
                grid.position(idx, x);
                f(x, out);
            },
        );
        Self {
            grid: grid.clone(),
            m,
            values,
        }
    }

    /// Scalar function from a closed form.
    pub fn scalar(grid: &BoxGrid, f: impl Fn(&[f64]) -> f64 + Sync) -> Self {
        Self::from_fn(grid, 1, |x, out| out[0] = f(x))
    }

    pub fn grid(&self) -> &BoxGrid {
        &self.grid
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn at(&self, node: usize, comp: usize) -> f64 {
        self.values[node * self.m + comp]
    }

    pub fn component(&self, comp: usize) -> GridFunction {
        GridFunction {
            grid: self.grid.clone(),
            m: 1,
            values: self.values.iter().skip(comp).step_by(self.m).copied().collect(),
        }
    }

    pub fn axpy(&mut self, s: f64, other: &GridFunction) {
        debug_assert_eq!(self.values.len(), other.values.len());
        self.values
            .par_iter_mut()
            .zip(&other.values)
            .for_each(|(a, b)| *a += s * b);
    }

    pub fn scaled(&self, s: f64) -> GridFunction {
        GridFunction {
            values: self.values.iter().map(|v| v * s).collect(),
            ..self.clone()
        }
    }

    pub fn sub(&self, other: &GridFunction) -> Result<GridFunction> {
        if self.grid != other.grid || self.m != other.m {
            return invalid("grid functions live on different grids");
        }
        let mut out = self.clone();
        out.axpy(-1.0, other);
        Ok(out)
    }

    /// Multilinear interpolation at `x`, wrapping on periodic grids and clamping otherwise.
    pub fn interpolate(&self, x: &[f64], out: &mut [f64]) {
        let g = &self.grid;
        let d = g.d();
        let mut base = [0usize; 3];
        let mut frac = [0.0f64; 3];
        for a in 0..d {
            let h = g.h(a);
            let s = (x[a] - g.lo()[a]) / h;
            match g.bc() {
                Boundary::Periodic => {
                    let n = g.cells()[a] as f64;
                    let s = s.rem_euclid(n);
                    let b = s.floor();
                    base[a] = (b as usize) % g.cells()[a];
                    frac[a] = s - b;
                }
                _ => {
                    let n = g.cells()[a];
                    let s = s.clamp(0.0, n as f64);
                    let b = (s.floor() as usize).min(n - 1);
                    base[a] = b;
                    frac[a] = s - b as f64;
                }
            }
        }
        out.iter_mut().for_each(|o| *o = 0.0);
        let mut k = [0usize; 3];
        for corner in 0..(1usize << d) {
            let mut w = 1.0;
            for a in 0..d {
                if corner >> a & 1 == 1 {
                    k[a] = g.shift(base[a], a, 1).unwrap_or(base[a]);
                    w *= frac[a];
                } else {
                    k[a] = base[a];
                    w *= 1.0 - frac[a];
                }
            }
            if w == 0.0 {
                continue;
            }
            let idx = g.linear_index(&k[..d]);
            for (c, o) in out.iter_mut().enumerate() {
                *o += w * self.values[idx * self.m + c];
            }
        }
    }

    /// Copy of the nodes inside `w` on a `Free` grid.
    pub fn restrict(&self, w: &Window) -> Result<GridFunction> {
        if self.grid.bc() == Boundary::Periodic {
            return invalid("restriction needs a non-periodic grid");
        }
        let ranges = self.grid.window_range(w)?;
        let d = self.grid.d();
        let lo: Vec<f64> = (0..d).map(|a| self.grid.coordinate(a, ranges[a].0)).collect();
        let hi: Vec<f64> = (0..d).map(|a| self.grid.coordinate(a, ranges[a].1)).collect();
        let cells: Vec<usize> = ranges.iter().map(|(f, l)| l - f).collect();
        let sub = BoxGrid::new(lo, hi, cells, Boundary::Free)?;
        let mut values = Vec::with_capacity(sub.node_count() * self.m);
        let mut k = vec![0usize; d];
        let mut src = vec![0usize; d];
        for idx in 0..sub.node_count() {
            sub.multi_index(idx, &mut k);
            for a in 0..d {
                src[a] = k[a] + ranges[a].0;
            }
            let s = self.grid.linear_index(&src);
            values.extend_from_slice(&self.values[s * self.m..(s + 1) * self.m]);
        }
        Ok(GridFunction {
            grid: sub,
            m: self.m,
            values,
        })
    }

    fn node_weight(&self, idx: usize, k: &mut [usize]) -> f64 {
        self.grid.multi_index(idx, k);
        k.iter()
            .enumerate()
            .map(|(a, &ka)| self.grid.trapezoid_weight(a, ka))
            .product()
    }

    /// Trapezoid-weighted `∫ u` per component.
    pub fn integral(&self) -> Vec<f64> {
        let d = self.grid.d();
        (0..self.m)
            .map(|c| {
                par_sum(self.grid.node_count(), |range| {
                    let mut k = vec![0usize; d];
                    range
                        .map(|idx| self.node_weight(idx, &mut k) * self.values[idx * self.m + c])
                        .sum()
                })
            })
            .collect()
    }

    /// Trapezoid-weighted volume average per component.
    pub fn mean(&self) -> Vec<f64> {
        let vol = self.grid.window().volume();
        self.integral().into_iter().map(|v| v / vol).collect()
    }

    /// Mean over the nodes in `w`.
    pub fn window_mean(&self, w: &Window) -> Result<Vec<f64>> {
        if self.grid.bc() == Boundary::Periodic && w == &self.grid.window() {
            return Ok(self.mean());
        }
        Ok(self.restrict(w)?.mean())
    }

    fn squared_l2(&self) -> f64 {
        let d = self.grid.d();
        par_sum(self.grid.node_count(), |range| {
            let mut k = vec![0usize; d];
            range
                .map(|idx| {
                    let w = self.node_weight(idx, &mut k);
                    self.values[idx * self.m..(idx + 1) * self.m]
                        .iter()
                        .map(|v| w * v * v)
                        .sum::<f64>()
                })
                .sum()
        })
    }

    /// `Σ_i ∫ |D_i u|²` from forward differences on every face, trapezoid-weighted across
    /// the other axes.
    pub fn squared_gradient(&self) -> f64 {
        let g = &self.grid;
        let d = g.d();
        let hs = g.spacing();
        par_sum(g.node_count(), |range| {
            let mut k = vec![0usize; d];
            let mut s = 0.0;
            for idx in range {
                g.multi_index(idx, &mut k);
                for a in 0..d {
                    let Some(next) = g.shift(k[a], a, 1) else { continue };
                    let j = idx + next * g.stride(a) - k[a] * g.stride(a);
                    let w: f64 = (0..d)
                        .map(|b| if b == a { hs[a] } else { g.trapezoid_weight(b, k[b]) })
                        .product();
                    for c in 0..self.m {
                        let du = (self.values[j * self.m + c] - self.values[idx * self.m + c]) / hs[a];
                        s += w * du * du;
                    }
                }
            }
            s
        })
    }

    pub fn norm(&self, kind: NormKind) -> f64 {
        match kind {
            NormKind::L2 => self.squared_l2().sqrt(),
            NormKind::H1 => (self.squared_l2() + self.squared_gradient()).sqrt(),
            NormKind::Linf => self.values.iter().fold(0.0_f64, |a, v| a.max(v.abs())),
        }
    }

    /// Node-centred gradient per axis: central differences inside, one-sided at the edges of
    /// non-periodic grids.
    pub fn gradient(&self) -> Vec<GridFunction> {
        let g = &self.grid;
        let d = g.d();
        (0..d)
            .map(|a| {
                let h = g.h(a);
                let stride = g.stride(a);
                let n = g.nodes_on_axis(a);
                let mut out = vec![0.0; self.values.len()];
                out.par_chunks_mut(self.m).enumerate().for_each(|(idx, o)| {
                    let k = (idx / stride) % n;
                    let fwd = g.shift(k, a, 1);
                    let bwd = g.shift(k, a, -1);
                    let (ip, im, w) = match (fwd, bwd) {
                        (Some(f), Some(b)) => (f, b, 2.0 * h),
                        (Some(f), None) => (f, k, h),
                        (None, Some(b)) => (k, b, h),
                        (None, None) => (k, k, 1.0),
                    };
                    let jp = idx + ip * stride - k * stride;
                    let jm = idx + im * stride - k * stride;
                    for c in 0..self.m {
                        o[c] = (self.values[jp * self.m + c] - self.values[jm * self.m + c]) / w;
                    }
                });
                GridFunction {
                    grid: g.clone(),
                    m: self.m,
                    values: out,
                }
            })
            .collect()
    }

    /// Sampled `sup |u(x) − u(y)| / |x − y|^σ` over node pairs, maximised over components.
    ///
    /// Always includes every nearest-neighbour pair and every pair at a dyadic offset along an
    /// axis. If all `N(N−1)/2` pairs fit in `pair_budget` they are all used; otherwise
    /// `pair_budget` random pairs from a fixed stream are added.
    pub fn holder_seminorm(&self, sigma: f64, pair_budget: usize) -> Result<f64> {
        if !(sigma > 0.0 && sigma <= 1.0) {
            return invalid(format!("Hölder exponent must lie in (0, 1], got {sigma}"));
        }
        let g = &self.grid;
        let d = g.d();
        let n = g.node_count();
        let pos: Vec<Vec<f64>> = (0..n).map(|i| g.node_position(i)).collect();
        let ratio = |i: usize, j: usize| -> f64 {
            let dist = pos[i]
                .iter()
                .zip(&pos[j])
                .enumerate()
                .map(|(a, (x, y))| {
                    let mut t = (x - y).abs();
                    if g.bc() == Boundary::Periodic {
                        let len = g.hi()[a] - g.lo()[a];
                        t = t.min(len - t);
                    }
                    t * t
                })
                .sum::<f64>()
                .sqrt();
            if dist == 0.0 {
                return 0.0;
            }
            let du = (0..self.m)
                .map(|c| (self.values[i * self.m + c] - self.values[j * self.m + c]).abs())
                .fold(0.0, f64::max);
            du / dist.powf(sigma)
        };
        let all_pairs = n * (n - 1) / 2;
        if all_pairs <= pair_budget {
            let best = (0..n)
                .into_par_iter()
                .map(|i| (i + 1..n).map(|j| ratio(i, j)).fold(0.0, f64::max))
                .collect::<Vec<_>>()
                .into_iter()
                .fold(0.0, f64::max);
            return Ok(best);
        }
        let mut best = 0.0_f64;
        let mut k = vec![0usize; d];
        for idx in 0..n {
            g.multi_index(idx, &mut k);
            for a in 0..d {
                let mut off = 1i64;
                while (off as usize) < g.nodes_on_axis(a) {
                    if let Some(j) = g.shift(k[a], a, off) {
                        let other = idx + j * g.stride(a) - k[a] * g.stride(a);
                        best = best.max(ratio(idx, other));
                    }
                    off *= 2;
                }
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0x686f_6c64_6572);
        for _ in 0..pair_budget {
            let i = rng.random_range(0..n);
            let j = rng.random_range(0..n);
            best = best.max(ratio(i, j));
        }
        Ok(best)
    }

    /// Little-endian binary dump (layout documented in the README).
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        let g = &self.grid;
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&(g.d() as u32).to_le_bytes())?;
        w.write_all(&(self.m as u32).to_le_bytes())?;
        w.write_all(&g.bc().code().to_le_bytes())?;
        for a in 0..g.d() {
            w.write_all(&(g.cells()[a] as u64).to_le_bytes())?;
            w.write_all(&g.lo()[a].to_le_bytes())?;
            w.write_all(&g.hi()[a].to_le_bytes())?;
        }
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return invalid("not a grid function file");
        }
        let mut u32buf = [0u8; 4];
        let mut next_u32 = |r: &mut R| -> Result<u32> {
            r.read_exact(&mut u32buf)?;
            Ok(u32::from_le_bytes(u32buf))
        };
        let version = next_u32(&mut r)?;
        if version != FORMAT_VERSION {
            return invalid(format!("unsupported grid function format version {version}"));
        }
        let d = next_u32(&mut r)? as usize;
        let m = next_u32(&mut r)? as usize;
        let bc = Boundary::from_code(next_u32(&mut r)?)?;
        let mut b8 = [0u8; 8];
        let (mut lo, mut hi, mut cells) = (Vec::new(), Vec::new(), Vec::new());
        for _ in 0..d {
            r.read_exact(&mut b8)?;
            cells.push(u64::from_le_bytes(b8) as usize);
            r.read_exact(&mut b8)?;
            lo.push(f64::from_le_bytes(b8));
            r.read_exact(&mut b8)?;
            hi.push(f64::from_le_bytes(b8));
        }
        let grid = BoxGrid::new(lo, hi, cells, bc)?;
        let mut values = vec![0.0; grid.node_count() * m];
        for v in values.iter_mut() {
            r.read_exact(&mut b8)?;
            *v = f64::from_le_bytes(b8);
        }
        Self::from_values(&grid, m, values)
    }

    /// CSV with columns `x0..x{d-1}, u0..u{m-1}`, one row per node.
    pub fn to_csv(&self) -> String {
        use std::fmt::Write as _;
        let d = self.grid.d();
        let mut s = String::new();
        let header: Vec<String> = (0..d)
            .map(|a| format!("x{a}"))
            .chain((0..self.m).map(|c| format!("u{c}")))
            .collect();
        s.push_str(&header.join(","));
        s.push('\n');
        let mut x = vec![0.0; d];
        for idx in 0..self.grid.node_count() {
            self.grid.position(idx, &mut x);
            let row: Vec<String> = x
                .iter()
                .chain(&self.values[idx * self.m..(idx + 1) * self.m])
                .map(|v| crate::numfmt::fmt_f64(*v))
                .collect();
            let _ = writeln!(s, "{}", row.join(","));
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::TAU;

    #[test]
    fn constant_norms() {
        let g = BoxGrid::new(vec![0.0, 0.0], vec![2.0, 0.5], vec![8, 4], Boundary::DirichletZero).unwrap();
        let u = GridFunction::scalar(&g, |_| 3.0);
        assert!((u.norm(NormKind::L2) - 3.0).abs() < 1e-14);
        assert!((u.norm(NormKind::H1) - 3.0).abs() < 1e-14);
        assert_eq!(u.norm(NormKind::Linf), 3.0);
        assert_eq!(u.holder_seminorm(0.5, 10_000).unwrap(), 0.0);
    }

    #[test]
    fn linear_function_holder() {
        let g = BoxGrid::cube(1, 1.0, 64, Boundary::DirichletZero).unwrap();
        let u = GridFunction::scalar(&g, |x| x[0]);
        assert!((u.holder_seminorm(0.5, 10_000).unwrap() - 1.0).abs() < 1e-14);
        // Sampled path: dyadic offsets include the full length 64.
        assert!((u.holder_seminorm(0.5, 10).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn holder_is_nondecreasing_in_sigma_for_short_pairs() {
        let g = BoxGrid::cube(1, 1.0, 32, Boundary::DirichletZero).unwrap();
        let u = GridFunction::scalar(&g, |x| (TAU * 3.0 * x[0]).sin() * 0.5);
        let mut prev = 0.0;
        for sigma in [0.1, 0.3, 0.5, 0.7, 0.9] {
            let s = u.holder_seminorm(sigma, 1 << 20).unwrap();
            assert!(s >= prev);
            prev = s;
        }
    }

    #[test]
    fn periodic_mean_of_sine_vanishes() {
        let g = BoxGrid::cube(1, 2.0, 64, Boundary::Periodic).unwrap();
        let u = GridFunction::scalar(&g, |x| (TAU * x[0]).sin() + 0.25);
        assert!((u.mean()[0] - 0.25).abs() < 1e-14);
    }

    #[test]
    fn interpolation_is_exact_for_bilinear() {
        let g = BoxGrid::cube(2, 1.0, 8, Boundary::DirichletZero).unwrap();
        let u = GridFunction::scalar(&g, |x| 1.0 + 2.0 * x[0] - x[1] + 0.5 * x[0] * x[1]);
        let mut out = [0.0];
        u.interpolate(&[0.31, 0.77], &mut out);
        let exact = 1.0 + 0.62 - 0.77 + 0.5 * 0.31 * 0.77;
        assert!((out[0] - exact).abs() < 1e-14);
    }

    #[test]
    fn restriction_and_window_mean() {
        let g = BoxGrid::cube(1, 4.0, 64, Boundary::DirichletZero).unwrap();
        let u = GridFunction::scalar(&g, |x| x[0]);
        let w = Window::new(vec![1.0], vec![3.0]).unwrap();
        let r = u.restrict(&w).unwrap();
        assert_eq!(r.grid().node_count(), 33);
        assert!((r.window_mean(&r.grid().window()).unwrap()[0] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn binary_roundtrip() {
        let g = BoxGrid::new(vec![-1.0, 0.0], vec![1.0, 3.0], vec![4, 6], Boundary::Periodic).unwrap();
        let u = GridFunction::from_fn(&g, 2, |x, o| {
            o[0] = x[0];
            o[1] = x[1].sin();
        });
        let mut buf = Vec::new();
        u.write_binary(&mut buf).unwrap();
        assert_eq!(buf.len(), 4 + 16 + 2 * 24 + 8 * 24 * 2);
        assert_eq!(&buf[..4], b"GRDF");
        let back = GridFunction::read_binary(buf.as_slice()).unwrap();
        assert_eq!(back, u);
        assert!(u.to_csv().starts_with("x0,x1,u0,u1\n"));
    }
}
