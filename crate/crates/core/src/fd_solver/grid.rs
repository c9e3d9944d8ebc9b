use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Boundary {
    /// Nodes `0..=cells` per axis; boundary values are fixed.
    DirichletZero,
    /// Nodes `0..cells` per axis; index `cells` wraps to `0`.
    Periodic,
    /// Same node layout as `DirichletZero` without boundary semantics, e.g. a restriction.
    Free,
}

impl Boundary {
    pub(crate) fn code(self) -> u32 {
        match self {
            Boundary::DirichletZero => 0,
            Boundary::Periodic => 1,
            Boundary::Free => 2,
        }
    }

    pub(crate) fn from_code(c: u32) -> Result<Self> {
        match c {
            0 => Ok(Boundary::DirichletZero),
            1 => Ok(Boundary::Periodic),
            2 => Ok(Boundary::Free),
            _ => invalid(format!("unknown boundary code {c}")),
        }
    }
}

/// Axis-aligned box `[lo_1, hi_1] × … × [lo_d, hi_d]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Window {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return invalid("window bounds must have equal positive length");
        }
        if lo.iter().zip(&hi).any(|(a, b)| !(a < b) || !a.is_finite() || !b.is_finite()) {
            return invalid("window needs finite lo < hi on every axis");
        }
        Ok(Self { lo, hi })
    }

    /// Cube of side `side` centred at `center`.
    pub fn cube(center: &[f64], side: f64) -> Result<Self> {
        Self::new(
            center.iter().map(|c| c - side / 2.0).collect(),
            center.iter().map(|c| c + side / 2.0).collect(),
        )
    }

    pub fn d(&self) -> usize {
        self.lo.len()
    }

    pub fn volume(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(a, b)| b - a).product()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(v, (a, b))| *v >= *a && *v <= *b)
    }

    /// Centred sub-window scaled by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let lo = self
            .lo
            .iter()
            .zip(&self.hi)
            .map(|(a, b)| (a + b) / 2.0 - factor * (b - a) / 2.0)
            .collect();
        let hi = self
            .lo
            .iter()
            .zip(&self.hi)
            .map(|(a, b)| (a + b) / 2.0 + factor * (b - a) / 2.0)
            .collect();
        Self { lo, hi }
    }
}

/// Uniform node grid on a box.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxGrid {
    lo: Vec<f64>,
    hi: Vec<f64>,
    cells: Vec<usize>,
    bc: Boundary,
}

impl BoxGrid {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>, cells: Vec<usize>, bc: Boundary) -> Result<Self> {
        let d = cells.len();
        if d == 0 || lo.len() != d || hi.len() != d {
            return invalid("grid bounds and cells must share a positive dimension");
        }
        if cells.iter().any(|&c| c < 4) {
            return invalid("grids need at least 4 cells per axis");
        }
        if lo.iter().zip(&hi).any(|(a, b)| !(a < b) || !a.is_finite() || !b.is_finite()) {
            return invalid("grid needs finite lo < hi on every axis");
        }
        Ok(Self { lo, hi, cells, bc })
    }

    /// `[0, side]^d` with `n` cells per axis.
    pub fn cube(d: usize, side: f64, n: usize, bc: Boundary) -> Result<Self> {
        Self::new(vec![0.0; d], vec![side; d], vec![n; d], bc)
    }

    pub fn d(&self) -> usize {
        self.cells.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn cells(&self) -> &[usize] {
        &self.cells
    }

    pub fn bc(&self) -> Boundary {
        self.bc
    }

    pub fn with_bc(&self, bc: Boundary) -> Self {
        Self { bc, ..self.clone() }
    }

    #[inline]
    pub fn h(&self, axis: usize) -> f64 {
        (self.hi[axis] - self.lo[axis]) / self.cells[axis] as f64
    }

    pub fn spacing(&self) -> Vec<f64> {
        (0..self.d()).map(|a| self.h(a)).collect()
    }

    /// Volume of one grid cell.
    pub fn cell_volume(&self) -> f64 {
        (0..self.d()).map(|a| self.h(a)).product()
    }

    pub fn window(&self) -> Window {
        Window {
            lo: self.lo.clone(),
            hi: self.hi.clone(),
        }
    }

    #[inline]
    pub fn nodes_on_axis(&self, axis: usize) -> usize {
        match self.bc {
            Boundary::Periodic => self.cells[axis],
            _ => self.cells[axis] + 1,
        }
    }

    pub fn node_count(&self) -> usize {
        (0..self.d()).map(|a| self.nodes_on_axis(a)).product()
    }

    #[inline]
    pub fn stride(&self, axis: usize) -> usize {
        (0..axis).map(|a| self.nodes_on_axis(a)).product()
    }

    #[inline]
    pub fn multi_index(&self, mut idx: usize, out: &mut [usize]) {
        for (a, o) in out.iter_mut().enumerate() {
            let n = self.nodes_on_axis(a);
            *o = idx % n;
            idx /= n;
        }
    }

    #[inline]
    pub fn linear_index(&self, multi: &[usize]) -> usize {
        let mut idx = 0;
        let mut stride = 1;
        for (a, &k) in multi.iter().enumerate() {
            idx += k * stride;
            stride *= self.nodes_on_axis(a);
        }
        idx
    }

    #[inline]
    pub fn coordinate(&self, axis: usize, k: usize) -> f64 {
        self.lo[axis] + k as f64 * self.h(axis)
    }

    pub fn position(&self, idx: usize, out: &mut [f64]) {
        let mut rem = idx;
        for (a, o) in out.iter_mut().enumerate() {
            let n = self.nodes_on_axis(a);
            *o = self.coordinate(a, rem % n);
            rem /= n;
        }
    }

    pub fn node_position(&self, idx: usize) -> Vec<f64> {
        let mut x = vec![0.0; self.d()];
        self.position(idx, &mut x);
        x
    }

    /// `true` for nodes on the outer boundary of a non-periodic grid.
    #[inline]
    pub fn is_boundary(&self, idx: usize) -> bool {
        if self.bc == Boundary::Periodic {
            return false;
        }
        let mut rem = idx;
        for a in 0..self.d() {
            let n = self.nodes_on_axis(a);
            let k = rem % n;
            if k == 0 || k == n - 1 {
                return true;
            }
            rem /= n;
        }
        false
    }

    /// Neighbour index `k + offset` along `axis`, wrapping when periodic.
    #[inline]
    pub fn shift(&self, k: usize, axis: usize, offset: i64) -> Option<usize> {
        let n = self.nodes_on_axis(axis) as i64;
        let j = k as i64 + offset;
        match self.bc {
            Boundary::Periodic => Some(j.rem_euclid(n) as usize),
            _ => (0..n).contains(&j).then_some(j as usize),
        }
    }

    /// Trapezoid weight of node index `k` along `axis`.
    #[inline]
    pub fn trapezoid_weight(&self, axis: usize, k: usize) -> f64 {
        let h = self.h(axis);
        match self.bc {
            Boundary::Periodic => h,
            _ if k == 0 || k == self.cells[axis] => h / 2.0,
            _ => h,
        }
    }

    /// Node index range `[first, last]` per axis covering `w`, requiring `w`'s bounds to sit
    /// on nodes of a non-periodic grid.
    pub fn window_range(&self, w: &Window) -> Result<Vec<(usize, usize)>> {
        if w.d() != self.d() {
            return invalid("window dimension differs from grid dimension");
        }
        let mut out = Vec::with_capacity(self.d());
        for a in 0..self.d() {
            let h = self.h(a);
            let f = (w.lo[a] - self.lo[a]) / h;
            let l = (w.hi[a] - self.lo[a]) / h;
            let (fi, li) = (f.round(), l.round());
            if (f - fi).abs() > 1e-6 || (l - li).abs() > 1e-6 {
                return invalid(format!("window bounds on axis {a} are not grid nodes"));
            }
            let max = self.nodes_on_axis(a) as f64 - 1.0;
            if fi < 0.0 || li > max || fi >= li {
                return invalid(format!("window on axis {a} is outside the grid"));
            }
            out.push((fi as usize, li as usize));
        }
        Ok(out)
    }
}
