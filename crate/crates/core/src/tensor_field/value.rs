use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Block tensor `a[i][j][alpha][beta]` with `i, j < d` spatial and `alpha, beta < m` component indices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorValue {
    d: usize,
    m: usize,
    entries: Vec<f64>,
}

impl TensorValue {
    pub fn zeros(d: usize, m: usize) -> Self {
        Self {
            d,
            m,
            entries: vec![0.0; d * d * m * m],
        }
    }

    /// `delta_ij delta_alpha_beta`
    pub fn identity(d: usize, m: usize) -> Self {
        let mut t = Self::zeros(d, m);
        for i in 0..d {
            for a in 0..m {
                t.set(i, i, a, a, 1.0);
            }
        }
        t
    }

    /// Scalar multiple of the identity with a single component.
    pub fn scalar(d: usize, value: f64) -> Self {
        let mut t = Self::identity(d, 1);
        t.scale(value);
        t
    }

    pub fn from_entries(d: usize, m: usize, entries: Vec<f64>) -> Result<Self> {
        if entries.len() != d * d * m * m {
            return invalid(format!(
                "tensor with d={d}, m={m} needs {} entries, got {}",
                d * d * m * m,
                entries.len()
            ));
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return invalid("tensor entries must be finite");
        }
        Ok(Self { d, m, entries })
    }

    /// Builds from a nested `[i][j][alpha][beta]` array.
    pub fn from_nested(nested: &[Vec<Vec<Vec<f64>>>]) -> Result<Self> {
        let d = nested.len();
        if d == 0 {
            return invalid("empty tensor");
        }
        let m = nested[0].first().map(|r| r.len()).unwrap_or(0);
        if m == 0 {
            return invalid("tensor has no components");
        }
        let mut entries = Vec::with_capacity(d * d * m * m);
        for row in nested {
            if row.len() != d {
                return invalid("tensor must be d x d x m x m");
            }
            for block in row {
                if block.len() != m {
                    return invalid("tensor must be d x d x m x m");
                }
                for line in block {
                    if line.len() != m {
                        return invalid("tensor must be d x d x m x m");
                    }
                    entries.extend_from_slice(line);
                }
            }
        }
        Self::from_entries(d, m, entries)
    }

    pub fn to_nested(&self) -> Vec<Vec<Vec<Vec<f64>>>> {
        (0..self.d)
            .map(|i| {
                (0..self.d)
                    .map(|j| {
                        (0..self.m)
                            .map(|a| (0..self.m).map(|b| self.get(i, j, a, b)).collect())
                            .collect()
                    })
                    .collect()
            })
            .collect()
    }

    #[inline]
    pub fn d(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn m(&self) -> usize {
        self.m
    }

    #[inline]
    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    #[inline]
    pub fn entries_mut(&mut self) -> &mut [f64] {
        &mut self.entries
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, alpha: usize, beta: usize) -> usize {
        ((i * self.d + j) * self.m + alpha) * self.m + beta
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, alpha: usize, beta: usize) -> f64 {
        self.entries[self.index(i, j, alpha, beta)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, alpha: usize, beta: usize, value: f64) {
        let k = self.index(i, j, alpha, beta);
        self.entries[k] = value;
    }

    pub fn fill(&mut self, value: f64) {
        self.entries.iter_mut().for_each(|e| *e = value);
    }

    pub fn scale(&mut self, s: f64) {
        self.entries.iter_mut().for_each(|e| *e *= s);
    }

    /// `self += s * other`
    #[inline]
    pub fn axpy(&mut self, s: f64, other: &TensorValue) {
        debug_assert_eq!(self.entries.len(), other.entries.len());
        for (e, o) in self.entries.iter_mut().zip(&other.entries) {
            *e += s * o;
        }
    }

    /// `b[i][j][alpha][beta] = a[j][i][beta][alpha]`
    pub fn adjoint(&self) -> Self {
        let mut out = Self::zeros(self.d, self.m);
        for i in 0..self.d {
            for j in 0..self.d {
                for a in 0..self.m {
                    for b in 0..self.m {
                        out.set(i, j, a, b, self.get(j, i, b, a));
                    }
                }
            }
        }
        out
    }

    pub fn is_symmetric(&self) -> bool {
        self.max_abs_diff(&self.adjoint()) == 0.0
    }

    /// Sup-norm of the entrywise difference.
    pub fn max_abs_diff(&self, other: &TensorValue) -> f64 {
        self.entries
            .iter()
            .zip(&other.entries)
            .fold(0.0_f64, |acc, (a, b)| acc.max((a - b).abs()))
    }

    pub fn max_abs(&self) -> f64 {
        self.entries.iter().fold(0.0_f64, |acc, a| acc.max(a.abs()))
    }

    /// The `(d m) x (d m)` matrix with rows `(i, alpha)` and columns `(j, beta)`.
    pub fn block_matrix(&self) -> DMatrix<f64> {
        let n = self.d * self.m;
        DMatrix::from_fn(n, n, |r, c| {
            self.get(r / self.m, c / self.m, r % self.m, c % self.m)
        })
    }

    /// `a_ij^{ab} xi_i^a xi_j^b` for `xi` laid out as `xi[i * m + a]`.
    pub fn quadratic_form(&self, xi: &[f64]) -> f64 {
        let mut q = 0.0;
        for i in 0..self.d {
            for j in 0..self.d {
                for a in 0..self.m {
                    for b in 0..self.m {
                        q += self.get(i, j, a, b) * xi[i * self.m + a] * xi[j * self.m + b];
                    }
                }
            }
        }
        q
    }

    /// Extreme eigenpairs of the symmetric part of the block matrix:
    /// `(min, argmin, max, argmax)`.
    pub fn symmetric_spectrum(&self) -> (f64, Vec<f64>, f64, Vec<f64>) {
        let a = self.block_matrix();
        let sym = (&a + a.transpose()) * 0.5;
        let eig = sym.symmetric_eigen();
        let (mut lo, mut hi) = (0, 0);
        for k in 0..eig.eigenvalues.len() {
            if eig.eigenvalues[k] < eig.eigenvalues[lo] {
                lo = k;
            }
            if eig.eigenvalues[k] > eig.eigenvalues[hi] {
                hi = k;
            }
        }
        (
            eig.eigenvalues[lo],
            eig.eigenvectors.column(lo).iter().copied().collect(),
            eig.eigenvalues[hi],
            eig.eigenvectors.column(hi).iter().copied().collect(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nested_roundtrip_and_layout() {
        let t = TensorValue::from_nested(&[
            vec![vec![vec![1.0]], vec![vec![0.3]]],
            vec![vec![vec![0.0]], vec![vec![1.0]]],
        ])
        .unwrap();
        assert_eq!(t.get(0, 1, 0, 0), 0.3);
        assert_eq!(t.get(1, 0, 0, 0), 0.0);
        assert_eq!(TensorValue::from_nested(&t.to_nested()).unwrap(), t);
    }

    #[test]
    fn adjoint_transposes_two_by_two() {
        let t = TensorValue::from_entries(2, 1, vec![1.0, 0.3, 0.0, 1.0]).unwrap();
        let a = t.adjoint();
        assert_eq!(a.entries(), &[1.0, 0.0, 0.3, 1.0]);
        assert_eq!(a.adjoint(), t);
        assert!(!t.is_symmetric());
    }

    #[test]
    fn adjoint_swaps_component_indices() {
        let mut t = TensorValue::zeros(2, 2);
        t.set(0, 1, 0, 1, 5.0);
        let a = t.adjoint();
        assert_eq!(a.get(1, 0, 1, 0), 5.0);
        assert_eq!(a.get(0, 1, 0, 1), 0.0);
    }

    #[test]
    fn spectrum_of_scaled_identity() {
        let t = TensorValue::scalar(2, 2.0);
        let (lo, _, hi, _) = t.symmetric_spectrum();
        assert!((lo - 2.0).abs() < 1e-14 && (hi - 2.0).abs() < 1e-14);
    }

    #[test]
    fn rejects_wrong_shape() {
        assert!(TensorValue::from_entries(2, 1, vec![1.0; 3]).is_err());
        assert!(TensorValue::from_entries(1, 1, vec![f64::NAN]).is_err());
    }
}
