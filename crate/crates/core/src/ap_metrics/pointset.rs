use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::tensor_field::centered_fract;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KroneckerProvenance {
    pub lambda: Vec<f64>,
    pub r: usize,
    pub ell: usize,
}

/// Points in `[-1/2, 1/2]^m`, stored row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointSet {
    dim: usize,
    coords: Vec<f64>,
    provenance: Option<KroneckerProvenance>,
}

impl PointSet {
    pub fn new(dim: usize, coords: Vec<f64>) -> Result<Self> {
        if dim == 0 || coords.len() % dim != 0 {
            return invalid("coordinate count must be a multiple of the dimension");
        }
        if let Some(c) = coords.iter().find(|c| !(c.abs() <= 0.5)) {
            return invalid(format!("coordinate {c} lies outside [-1/2, 1/2]"));
        }
        Ok(Self {
            dim,
            coords,
            provenance: None,
        })
    }

    pub fn from_points(points: &[Vec<f64>]) -> Result<Self> {
        let dim = points.first().map_or(0, Vec::len);
        if points.iter().any(|p| p.len() != dim) {
            return invalid("points must share a dimension");
        }
        Self::new(dim, points.concat())
    }

    /// `{<λ t> : t = j + k/ℓ, -R ≤ j < R, 0 ≤ k < ℓ}`, `N = 2Rℓ` points.
    pub fn kronecker(lambda: &[f64], r: usize, ell: usize) -> Result<Self> {
        if lambda.is_empty() || r == 0 || ell == 0 {
            return invalid("kronecker set needs a frequency, R >= 1 and l >= 1");
        }
        let dim = lambda.len();
        let ri = r as i64;
        let mut coords = Vec::with_capacity(2 * r * ell * dim);
        for j in -ri..ri {
            for k in 0..ell {
                let t = j as f64 + k as f64 / ell as f64;
                coords.extend(lambda.iter().map(|l| centered_fract(l * t)));
            }
        }
        Ok(Self {
            dim,
            coords,
            provenance: Some(KroneckerProvenance {
                lambda: lambda.to_vec(),
                r,
                ell,
            }),
        })
    }

    /// Two-dimensional lattice `{(<i/N>, <i α>) : 0 ≤ i < N}`.
    pub fn kronecker_lattice(n: usize, alpha: f64) -> Result<Self> {
        if n == 0 {
            return invalid("lattice needs N >= 1");
        }
        let coords = (0..n)
            .flat_map(|i| [centered_fract(i as f64 / n as f64), centered_fract(i as f64 * alpha)])
            .collect();
        Self::new(2, coords)
    }

    pub fn random(dim: usize, n: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::new(dim, (0..n * dim).map(|_| rng.random_range(-0.5..0.5)).collect())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks_exact(self.dim)
    }

    pub fn provenance(&self) -> Option<&KroneckerProvenance> {
        self.provenance.as_ref()
    }
}
