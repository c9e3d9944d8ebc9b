use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{CoefficientTensorField, TensorValue};
use crate::error::{invalid, Error, Result};

/// Half-width of the sampling box used for fields without a known period.
const APERIODIC_SAMPLE_BOX: f64 = 512.0;

/// Observed extreme Rayleigh quotients of the symmetric part of `A(y)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ellipticity {
    /// Smallest observed quotient.
    pub mu: f64,
    /// Largest observed quotient.
    pub mu_inv_check: f64,
}

impl Ellipticity {
    /// Certificate from the spectrum of a single constant tensor.
    pub fn of_tensor(t: &TensorValue) -> Result<Self> {
        let (lo, xi, hi, _) = t.symmetric_spectrum();
        if !(lo > 0.0) {
            return Err(Error::EllipticityViolation {
                point: Vec::new(),
                xi,
                quotient: lo,
            });
        }
        Ok(Self {
            mu: lo,
            mu_inv_check: hi,
        })
    }

    /// Single constant `μ` with `μ|ξ|² ≤ Aξ·ξ ≤ |ξ|²/μ`.
    pub fn two_sided(&self) -> f64 {
        self.mu.min(1.0 / self.mu_inv_check)
    }

    /// `true` when `q` lies in `[μ - tol, 1/μ + tol]` for the two-sided constant.
    pub fn admits(&self, q: f64, tol: f64) -> bool {
        let mu = self.two_sided();
        q >= mu - tol && q <= 1.0 / mu + tol
    }
}

impl CoefficientTensorField {
    /// Samples `sample_count` points `y` and records the exact extreme eigenvalues of the
    /// symmetric part of `A(y)`, which are the extreme Rayleigh quotients over the unit sphere.
    ///
    /// Points are drawn from the period cell when the field is periodic and from
    /// `[-512, 512]^d` otherwise.
    pub fn check_ellipticity(&self, sample_count: usize, seed: u64) -> Result<Ellipticity> {
        if sample_count == 0 {
            return invalid("sample_count must be at least 1");
        }
        let d = self.d();
        let cell: Vec<(f64, f64)> = match self.period() {
            Some(p) => p.into_iter().map(|p| (0.0, p)).collect(),
            None => vec![(-APERIODIC_SAMPLE_BOX, APERIODIC_SAMPLE_BOX); d],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut y = vec![0.0; d];
        let mut a = TensorValue::zeros(d, self.m());
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for _ in 0..sample_count {
            for (yi, &(l, h)) in y.iter_mut().zip(&cell) {
                *yi = rng.random_range(l..h);
            }
            self.evaluate_into(&y, &mut a);
            let (min, xi, max, _) = a.symmetric_spectrum();
            if !(min > 0.0) {
                return Err(Error::EllipticityViolation {
                    point: y,
                    xi,
                    quotient: min,
                });
            }
            lo = lo.min(min);
            hi = hi.max(max);
        }
        Ok(Ellipticity {
            mu: lo,
            mu_inv_check: hi,
        })
    }
}
