use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{TensorValue, TorusField};
use crate::error::{invalid, Error, Result};

/// Result of a brute-force Diophantine scan.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiophantineFit {
    pub c0_hat: f64,
    pub tau_hat: f64,
    /// Record-setting `(n, |n·λ|)` in increasing shell order.
    pub records: Vec<(Vec<i64>, f64)>,
}

/// Odometer over `[-n_max, n_max]^m` in lexicographic order.
fn next_lattice_point(n: &mut [i64], n_max: i64) -> bool {
    for k in (0..n.len()).rev() {
        if n[k] < n_max {
            n[k] += 1;
            return true;
        }
        n[k] = -n_max;
    }
    false
}

/// Scans `0 < ‖n‖∞ ≤ n_max` for small `|n·λ|` and fits `|n·λ| ≥ c₀ |n|^{-τ}` on the records.
///
/// Only `n` whose first nonzero entry is positive are visited. A value
/// `|n·λ| ≤ 16 ε Σ|n_k λ_k|` is treated as an exact resonance; the witness is the
/// lexicographically first such `n` in the smallest shell.
pub fn diophantine_scan(lambda: &[f64], n_max: usize) -> Result<DiophantineFit> {
    let m = lambda.len();
    if m < 2 {
        return invalid("diophantine_scan needs at least two frequencies");
    }
    if n_max < 2 {
        return invalid("n_max must be at least 2");
    }
    if lambda.iter().any(|l| !l.is_finite()) {
        return invalid("frequencies must be finite");
    }
    let nm = n_max as i64;
    let mut shell_min = vec![(f64::INFINITY, Vec::new()); n_max + 1];
    let mut resonance: Option<(usize, Vec<i64>)> = None;
    let mut n = vec![-nm; m];
    loop {
        if let Some(&first) = n.iter().find(|&&v| v != 0) {
            if first > 0 {
                let shell = n.iter().map(|v| v.unsigned_abs() as usize).max().unwrap_or(0);
                let dot: f64 = n.iter().zip(lambda).map(|(&k, l)| k as f64 * l).sum();
                let scale: f64 = n.iter().zip(lambda).map(|(&k, l)| (k as f64 * l).abs()).sum();
                let v = dot.abs();
                if v <= 16.0 * f64::EPSILON * scale && resonance.as_ref().is_none_or(|(s, _)| shell < *s) {
                    resonance = Some((shell, n.clone()));
                }
                if v < shell_min[shell].0 {
                    shell_min[shell] = (v, n.clone());
                }
            }
        }
        if !next_lattice_point(&mut n, nm) {
            break;
        }
    }
    if let Some((_, witness)) = resonance {
        return Err(Error::ResonantFrequencies { witness });
    }

    let mut records = Vec::new();
    let mut best = f64::INFINITY;
    for (v, w) in shell_min.into_iter().skip(1) {
        if v < best {
            best = v;
            records.push((w, v));
        }
    }
    let norm = |n: &[i64]| n.iter().map(|&k| (k * k) as f64).sum::<f64>().sqrt();
    let pts: Vec<(f64, f64)> = records
        .iter()
        .filter(|(n, _)| norm(n) >= 2.0)
        .map(|(n, v)| (norm(n).ln(), v.ln()))
        .collect();
    let tau_hat = if pts.len() >= 2 {
        -crate::ap_metrics::least_squares(&pts).0
    } else {
        0.0
    };
    let c0_hat = records
        .iter()
        .map(|(n, v)| v * norm(n).powf(tau_hat))
        .fold(f64::INFINITY, f64::min);
    Ok(DiophantineFit {
        c0_hat,
        tau_hat,
        records,
    })
}

/// Sampled `ω(δ) = sup{‖B(x) − B(y)‖ : ‖x − y‖∞ ≤ δ}` with the entrywise sup-norm.
///
/// Each random base point is compared against the `2^M` corners of its δ-cube and one
/// random point inside it. The sampling stream is fixed, so repeated calls agree.
pub fn modulus_of_continuity(b: &TorusField, delta: f64, sample_count: usize) -> Result<f64> {
    if !(delta > 0.0) || !delta.is_finite() {
        return invalid("delta must be positive");
    }
    if sample_count == 0 {
        return invalid("sample_count must be at least 1");
    }
    let dim = b.dim();
    let (d, m) = b.shape();
    let mut rng = ChaCha8Rng::seed_from_u64(0x6d6f_6475_6c75_73);
    let mut x = vec![0.0; dim];
    let mut y = vec![0.0; dim];
    let mut bx = TensorValue::zeros(d, m);
    let mut by = TensorValue::zeros(d, m);
    let corners = if dim < 16 { 1usize << dim } else { 0 };
    let mut omega = 0.0_f64;
    for _ in 0..sample_count {
        x.iter_mut().for_each(|v| *v = rng.random_range(-0.5..0.5));
        b.evaluate_into(&x, &mut bx);
        for c in 0..=corners {
            for k in 0..dim {
                let off = if c < corners {
                    if c >> k & 1 == 1 {
                        delta
                    } else {
                        -delta
                    }
                } else {
                    rng.random_range(-delta..=delta)
                };
                y[k] = x[k] + off;
            }
            b.evaluate_into(&y, &mut by);
            omega = omega.max(bx.max_abs_diff(&by));
        }
    }
    Ok(omega)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor_field::TorusTerm;

    fn sine_torus() -> TorusField {
        TorusField::new(
            1,
            vec![TorusTerm {
                freq: vec![1],
                cos: TensorValue::zeros(1, 1),
                sin: TensorValue::identity(1, 1),
            }],
        )
        .unwrap()
    }

    #[test]
    fn rational_dependence_is_resonant() {
        match diophantine_scan(&[1.0, 2.0], 10) {
            Err(Error::ResonantFrequencies { witness }) => assert_eq!(witness, vec![2, -1]),
            other => panic!("expected resonance, got {other:?}"),
        }
    }

    #[test]
    fn golden_ratio_is_badly_approximable() {
        let phi = (1.0 + 5.0_f64.sqrt()) / 2.0;
        let fit = diophantine_scan(&[1.0, phi], 144).unwrap();
        assert!((fit.tau_hat - 1.0).abs() < 0.1, "tau_hat = {}", fit.tau_hat);
        assert!(fit.c0_hat > 0.0);
        // Record minimisers are consecutive Fibonacci pairs.
        let fib = [1, 1, 2, 3, 5, 8, 13, 21, 34, 55, 89, 144, 233];
        for (n, _) in fit.records.iter().filter(|(n, _)| n[0].abs() > 2) {
            let a = n[0].abs();
            let b = n[1].abs();
            let k = fib.iter().position(|&f| f == a).expect("Fibonacci numerator");
            assert_eq!(fib[k - 1], b, "record {n:?}");
        }
    }

    #[test]
    fn sqrt_two_is_badly_approximable() {
        let fit = diophantine_scan(&[1.0, 2.0_f64.sqrt()], 100).unwrap();
        assert!((fit.tau_hat - 1.0).abs() < 0.15, "tau_hat = {}", fit.tau_hat);
    }

    #[test]
    fn scan_rejects_bad_input() {
        assert!(diophantine_scan(&[1.0], 10).is_err());
        assert!(diophantine_scan(&[1.0, 2.0_f64.sqrt()], 1).is_err());
    }

    #[test]
    fn modulus_of_constant_is_zero() {
        let b = TorusField::new(
            2,
            vec![TorusTerm {
                freq: vec![0, 0],
                cos: TensorValue::identity(1, 1),
                sin: TensorValue::zeros(1, 1),
            }],
        )
        .unwrap();
        for delta in [0.01, 0.1, 0.5] {
            assert_eq!(modulus_of_continuity(&b, delta, 100).unwrap(), 0.0);
        }
    }

    #[test]
    fn modulus_of_sine_at_half() {
        // Dense-grid oracle: max over x of |sin 2π(x+1/2) − sin 2πx| = 2.
        let oracle = (0..=4096)
            .map(|k| {
                let x = k as f64 / 4096.0 - 0.5;
                (2.0 * (std::f64::consts::TAU * x).sin()).abs()
            })
            .fold(0.0, f64::max);
        assert!((oracle - 2.0).abs() < 1e-6);
        let w = modulus_of_continuity(&sine_torus(), 0.5, 4000).unwrap();
        assert!((w - oracle).abs() < 1e-3, "omega = {w}");
    }

    #[test]
    fn modulus_is_monotone_up_to_noise() {
        let b = sine_torus();
        let deltas = [0.01, 0.02, 0.05, 0.1, 0.2, 0.3, 0.5];
        let w: Vec<f64> = deltas
            .iter()
            .map(|&d| modulus_of_continuity(&b, d, 4000).unwrap())
            .collect();
        for pair in w.windows(2) {
            assert!(pair[0] <= pair[1] + 1e-3, "{w:?}");
        }
        // Exact value 2 sin(π δ) for δ ≤ 1/2.
        for (d, v) in deltas.iter().zip(&w) {
            let exact = 2.0 * (std::f64::consts::PI * d).sin();
            assert!(*v <= exact + 1e-12 && *v >= exact - 1e-3, "δ={d}: {v} vs {exact}");
        }
    }
}
