//! Almost-periodicity measurements: `ρ(R)`, `Θ_σ(T)`, covering radii of Kronecker orbits,
//! discrepancy and its exponential-sum bound.

mod covering;
mod discrepancy;
mod pointset;
mod rho;

pub use covering::{covering_from_discrepancy, covering_radius, theta_layout, theta_quasi, CoveringEstimate, Wrap};
pub use discrepancy::{discrepancy_exact, etk_bound, etk_bound_with, DEFAULT_ETK_CONSTANT};
pub use pointset::{KroneckerProvenance, PointSet};
pub use rho::{estimate_rho, rho_report, BallNorm, RhoBudget, RhoEstimate};

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{invalid, Result};
use crate::numfmt;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DecayKind {
    #[serde(rename = "rho")]
    Rho,
    #[serde(rename = "theta")]
    Theta,
    #[serde(rename = "Theta_sigma")]
    ThetaSigma,
    #[serde(rename = "discrepancy")]
    Discrepancy,
    #[serde(rename = "error_vs_eps")]
    ErrorVsEps,
    #[serde(rename = "other")]
    Other,
}

/// `(parameter, value)` samples with a log-log power-law fit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayReport {
    pub kind: DecayKind,
    pub samples: Vec<(f64, f64)>,
    /// Slope over all strictly positive samples, when at least three exist.
    pub fitted_exponent: Option<f64>,
    pub fit_quality: Option<f64>,
    #[serde(default)]
    pub metadata: BTreeMap<String, serde_json::Value>,
}

impl DecayReport {
    pub fn new(kind: DecayKind, mut samples: Vec<(f64, f64)>) -> Result<Self> {
        samples.sort_by(|a, b| a.0.total_cmp(&b.0));
        for w in samples.windows(2) {
            if !(w[0].0 < w[1].0) {
                return invalid(format!("parameters must be strictly increasing (repeated {})", w[0].0));
            }
        }
        for &(p, v) in &samples {
            if !p.is_finite() || !v.is_finite() || v < 0.0 {
                return invalid(format!("sample ({p}, {v}) must be finite with nonnegative value"));
            }
        }
        let positive: Vec<(f64, f64)> = samples
            .iter()
            .filter(|(p, v)| *p > 0.0 && *v > 0.0)
            .map(|&(p, v)| (p.ln(), v.ln()))
            .collect();
        let (fitted_exponent, fit_quality) = if positive.len() >= 3 {
            let (slope, _, r2) = least_squares(&positive);
            (Some(slope), Some(r2))
        } else {
            (None, None)
        };
        Ok(Self {
            kind,
            samples,
            fitted_exponent,
            fit_quality,
            metadata: BTreeMap::new(),
        })
    }

    pub fn with_meta(mut self, key: &str, value: impl Serialize) -> Self {
        let v = serde_json::to_value(value).unwrap_or(serde_json::Value::Null);
        self.metadata.insert(key.to_string(), v);
        self
    }

    pub fn parameters(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().map(|s| s.0)
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().map(|s| s.1)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("parameter,value\n");
        for &(p, v) in &self.samples {
            let _ = writeln!(s, "{},{}", numfmt::fmt_f64(p), numfmt::fmt_f64(v));
        }
        s
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(numfmt::to_string_pretty(self)?)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }
}

/// Ordinary least squares `y = slope x + intercept`; returns `(slope, intercept, R²)`.
/// A perfectly flat `y` has `R² = 1`.
pub fn least_squares(pts: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let ss_res: f64 = pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    let r2 = if syy > 0.0 { 1.0 - ss_res / syy } else { 1.0 };
    (slope, intercept, r2)
}

/// Log-log slope and `R²` of the samples whose parameter lies in `[lo, hi]`.
pub fn fit_decay_exponent(report: &DecayReport, window: (f64, f64)) -> Result<(f64, f64)> {
    let inside: Vec<(f64, f64)> = report
        .samples
        .iter()
        .copied()
        .filter(|&(p, _)| p >= window.0 && p <= window.1)
        .collect();
    if inside.len() < 3 {
        return invalid(format!("need at least 3 samples in [{}, {}], found {}", window.0, window.1, inside.len()));
    }
    if let Some(&(p, v)) = inside.iter().find(|&&(p, v)| !(p > 0.0 && v > 0.0)) {
        return invalid(format!("nonpositive sample ({p}, {v}) in fit window"));
    }
    let logs: Vec<(f64, f64)> = inside.iter().map(|&(p, v)| (p.ln(), v.ln())).collect();
    let (slope, _, r2) = least_squares(&logs);
    Ok((slope, r2))
}

/// `Θ_σ(T) = inf_{0<R≤T} ρ(R) + (R/T)^σ` over a sampled `ρ`.
///
/// The samples are replaced by their running minimum (the true `ρ` is nonincreasing) and
/// joined linearly. Each linear piece plus the concave `(R/T)^σ` is concave, so the infimum
/// over `[R_min, T]` is attained at a sample or at `R = T`. Beyond the last sample the last
/// value is held.
pub fn compute_theta(rho: &DecayReport, sigma: f64, t: f64) -> Result<f64> {
    if rho.samples.is_empty() {
        return invalid("empty rho report");
    }
    if !(sigma > 0.0 && sigma <= 1.0) {
        return invalid(format!("sigma must lie in (0, 1], got {sigma}"));
    }
    if !(t > 0.0) || !t.is_finite() {
        return invalid("T must be positive");
    }
    let mut env = Vec::with_capacity(rho.samples.len());
    let mut run = f64::INFINITY;
    for &(r, v) in &rho.samples {
        run = run.min(v);
        env.push((r, run));
    }
    let covered = env.iter().filter(|(r, _)| *r > 0.0 && *r <= t).count();
    if covered < 4 {
        return invalid(format!("rho report has {covered} samples in (0, {t}]; at least 4 are required"));
    }
    let mut best = f64::INFINITY;
    for &(r, v) in env.iter().filter(|(r, _)| *r > 0.0 && *r <= t) {
        best = best.min(v + (r / t).powf(sigma));
    }
    // Endpoint R = T.
    let rho_t = match env.iter().position(|(r, _)| *r >= t) {
        Some(0) => env[0].1,
        Some(k) => {
            let (r0, v0) = env[k - 1];
            let (r1, v1) = env[k];
            v0 + (v1 - v0) * (t - r0) / (r1 - r0)
        }
        None => env[env.len() - 1].1,
    };
    Ok(best.min(rho_t + 1.0))
}

/// `Θ_σ` sampled at each `T` in `ts`.
pub fn theta_sigma_report(rho: &DecayReport, sigma: f64, ts: &[f64]) -> Result<DecayReport> {
    let samples = ts
        .iter()
        .map(|&t| Ok((t, compute_theta(rho, sigma, t)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(DecayReport::new(DecayKind::ThetaSigma, samples)?.with_meta("sigma", sigma))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic(f: impl Fn(f64) -> f64, xs: impl Iterator<Item = f64>) -> DecayReport {
        DecayReport::new(DecayKind::Other, xs.map(|x| (x, f(x))).collect()).unwrap()
    }

    fn geometric(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
        (0..n).map(move |k| lo * (hi / lo).powf(k as f64 / (n - 1) as f64))
    }

    #[test]
    fn exact_power_law() {
        let r = synthetic(|x| 3.0 * x.powi(-2), geometric(1.0, 100.0, 9));
        let (e, q) = fit_decay_exponent(&r, (0.0, f64::INFINITY)).unwrap();
        assert!((e + 2.0).abs() < 1e-12 && (q - 1.0).abs() < 1e-12);
    }

    #[test]
    fn log_factor_biases_slope() {
        // Frozen from the synthetic fit on 41 log-spaced samples.
        let up = synthetic(|x| x.ln() / x, geometric(1e2, 1e4, 41));
        let (e, _) = fit_decay_exponent(&up, (1e2, 1e4)).unwrap();
        assert!((e - (-0.851_679_745_142_358_6)).abs() < 1e-9, "{e}");
        let down = synthetic(|x| 1.0 / (x * x.ln()), geometric(1e2, 1e4, 41));
        let (e, _) = fit_decay_exponent(&down, (1e2, 1e4)).unwrap();
        assert!(e > -1.35 && e < -0.95, "{e}");
    }

    #[test]
    fn constant_values_have_zero_exponent() {
        let r = synthetic(|_| 0.7, geometric(1.0, 10.0, 5));
        assert_eq!(fit_decay_exponent(&r, (1.0, 10.0)).unwrap(), (0.0, 1.0));
    }

    #[test]
    fn fit_rejects_bad_windows() {
        let r = synthetic(|x| if x > 5.0 { 0.0 } else { 1.0 }, geometric(1.0, 10.0, 6));
        assert!(fit_decay_exponent(&r, (1.0, 10.0)).is_err());
        assert!(fit_decay_exponent(&r, (1.0, 1.5)).is_err());
    }

    #[test]
    fn report_validation() {
        assert!(DecayReport::new(DecayKind::Rho, vec![(1.0, 1.0), (1.0, 2.0)]).is_err());
        assert!(DecayReport::new(DecayKind::Rho, vec![(1.0, -1.0)]).is_err());
        let r = DecayReport::new(DecayKind::Rho, vec![(2.0, 1.0), (1.0, 2.0)]).unwrap();
        assert_eq!(r.samples[0].0, 1.0);
        assert!(r.to_csv().starts_with("parameter,value\n1.0000000000000000e0,2.0000000000000000e0\n"));
        let back: DecayReport = serde_json::from_str(&r.to_json().unwrap()).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn theta_of_periodic_rho_is_the_ratio_floor() {
        let r = synthetic(|_| 0.0, geometric(1.0, 64.0, 7));
        for t in [64.0, 128.0, 1000.0] {
            let v = compute_theta(&r, 0.5, t).unwrap();
            assert!((v - (1.0 / t).sqrt()).abs() < 1e-15);
        }
    }

    #[test]
    fn theta_of_power_law_rho() {
        // Oracle: inf_R R^{-τ} + R/T = (1+τ) τ^{-τ/(1+τ)} T^{-τ/(1+τ)} at R* = (τT)^{1/(1+τ)}.
        let tau = 1.0;
        let r = synthetic(|x| x.powf(-tau), geometric(1.0, 1e4, 400));
        let mut ts = Vec::new();
        for t in [1e2_f64, 1e3, 1e4] {
            let exact = (1.0 + tau) * tau.powf(-tau / (1.0 + tau)) * t.powf(-tau / (1.0 + tau));
            let v = compute_theta(&r, 1.0, t).unwrap();
            assert!(v >= exact - 1e-12 && v <= exact * 1.001, "T={t}: {v} vs {exact}");
            ts.push((t, v));
        }
        let rep = DecayReport::new(DecayKind::ThetaSigma, ts).unwrap();
        assert!((rep.fitted_exponent.unwrap() + 0.5).abs() < 1e-3);
    }

    #[test]
    fn theta_needs_coverage() {
        let r = synthetic(|x| 1.0 / x, geometric(1.0, 8.0, 4));
        assert!(compute_theta(&r, 1.0, 4.0).is_err());
        assert!(compute_theta(&r, 1.0, 8.0).is_ok());
        assert!(compute_theta(&r, 0.0, 8.0).is_err());
        let empty = DecayReport::new(DecayKind::Rho, vec![]).unwrap();
        assert!(compute_theta(&empty, 1.0, 8.0).is_err());
    }
}
