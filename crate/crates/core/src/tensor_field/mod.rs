//! Coefficient tensor fields `y -> A(y)` for divergence-form operators.
//!
//! All trigonometric conventions use the 1-periodic basis `cos(2π k·y)`, `sin(2π k·y)`.
//! A quasi-periodic field is `A(x) = B(<j_λ(x)>)` where `B` is a 1-periodic trigonometric
//! polynomial on the M-torus and `<t>` is the fractional part in `[-1/2, 1/2)`.

mod config;
mod diophantine;
mod ellipticity;
mod value;

pub use config::{FieldConfig, Real, ScalarTerm, ScalarTorusTerm, TensorTerm, TorusTensorTerm};
pub use diophantine::{diophantine_scan, modulus_of_continuity, DiophantineFit};
pub use ellipticity::Ellipticity;
pub use value::TensorValue;

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{invalid, Result};

const TWO_PI: f64 = 2.0 * PI;

/// Fractional part `<t>` taking values in `[-1/2, 1/2)`.
#[inline]
pub fn centered_fract(t: f64) -> f64 {
    t - (t + 0.5).floor()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrigTerm {
    pub freq: Vec<f64>,
    pub cos: TensorValue,
    pub sin: TensorValue,
}

/// Term of a trigonometric polynomial on the M-torus; frequencies are integer vectors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TorusTerm {
    pub freq: Vec<i64>,
    pub cos: TensorValue,
    pub sin: TensorValue,
}

/// A 1-periodic tensor-valued trigonometric polynomial on `R^M`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TorusField {
    dim: usize,
    d: usize,
    m: usize,
    terms: Vec<TorusTerm>,
}

impl TorusField {
    pub fn new(dim: usize, terms: Vec<TorusTerm>) -> Result<Self> {
        let first = terms
            .first()
            .ok_or_else(|| crate::Error::InvalidInput("torus field needs at least one term".into()))?;
        let (d, m) = (first.cos.d(), first.cos.m());
        for t in &terms {
            if t.freq.len() != dim {
                return invalid(format!("torus frequency {:?} is not in Z^{dim}", t.freq));
            }
            if t.cos.d() != d || t.cos.m() != m || t.sin.d() != d || t.sin.m() != m {
                return invalid("torus terms must share tensor shape");
            }
        }
        Ok(Self { dim, d, m, terms })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn terms(&self) -> &[TorusTerm] {
        &self.terms
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.d, self.m)
    }

    #[inline]
    pub fn evaluate_into(&self, t: &[f64], out: &mut TensorValue) {
        out.fill(0.0);
        for term in &self.terms {
            let phase: f64 = term
                .freq
                .iter()
                .zip(t)
                .map(|(&n, &ti)| n as f64 * ti)
                .sum::<f64>();
            if phase == 0.0 && term.freq.iter().all(|&n| n == 0) {
                out.axpy(1.0, &term.cos);
                continue;
            }
            let (s, c) = (TWO_PI * phase).sin_cos();
            out.axpy(c, &term.cos);
            out.axpy(s, &term.sin);
        }
    }

    pub fn evaluate(&self, t: &[f64]) -> TensorValue {
        let mut out = TensorValue::zeros(self.d, self.m);
        self.evaluate_into(t, &mut out);
        out
    }

    fn map_tensors(&self, f: impl Fn(&TensorValue) -> TensorValue) -> Self {
        Self {
            terms: self
                .terms
                .iter()
                .map(|t| TorusTerm {
                    freq: t.freq.clone(),
                    cos: f(&t.cos),
                    sin: f(&t.sin),
                })
                .collect(),
            ..self.clone()
        }
    }

    /// `B(· + s)` as a torus polynomial.
    pub fn shifted(&self, s: &[f64]) -> Self {
        let terms = self
            .terms
            .iter()
            .map(|t| {
                let theta = TWO_PI * t.freq.iter().zip(s).map(|(&n, &v)| n as f64 * v).sum::<f64>();
                shift_term(&t.cos, &t.sin, theta)
            })
            .zip(&self.terms)
            .map(|((cos, sin), t)| TorusTerm {
                freq: t.freq.clone(),
                cos,
                sin,
            })
            .collect();
        Self {
            terms,
            ..self.clone()
        }
    }

    /// Bound on `sup |∂_{t_k} B|` summed over `k`, in the sup-norm over tensor entries.
    pub fn lipschitz_bound_inf(&self) -> f64 {
        entrywise_max(self.d * self.d * self.m * self.m, |e| {
            self.terms
                .iter()
                .map(|t| {
                    let amp = t.cos.entries()[e].hypot(t.sin.entries()[e]);
                    TWO_PI * amp * t.freq.iter().map(|n| n.unsigned_abs() as f64).sum::<f64>()
                })
                .sum()
        })
    }
}

fn entrywise_max(n: usize, f: impl Fn(usize) -> f64) -> f64 {
    (0..n).map(f).fold(0.0, f64::max)
}

/// Rewrites `C cos(φ + θ) + S sin(φ + θ)` as `C' cos φ + S' sin φ`.
fn shift_term(cos: &TensorValue, sin: &TensorValue, theta: f64) -> (TensorValue, TensorValue) {
    let (st, ct) = theta.sin_cos();
    let mut c2 = cos.clone();
    c2.scale(ct);
    c2.axpy(st, sin);
    let mut s2 = sin.clone();
    s2.scale(ct);
    s2.axpy(-st, cos);
    (c2, s2)
}

/// Per-direction frequency lists `λ_i = (λ_i^1, …, λ_i^{m_i})`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrequencyLayout {
    directions: Vec<Vec<f64>>,
    independent: Vec<bool>,
}

impl FrequencyLayout {
    pub fn new(directions: Vec<Vec<f64>>, independent: Vec<bool>) -> Result<Self> {
        if directions.is_empty() {
            return invalid("frequency layout needs at least one direction");
        }
        if independent.len() != directions.len() {
            return invalid("one independence flag per direction");
        }
        for (i, lam) in directions.iter().enumerate() {
            if lam.is_empty() {
                return invalid(format!("direction {i} has no frequencies"));
            }
            if lam.iter().any(|&l| l == 0.0 || !l.is_finite()) {
                return invalid(format!("direction {i} contains a zero or non-finite frequency"));
            }
        }
        Ok(Self {
            directions,
            independent,
        })
    }

    /// Layout with every direction declared rationally independent.
    pub fn independent(directions: Vec<Vec<f64>>) -> Result<Self> {
        let n = directions.len();
        Self::new(directions, vec![true; n])
    }

    pub fn d(&self) -> usize {
        self.directions.len()
    }

    /// `M = Σ m_i`
    pub fn torus_dim(&self) -> usize {
        self.directions.iter().map(Vec::len).sum()
    }

    pub fn direction(&self, i: usize) -> &[f64] {
        &self.directions[i]
    }

    pub fn directions(&self) -> &[Vec<f64>] {
        &self.directions
    }

    pub fn declared_independent(&self, i: usize) -> bool {
        self.independent[i]
    }

    #[inline]
    pub fn embed_into(&self, x: &[f64], t: &mut [f64]) {
        let mut k = 0;
        for (xi, lam) in x.iter().zip(&self.directions) {
            for l in lam {
                t[k] = l * xi;
                k += 1;
            }
        }
    }

    /// `j_λ(x)`
    pub fn embed(&self, x: &[f64]) -> Vec<f64> {
        let mut t = vec![0.0; self.torus_dim()];
        self.embed_into(x, &mut t);
        t
    }

    fn scaled(&self, s: f64) -> Self {
        Self {
            directions: self
                .directions
                .iter()
                .map(|l| l.iter().map(|v| v * s).collect())
                .collect(),
            independent: self.independent.clone(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Interpolation {
    Nearest,
    Multilinear,
}

/// Samples on a periodic node lattice `origin + k * period / cells`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeriodicSamples {
    pub period: Vec<f64>,
    pub cells: Vec<usize>,
    /// Axis-0-fastest ordering.
    pub values: Vec<TensorValue>,
    pub order: Interpolation,
    pub origin: Vec<f64>,
}

impl PeriodicSamples {
    fn value_at(&self, k: &[usize]) -> &TensorValue {
        let mut idx = 0;
        let mut stride = 1;
        for (a, &ka) in k.iter().enumerate() {
            idx += ka * stride;
            stride *= self.cells[a];
        }
        &self.values[idx]
    }

    fn evaluate_into(&self, x: &[f64], out: &mut TensorValue) {
        let d = self.cells.len();
        let mut base = vec![0usize; d];
        let mut frac = vec![0.0; d];
        for a in 0..d {
            let n = self.cells[a] as f64;
            let s = ((x[a] - self.origin[a]) / self.period[a]).rem_euclid(1.0) * n;
            let b = s.floor();
            base[a] = (b as usize) % self.cells[a];
            frac[a] = s - b;
        }
        match self.order {
            Interpolation::Nearest => {
                let k: Vec<usize> = (0..d)
                    .map(|a| {
                        if frac[a] >= 0.5 {
                            (base[a] + 1) % self.cells[a]
                        } else {
                            base[a]
                        }
                    })
                    .collect();
                out.entries_mut().copy_from_slice(self.value_at(&k).entries());
            }
            Interpolation::Multilinear => {
                out.fill(0.0);
                let mut k = vec![0usize; d];
                for corner in 0..(1usize << d) {
                    let mut w = 1.0;
                    for a in 0..d {
                        if corner >> a & 1 == 1 {
                            k[a] = (base[a] + 1) % self.cells[a];
                            w *= frac[a];
                        } else {
                            k[a] = base[a];
                            w *= 1.0 - frac[a];
                        }
                    }
                    if w != 0.0 {
                        out.axpy(w, self.value_at(&k));
                    }
                }
            }
        }
    }

    fn lipschitz_bound(&self) -> f64 {
        if self.order == Interpolation::Nearest {
            return f64::INFINITY;
        }
        let d = self.cells.len();
        let total: usize = self.cells.iter().product();
        let mut bound = 0.0_f64;
        let mut k = vec![0usize; d];
        for idx in 0..total {
            let mut rem = idx;
            for a in 0..d {
                k[a] = rem % self.cells[a];
                rem /= self.cells[a];
            }
            let here = self.value_at(&k).clone();
            let mut sum = 0.0;
            for a in 0..d {
                let mut kn = k.clone();
                kn[a] = (k[a] + 1) % self.cells[a];
                let h = self.period[a] / self.cells[a] as f64;
                sum += here.max_abs_diff(self.value_at(&kn)) / h;
            }
            bound = bound.max(sum);
        }
        bound
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum FieldKind {
    Constant(TensorValue),
    TrigPolynomial(Vec<TrigTerm>),
    PeriodicSampled(PeriodicSamples),
    QuasiPeriodic {
        torus: TorusField,
        layout: FrequencyLayout,
    },
}

/// An evaluatable coefficient field with an optional ellipticity certificate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoefficientTensorField {
    d: usize,
    m: usize,
    kind: FieldKind,
    certificate: Option<Ellipticity>,
}

impl CoefficientTensorField {
    pub fn new(kind: FieldKind) -> Result<Self> {
        let (d, m) = match &kind {
            FieldKind::Constant(t) => (t.d(), t.m()),
            FieldKind::TrigPolynomial(terms) => {
                let first = terms
                    .first()
                    .ok_or_else(|| crate::Error::InvalidInput("trig polynomial needs a term".into()))?;
                let (d, m) = (first.cos.d(), first.cos.m());
                for t in terms {
                    if t.freq.len() != d {
                        return invalid("trig frequency dimension must equal d");
                    }
                    if t.freq.iter().any(|f| !f.is_finite()) {
                        return invalid("trig frequencies must be finite");
                    }
                    if (t.cos.d(), t.cos.m(), t.sin.d(), t.sin.m()) != (d, m, d, m) {
                        return invalid("trig terms must share tensor shape");
                    }
                }
                (d, m)
            }
            FieldKind::PeriodicSampled(s) => {
                let d = s.cells.len();
                if s.period.len() != d || s.origin.len() != d {
                    return invalid("period, origin and cells must have the same length");
                }
                if s.cells.iter().any(|&c| c == 0) || s.period.iter().any(|&p| !(p > 0.0)) {
                    return invalid("periodic samples need positive cells and periods");
                }
                let n: usize = s.cells.iter().product();
                if s.values.len() != n {
                    return invalid(format!("expected {n} samples, got {}", s.values.len()));
                }
                let m = s.values[0].m();
                if s.values.iter().any(|v| v.d() != d || v.m() != m) {
                    return invalid("samples must share tensor shape");
                }
                (d, m)
            }
            FieldKind::QuasiPeriodic { torus, layout } => {
                if torus.dim() != layout.torus_dim() {
                    return invalid(format!(
                        "torus dimension {} does not match layout M = {}",
                        torus.dim(),
                        layout.torus_dim()
                    ));
                }
                let (d, m) = torus.shape();
                if layout.d() != d {
                    return invalid("layout must have one direction per spatial axis");
                }
                (d, m)
            }
        };
        if d == 0 || m == 0 {
            return invalid("d and m must be positive");
        }
        Ok(Self {
            d,
            m,
            kind,
            certificate: None,
        })
    }

    pub fn constant(t: TensorValue) -> Self {
        Self::new(FieldKind::Constant(t)).expect("constant field is well formed")
    }

    /// `a(y) I` with `a(y) = c0 + Σ (c_k cos 2πk·y + s_k sin 2πk·y)`, single component.
    pub fn scalar_trig(d: usize, c0: f64, terms: &[(Vec<f64>, f64, f64)]) -> Result<Self> {
        let id = TensorValue::identity(d, 1);
        let scaled = |s: f64| {
            let mut t = id.clone();
            t.scale(s);
            t
        };
        let mut out = vec![TrigTerm {
            freq: vec![0.0; d],
            cos: scaled(c0),
            sin: TensorValue::zeros(d, 1),
        }];
        for (freq, c, s) in terms {
            out.push(TrigTerm {
                freq: freq.clone(),
                cos: scaled(*c),
                sin: scaled(*s),
            });
        }
        Self::new(FieldKind::TrigPolynomial(out))
    }

    /// `B(j_λ(x)) I` with scalar `B(t) = c0 + Σ (c_n cos 2πn·t + s_n sin 2πn·t)`.
    pub fn scalar_quasi_periodic(layout: FrequencyLayout, c0: f64, terms: &[(Vec<i64>, f64, f64)]) -> Result<Self> {
        let d = layout.d();
        let dim = layout.torus_dim();
        let id = TensorValue::identity(d, 1);
        let scaled = |s: f64| {
            let mut t = id.clone();
            t.scale(s);
            t
        };
        let mut out = vec![TorusTerm {
            freq: vec![0; dim],
            cos: scaled(c0),
            sin: TensorValue::zeros(d, 1),
        }];
        for (freq, c, s) in terms {
            out.push(TorusTerm {
                freq: freq.clone(),
                cos: scaled(*c),
                sin: scaled(*s),
            });
        }
        Self::new(FieldKind::QuasiPeriodic {
            torus: TorusField::new(dim, out)?,
            layout,
        })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn kind(&self) -> &FieldKind {
        &self.kind
    }

    pub fn certificate(&self) -> Option<&Ellipticity> {
        self.certificate.as_ref()
    }

    pub fn with_certificate(mut self, cert: Ellipticity) -> Self {
        self.certificate = Some(cert);
        self
    }

    /// Runs `check_ellipticity` and attaches the certificate.
    pub fn certified(self, sample_count: usize, seed: u64) -> Result<Self> {
        let cert = self.check_ellipticity(sample_count, seed)?;
        Ok(self.with_certificate(cert))
    }

    /// True when every tensor coefficient satisfies `a_ij^{ab} = a_ji^{ba}`.
    pub fn is_symmetric(&self) -> bool {
        match &self.kind {
            FieldKind::Constant(t) => t.is_symmetric(),
            FieldKind::TrigPolynomial(terms) => terms.iter().all(|t| t.cos.is_symmetric() && t.sin.is_symmetric()),
            FieldKind::PeriodicSampled(s) => s.values.iter().all(TensorValue::is_symmetric),
            FieldKind::QuasiPeriodic { torus, .. } => torus
                .terms()
                .iter()
                .all(|t| t.cos.is_symmetric() && t.sin.is_symmetric()),
        }
    }

    /// Period per axis when the field is known to be periodic.
    pub fn period(&self) -> Option<Vec<f64>> {
        match &self.kind {
            FieldKind::Constant(_) => Some(vec![1.0; self.d]),
            FieldKind::TrigPolynomial(terms) => terms
                .iter()
                .all(|t| t.freq.iter().all(|f| (f - f.round()).abs() < 1e-12))
                .then(|| vec![1.0; self.d]),
            FieldKind::PeriodicSampled(s) => Some(s.period.clone()),
            FieldKind::QuasiPeriodic { .. } => None,
        }
    }

    /// Evaluates `A(point)`.
    pub fn evaluate(&self, point: &[f64]) -> Result<TensorValue> {
        if point.len() != self.d {
            return invalid(format!("point has dimension {}, field has d = {}", point.len(), self.d));
        }
        if point.iter().any(|v| !v.is_finite()) {
            return invalid("evaluation point must be finite");
        }
        let mut out = TensorValue::zeros(self.d, self.m);
        self.evaluate_into(point, &mut out);
        Ok(out)
    }

    /// Unchecked evaluation into a preallocated tensor of the right shape.
    #[inline]
    pub fn evaluate_into(&self, point: &[f64], out: &mut TensorValue) {
        debug_assert_eq!(point.len(), self.d);
        match &self.kind {
            FieldKind::Constant(t) => out.entries_mut().copy_from_slice(t.entries()),
            FieldKind::TrigPolynomial(terms) => {
                out.fill(0.0);
                for term in terms {
                    let phase: f64 = term.freq.iter().zip(point).map(|(k, x)| k * x).sum();
                    if term.freq.iter().all(|&k| k == 0.0) {
                        out.axpy(1.0, &term.cos);
                        continue;
                    }
                    let (s, c) = (TWO_PI * phase).sin_cos();
                    out.axpy(c, &term.cos);
                    out.axpy(s, &term.sin);
                }
            }
            FieldKind::PeriodicSampled(s) => s.evaluate_into(point, out),
            FieldKind::QuasiPeriodic { torus, layout } => {
                let mut t = [0.0; 16];
                let dim = layout.torus_dim();
                if dim <= t.len() {
                    layout.embed_into(point, &mut t[..dim]);
                    t[..dim].iter_mut().for_each(|v| *v = centered_fract(*v));
                    torus.evaluate_into(&t[..dim], out);
                } else {
                    let mut t = layout.embed(point);
                    t.iter_mut().for_each(|v| *v = centered_fract(*v));
                    torus.evaluate_into(&t, out);
                }
            }
        }
    }

    /// The adjoint field `A*`, `b_ij^{ab} = a_ji^{ba}`.
    pub fn adjoint(&self) -> Self {
        let kind = match &self.kind {
            FieldKind::Constant(t) => FieldKind::Constant(t.adjoint()),
            FieldKind::TrigPolynomial(terms) => FieldKind::TrigPolynomial(
                terms
                    .iter()
                    .map(|t| TrigTerm {
                        freq: t.freq.clone(),
                        cos: t.cos.adjoint(),
                        sin: t.sin.adjoint(),
                    })
                    .collect(),
            ),
            FieldKind::PeriodicSampled(s) => FieldKind::PeriodicSampled(PeriodicSamples {
                values: s.values.iter().map(TensorValue::adjoint).collect(),
                ..s.clone()
            }),
            FieldKind::QuasiPeriodic { torus, layout } => FieldKind::QuasiPeriodic {
                torus: torus.map_tensors(TensorValue::adjoint),
                layout: layout.clone(),
            },
        };
        // The symmetric part is unchanged, so the certificate carries over.
        Self { kind, ..self.clone() }
    }

    /// The translate `x -> A(x + shift)`, in closed form.
    pub fn translated(&self, shift: &[f64]) -> Result<Self> {
        if shift.len() != self.d || shift.iter().any(|v| !v.is_finite()) {
            return invalid("shift must be a finite vector of dimension d");
        }
        let kind = match &self.kind {
            FieldKind::Constant(t) => FieldKind::Constant(t.clone()),
            FieldKind::TrigPolynomial(terms) => FieldKind::TrigPolynomial(
                terms
                    .iter()
                    .map(|t| {
                        let theta = TWO_PI * t.freq.iter().zip(shift).map(|(k, y)| k * y).sum::<f64>();
                        let (cos, sin) = shift_term(&t.cos, &t.sin, theta);
                        TrigTerm {
                            freq: t.freq.clone(),
                            cos,
                            sin,
                        }
                    })
                    .collect(),
            ),
            FieldKind::PeriodicSampled(s) => FieldKind::PeriodicSampled(PeriodicSamples {
                origin: s.origin.iter().zip(shift).map(|(o, y)| o - y).collect(),
                ..s.clone()
            }),
            FieldKind::QuasiPeriodic { torus, layout } => FieldKind::QuasiPeriodic {
                torus: torus.shifted(&layout.embed(shift)),
                layout: layout.clone(),
            },
        };
        Ok(Self { kind, ..self.clone() })
    }

    /// The oscillating field `x -> A(x / eps)`.
    pub fn rescaled(&self, eps: f64) -> Result<Self> {
        if !(eps > 0.0) || !eps.is_finite() {
            return invalid("eps must be positive");
        }
        let inv = 1.0 / eps;
        let kind = match &self.kind {
            FieldKind::Constant(t) => FieldKind::Constant(t.clone()),
            FieldKind::TrigPolynomial(terms) => FieldKind::TrigPolynomial(
                terms
                    .iter()
                    .map(|t| TrigTerm {
                        freq: t.freq.iter().map(|k| k * inv).collect(),
                        ..t.clone()
                    })
                    .collect(),
            ),
            FieldKind::PeriodicSampled(s) => FieldKind::PeriodicSampled(PeriodicSamples {
                period: s.period.iter().map(|p| p * eps).collect(),
                origin: s.origin.iter().map(|o| o * eps).collect(),
                ..s.clone()
            }),
            FieldKind::QuasiPeriodic { torus, layout } => FieldKind::QuasiPeriodic {
                torus: torus.clone(),
                layout: layout.scaled(inv),
            },
        };
        Ok(Self { kind, ..self.clone() })
    }

    /// Bound on the Euclidean Lipschitz constant of `x -> A(x)` in the entrywise sup-norm.
    pub fn lipschitz_bound(&self) -> f64 {
        let n = self.d * self.d * self.m * self.m;
        match &self.kind {
            FieldKind::Constant(_) => 0.0,
            FieldKind::TrigPolynomial(terms) => entrywise_max(n, |e| {
                terms
                    .iter()
                    .map(|t| {
                        let k = t.freq.iter().map(|f| f * f).sum::<f64>().sqrt();
                        TWO_PI * k * t.cos.entries()[e].hypot(t.sin.entries()[e])
                    })
                    .sum()
            }),
            FieldKind::PeriodicSampled(s) => s.lipschitz_bound(),
            FieldKind::QuasiPeriodic { torus, layout } => entrywise_max(n, |e| {
                torus
                    .terms()
                    .iter()
                    .map(|t| {
                        let mut offset = 0;
                        let mut k2 = 0.0;
                        for lam in layout.directions() {
                            let ki: f64 = lam
                                .iter()
                                .enumerate()
                                .map(|(c, l)| t.freq[offset + c] as f64 * l)
                                .sum();
                            k2 += ki * ki;
                            offset += lam.len();
                        }
                        TWO_PI * k2.sqrt() * t.cos.entries()[e].hypot(t.sin.entries()[e])
                    })
                    .sum()
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn golden() -> f64 {
        (1.0 + 5.0_f64.sqrt()) / 2.0
    }

    fn periodic_1d() -> CoefficientTensorField {
        CoefficientTensorField::scalar_trig(1, 2.0, &[(vec![1.0], 0.0, 1.0)]).unwrap()
    }

    /// `2 + cos(2π t1) cos(2π t2)` expanded into integer-frequency cosines.
    fn product_torus(layout: FrequencyLayout) -> CoefficientTensorField {
        CoefficientTensorField::scalar_quasi_periodic(layout, 2.0, &[(vec![1, 1], 0.5, 0.0), (vec![1, -1], 0.5, 0.0)])
            .unwrap()
    }

    #[test]
    fn constant_identity_evaluates_to_identity() {
        let f = CoefficientTensorField::constant(TensorValue::identity(2, 2));
        assert_eq!(f.evaluate(&[0.3, -7.0]).unwrap(), TensorValue::identity(2, 2));
    }

    #[test]
    fn trig_quarter_point() {
        let v = periodic_1d().evaluate(&[0.25]).unwrap();
        assert!((v.get(0, 0, 0, 0) - 3.0).abs() < 1e-15);
    }

    #[test]
    fn quasi_periodic_at_origin() {
        let layout = FrequencyLayout::independent(vec![vec![1.0, golden()]]).unwrap();
        let v = product_torus(layout).evaluate(&[0.0]).unwrap();
        assert!((v.get(0, 0, 0, 0) - 3.0).abs() < 1e-15);
    }

    #[test]
    fn non_finite_point_is_rejected() {
        assert!(periodic_1d().evaluate(&[f64::NAN]).is_err());
        assert!(periodic_1d().evaluate(&[0.0, 1.0]).is_err());
    }

    #[test]
    fn quasi_periodic_invariant_under_integer_torus_shifts() {
        // λ = (1, 1/2): x -> x + 2 shifts j_λ(x) by (2, 1).
        let layout = FrequencyLayout::new(vec![vec![1.0, 0.5]], vec![false]).unwrap();
        let f = product_torus(layout);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let x: f64 = rng.random_range(-50.0..50.0);
            let a = f.evaluate(&[x]).unwrap();
            let b = f.evaluate(&[x + 2.0]).unwrap();
            assert!(a.max_abs_diff(&b) < 1e-12);
        }
    }

    #[test]
    fn adjoint_is_an_involution_on_random_points() {
        let mut c = TensorValue::identity(2, 1);
        c.set(0, 1, 0, 0, 0.3);
        let mut s = TensorValue::zeros(2, 1);
        s.set(1, 0, 0, 0, 0.2);
        let f = CoefficientTensorField::new(FieldKind::TrigPolynomial(vec![
            TrigTerm {
                freq: vec![0.0, 0.0],
                cos: TensorValue::scalar(2, 2.0),
                sin: TensorValue::zeros(2, 1),
            },
            TrigTerm {
                freq: vec![1.0, 2.0],
                cos: c,
                sin: s,
            },
        ]))
        .unwrap();
        let ff = f.adjoint().adjoint();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let y = [rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)];
            let a = f.evaluate(&y).unwrap();
            assert!(a.max_abs_diff(&ff.evaluate(&y).unwrap()) < 1e-15);
            assert!(f.adjoint().evaluate(&y).unwrap().max_abs_diff(&a.adjoint()) < 1e-15);
        }
    }

    #[test]
    fn symmetric_field_adjoint_evaluates_identically() {
        let f = periodic_1d();
        let g = f.adjoint();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let y = [rng.random_range(-10.0..10.0)];
            assert_eq!(f.evaluate(&y).unwrap(), g.evaluate(&y).unwrap());
        }
    }

    #[test]
    fn translation_matches_shifted_evaluation() {
        let layout = FrequencyLayout::independent(vec![vec![1.0, golden()]]).unwrap();
        for f in [periodic_1d(), product_torus(layout)] {
            let shift = [3.7];
            let g = f.translated(&shift).unwrap();
            for x in [-2.0, 0.1, 5.5] {
                let a = f.evaluate(&[x + shift[0]]).unwrap();
                assert!(a.max_abs_diff(&g.evaluate(&[x]).unwrap()) < 1e-12);
            }
        }
    }

    #[test]
    fn rescaling_evaluates_at_x_over_eps() {
        let f = periodic_1d();
        let g = f.rescaled(0.125).unwrap();
        for x in [0.01, 0.3, 0.77] {
            let a = f.evaluate(&[x / 0.125]).unwrap();
            assert!(a.max_abs_diff(&g.evaluate(&[x]).unwrap()) < 1e-12);
        }
    }

    #[test]
    fn periodic_samples_interpolate_linearly_and_wrap() {
        let values = [1.0, 2.0, 4.0, 3.0].iter().map(|&v| TensorValue::scalar(1, v)).collect();
        let f = CoefficientTensorField::new(FieldKind::PeriodicSampled(PeriodicSamples {
            period: vec![1.0],
            cells: vec![4],
            values,
            order: Interpolation::Multilinear,
            origin: vec![0.0],
        }))
        .unwrap();
        let at = |x: f64| f.evaluate(&[x]).unwrap().get(0, 0, 0, 0);
        assert!((at(0.125) - 1.5).abs() < 1e-14);
        assert!((at(0.875) - 2.0).abs() < 1e-14);
        assert!((at(1.125) - 1.5).abs() < 1e-14);
        assert_eq!(f.period(), Some(vec![1.0]));
        assert!((f.lipschitz_bound() - 8.0).abs() < 1e-12);
    }

    #[test]
    fn period_detection() {
        assert_eq!(periodic_1d().period(), Some(vec![1.0]));
        let qp = CoefficientTensorField::scalar_trig(1, 2.0, &[(vec![golden()], 0.5, 0.0)]).unwrap();
        assert_eq!(qp.period(), None);
    }

    #[test]
    fn centered_fract_range() {
        assert_eq!(centered_fract(0.5), -0.5);
        assert_eq!(centered_fract(-0.5), -0.5);
        assert!((centered_fract(1.25) - 0.25).abs() < 1e-15);
        assert!((centered_fract(-0.75) - 0.25).abs() < 1e-15);
    }
}
