//! JSON description of coefficient fields.

use serde::{Deserialize, Serialize};

use super::{
    CoefficientTensorField, FieldKind, FrequencyLayout, Interpolation, PeriodicSamples, TensorValue, TorusField,
    TorusTerm, TrigTerm,
};
use crate::error::{invalid, Result};

type Nested = Vec<Vec<Vec<Vec<f64>>>>;

/// A real number written either as a JSON number or as one of the named constants
/// `phi`, `sqrt2`, `sqrt3`, `sqrt5`, `pi`, `e`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Real {
    Number(f64),
    Named(String),
}

impl Real {
    pub fn value(&self) -> Result<f64> {
        match self {
            Real::Number(v) => Ok(*v),
            Real::Named(name) => Ok(match name.as_str() {
                "phi" => (1.0 + 5.0_f64.sqrt()) / 2.0,
                "sqrt2" => std::f64::consts::SQRT_2,
                "sqrt3" => 3.0_f64.sqrt(),
                "sqrt5" => 5.0_f64.sqrt(),
                "pi" => std::f64::consts::PI,
                "e" => std::f64::consts::E,
                other => return invalid(format!("unknown constant {other:?}")),
            }),
        }
    }
}

fn reals(v: &[Real]) -> Result<Vec<f64>> {
    v.iter().map(Real::value).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorTerm {
    pub freq: Vec<Real>,
    #[serde(default)]
    pub cos: Option<Nested>,
    #[serde(default)]
    pub sin: Option<Nested>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalarTerm {
    pub freq: Vec<Real>,
    #[serde(default)]
    pub cos: f64,
    #[serde(default)]
    pub sin: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TorusTensorTerm {
    pub freq: Vec<i64>,
    #[serde(default)]
    pub cos: Option<Nested>,
    #[serde(default)]
    pub sin: Option<Nested>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalarTorusTerm {
    pub freq: Vec<i64>,
    #[serde(default)]
    pub cos: f64,
    #[serde(default)]
    pub sin: f64,
}

/// Field description, tagged by `kind`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldConfig {
    Constant {
        tensor: Nested,
    },
    ScalarConstant {
        d: usize,
        value: f64,
    },
    Trig {
        d: usize,
        m: usize,
        terms: Vec<TensorTerm>,
    },
    ScalarTrig {
        d: usize,
        mean: f64,
        terms: Vec<ScalarTerm>,
    },
    PeriodicSampled {
        period: Vec<f64>,
        cells: Vec<usize>,
        /// Axis-0-fastest list of nested tensors.
        values: Vec<Nested>,
        #[serde(default = "default_order")]
        order: Interpolation,
        #[serde(default)]
        origin: Option<Vec<f64>>,
    },
    QuasiPeriodic {
        directions: Vec<Vec<Real>>,
        #[serde(default)]
        independent: Option<Vec<bool>>,
        d: usize,
        m: usize,
        terms: Vec<TorusTensorTerm>,
    },
    ScalarQuasiPeriodic {
        directions: Vec<Vec<Real>>,
        #[serde(default)]
        independent: Option<Vec<bool>>,
        mean: f64,
        terms: Vec<ScalarTorusTerm>,
    },
}

fn default_order() -> Interpolation {
    Interpolation::Multilinear
}

fn tensor_or_zero(t: &Option<Nested>, d: usize, m: usize) -> Result<TensorValue> {
    match t {
        None => Ok(TensorValue::zeros(d, m)),
        Some(n) => {
            let v = TensorValue::from_nested(n)?;
            if v.d() != d || v.m() != m {
                return invalid(format!("tensor has shape d={}, m={}; expected d={d}, m={m}", v.d(), v.m()));
            }
            Ok(v)
        }
    }
}

fn layout(directions: &[Vec<Real>], independent: &Option<Vec<bool>>) -> Result<FrequencyLayout> {
    let dirs = directions.iter().map(|l| reals(l)).collect::<Result<Vec<_>>>()?;
    let flags = independent.clone().unwrap_or_else(|| vec![true; dirs.len()]);
    FrequencyLayout::new(dirs, flags)
}

impl FieldConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn build(&self) -> Result<CoefficientTensorField> {
        match self {
            FieldConfig::Constant { tensor } => Ok(CoefficientTensorField::constant(TensorValue::from_nested(tensor)?)),
            FieldConfig::ScalarConstant { d, value } => {
                if !value.is_finite() || *d == 0 {
                    return invalid("scalar constant needs d >= 1 and a finite value");
                }
                Ok(CoefficientTensorField::constant(TensorValue::scalar(*d, *value)))
            }
            FieldConfig::Trig { d, m, terms } => {
                let terms = terms
                    .iter()
                    .map(|t| {
                        Ok(TrigTerm {
                            freq: reals(&t.freq)?,
                            cos: tensor_or_zero(&t.cos, *d, *m)?,
                            sin: tensor_or_zero(&t.sin, *d, *m)?,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                CoefficientTensorField::new(FieldKind::TrigPolynomial(terms))
            }
            FieldConfig::ScalarTrig { d, mean, terms } => {
                let terms = terms
                    .iter()
                    .map(|t| Ok((reals(&t.freq)?, t.cos, t.sin)))
                    .collect::<Result<Vec<_>>>()?;
                CoefficientTensorField::scalar_trig(*d, *mean, &terms)
            }
            FieldConfig::PeriodicSampled {
                period,
                cells,
                values,
                order,
                origin,
            } => {
                let values = values
                    .iter()
                    .map(|v| TensorValue::from_nested(v))
                    .collect::<Result<Vec<_>>>()?;
                CoefficientTensorField::new(FieldKind::PeriodicSampled(PeriodicSamples {
                    period: period.clone(),
                    cells: cells.clone(),
                    values,
                    order: *order,
                    origin: origin.clone().unwrap_or_else(|| vec![0.0; cells.len()]),
                }))
            }
            FieldConfig::QuasiPeriodic {
                directions,
                independent,
                d,
                m,
                terms,
            } => {
                let layout = layout(directions, independent)?;
                let terms = terms
                    .iter()
                    .map(|t| {
                        Ok(TorusTerm {
                            freq: t.freq.clone(),
                            cos: tensor_or_zero(&t.cos, *d, *m)?,
                            sin: tensor_or_zero(&t.sin, *d, *m)?,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                let torus = TorusField::new(layout.torus_dim(), terms)?;
                CoefficientTensorField::new(FieldKind::QuasiPeriodic { torus, layout })
            }
            FieldConfig::ScalarQuasiPeriodic {
                directions,
                independent,
                mean,
                terms,
            } => {
                let layout = layout(directions, independent)?;
                let terms: Vec<_> = terms.iter().map(|t| (t.freq.clone(), t.cos, t.sin)).collect();
                CoefficientTensorField::scalar_quasi_periodic(layout, *mean, &terms)
            }
        }
    }
}
