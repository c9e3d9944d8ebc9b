//! Manifest schema and validation.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use homlab::ap_metrics::{BallNorm, RhoBudget};
use homlab::corrector::ProtocolChoice;
use homlab::experiments::Recipe;
use homlab::fd_solver::{SolveOptions, Window};
use homlab::tensor_field::{CoefficientTensorField, FieldConfig, Real};

use crate::error::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Corrector,
    Homogenize,
    Rho,
    Theta,
    Discrepancy,
    Rate,
    Holder,
    Flux,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Corrector => "corrector",
            Command::Homogenize => "homogenize",
            Command::Rho => "rho",
            Command::Theta => "theta",
            Command::Discrepancy => "discrepancy",
            Command::Rate => "rate",
            Command::Holder => "holder",
            Command::Flux => "flux",
        }
    }

    fn needs_field(self) -> bool {
        self != Command::Discrepancy
    }
}

fn default_certificate_samples() -> usize {
    4096
}

/// Top level of a manifest file.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawManifest {
    pub command: Command,
    pub seed: u64,
    #[serde(default)]
    pub field: Option<FieldConfig>,
    /// Samples for the ellipticity certificate of `field`.
    #[serde(default = "default_certificate_samples")]
    pub certificate_samples: usize,
    #[serde(default)]
    pub params: Value,
    /// Output directory, relative to the working directory.
    #[serde(default)]
    pub output: Option<String>,
}

fn default_buffer() -> f64 {
    6.0
}

fn default_flux_margin() -> f64 {
    2.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorrectorParams {
    /// Ladder of screening lengths.
    pub t: Vec<f64>,
    pub h: f64,
    #[serde(default = "default_buffer")]
    pub buffer: f64,
    #[serde(default)]
    pub center: Option<Vec<f64>>,
    #[serde(default)]
    pub protocol: ProtocolChoice,
    #[serde(default = "default_flux_margin")]
    pub flux_margin: f64,
    #[serde(default)]
    pub solve: SolveOptions,
    /// Hölder exponent for the scaling report.
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    #[serde(default = "default_pair_budget")]
    pub pair_budget: usize,
    /// Also write `χ_T` on the window as CSV.
    #[serde(default)]
    pub write_fields: bool,
}

fn default_sigma() -> f64 {
    0.5
}

fn default_pair_budget() -> usize {
    1 << 16
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RhoParams {
    pub radii: Vec<f64>,
    #[serde(default)]
    pub budget: RhoBudget,
    #[serde(default = "default_norm")]
    pub norm: BallNorm,
}

fn default_norm() -> BallNorm {
    BallNorm::Infinity
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoveringParams {
    pub radii: Vec<usize>,
    #[serde(default = "default_ell")]
    pub ell: usize,
}

fn default_ell() -> usize {
    8
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThetaParams {
    pub rho: RhoParams,
    pub sigma: Vec<f64>,
    pub t: Vec<f64>,
    /// Kronecker covering radii `θ_λ(R)`; quasi-periodic fields only.
    #[serde(default)]
    pub covering: Option<CoveringParams>,
    /// Shell bound for the Diophantine scan; quasi-periodic fields only.
    #[serde(default)]
    pub diophantine_n_max: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PointsConfig {
    /// `{(<i/N>, <iα>)}`
    Lattice { alpha: Real },
    /// Uniform points from the manifest seed.
    Random { dim: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscrepancyParams {
    pub points: PointsConfig,
    pub n: Vec<usize>,
    pub h: Vec<usize>,
    #[serde(default)]
    pub etk_constant: Option<f64>,
}

fn default_domain() -> Window {
    Window::new(vec![0.0], vec![1.0]).expect("unit interval")
}

fn default_source() -> Recipe {
    Recipe::Constant { value: 1.0 }
}

fn default_boundary() -> Recipe {
    Recipe::Constant { value: 0.0 }
}

fn default_cells_per_eps() -> usize {
    32
}

fn default_corrector_h() -> f64 {
    1.0 / 64.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LadderParams {
    pub eps: Vec<f64>,
    /// Unit box of the field's dimension by default.
    #[serde(default)]
    pub domain: Option<Window>,
    #[serde(default = "default_source")]
    pub source: Recipe,
    #[serde(default = "default_boundary")]
    pub boundary: Recipe,
    #[serde(default = "default_cells_per_eps")]
    pub cells_per_eps: usize,
    #[serde(default = "default_corrector_h")]
    pub corrector_h: f64,
    #[serde(default = "default_buffer")]
    pub buffer: f64,
    #[serde(default)]
    pub boundary_corrector: bool,
    #[serde(default = "default_ladder_sigma")]
    pub sigma: f64,
    /// `ρ` sampling for the bound column.
    #[serde(default)]
    pub rho: Option<RhoParams>,
    #[serde(default)]
    pub solve: SolveOptions,
    /// `holder` only.
    #[serde(default = "default_pair_budget")]
    pub pair_budget: usize,
}

fn default_ladder_sigma() -> f64 {
    0.25
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FluxParams {
    pub t: Vec<f64>,
    pub h: f64,
    #[serde(default = "default_buffer")]
    pub buffer: f64,
    #[serde(default)]
    pub center: Option<Vec<f64>>,
    #[serde(default)]
    pub protocol: ProtocolChoice,
    #[serde(default = "default_flux_margin")]
    pub flux_margin: f64,
    #[serde(default)]
    pub solve: SolveOptions,
    /// `ρ` sampling for the `Θ_1`, `Θ_{1/2}` columns.
    #[serde(default)]
    pub rho: Option<RhoParams>,
}

#[derive(Clone, Debug)]
pub enum Params {
    Corrector(CorrectorParams),
    Homogenize(CorrectorParams),
    Rho(RhoParams),
    Theta(ThetaParams),
    Discrepancy(DiscrepancyParams),
    Rate(LadderParams),
    Holder(LadderParams),
    Flux(FluxParams),
}

/// A validated manifest.
#[derive(Clone, Debug)]
pub struct Manifest {
    pub command: Command,
    pub seed: u64,
    pub field: Option<CoefficientTensorField>,
    pub params: Params,
    pub output: Option<String>,
    /// The manifest as read, without `output`.
    pub canonical: Value,
    pub sha256: String,
}

fn schema(msg: impl std::fmt::Display) -> CliError {
    CliError::Schema(msg.to_string())
}

fn typed<T: for<'de> Deserialize<'de>>(v: &Value) -> Result<T, CliError> {
    serde_json::from_value(v.clone()).map_err(|e| schema(format!("params: {e}")))
}

fn positive(name: &str, v: &[f64]) -> Result<(), CliError> {
    if v.is_empty() || v.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
        return Err(schema(format!("{name} must be a nonempty list of positive numbers")));
    }
    Ok(())
}

/// `sha256` of the compact JSON text of `v`; maps serialize with sorted keys.
pub fn digest(v: &Value) -> String {
    let text = serde_json::to_string(v).expect("json value serializes");
    Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

impl Manifest {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let value: Value = serde_json::from_str(text).map_err(|e| schema(format!("manifest is not JSON: {e}")))?;
        Self::from_value(value)
    }

    /// Parses and validates everything that can be checked without computing.
    pub fn from_value(mut value: Value) -> Result<Self, CliError> {
        let raw: RawManifest = serde_json::from_value(value.clone()).map_err(schema)?;
        if let Some(obj) = value.as_object_mut() {
            obj.remove("output");
        }
        let field = match (&raw.field, raw.command.needs_field()) {
            (Some(cfg), true) => {
                let f = cfg.build().map_err(schema)?;
                Some(f.certified(raw.certificate_samples.max(1), raw.seed).map_err(schema)?)
            }
            (None, true) => return Err(schema(format!("command {} needs a field", raw.command.name()))),
            (_, false) => None,
        };
        let p = &raw.params;
        let params = match raw.command {
            Command::Corrector | Command::Homogenize => {
                let c: CorrectorParams = typed(p)?;
                positive("t", &c.t)?;
                positive("h", &[c.h])?;
                if raw.command == Command::Corrector && !(c.sigma > 0.0 && c.sigma < 1.0) {
                    return Err(schema("sigma must lie in (0, 1)"));
                }
                if raw.command == Command::Corrector {
                    Params::Corrector(c)
                } else {
                    Params::Homogenize(c)
                }
            }
            Command::Rho => {
                let r: RhoParams = typed(p)?;
                positive("radii", &r.radii)?;
                Params::Rho(r)
            }
            Command::Theta => {
                let t: ThetaParams = typed(p)?;
                positive("rho.radii", &t.rho.radii)?;
                positive("t", &t.t)?;
                positive("sigma", &t.sigma)?;
                Params::Theta(t)
            }
            Command::Discrepancy => {
                let d: DiscrepancyParams = typed(p)?;
                if d.n.is_empty() || d.n.contains(&0) || d.h.is_empty() || d.h.contains(&0) {
                    return Err(schema("n and h must be nonempty lists of positive integers"));
                }
                if let PointsConfig::Lattice { alpha } = &d.points {
                    alpha.value().map_err(schema)?;
                }
                Params::Discrepancy(d)
            }
            Command::Rate | Command::Holder => {
                let l: LadderParams = typed(p)?;
                positive("eps", &l.eps)?;
                if l.eps.len() < 4 {
                    return Err(schema("eps ladders need at least four values"));
                }
                if let Some(r) = &l.rho {
                    positive("rho.radii", &r.radii)?;
                }
                if raw.command == Command::Rate {
                    Params::Rate(l)
                } else {
                    Params::Holder(l)
                }
            }
            Command::Flux => {
                let f: FluxParams = typed(p)?;
                positive("t", &f.t)?;
                positive("h", &[f.h])?;
                Params::Flux(f)
            }
        };
        let sha256 = digest(&value);
        Ok(Self {
            command: raw.command,
            seed: raw.seed,
            field,
            params,
            output: raw.output,
            canonical: value,
            sha256,
        })
    }

    pub fn field(&self) -> &CoefficientTensorField {
        self.field.as_ref().expect("validated manifests carry a field when the command needs one")
    }

    pub fn with_seed(&self, seed: u64) -> Result<Self, CliError> {
        let mut v = self.canonical.clone();
        v["seed"] = Value::from(seed);
        Self::from_value(v)
    }

    pub fn default_domain(&self) -> Window {
        match &self.field {
            Some(f) => Window::new(vec![0.0; f.d()], vec![1.0; f.d()]).expect("unit box"),
            None => default_domain(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const HOMOGENIZE: &str = r#"{
        "command": "homogenize",
        "seed": 7,
        "field": {"kind": "scalar_trig", "d": 1, "mean": 2.0, "terms": [{"freq": [1.0], "sin": 1.0}]},
        "params": {"t": [64.0], "h": 0.00390625}
    }"#;

    #[test]
    fn parses_and_hashes_without_output() {
        let a = Manifest::from_json(HOMOGENIZE).unwrap();
        let mut v: Value = serde_json::from_str(HOMOGENIZE).unwrap();
        v["output"] = Value::from("elsewhere");
        let b = Manifest::from_value(v).unwrap();
        assert_eq!(a.sha256, b.sha256);
        assert_eq!(a.sha256.len(), 64);
        assert!(a.field().certificate().is_some());
    }

    #[test]
    fn missing_seed_is_a_schema_error() {
        let mut v: Value = serde_json::from_str(HOMOGENIZE).unwrap();
        v.as_object_mut().unwrap().remove("seed");
        assert!(matches!(Manifest::from_value(v), Err(CliError::Schema(_))));
    }

    #[test]
    fn unknown_params_are_rejected() {
        let mut v: Value = serde_json::from_str(HOMOGENIZE).unwrap();
        v["params"]["tee"] = Value::from(1.0);
        assert!(matches!(Manifest::from_value(v), Err(CliError::Schema(_))));
    }

    #[test]
    fn field_is_required() {
        let mut v: Value = serde_json::from_str(HOMOGENIZE).unwrap();
        v.as_object_mut().unwrap().remove("field");
        assert!(matches!(Manifest::from_value(v), Err(CliError::Schema(_))));
    }
}
