//! One function per manifest command.

use serde::Serialize;
use serde_json::json;

use homlab::ap_metrics::{
    compute_theta, discrepancy_exact, etk_bound_with, rho_report, theta_layout, theta_sigma_report, DecayKind,
    DecayReport, PointSet, DEFAULT_ETK_CONSTANT,
};
use homlab::corrector::{
    corrector_scalings, energy_identity_residual, flux_tensor, gradient_cauchy_decay, homogenized_matrix,
    reference_matrix_1d, solve_corrector, solve_flux_corrector, CorrectorConfig, CorrectorSet, EnergyResidual,
    HomogenizedMatrix,
};
use homlab::experiments::{holder_uniformity, rate_experiment, LadderConfig};
use homlab::numfmt::fmt_f64;
use homlab::tensor_field::{diophantine_scan, CoefficientTensorField, DiophantineFit, FieldKind};

use crate::error::CliError;
use crate::manifest::{
    CorrectorParams, DiscrepancyParams, FluxParams, LadderParams, Manifest, Params, PointsConfig, RhoParams,
    ThetaParams,
};
use crate::output::Sink;

type Out = Result<(), CliError>;

pub fn run(m: &Manifest, sink: &mut Sink) -> Out {
    match &m.params {
        Params::Corrector(p) => corrector(m, p, sink),
        Params::Homogenize(p) => homogenize(m, p, sink),
        Params::Rho(p) => {
            let r = rho(m.field(), p, m.seed)?;
            sink.json("rho.json", &r, &format!("rho at {} radii", r.samples.len()))?;
            sink.csv("rho.csv", &r.to_csv(), "rho samples")
        }
        Params::Theta(p) => theta(m, p, sink),
        Params::Discrepancy(p) => discrepancy(m, p, sink),
        Params::Rate(p) => rate(m, p, sink),
        Params::Holder(p) => holder(m, p, sink),
        Params::Flux(p) => flux(m, p, sink),
    }
}

fn rho(field: &CoefficientTensorField, p: &RhoParams, seed: u64) -> Result<DecayReport, CliError> {
    Ok(rho_report(field, &p.radii, &p.budget, p.norm, seed)?)
}

fn tag(t: f64) -> String {
    if t.fract() == 0.0 && t.abs() < 1e15 {
        format!("{}", t as i64)
    } else {
        format!("{t}")
    }
}

fn corrector_config(p: &CorrectorParams, t: f64) -> CorrectorConfig {
    CorrectorConfig {
        t,
        h: p.h,
        buffer: p.buffer,
        center: p.center.clone(),
        protocol: p.protocol,
        flux_margin: p.flux_margin,
        solve: p.solve,
    }
}

fn is_dyadic(ts: &[f64]) -> bool {
    ts.len() >= 2 && ts.windows(2).all(|w| (w[1] - 2.0 * w[0]).abs() <= 1e-12 * w[1])
}

fn corrector(m: &Manifest, p: &CorrectorParams, sink: &mut Sink) -> Out {
    let field = m.field();
    let mut sets: Vec<CorrectorSet> = Vec::new();
    for &t in &p.t {
        let set = solve_corrector(field, &corrector_config(p, t))?;
        let s = set.summary();
        sink.json(
            &format!("corrector_T{}.json", tag(t)),
            &s,
            &format!("T = {t}, sup |chi| = {}", fmt_f64(set.sup_norm())),
        )?;
        if p.write_fields {
            for j in 0..set.d() {
                for beta in 0..set.m() {
                    sink.csv(
                        &format!("chi_T{}_j{j}_b{beta}.csv", tag(t)),
                        &set.window_chi(j, beta)?.to_csv(),
                        "corrector on the window",
                    )?;
                }
            }
        }
        sets.push(set);
    }
    if sets.len() >= 3 {
        let s = corrector_scalings(&sets, p.sigma, p.pair_budget)?;
        sink.json("scalings.json", &s, "sup, Hölder and gradient scalings")?;
        sink.csv("sup_over_t.csv", &s.sup_over_t.to_csv(), "T^-1 sup |chi|")?;
    }
    if is_dyadic(&p.t) {
        let r = gradient_cauchy_decay(&sets)?;
        sink.json("gradient_cauchy.json", &r, "dyadic gradient differences")?;
        sink.csv("gradient_cauchy.csv", &r.to_csv(), "dyadic gradient differences")?;
    }
    Ok(())
}

#[derive(Serialize)]
struct HomogenizeRow {
    t: f64,
    a_hat: HomogenizedMatrix,
    energy_residuals: Vec<EnergyResidual>,
    corrector: homlab::corrector::CorrectorSummary,
}

#[derive(Serialize)]
struct HomogenizeReport {
    rows: Vec<HomogenizeRow>,
    /// Harmonic mean for one-dimensional fields.
    reference: Option<HomogenizedMatrix>,
}

fn homogenize(m: &Manifest, p: &CorrectorParams, sink: &mut Sink) -> Out {
    let field = m.field();
    let mut rows = Vec::new();
    for &t in &p.t {
        let set = solve_corrector(field, &corrector_config(p, t))?;
        rows.push(HomogenizeRow {
            t,
            a_hat: homogenized_matrix(field, &set)?,
            energy_residuals: energy_identity_residual(field, &set)?,
            corrector: set.summary(),
        });
    }
    let reference = if field.d() == 1 && field.m() == 1 {
        let length = field.period().map_or(4096.0, |q| q[0]);
        Some(reference_matrix_1d(field, length, ((length * 4096.0) as usize).max(4096))?)
    } else {
        None
    };
    let last = rows.last().map(|r| r.a_hat.get(0, 0, 0, 0)).unwrap_or(f64::NAN);
    let report = HomogenizeReport { rows, reference };
    sink.json("homogenize.json", &report, &format!("a_hat[0][0] = {}", fmt_f64(last)))
}

fn layout_of(field: &CoefficientTensorField) -> Option<&homlab::tensor_field::FrequencyLayout> {
    match field.kind() {
        FieldKind::QuasiPeriodic { layout, .. } => Some(layout),
        _ => None,
    }
}

#[derive(Serialize)]
struct ThetaReport {
    rho: DecayReport,
    theta_sigma: Vec<DecayReport>,
    covering: Option<DecayReport>,
    diophantine: Vec<DiophantineFit>,
}

fn theta(m: &Manifest, p: &ThetaParams, sink: &mut Sink) -> Out {
    let field = m.field();
    let rho = rho(field, &p.rho, m.seed)?;
    let theta_sigma = p
        .sigma
        .iter()
        .map(|&s| Ok(theta_sigma_report(&rho, s, &p.t)?.with_meta("sigma", s)))
        .collect::<Result<Vec<_>, CliError>>()?;
    let layout = layout_of(field);
    let covering = match (&p.covering, layout) {
        (Some(c), Some(l)) => {
            let samples = c
                .radii
                .iter()
                .map(|&r| Ok((r as f64, theta_layout(l, r, c.ell)?.value)))
                .collect::<Result<Vec<_>, CliError>>()?;
            Some(DecayReport::new(DecayKind::Theta, samples)?.with_meta("ell", c.ell))
        }
        (Some(_), None) => return Err(CliError::Compute("covering radii need a quasi-periodic field".into())),
        _ => None,
    };
    let diophantine = match (p.diophantine_n_max, layout) {
        (Some(n), Some(l)) => l
            .directions()
            .iter()
            .filter(|lam| lam.len() >= 2)
            .map(|lam| diophantine_scan(lam, n))
            .collect::<Result<Vec<_>, _>>()?,
        (Some(_), None) => return Err(CliError::Compute("the Diophantine scan needs a quasi-periodic field".into())),
        _ => Vec::new(),
    };
    sink.csv("rho.csv", &rho.to_csv(), "rho samples")?;
    for (s, r) in p.sigma.iter().zip(&theta_sigma) {
        sink.csv(&format!("theta_sigma_{}.csv", tag(*s)), &r.to_csv(), "Theta_sigma(T)")?;
    }
    if let Some(c) = &covering {
        sink.csv("covering.csv", &c.to_csv(), "theta_lambda(R)")?;
    }
    let report = ThetaReport {
        rho,
        theta_sigma,
        covering,
        diophantine,
    };
    sink.json("theta.json", &report, "rho, Theta_sigma and covering radii")
}

#[derive(Serialize)]
struct DiscrepancyRow {
    n: usize,
    exact: f64,
    /// `(H, bound)`
    etk: Vec<(usize, f64)>,
}

fn discrepancy(m: &Manifest, p: &DiscrepancyParams, sink: &mut Sink) -> Out {
    let c = p.etk_constant.unwrap_or(DEFAULT_ETK_CONSTANT);
    let mut rows = Vec::new();
    for &n in &p.n {
        let pts = match &p.points {
            PointsConfig::Lattice { alpha } => {
                PointSet::kronecker_lattice(n, alpha.value().map_err(|e| CliError::Schema(e.to_string()))?)?
            }
            PointsConfig::Random { dim } => PointSet::random(*dim, n, m.seed)?,
        };
        let exact = discrepancy_exact(&pts)?;
        let etk = p
            .h
            .iter()
            .map(|&h| Ok((h, etk_bound_with(&pts, h, c)?)))
            .collect::<Result<Vec<_>, CliError>>()?;
        rows.push(DiscrepancyRow { n, exact, etk });
    }
    let mut csv = String::from("n,exact");
    for h in &p.h {
        csv += &format!(",etk_h{h}");
    }
    csv.push('\n');
    for r in &rows {
        csv += &format!("{},{}", r.n, fmt_f64(r.exact));
        for (_, b) in &r.etk {
            csv += &format!(",{}", fmt_f64(*b));
        }
        csv.push('\n');
    }
    let dominated = rows.iter().all(|r| r.etk.iter().all(|(_, b)| r.exact <= *b));
    sink.csv("discrepancy.csv", &csv, "exact discrepancy and ETK bounds")?;
    sink.json(
        "discrepancy.json",
        &json!({ "etk_constant": c, "rows": rows, "bound_dominates": dominated }),
        &format!("bound dominates exact values: {dominated}"),
    )
}

fn ladder(m: &Manifest, p: &LadderParams) -> Result<LadderConfig, CliError> {
    let field = m.field().clone();
    let rho = match &p.rho {
        Some(r) => Some(rho(&field, r, m.seed)?),
        None => None,
    };
    let mut cfg = LadderConfig::new(field, p.eps.clone());
    cfg.domain = p.domain.clone().unwrap_or_else(|| m.default_domain());
    cfg.source = p.source.clone();
    cfg.boundary = p.boundary.clone();
    cfg.cells_per_eps = p.cells_per_eps;
    cfg.corrector_h = p.corrector_h;
    cfg.buffer = p.buffer;
    cfg.with_boundary_corrector = p.boundary_corrector;
    cfg.sigma = p.sigma;
    cfg.rho = rho;
    cfg.solve = p.solve;
    Ok(cfg)
}

fn rate(m: &Manifest, p: &LadderParams, sink: &mut Sink) -> Out {
    let r = rate_experiment(&ladder(m, p)?)?;
    sink.csv("rate.csv", &r.to_csv(), "errors per eps")?;
    let slope = r.l2_plain.fitted_exponent.map_or("none".to_string(), fmt_f64);
    let summary = if r.floor_limited {
        "floor-limited".to_string()
    } else {
        format!("L2 slope {slope}")
    };
    sink.json("rate.json", &r, &summary)
}

fn holder(m: &Manifest, p: &LadderParams, sink: &mut Sink) -> Out {
    let r = holder_uniformity(&ladder(m, p)?, 0.5, p.pair_budget)?;
    let mut csv = String::from("eps,seminorm,difference_seminorm\n");
    for row in &r.rows {
        csv += &format!("{},{},{}\n", fmt_f64(row.eps), fmt_f64(row.seminorm), fmt_f64(row.difference_seminorm));
    }
    sink.csv("holder.csv", &csv, "interior C^1/2 seminorms")?;
    sink.json("holder.json", &r, &format!("uniformity ratio {}", fmt_f64(r.uniformity_ratio)))
}

#[derive(Serialize)]
struct FluxRow {
    t: f64,
    scaled_sup: f64,
    scaled_gradient: f64,
    flux_mean_sup: f64,
    theta_1: Option<f64>,
    theta_half: Option<f64>,
    iterations: Vec<usize>,
}

fn flux(m: &Manifest, p: &FluxParams, sink: &mut Sink) -> Out {
    let field = m.field();
    let rho = match &p.rho {
        Some(r) => Some(rho(field, r, m.seed)?),
        None => None,
    };
    let mut rows = Vec::new();
    for &t in &p.t {
        let cfg = CorrectorConfig {
            t,
            h: p.h,
            buffer: p.buffer,
            center: p.center.clone(),
            protocol: p.protocol,
            flux_margin: p.flux_margin,
            solve: p.solve,
        };
        let set = solve_corrector(field, &cfg)?;
        let a_hat = homogenized_matrix(field, &set)?;
        let b = flux_tensor(field, &set, &a_hat)?;
        let f = solve_flux_corrector(&b, &p.solve)?;
        let theta = |s: f64| rho.as_ref().map(|r| compute_theta(r, s, t)).transpose();
        rows.push(FluxRow {
            t,
            scaled_sup: f.scaled_sup,
            scaled_gradient: f.scaled_gradient,
            flux_mean_sup: b.mean().entries().iter().fold(0.0, |a: f64, v| a.max(v.abs())),
            theta_1: theta(1.0)?,
            theta_half: theta(0.5)?,
            iterations: f.iterations,
        });
    }
    let opt = |v: Option<f64>| v.map_or(String::new(), fmt_f64);
    let mut csv = String::from("T,scaled_sup,scaled_gradient,theta_1,theta_half\n");
    for r in &rows {
        csv += &format!(
            "{},{},{},{},{}\n",
            fmt_f64(r.t),
            fmt_f64(r.scaled_sup),
            fmt_f64(r.scaled_gradient),
            opt(r.theta_1),
            opt(r.theta_half)
        );
    }
    sink.csv("flux.csv", &csv, "flux corrector scalings")?;
    sink.json("flux.json", &json!({ "rows": rows, "rho": rho }), "flux corrector scalings")
}
