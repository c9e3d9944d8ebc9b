//! Approximate correctors `χ_T` of the screened cell problem and the quantities built from
//! them: `Â_T`, the flux tensor `B_T`, energy identities and scaling diagnostics.

mod effective;
mod scaling;

pub use effective::{
    energy_identity_residual, flux_tensor, homogenized_matrix, reference_matrix_1d, solve_flux_corrector,
    EnergyResidual, FluxCorrector, FluxTensor, HomogenizedMatrix, MatrixSource,
};
pub use scaling::{
    corrector_scalings, gradient_cauchy_decay, translation_response, CorrectorScalings, GradientMeans,
    TranslationReport, TranslationRow,
};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::fd_solver::{solve, Boundary, BoxGrid, DiscreteOperator, GridFunction, SolveMethod, SolveOptions, Window};
use crate::tensor_field::CoefficientTensorField;

/// Largest computational grid a corrector solve will allocate.
const MAX_NODES: usize = 1 << 25;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolChoice {
    /// Periodic cell when the field has a period, truncated box otherwise.
    #[default]
    Auto,
    Periodic,
    Truncated,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    /// One period cell with periodic boundary conditions.
    Periodic,
    /// Box of side `(2·buffer + 1)·T` with zero Dirichlet data.
    Truncated,
}

fn default_buffer() -> f64 {
    6.0
}

fn default_flux_margin() -> f64 {
    2.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorrectorConfig {
    /// Screening length.
    pub t: f64,
    /// Grid spacing.
    pub h: f64,
    /// Distance from the window to the outer box, in units of `T`.
    #[serde(default = "default_buffer")]
    pub buffer: f64,
    /// Centre of the statistics window; the origin by default.
    #[serde(default)]
    pub center: Option<Vec<f64>>,
    #[serde(default)]
    pub protocol: ProtocolChoice,
    /// Strip of the box, in units of `T`, excluded from the flux tensor.
    #[serde(default = "default_flux_margin")]
    pub flux_margin: f64,
    #[serde(default)]
    pub solve: SolveOptions,
}

impl CorrectorConfig {
    pub fn new(t: f64, h: f64) -> Self {
        Self {
            t,
            h,
            buffer: default_buffer(),
            center: None,
            protocol: ProtocolChoice::Auto,
            flux_margin: default_flux_margin(),
            solve: SolveOptions::default(),
        }
    }

    pub fn with_buffer(mut self, buffer: f64) -> Self {
        self.buffer = buffer;
        self
    }

    pub fn with_center(mut self, center: Vec<f64>) -> Self {
        self.center = Some(center);
        self
    }

    pub fn with_protocol(mut self, protocol: ProtocolChoice) -> Self {
        self.protocol = protocol;
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComponentStats {
    pub j: usize,
    pub beta: usize,
    pub iterations: usize,
    pub residual: f64,
    pub method: SolveMethod,
    pub sup_norm: f64,
    pub mean: Vec<f64>,
}

/// Serializable description of a `CorrectorSet` without the grid data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrectorSummary {
    pub t: f64,
    pub h: Vec<f64>,
    pub buffer: f64,
    pub protocol: Protocol,
    pub kappa: f64,
    pub grid_cells: Vec<usize>,
    pub window: Window,
    pub rel_tol: f64,
    pub components: Vec<ComponentStats>,
}

/// `χ_{T,j}^β` for every `(j, β)` on a common grid, with the statistics window.
#[derive(Clone, Debug)]
pub struct CorrectorSet {
    config: CorrectorConfig,
    protocol: Protocol,
    window: Window,
    op: DiscreteOperator,
    chi: Vec<GridFunction>,
    stats: Vec<ComponentStats>,
}

/// Solves `−div(A∇χ) + T⁻²χ = div(A∇P_j^β)` for all `j ≤ d`, `β ≤ m`.
pub fn solve_corrector(field: &CoefficientTensorField, config: &CorrectorConfig) -> Result<CorrectorSet> {
    let (d, m) = (field.d(), field.m());
    let t = config.t;
    if !(t >= 1.0) || !t.is_finite() {
        return invalid("T must be at least 1");
    }
    if !(config.h > 0.0) || config.h > t / 64.0 {
        return invalid(format!("h = {} does not resolve T/64 = {}", config.h, t / 64.0));
    }
    let center = config.center.clone().unwrap_or_else(|| vec![0.0; d]);
    if center.len() != d {
        return invalid("window centre must have dimension d");
    }
    let protocol = match (config.protocol, field.period()) {
        (ProtocolChoice::Periodic, None) => return invalid("periodic protocol needs a periodic field"),
        (ProtocolChoice::Periodic, Some(_)) | (ProtocolChoice::Auto, Some(_)) => Protocol::Periodic,
        _ => Protocol::Truncated,
    };
    let (grid, window) = match protocol {
        Protocol::Periodic => {
            let period = field.period().expect("checked above");
            let cells: Vec<usize> = period.iter().map(|p| ((p / config.h).round() as usize).max(4)).collect();
            let grid = BoxGrid::new(vec![0.0; d], period, cells, Boundary::Periodic)?;
            let window = grid.window();
            (grid, window)
        }
        Protocol::Truncated => {
            if !(config.buffer > 0.0) {
                return invalid("buffer must be positive");
            }
            let nw = ((t / (2.0 * config.h)).round() as usize).max(2);
            let nb = (config.buffer * t / config.h).ceil() as usize;
            let half = nw + nb;
            let lo: Vec<f64> = center.iter().map(|c| c - half as f64 * config.h).collect();
            let hi: Vec<f64> = center.iter().map(|c| c + half as f64 * config.h).collect();
            let grid = BoxGrid::new(lo, hi, vec![2 * half; d], Boundary::DirichletZero)?;
            let wlo = center.iter().map(|c| c - nw as f64 * config.h).collect();
            let whi = center.iter().map(|c| c + nw as f64 * config.h).collect();
            (grid, Window::new(wlo, whi)?)
        }
    };
    if grid.node_count().saturating_mul(m) > MAX_NODES {
        return invalid(format!(
            "corrector grid with {} nodes exceeds the limit {MAX_NODES}",
            grid.node_count()
        ));
    }
    let op = DiscreteOperator::assemble(field, &grid, 1.0 / (t * t))?;
    let solved = (0..d * m)
        .into_par_iter()
        .map(|c| {
            let (j, beta) = (c / m, c % m);
            let rhs = op.corrector_rhs(j, beta);
            let sol = solve(&op, &rhs, &config.solve)?;
            log::debug!(
                "corrector T={t} j={j} beta={beta}: {} iterations, residual {:e}",
                sol.iterations,
                sol.residual
            );
            Ok(sol)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut chi = Vec::with_capacity(d * m);
    let mut stats = Vec::with_capacity(d * m);
    for (c, sol) in solved.into_iter().enumerate() {
        let on_w = on_window(&sol.u, &window)?;
        stats.push(ComponentStats {
            j: c / m,
            beta: c % m,
            iterations: sol.iterations,
            residual: sol.residual,
            method: sol.method,
            sup_norm: on_w.norm(crate::fd_solver::NormKind::Linf),
            mean: on_w.mean(),
        });
        chi.push(sol.u);
    }
    Ok(CorrectorSet {
        config: config.clone(),
        protocol,
        window,
        op,
        chi,
        stats,
    })
}

/// Restriction to the window; the whole cell on periodic grids.
pub(crate) fn on_window(u: &GridFunction, window: &Window) -> Result<GridFunction> {
    if u.grid().bc() == Boundary::Periodic {
        Ok(u.clone())
    } else {
        u.restrict(window)
    }
}

/// Node index ranges of `window`, `None` for a full periodic cell.
pub(crate) fn window_ranges(grid: &BoxGrid, window: &Window) -> Result<Option<Vec<(usize, usize)>>> {
    if grid.bc() == Boundary::Periodic {
        Ok(None)
    } else {
        grid.window_range(window).map(Some)
    }
}

/// Trapezoid volume average of `u` over `window`, per component.
pub fn estimate_mean(u: &GridFunction, window: &Window) -> Result<Vec<f64>> {
    u.window_mean(window)
}

impl CorrectorSet {
    pub fn t(&self) -> f64 {
        self.config.t
    }

    pub fn config(&self) -> &CorrectorConfig {
        &self.config
    }

    pub fn protocol(&self) -> Protocol {
        self.protocol
    }

    pub fn d(&self) -> usize {
        self.op.grid().d()
    }

    pub fn m(&self) -> usize {
        self.op.m()
    }

    pub fn grid(&self) -> &BoxGrid {
        self.op.grid()
    }

    /// Statistics window: the central cube of side `T`, or the period cell.
    pub fn window(&self) -> &Window {
        &self.window
    }

    pub(crate) fn operator(&self) -> &DiscreteOperator {
        &self.op
    }

    /// `χ_{T,j}^β` on the full computational grid.
    pub fn chi(&self, j: usize, beta: usize) -> &GridFunction {
        &self.chi[j * self.m() + beta]
    }

    pub fn window_chi(&self, j: usize, beta: usize) -> Result<GridFunction> {
        on_window(self.chi(j, beta), &self.window)
    }

    /// Node-centred gradient of `χ_{T,j}^β` on the window, one function per axis.
    pub fn window_gradient(&self, j: usize, beta: usize) -> Result<Vec<GridFunction>> {
        self.chi(j, beta)
            .gradient()
            .iter()
            .map(|g| on_window(g, &self.window))
            .collect()
    }

    /// `χ_{T,j}^β(y)`, interpolated; periodic cells wrap.
    pub fn evaluate(&self, j: usize, beta: usize, y: &[f64], out: &mut [f64]) {
        self.chi(j, beta).interpolate(y, out);
    }

    pub fn stats(&self) -> &[ComponentStats] {
        &self.stats
    }

    /// `max_{j,β} ‖χ_{T,j}^β‖_∞` on the window.
    pub fn sup_norm(&self) -> f64 {
        self.stats.iter().map(|s| s.sup_norm).fold(0.0, f64::max)
    }

    pub fn summary(&self) -> CorrectorSummary {
        CorrectorSummary {
            t: self.t(),
            h: self.grid().spacing(),
            buffer: self.config.buffer,
            protocol: self.protocol,
            kappa: self.op.kappa(),
            grid_cells: self.grid().cells().to_vec(),
            window: self.window.clone(),
            rel_tol: self.config.solve.rel_tol,
            components: self.stats.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor_field::{FrequencyLayout, TensorValue};

    fn periodic_1d() -> CoefficientTensorField {
        CoefficientTensorField::scalar_trig(1, 2.0, &[(vec![1.0], 0.0, 1.0)])
            .unwrap()
            .certified(1024, 0)
            .unwrap()
    }

    #[test]
    fn constant_field_has_zero_corrector() {
        let f = CoefficientTensorField::constant(TensorValue::identity(2, 2)).certified(1, 0).unwrap();
        let set = solve_corrector(&f, &CorrectorConfig::new(2.0, 1.0 / 32.0).with_buffer(1.0)).unwrap();
        assert_eq!(set.protocol(), Protocol::Periodic);
        assert!(set.sup_norm() < 1e-12);
    }

    #[test]
    fn coarse_grids_and_short_screening_are_rejected() {
        let f = periodic_1d();
        assert!(solve_corrector(&f, &CorrectorConfig::new(0.5, 1.0 / 256.0)).is_err());
        assert!(solve_corrector(&f, &CorrectorConfig::new(8.0, 0.5)).is_err());
        let uncertified = CoefficientTensorField::scalar_trig(1, 2.0, &[(vec![1.0], 0.0, 1.0)]).unwrap();
        assert!(solve_corrector(&uncertified, &CorrectorConfig::new(8.0, 1.0 / 64.0)).is_err());
    }

    #[test]
    fn periodic_corrector_matches_exact_derivative() {
        // χ' = ā/a − 1 with ā = √3 the harmonic mean of 2 + sin.
        let set = solve_corrector(&periodic_1d(), &CorrectorConfig::new(64.0, 1.0 / 256.0)).unwrap();
        let grad = set.window_gradient(0, 0).unwrap();
        let g = grad[0].grid().clone();
        let mut worst: f64 = 0.0;
        for idx in 0..g.node_count() {
            let y = g.node_position(idx)[0];
            let exact = 3f64.sqrt() / (2.0 + (std::f64::consts::TAU * y).sin()) - 1.0;
            worst = worst.max((grad[0].values()[idx] - exact).abs());
        }
        assert!(worst < 1e-3, "{worst}");
        assert!(set.stats()[0].mean[0].abs() < 1e-12, "{:?}", set.stats());
    }

    #[test]
    fn truncated_protocol_window_is_centred() {
        let layout = FrequencyLayout::independent(vec![vec![1.0, (1.0 + 5f64.sqrt()) / 2.0]]).unwrap();
        let f = CoefficientTensorField::scalar_quasi_periodic(layout, 2.0, &[(vec![1, 0], 0.5, 0.0), (vec![0, 1], 0.0, 0.5)])
            .unwrap()
            .certified(1024, 0)
            .unwrap();
        let cfg = CorrectorConfig::new(4.0, 1.0 / 16.0).with_center(vec![2.0]);
        let set = solve_corrector(&f, &cfg).unwrap();
        assert_eq!(set.protocol(), Protocol::Truncated);
        assert_eq!(set.window().lo, vec![0.0]);
        assert_eq!(set.window().hi, vec![4.0]);
        assert_eq!(set.grid().cells(), &[2 * (32 + 384)]);
        assert!(set.sup_norm() > 0.0 && set.sup_norm() < 1.0);
    }

    #[test]
    fn summary_serializes() {
        let set = solve_corrector(&periodic_1d(), &CorrectorConfig::new(8.0, 1.0 / 64.0)).unwrap();
        let s = crate::numfmt::to_string_pretty(&set.summary()).unwrap();
        let back: CorrectorSummary = serde_json::from_str(&s).unwrap();
        assert_eq!(back, set.summary());
    }
}
