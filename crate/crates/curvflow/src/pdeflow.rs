//! Time integration of `∂_t u = -(1/K)(R - (r/k)K) u` in rotational symmetry.
//!
//! Each step is linearly implicit: the diffusion `-c_n Δ` is taken at the new
//! level with the factor `1/(K u^{4/(n-2)})` frozen at the old one, the
//! remaining terms are explicit. Afterwards `u` is rescaled to `k = 1`.

use serde::{Deserialize, Serialize};
use std::io::Write;

use crate::energy::{curvature, first_variation, CurvatureData, ScalarField, SymmetricK};
use crate::error::{Error, Result};

const DT_MIN: f64 = 1e-12;
/// Relative rise of `J` over one step that is attributed to rounding.
const J_ROUNDING: f64 = 1e-13;

#[derive(Debug, Clone)]
pub struct FlowState {
    pub t: f64,
    pub field: ScalarField,
    pub data: CurvatureData,
    /// `∫_0^t r/k dτ`, trapezoidal.
    pub int_r_over_k: f64,
    /// `∫_0^t |δJ|² dτ`, right endpoint.
    pub int_delta_j2: f64,
}

impl FlowState {
    pub fn new(field: ScalarField, k: &SymmetricK) -> Self {
        let data = curvature(&field, k);
        FlowState { t: 0.0, field, data, int_r_over_k: 0.0, int_delta_j2: 0.0 }
    }

    /// `ln min(R̃/K)` where `R̃ = exp((4/(n-2))∫r/k) R`; `None` if `min R/K <= 0`.
    pub fn log_min_rtilde_over_k(&self, k: &SymmetricK) -> Option<f64> {
        let m = min_r_over_k(&self.data, k);
        (m > 0.0).then(|| self.growth_exponent() + m.ln())
    }

    fn growth_exponent(&self) -> f64 {
        4.0 / (self.field.dim().n() - 2.0) * self.int_r_over_k
    }

    pub fn min_rtilde_over_k(&self, k: &SymmetricK) -> f64 {
        let m = min_r_over_k(&self.data, k);
        m * self.growth_exponent().exp()
    }
}

fn min_r_over_k(data: &CurvatureData, k: &SymmetricK) -> f64 {
    data.curvature.iter().zip(k.values()).map(|(r, kk)| r / kk).fold(f64::INFINITY, f64::min)
}

/// One diagnostics row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagRow {
    pub t: f64,
    #[serde(rename = "J")]
    pub j: f64,
    pub r: f64,
    pub k: f64,
    #[serde(rename = "minR")]
    pub min_r: f64,
    /// May overflow to `inf`; the logarithm below stays finite.
    #[serde(rename = "minRtildeOverK")]
    pub min_rtilde_over_k: f64,
    #[serde(rename = "maxU")]
    pub max_u: f64,
    #[serde(rename = "minU")]
    pub min_u: f64,
    #[serde(rename = "deltaJ")]
    pub delta_j: f64,
    #[serde(rename = "intDeltaJ2")]
    pub int_delta_j2: f64,
    #[serde(skip)]
    pub log_min_rtilde_over_k: Option<f64>,
}

impl DiagRow {
    pub fn of(state: &FlowState, k: &SymmetricK) -> Self {
        let u = state.field.values();
        DiagRow {
            t: state.t,
            j: state.data.j,
            r: state.data.r,
            k: state.data.k,
            min_r: state.data.curvature.iter().cloned().fold(f64::INFINITY, f64::min),
            min_rtilde_over_k: state.min_rtilde_over_k(k),
            max_u: u.iter().cloned().fold(f64::MIN, f64::max),
            min_u: u.iter().cloned().fold(f64::INFINITY, f64::min),
            delta_j: state.data.delta_j,
            int_delta_j2: state.int_delta_j2,
            log_min_rtilde_over_k: state.log_min_rtilde_over_k(k),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FlowDiagnostics {
    pub rows: Vec<DiagRow>,
}

impl FlowDiagnostics {
    pub const HEADER: [&'static str; 10] =
        ["t", "J", "r", "k", "minR", "minRtildeOverK", "maxU", "minU", "deltaJ", "intDeltaJ2"];

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(Self::HEADER)?;
        for r in &self.rows {
            let vals = [r.t, r.j, r.r, r.k, r.min_r, r.min_rtilde_over_k, r.max_u, r.min_u, r.delta_j, r.int_delta_j2];
            wr.write_record(vals.iter().map(|v| format!("{v:.17e}")))?;
        }
        wr.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowOptions {
    pub t_end: f64,
    pub dt_init: f64,
    /// Largest accepted relative change of `u` per step.
    pub tol: f64,
    #[serde(default = "default_dt_max")]
    pub dt_max: f64,
}

fn default_dt_max() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum FlowFailure {
    Stiffness { t: f64, dt: f64 },
    BlowDown { t: f64 },
}

impl From<FlowFailure> for Error {
    fn from(f: FlowFailure) -> Error {
        match f {
            FlowFailure::Stiffness { t, dt } => Error::StiffnessFailure { t, dt },
            FlowFailure::BlowDown { t } => Error::BlowDown { t },
        }
    }
}

pub struct FlowRun {
    pub diagnostics: FlowDiagnostics,
    pub state: FlowState,
    pub failure: Option<FlowFailure>,
    pub rejected_steps: usize,
}

fn solve_tridiagonal(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Vec<f64> {
    let m = diag.len();
    let mut c = vec![0.0; m];
    let mut d = vec![0.0; m];
    c[0] = upper.first().copied().unwrap_or(0.0) / diag[0];
    d[0] = rhs[0] / diag[0];
    for i in 1..m {
        let denom = diag[i] - lower[i] * c[i - 1];
        if i < m - 1 {
            c[i] = upper[i] / denom;
        }
        d[i] = (rhs[i] - lower[i] * d[i - 1]) / denom;
    }
    for i in (0..m - 1).rev() {
        d[i] -= c[i] * d[i + 1];
    }
    d
}

/// Unnormalized linearly implicit update of `u` over `dt`.
fn imex_update(state: &FlowState, k: &SymmetricK, dt: f64) -> Vec<f64> {
    let field = &state.field;
    let grid = field.grid();
    let d = field.dim();
    let u = field.values();
    let m = u.len();
    let w = grid.weights();
    let fc = grid.face_coef();
    let expo = 4.0 / (d.n() - 2.0);
    let rk = state.data.r / state.data.k;
    let mut lower = vec![0.0; m];
    let mut diag = vec![1.0; m];
    let mut upper = vec![0.0; m];
    let mut rhs = vec![0.0; m];
    for i in 0..m {
        let mobility = dt * d.c_n() / (k.values()[i] * u[i].powf(expo) * w[i]);
        if i > 0 {
            lower[i] = -mobility * fc[i - 1];
            diag[i] += mobility * fc[i - 1];
        }
        if i < m - 1 {
            upper[i] = -mobility * fc[i];
            diag[i] += mobility * fc[i];
        }
        let reaction = d.r0() / (k.values()[i] * u[i].powf(expo));
        rhs[i] = u[i] * (1.0 + dt * (rk - reaction));
    }
    solve_tridiagonal(&lower, &diag, &upper, &rhs)
}

/// One step of size `dt`, followed by rescaling to `k = 1`.
/// Fails with [`Error::NonPositiveField`] if the update loses positivity.
pub fn step(state: &FlowState, k: &SymmetricK, dt: f64) -> Result<FlowState> {
    let next = imex_update(state, k, dt);
    let field = ScalarField::new(state.field.grid().clone(), next)?.normalized(k)?;
    let data = curvature(&field, k);
    let rk_old = state.data.r / state.data.k;
    let rk_new = data.r / data.k;
    Ok(FlowState {
        t: state.t + dt,
        int_r_over_k: state.int_r_over_k + 0.5 * dt * (rk_old + rk_new),
        int_delta_j2: state.int_delta_j2 + dt * data.delta_j * data.delta_j,
        field,
        data,
    })
}

/// Forward Euler step without rescaling; only meant for consistency checks
/// of the semi-discrete flow, it is unstable for repeated use on fine grids.
pub fn explicit_step(state: &FlowState, k: &SymmetricK, dt: f64) -> Result<FlowState> {
    let v = velocity(state, k);
    let field = state.field.offset(&v, dt)?;
    let data = curvature(&field, k);
    Ok(FlowState { t: state.t + dt, field, data, ..state.clone() })
}

/// `dJ/dt` along the flow at the current state.
pub fn energy_rate(state: &FlowState, k: &SymmetricK) -> f64 {
    first_variation(&state.field, k, &velocity(state, k))
}

/// `∂_t u = -(1/K)(R - (r/k)K) u`.
pub fn velocity(state: &FlowState, k: &SymmetricK) -> Vec<f64> {
    let rk = state.data.r / state.data.k;
    state
        .field
        .values()
        .iter()
        .zip(&state.data.curvature)
        .zip(k.values())
        .map(|((u, r), kk)| -(r - rk * kk) / kk * u)
        .collect()
}

/// Laplacian of the metric `g_u`: `Δ_g f = u^{-2n/(n-2)} div(u² ∇f)`.
pub fn metric_laplacian(field: &ScalarField, f: &[f64]) -> Vec<f64> {
    let u = field.values();
    let faces: Vec<f64> = u.windows(2).map(|w| w[0] * w[1]).collect();
    let crit = field.dim().crit();
    let lap = field.grid().flux_laplacian(f, Some(&faces));
    lap.iter().zip(u).map(|(l, uu)| l * uu.powf(-crit)).collect()
}

/// Right-hand side of the curvature evolution:
/// `c_n Δ_g(R/K) + (4/(n-2))(R - rK/k) R/K`.
pub fn curvature_rate(state: &FlowState, k: &SymmetricK) -> Vec<f64> {
    let d = state.field.dim();
    let rk = state.data.r / state.data.k;
    let rr = &state.data.curvature;
    let ratio: Vec<f64> = rr.iter().zip(k.values()).map(|(r, kk)| r / kk).collect();
    let lap = metric_laplacian(&state.field, &ratio);
    (0..rr.len())
        .map(|i| d.c_n() * lap[i] + 4.0 / (d.n() - 2.0) * (rr[i] - rk * k.values()[i]) * ratio[i])
        .collect()
}

fn max_rel_change(a: &ScalarField, b: &ScalarField) -> f64 {
    a.values().iter().zip(b.values()).map(|(x, y)| ((y - x) / x).abs()).fold(0.0, f64::max)
}

/// Integrate to `t_end` with step-size control on the relative change of `u`
/// and on energy decay; records a diagnostics row after every accepted step.
pub fn run(field: ScalarField, k: &SymmetricK, opts: &FlowOptions) -> Result<FlowRun> {
    if !(opts.t_end >= 0.0 && opts.dt_init > 0.0 && opts.tol > 0.0 && opts.dt_max > 0.0) {
        return Err(Error::Config("t_end >= 0, dt_init > 0, tol > 0 and dt_max > 0 are required".into()));
    }
    let field = field.normalized(k)?;
    let mut state = FlowState::new(field, k);
    let mut diag = FlowDiagnostics { rows: vec![DiagRow::of(&state, k)] };
    let mut dt = opts.dt_init.min(opts.dt_max);
    let mut rejected = 0;
    let mut positivity_lost = false;
    while state.t < opts.t_end {
        let h = dt.min(opts.t_end - state.t);
        let accepted = match step(&state, k, h) {
            Ok(next) => {
                let change = max_rel_change(&state.field, &next.field);
                let rise = next.data.j - state.data.j;
                if change <= opts.tol && rise <= J_ROUNDING * state.data.j.abs() {
                    if change < 0.5 * opts.tol {
                        dt = (dt * 1.25).min(opts.dt_max);
                    }
                    Some(next)
                } else {
                    None
                }
            }
            Err(Error::NonPositiveField { .. }) => {
                positivity_lost = true;
                None
            }
            Err(e) => return Err(e),
        };
        match accepted {
            Some(next) => {
                positivity_lost = false;
                state = next;
                diag.rows.push(DiagRow::of(&state, k));
            }
            None => {
                rejected += 1;
                dt = 0.5 * h;
                if dt < DT_MIN {
                    let failure = if positivity_lost {
                        FlowFailure::BlowDown { t: state.t }
                    } else {
                        FlowFailure::Stiffness { t: state.t, dt }
                    };
                    return Ok(FlowRun { diagnostics: diag, state, failure: Some(failure), rejected_steps: rejected });
                }
            }
        }
    }
    Ok(FlowRun { diagnostics: diag, state, failure: None, rejected_steps: rejected })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub pass: bool,
    pub worst: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonotonicityReport {
    pub checks: Vec<Check>,
}

impl MonotonicityReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Tolerances used by [`verify_monotonicity`].
pub mod tolerance {
    pub const VOLUME: f64 = 1e-12;
    pub const J_STEP: f64 = 1e-10;
    pub const RTILDE: f64 = 1e-6;
    pub const ENERGY_IDENTITY: f64 = 1e-6;
}

/// Increment of `min R̃/K` between rows as a violation (`>= 0`), relative once the value exceeds 1.
fn rtilde_violation(a: &DiagRow, b: &DiagRow) -> f64 {
    match (a.log_min_rtilde_over_k, b.log_min_rtilde_over_k) {
        (Some(la), Some(lb)) => {
            let scale = a.min_rtilde_over_k.min(1.0);
            // (m_b - m_a) / max(1, m_a) = min(m_a, 1) * (exp(lb - la) - 1)
            (-(scale * (lb - la).exp_m1())).max(0.0)
        }
        _ => (a.min_rtilde_over_k - b.min_rtilde_over_k).max(0.0) / a.min_rtilde_over_k.abs().max(1.0),
    }
}

pub fn verify_monotonicity(diag: &FlowDiagnostics, k_max: f64) -> MonotonicityReport {
    let rows = &diag.rows;
    let mut checks = Vec::new();
    let times_ok = rows.windows(2).all(|w| w[1].t > w[0].t);
    checks.push(Check { name: "time_increasing", pass: times_ok, worst: 0.0 });
    let kdev = rows.iter().map(|r| (r.k - 1.0).abs()).fold(0.0, f64::max);
    checks.push(Check { name: "unit_volume", pass: kdev < tolerance::VOLUME, worst: kdev });
    let jrise = rows.windows(2).map(|w| (w[1].j - w[0].j).max(0.0)).fold(0.0, f64::max);
    checks.push(Check { name: "energy_monotone", pass: jrise < tolerance::J_STEP, worst: jrise });
    let rt = rows.windows(2).map(|w| rtilde_violation(&w[0], &w[1])).fold(0.0, f64::max);
    checks.push(Check { name: "min_rtilde_over_k_monotone", pass: rt <= tolerance::RTILDE, worst: rt });
    if let (Some(first), Some(last)) = (rows.first(), rows.last()) {
        let excess = last.int_delta_j2 - 2.0 * k_max * (first.j - last.j);
        checks.push(Check {
            name: "energy_identity",
            pass: excess <= tolerance::ENERGY_IDENTITY,
            worst: excess.max(0.0),
        });
        let decays = last.delta_j < first.delta_j || first.delta_j < 1e-12;
        checks.push(Check { name: "delta_j_decay", pass: decays, worst: (last.delta_j - first.delta_j).max(0.0) });
    }
    MonotonicityReport { checks }
}
