//! Principal shadow flow of bubble parameters, Lyapunov functions and the
//! flat-direction scenario in dimension five.
//!
//! State per bubble is `(ln α, a, ln λ)`. Remainder terms are dropped.

use serde::{Deserialize, Serialize};
use std::io::Write;

use crate::bubbles::{epsilon, epsilon_derivs, BubbleEnsemble, BubbleParam, SolutionPart};
use crate::constants::ConstantsTable;
use crate::dim::Dim;
use crate::error::{Error, Result};
use crate::geometry::{kspec_eval, Backend, FnSpec, KSpec, KValues, ModelSpace, ScalarFn};
use crate::ode::{dopri5, OdeOptions, OdeSolution};

/// Pairwise interaction above which the expansion is abandoned.
pub const EPS_REGIME: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShadowMode {
    NoSolution,
    WithSolution,
}

/// How `r/k` is evaluated along the reduced dynamics.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "kebab-case", deny_unknown_fields)]
pub enum RkPolicy {
    /// `r = c₀ (Σ K_i^{-(n-2)/2})^{2/n}`, `k = 1`.
    #[default]
    LeadingEnergy,
    Frozen { value: f64 },
}

#[derive(Debug, Clone)]
pub struct ShadowConfig {
    space: ModelSpace,
    mode: ShadowMode,
    k: KSpec,
    solution: Option<(f64, ScalarFn)>,
    consts: ConstantsTable,
    policy: RkPolicy,
}

impl ShadowConfig {
    /// The mass `H` travels with `space`; `solution` is required exactly when `mode` is with-solution.
    pub fn new(
        space: ModelSpace,
        mode: ShadowMode,
        k: KSpec,
        solution: Option<SolutionPart>,
        consts: ConstantsTable,
        policy: RkPolicy,
    ) -> Result<Self> {
        let mut problems = Vec::new();
        if consts.dim != space.dim {
            problems.push(format!("constants for n={} but space has n={}", consts.dim, space.dim));
        }
        if k.dim() != space.dim || k.backend() != space.backend {
            problems.push("K was built for a different dimension or backend".to_string());
        }
        let solution = match (mode, solution) {
            (ShadowMode::WithSolution, Some(s)) => {
                if !(s.alpha > 0.0) {
                    problems.push(format!("solution alpha must be positive (got {})", s.alpha));
                }
                Some((s.alpha, ScalarFn::new(s.omega, space.dim, space.backend)?))
            }
            (ShadowMode::WithSolution, None) => {
                problems.push("with-solution mode needs a solution part (alpha, omega)".to_string());
                None
            }
            (ShadowMode::NoSolution, Some(_)) => {
                problems.push("no-solution mode takes no solution part".to_string());
                None
            }
            (ShadowMode::NoSolution, None) => None,
        };
        if let RkPolicy::Frozen { value } = policy {
            if !(value > 0.0 && value.is_finite()) {
                problems.push(format!("frozen r/k must be positive (got {value})"));
            }
        }
        if !problems.is_empty() {
            return Err(Error::Config(problems.join("; ")));
        }
        Ok(ShadowConfig { space, mode, k, solution, consts, policy })
    }

    pub fn dim(&self) -> Dim {
        self.space.dim
    }
    pub fn space(&self) -> &ModelSpace {
        &self.space
    }
    pub fn mode(&self) -> ShadowMode {
        self.mode
    }
    pub fn k(&self) -> &KSpec {
        &self.k
    }
    pub fn consts(&self) -> &ConstantsTable {
        &self.consts
    }
    pub fn policy(&self) -> RkPolicy {
        self.policy
    }

    /// Same configuration with `K` replaced by `s K`.
    pub fn with_k_scaled(&self, s: f64) -> Self {
        ShadowConfig { k: self.k.scaled(s), ..self.clone() }
    }

    pub fn with_policy(&self, policy: RkPolicy) -> Self {
        ShadowConfig { policy, ..self.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShadowState {
    pub t: f64,
    pub params: BubbleEnsemble,
}

impl ShadowState {
    pub fn new(params: Vec<BubbleParam>) -> Self {
        ShadowState { t: 0.0, params: BubbleEnsemble::new(params) }
    }

    /// Bubbles at `(a_i, λ_i)` with amplitudes on the algebraic lock
    /// `(r/k) α_i^{4/(n-2)} K_i = 4n(n-1)`.
    pub fn locked(cfg: &ShadowConfig, centers: Vec<(Vec<f64>, f64)>) -> Result<Self> {
        let mut params: Vec<BubbleParam> = centers.into_iter().map(|(a, l)| BubbleParam::new(1.0, a, l)).collect();
        let kv = params.iter().map(|p| kspec_eval(&cfg.k, &cfg.space, &p.a).map(|v| v.k)).collect::<Result<Vec<_>>>()?;
        let rk = r_over_k_from(cfg, &kv);
        let d = cfg.dim();
        for (p, k) in params.iter_mut().zip(&kv) {
            p.alpha = (lock_constant(d) / (rk * k)).powf(d.half_nm2() / 2.0);
        }
        Ok(ShadowState::new(params))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    fn to_vec(&self) -> Vec<f64> {
        let mut y = Vec::new();
        for p in &self.params.params {
            y.push(p.alpha.ln());
            y.extend_from_slice(&p.a);
            y.push(p.lambda.ln());
        }
        y
    }

    fn from_vec(t: f64, y: &[f64], arity: usize) -> Self {
        let params = y
            .chunks(arity + 2)
            .map(|c| BubbleParam::new(c[0].exp(), c[1..=arity].to_vec(), c[arity + 1].exp()))
            .collect();
        ShadowState { t, params: BubbleEnsemble::new(params) }
    }
}

fn lock_constant(d: Dim) -> f64 {
    4.0 * d.n() * (d.n() - 1.0)
}

fn r_over_k_from(cfg: &ShadowConfig, kvals: &[f64]) -> f64 {
    match cfg.policy {
        RkPolicy::Frozen { value } => value,
        RkPolicy::LeadingEnergy => {
            let d = cfg.dim();
            let s: f64 = kvals.iter().map(|k| k.powf(-d.half_nm2())).sum();
            cfg.consts.c0() * s.powf(2.0 / d.n())
        }
    }
}

/// `r/k` at a state under the configured policy.
pub fn r_over_k(state: &ShadowState, cfg: &ShadowConfig) -> Result<f64> {
    let kv = state
        .params
        .params
        .iter()
        .map(|p| kspec_eval(&cfg.k, &cfg.space, &p.a).map(|v| v.k))
        .collect::<Result<Vec<_>>>()?;
    Ok(r_over_k_from(cfg, &kv))
}

/// Time derivatives of `(ln α_i, a_i, ln λ_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShadowDerivative {
    pub ln_alpha: Vec<f64>,
    pub a: Vec<Vec<f64>>,
    pub ln_lambda: Vec<f64>,
}

impl ShadowDerivative {
    fn to_vec(&self) -> Vec<f64> {
        let mut y = Vec::new();
        for i in 0..self.ln_alpha.len() {
            y.push(self.ln_alpha[i]);
            y.extend_from_slice(&self.a[i]);
            y.push(self.ln_lambda[i]);
        }
        y
    }
}

/// Check the shadow regime: `λ_i > 1` and `ε_ij < 1/2`.
pub fn regime_violation(state: &ShadowState, space: &ModelSpace) -> Option<String> {
    let ps = &state.params.params;
    for (i, p) in ps.iter().enumerate() {
        if !(p.lambda > 1.0) {
            return Some(format!("lambda_{i} = {} dropped to 1 or below", p.lambda));
        }
    }
    for i in 0..ps.len() {
        for j in i + 1..ps.len() {
            let e = epsilon(space, &ps[i], &ps[j]);
            if !(e < EPS_REGIME) {
                return Some(format!("epsilon_{i}{j} = {e} reached {EPS_REGIME}"));
            }
        }
    }
    None
}

pub fn shadow_rhs(state: &ShadowState, cfg: &ShadowConfig) -> Result<ShadowDerivative> {
    if let Some(reason) = regime_violation(state, &cfg.space) {
        return Err(Error::RegimeExit { t: state.t, reason });
    }
    rhs_unchecked(state, cfg)
}

// Trial stages of a step may poke slightly outside the regime; only accepted
// states are tested.
fn rhs_unchecked(state: &ShadowState, cfg: &ShadowConfig) -> Result<ShadowDerivative> {
    let d = cfg.dim();
    let n = d.n();
    let c = &cfg.consts;
    let ps = &state.params.params;
    let kv: Vec<KValues> = ps.iter().map(|p| kspec_eval(&cfg.k, &cfg.space, &p.a)).collect::<Result<_>>()?;
    let rk = r_over_k_from(cfg, &kv.iter().map(|v| v.k).collect::<Vec<_>>());
    let (g_d2, g2, g3, g4) = (c.d2 / c.c2, c.e2 / c.c2, c.e3 / c.c3, c.e4 / c.c3);
    let (g_b2, g_b3) = (c.b2 / c.c2, c.b3 / c.c3);
    let p = ps.len();
    let mut out = ShadowDerivative { ln_alpha: vec![0.0; p], a: Vec::with_capacity(p), ln_lambda: vec![0.0; p] };
    for i in 0..p {
        let (pi, ki) = (&ps[i], &kv[i]);
        let l = pi.lambda;
        let mut lam_bracket = 0.0;
        let mut a_bracket: Vec<f64> = vec![0.0; pi.a.len()];
        for j in (0..p).filter(|&j| j != i) {
            let ratio = ps[j].alpha / pi.alpha;
            let (dl, da) = epsilon_derivs(&cfg.space, pi, &ps[j]);
            lam_bracket -= g_b2 * ratio * dl;
            a_bracket.iter_mut().zip(&da).for_each(|(x, g)| *x += g_b3 * ratio * g);
        }
        a_bracket.iter_mut().zip(&ki.grad).for_each(|(x, g)| *x += g3 * g / (ki.k * l));
        match (cfg.mode, &cfg.solution) {
            (ShadowMode::WithSolution, Some((alpha_bar, omega))) => {
                let w = omega.eval(&pi.a);
                if !(w > 0.0) {
                    return Err(Error::Positivity { at: pi.a.clone(), value: w });
                }
                lam_bracket += g_d2 * alpha_bar * w / (pi.alpha * ki.k * l.powf(d.half_nm2()));
            }
            _ => {
                let h = cfg.space.mass(&pi.a)?;
                lam_bracket += g_d2 * h / l.powf(n - 2.0) + g2 * ki.lap / (ki.k * l * l);
                a_bracket.iter_mut().zip(&ki.grad_lap).for_each(|(x, g)| *x += g4 * g / (ki.k * l.powi(3)));
            }
        }
        let mut adot: Vec<f64> = a_bracket.iter().map(|x| rk * x / l).collect();
        cfg.space.project_tangent(&pi.a, &mut adot);
        out.a.push(adot);
        out.ln_lambda[i] = -rk * lam_bracket;
        let x = rk * pi.alpha.powf(4.0 / (n - 2.0)) * ki.k / lock_constant(d);
        out.ln_alpha[i] = -rk * (1.0 - 1.0 / x);
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct ShadowTrajectory {
    pub states: Vec<ShadowState>,
    /// Why integration ended before `t_end`, if it did.
    pub exit: Option<String>,
    solution: OdeSolution,
    arity: usize,
}

impl ShadowTrajectory {
    /// Interpolated state at time `t`.
    pub fn state_at(&self, t: f64) -> ShadowState {
        ShadowState::from_vec(t, &self.solution.eval(t), self.arity)
    }

    pub fn t_end(&self) -> f64 {
        self.solution.t_end()
    }

    pub fn last(&self) -> &ShadowState {
        self.states.last().expect("trajectory holds the initial state")
    }

    pub const HEADER_PREFIX: [&'static str; 4] = ["t", "i", "alpha", "lambda"];

    /// Long format: one row per bubble per accepted step.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let mut header: Vec<String> = Self::HEADER_PREFIX.iter().map(|s| s.to_string()).collect();
        header.extend((1..=self.arity).map(|k| format!("a_{k}")));
        wr.write_record(&header)?;
        for s in &self.states {
            for (i, p) in s.params.params.iter().enumerate() {
                let mut rec = vec![format!("{:.17e}", s.t), i.to_string(), format!("{:.17e}", p.alpha), format!("{:.17e}", p.lambda)];
                rec.extend(p.a.iter().map(|x| format!("{x:.17e}")));
                wr.write_record(&rec)?;
            }
        }
        wr.flush()?;
        Ok(())
    }
}

/// Adaptive Dormand–Prince integration; stops early, with a reason, on leaving
/// the shadow regime. On the sphere centres are pulled back after every step.
pub fn integrate(state: &ShadowState, cfg: &ShadowConfig, t_end: f64, opts: &OdeOptions) -> Result<ShadowTrajectory> {
    if state.is_empty() {
        return Err(Error::Config("shadow state needs at least one bubble".into()));
    }
    for p in &state.params.params {
        p.validate(&cfg.space)?;
    }
    if let Some(reason) = regime_violation(state, &cfg.space) {
        return Err(Error::RegimeExit { t: state.t, reason });
    }
    let arity = cfg.space.arity();
    let rhs = |t: f64, y: &[f64]| -> Result<Vec<f64>> {
        let s = ShadowState::from_vec(t, y, arity);
        Ok(rhs_unchecked(&s, cfg)?.to_vec())
    };
    let mut states = vec![state.clone()];
    let sphere = cfg.space.backend == Backend::Sphere;
    let sol = dopri5(rhs, state.t, state.to_vec(), t_end, opts, |t, y| {
        if sphere {
            for c in y.chunks_mut(arity + 2) {
                let a = &mut c[1..=arity];
                let s = a.iter().map(|x| x * x).sum::<f64>().sqrt();
                a.iter_mut().for_each(|x| *x /= s);
            }
        }
        let s = ShadowState::from_vec(t, y, arity);
        let v = regime_violation(&s, &cfg.space);
        states.push(s);
        v
    })?;
    Ok(ShadowTrajectory { states, exit: sol.stopped.clone(), solution: sol, arity })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LyapunovKind {
    N3,
    N4,
    N5,
    OmegaPositive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LyapunovSpec {
    pub kind: LyapunovKind,
    pub c: f64,
    #[serde(default)]
    pub kappa: f64,
    #[serde(default = "default_eps_underline")]
    pub eps_underline: f64,
}

fn default_eps_underline() -> f64 {
    1e-2
}

impl LyapunovSpec {
    pub fn new(kind: LyapunovKind, c: f64) -> Self {
        LyapunovSpec { kind, c, kappa: 0.0, eps_underline: default_eps_underline() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c > 1.0) {
            return Err(Error::Config(format!("Lyapunov weight C must exceed 1 (got {})", self.c)));
        }
        if self.kind == LyapunovKind::N5 && !(self.kappa > 0.0 && self.eps_underline > 0.0) {
            return Err(Error::Config("n5 Lyapunov function needs kappa > 0 and eps_underline > 0".into()));
        }
        Ok(())
    }
}

/// `κ = γ₂ / (margin · min K)`; an unbounded or non-positive margin falls back to margin 1.
pub fn default_kappa(consts: &ConstantsTable, cond_margin: f64, min_k: f64) -> f64 {
    let m = if cond_margin.is_finite() && cond_margin > 0.0 { cond_margin } else { 1.0 };
    consts.gamma2().abs() / (m * min_k)
}

/// Smooth transition from 0 (below `e`) to 1 (above `2e`), slope at most `2/e`.
pub fn cutoff(e: f64, x: f64) -> f64 {
    let s = (x - e) / e;
    if s <= 0.0 {
        return 0.0;
    }
    if s >= 1.0 {
        return 1.0;
    }
    let f = |z: f64| (-1.0 / z).exp();
    f(s) / (f(s) + f(1.0 - s))
}

fn lyapunov_terms(state: &ShadowState, cfg: &ShadowConfig, spec: &LyapunovSpec) -> Result<Vec<f64>> {
    state
        .params
        .params
        .iter()
        .map(|p| {
            let base = -p.lambda.ln();
            Ok(match spec.kind {
                LyapunovKind::N3 | LyapunovKind::OmegaPositive => base,
                LyapunovKind::N4 => base / kspec_eval(&cfg.k, &cfg.space, &p.a)?.k,
                LyapunovKind::N5 => {
                    let kv = kspec_eval(&cfg.k, &cfg.space, &p.a)?;
                    let x = -p.lambda * kv.lap;
                    let theta = if x > spec.eps_underline {
                        cutoff(spec.eps_underline, x) * (x / spec.eps_underline).ln()
                    } else {
                        0.0
                    };
                    base / kv.k - spec.kappa * theta
                }
            })
        })
        .collect()
}

/// `ψ = Σ_r C^r t_(r)` with the terms sorted in decreasing order.
pub fn lyapunov(state: &ShadowState, cfg: &ShadowConfig, spec: &LyapunovSpec) -> Result<f64> {
    spec.validate()?;
    let mut terms = lyapunov_terms(state, cfg, spec)?;
    terms.sort_by(|a, b| b.total_cmp(a));
    Ok(terms.iter().enumerate().map(|(r, t)| spec.c.powi(r as i32 + 1) * t).sum())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LyapunovReport {
    pub min_increment: f64,
    pub at_time: f64,
    pub ordering_switches: usize,
    pub pass: bool,
}

pub const LYAPUNOV_TOL: f64 = 1e-9;

/// Smallest increment of `ψ` between consecutive accepted states. The sorted
/// weighting keeps `ψ` continuous across ordering switches, which are counted.
pub fn lyapunov_monotonicity(traj: &ShadowTrajectory, cfg: &ShadowConfig, spec: &LyapunovSpec) -> Result<LyapunovReport> {
    let mut prev: Option<(f64, Vec<usize>)> = None;
    let mut rep = LyapunovReport { min_increment: f64::INFINITY, at_time: 0.0, ordering_switches: 0, pass: true };
    for s in &traj.states {
        let psi = lyapunov(s, cfg, spec)?;
        let terms = lyapunov_terms(s, cfg, spec)?;
        let mut order: Vec<usize> = (0..terms.len()).collect();
        order.sort_by(|&a, &b| terms[b].total_cmp(&terms[a]));
        if let Some((p0, o0)) = &prev {
            let inc = psi - p0;
            if inc < rep.min_increment {
                rep.min_increment = inc;
                rep.at_time = s.t;
            }
            if *o0 != order {
                rep.ordering_switches += 1;
            }
        }
        prev = Some((psi, order));
    }
    rep.pass = rep.min_increment >= -LYAPUNOV_TOL;
    Ok(rep)
}

/// Maximal sup-norm distance between the `(ln λ, a)` paths of two trajectories
/// after both are parametrized by normalized arclength.
pub fn path_deviation(a: &ShadowTrajectory, b: &ShadowTrajectory, samples: usize) -> f64 {
    let pa = arclength_path(a, samples);
    let pb = arclength_path(b, samples);
    pa.iter().zip(&pb).map(|(x, y)| x.iter().zip(y).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max)).fold(0.0, f64::max)
}

fn geometric_part(s: &ShadowState) -> Vec<f64> {
    let mut v = Vec::new();
    for p in &s.params.params {
        v.push(p.lambda.ln());
        v.extend_from_slice(&p.a);
    }
    v
}

fn arclength_path(tr: &ShadowTrajectory, samples: usize) -> Vec<Vec<f64>> {
    // fine resampling through the continuous extension, then linear interpolation in arclength
    let fine = 16 * samples;
    let (t0, t1) = (tr.states[0].t, tr.t_end());
    let pts: Vec<Vec<f64>> =
        (0..=fine).map(|k| geometric_part(&tr.state_at(t0 + (t1 - t0) * k as f64 / fine as f64))).collect();
    let mut s = vec![0.0];
    for w in pts.windows(2) {
        let d = w[0].iter().zip(&w[1]).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        s.push(s.last().unwrap() + d);
    }
    let total = *s.last().unwrap();
    (0..=samples)
        .map(|k| {
            let target = total * k as f64 / samples as f64;
            let j = s.partition_point(|&x| x < target).clamp(1, fine);
            let span = s[j] - s[j - 1];
            let w = if span > 0.0 { (target - s[j - 1]) / span } else { 0.0 };
            pts[j - 1].iter().zip(&pts[j]).map(|(x, y)| x + w * (y - x)).collect()
        })
        .collect()
}

/// Setup of the single-bubble run along the flat direction of `1 - Σ x_i⁴` in dimension five.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DivergingSetup {
    pub lambda0: f64,
    /// Norm of the initial centre, which lies on the diagonal.
    pub a0_norm: f64,
    pub t_end: f64,
    /// Time after which `λ` has to be non-decreasing.
    #[serde(default)]
    pub transient: f64,
}

impl Default for DivergingSetup {
    fn default() -> Self {
        DivergingSetup { lambda0: 1e4, a0_norm: 1e-2, t_end: 1e3, transient: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioCheck {
    pub name: &'static str,
    pub pass: bool,
    /// First time the assertion failed.
    pub first_violation: Option<f64>,
    pub value: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DivergingReport {
    pub gamma: f64,
    pub lambda_cubed_gain: f64,
    pub checks: Vec<ScenarioCheck>,
}

impl DivergingReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
    pub fn get(&self, name: &str) -> Option<&ScenarioCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// `K = 1 - Σ x_i⁴` on the flat chart of dimension five.
pub fn quartic_flat_k() -> Result<KSpec> {
    let monomials = std::iter::once(crate::poly::Monomial { coeff: 1.0, powers: vec![0; 5] })
        .chain((0..5).map(|i| {
            let mut p = vec![0; 5];
            p[i] = 4;
            crate::poly::Monomial { coeff: -1.0, powers: p }
        }))
        .collect();
    KSpec::new(FnSpec::Polynomial { monomials }, Dim::FIVE, Backend::Flat)
}

pub fn run_diverging_scenario(setup: &DivergingSetup, opts: &OdeOptions) -> Result<(ShadowTrajectory, DivergingReport)> {
    if !(setup.lambda0 > 1.0 && setup.a0_norm > 0.0 && setup.t_end > 0.0) {
        return Err(Error::Config("scenario needs lambda0 > 1, a0_norm > 0 and t_end > 0".into()));
    }
    let d = Dim::FIVE;
    let cfg = ShadowConfig::new(
        ModelSpace::flat(d),
        ShadowMode::NoSolution,
        quartic_flat_k()?,
        None,
        crate::constants::constants_table(d)?,
        RkPolicy::LeadingEnergy,
    )?;
    let a0 = vec![setup.a0_norm / 5f64.sqrt(); 5];
    let state = ShadowState::locked(&cfg, vec![(a0.clone(), setup.lambda0)])?;
    // the dynamics are slow; cap the step so the assertions see the whole path
    let opts = OdeOptions { h_max: opts.h_max.min(setup.t_end / 1000.0), ..*opts };
    let traj = integrate(&state, &cfg, setup.t_end, &opts)?;
    if let Some(reason) = &traj.exit {
        return Err(Error::RegimeExit { t: traj.t_end(), reason: reason.clone() });
    }
    let k0 = cfg.k.value(&a0);
    let rk0 = r_over_k(&state, &cfg)?;
    let norm0_sq = setup.a0_norm * setup.a0_norm;
    // d(λ³)/dt = 3 λ³ (ln λ)' = 36 (r/k) (e2/c2) λ |a|² / K on the diagonal
    let gamma = 36.0 * rk0 * cfg.consts.gamma2() * setup.lambda0 * norm0_sq / k0;

    let norm = |p: &BubbleParam| p.a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut checks = Vec::new();
    let pairs: Vec<(&ShadowState, &ShadowState)> = traj.states.windows(2).map(|w| (&w[0], &w[1])).collect();

    let mut worst = 0.0f64;
    let mut first = None;
    for (a, b) in &pairs {
        if b.t <= setup.transient {
            continue;
        }
        let drop = (a.params.params[0].lambda.ln() - b.params.params[0].lambda.ln()).max(0.0);
        if drop > 0.0 && first.is_none() {
            first = Some(b.t);
        }
        worst = worst.max(drop);
    }
    checks.push(ScenarioCheck { name: "lambda_increasing", pass: first.is_none(), first_violation: first, value: worst });

    let (mut worst, mut first) = (0.0f64, None);
    for (a, b) in &pairs {
        let rise = norm(&b.params.params[0]) - norm(&a.params.params[0]);
        if rise > 1e-9 && first.is_none() {
            first = Some(b.t);
        }
        worst = worst.max(rise);
    }
    checks.push(ScenarioCheck { name: "center_norm_nonincreasing", pass: first.is_none(), first_violation: first, value: worst });

    let bound = (2.5f64).powf(0.25);
    let (mut worst, mut first) = (0.0f64, None);
    for s in &traj.states {
        let a = &s.params.params[0].a;
        let mx = a.iter().map(|x| x.abs()).fold(0.0, f64::max);
        let mn = a.iter().map(|x| x.abs()).fold(f64::INFINITY, f64::min);
        let r = mx / mn;
        if !(r < bound) && first.is_none() {
            first = Some(s.t);
        }
        worst = worst.max(r);
    }
    checks.push(ScenarioCheck { name: "component_ratio", pass: first.is_none(), first_violation: first, value: worst });

    let floor = (-0.1f64).exp() * setup.lambda0 * norm0_sq;
    let (mut worst, mut first) = (f64::INFINITY, None);
    for s in &traj.states {
        let p = &s.params.params[0];
        let v = p.lambda * norm(p).powi(2);
        if v < floor && first.is_none() {
            first = Some(s.t);
        }
        worst = worst.min(v);
    }
    checks.push(ScenarioCheck { name: "lambda_a_squared_floor", pass: first.is_none(), first_violation: first, value: worst });

    let lam_end = traj.last().params.params[0].lambda;
    // λ_T³ - λ_0³ without cancelling digits
    let gain = setup.lambda0.powi(3) * (3.0 * (lam_end / setup.lambda0).ln()).exp_m1();
    let need = 0.1 * gamma * setup.t_end;
    checks.push(ScenarioCheck {
        name: "lambda_cubed_growth",
        pass: gain >= need,
        first_violation: (gain < need).then_some(setup.t_end),
        value: gain / need,
    });
    Ok((traj, DivergingReport { gamma, lambda_cubed_gain: gain, checks }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::constants_table;

    fn flat_cfg(d: Dim, k: KSpec, h: f64) -> ShadowConfig {
        ShadowConfig::new(
            ModelSpace::flat(d).with_mass(FnSpec::constant(h)).unwrap(),
            ShadowMode::NoSolution,
            k,
            None,
            constants_table(d).unwrap(),
            RkPolicy::LeadingEnergy,
        )
        .unwrap()
    }

    #[test]
    fn single_bubble_with_mass_shrinks_scale() {
        let d = Dim::THREE;
        let cfg = flat_cfg(d, KSpec::constant(1.0, d, Backend::Flat), 1.0);
        let s = ShadowState::locked(&cfg, vec![(vec![0.0; 3], 100.0)]).unwrap();
        let r = shadow_rhs(&s, &cfg).unwrap();
        let rk = r_over_k(&s, &cfg).unwrap();
        let want = -rk * cfg.consts().gamma_d2() / 100.0;
        assert!((r.ln_lambda[0] - want).abs() < 1e-14 * want.abs());
        assert!(r.a[0].iter().all(|x| *x == 0.0));
        assert!(r.ln_alpha[0].abs() < 1e-12);
    }

    #[test]
    fn lyapunov_examples() {
        let d = Dim::THREE;
        let cfg = flat_cfg(d, KSpec::constant(1.0, d, Backend::Flat), 1.0);
        let one = ShadowState::new(vec![BubbleParam::new(1.0, vec![0.0; 3], std::f64::consts::E)]);
        let psi = lyapunov(&one, &cfg, &LyapunovSpec::new(LyapunovKind::N3, 2.0)).unwrap();
        assert!((psi + 2.0).abs() < 1e-15);
        let two = ShadowState::new(vec![
            BubbleParam::new(1.0, vec![0.0; 3], 100.0),
            BubbleParam::new(1.0, vec![1.0, 0.0, 0.0], 10.0),
        ]);
        let psi = lyapunov(&two, &cfg, &LyapunovSpec::new(LyapunovKind::N3, 4.0)).unwrap();
        let want = 4.0 * 0.1f64.ln() + 16.0 * 0.01f64.ln();
        assert!((psi - want).abs() < 1e-12);
    }

    #[test]
    fn cutoff_shape() {
        let e = 0.1;
        assert_eq!(cutoff(e, 0.05), 0.0);
        assert_eq!(cutoff(e, 0.25), 1.0);
        assert!((cutoff(e, 0.15) - 0.5).abs() < 1e-15);
        let h = 1e-7;
        let mut max_slope: f64 = 0.0;
        for k in 1..1000 {
            let x = e + e * k as f64 / 1000.0;
            let s = (cutoff(e, x + h) - cutoff(e, x - h)) / (2.0 * h);
            assert!(s >= -1e-6);
            max_slope = max_slope.max(s);
        }
        assert!(max_slope <= 2.0 / e + 1e-4, "{max_slope}");
    }

    #[test]
    fn regime_exit_is_reported() {
        let d = Dim::THREE;
        let cfg = flat_cfg(d, KSpec::constant(1.0, d, Backend::Flat), 1.0);
        let s = ShadowState::locked(&cfg, vec![(vec![0.0; 3], 1.5)]).unwrap();
        let tr = integrate(&s, &cfg, 1e6, &OdeOptions::default()).unwrap();
        assert!(tr.exit.as_deref().unwrap().contains("lambda"));
    }

    #[test]
    fn config_errors_are_collected() {
        let d = Dim::FOUR;
        let err = ShadowConfig::new(
            ModelSpace::flat(d),
            ShadowMode::WithSolution,
            KSpec::constant(1.0, Dim::THREE, Backend::Flat),
            None,
            constants_table(Dim::FIVE).unwrap(),
            RkPolicy::Frozen { value: -1.0 },
        )
        .unwrap_err()
        .to_string();
        for part in ["constants", "K was built", "solution part", "frozen"] {
            assert!(err.contains(part), "{err}");
        }
    }
}
