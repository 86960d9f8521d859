//! Bubbles `φ_{a,λ}`, their derivatives and the interaction quantity `ε_ij`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::constants::ConstantsTable;
use crate::dim::Dim;
use crate::error::{Error, Result};
use crate::geometry::{dot, kernel_grad_a, kernel_sq_unchecked, Backend, FnSpec, ModelSpace};
use crate::quad::{integrate_with_breaks, QuadOpts};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BubbleParam {
    pub alpha: f64,
    pub a: Vec<f64>,
    pub lambda: f64,
}

impl BubbleParam {
    pub fn new(alpha: f64, a: Vec<f64>, lambda: f64) -> Self {
        BubbleParam { alpha, a, lambda }
    }

    pub fn validate(&self, space: &ModelSpace) -> Result<()> {
        if !(self.alpha > 0.0 && self.lambda > 0.0) {
            return Err(Error::Config(format!(
                "bubble needs alpha > 0 and lambda > 0 (got {}, {})",
                self.alpha, self.lambda
            )));
        }
        space.check_point(&self.a)
    }
}

/// Amplitude and pointwise values of the solution part in the `ω > 0` regime.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolutionPart {
    pub alpha: f64,
    pub omega: FnSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BubbleEnsemble {
    pub params: Vec<BubbleParam>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solution: Option<SolutionPart>,
}

impl BubbleEnsemble {
    pub fn new(params: Vec<BubbleParam>) -> Self {
        BubbleEnsemble { params, solution: None }
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Largest pairwise `ε_ij` (0 for a single bubble).
    pub fn max_epsilon(&self, space: &ModelSpace) -> f64 {
        let mut m: f64 = 0.0;
        for i in 0..self.len() {
            for j in i + 1..self.len() {
                m = m.max(epsilon(space, &self.params[i], &self.params[j]));
            }
        }
        m
    }
}

/// `(λ/(1+λ²ρ²))^{(n-2)/2}` for kernel value `ρ²`.
pub fn bubble_profile(dim: Dim, lambda: f64, rho2: f64) -> f64 {
    (lambda / (1.0 + lambda * lambda * rho2)).powf(dim.half_nm2())
}

pub fn bubble_eval(space: &ModelSpace, p: &BubbleParam, x: &[f64]) -> f64 {
    bubble_profile(space.dim, p.lambda, kernel_sq_unchecked(space.backend, &p.a, x))
}

/// `φ₁ = φ`, `φ₂ = -λ∂_λφ`, `φ₃ = λ^{-1}∇_aφ` (a tangent vector at `a`).
#[derive(Debug, Clone, PartialEq)]
pub struct BubbleDerivs {
    pub phi1: f64,
    pub phi2: f64,
    pub phi3: Vec<f64>,
}

pub fn bubble_derivs(space: &ModelSpace, p: &BubbleParam, x: &[f64]) -> BubbleDerivs {
    let h = space.dim.half_nm2();
    let rho2 = kernel_sq_unchecked(space.backend, &p.a, x);
    let l2r2 = p.lambda * p.lambda * rho2;
    let phi = bubble_profile(space.dim, p.lambda, rho2);
    let grad = kernel_grad_a(space, &p.a, x);
    let c = -h * p.lambda / (1.0 + l2r2) * phi;
    BubbleDerivs {
        phi1: phi,
        phi2: h * phi * (l2r2 - 1.0) / (l2r2 + 1.0),
        phi3: grad.iter().map(|g| c * g).collect(),
    }
}

fn eps_denominator(space: &ModelSpace, pi: &BubbleParam, pj: &BubbleParam) -> (f64, f64) {
    let kappa = kernel_sq_unchecked(space.backend, &pi.a, &pj.a);
    let d = pi.lambda / pj.lambda + pj.lambda / pi.lambda + pi.lambda * pj.lambda * kappa;
    (d, kappa)
}

/// `ε_ij = (λ_i/λ_j + λ_j/λ_i + λ_iλ_j ρ²(a_i,a_j))^{(2-n)/2}`.
pub fn epsilon(space: &ModelSpace, pi: &BubbleParam, pj: &BubbleParam) -> f64 {
    let (d, _) = eps_denominator(space, pi, pj);
    d.powf(-space.dim.half_nm2())
}

/// `(λ_i∂_{λ_i}ε_ij, λ_i^{-1}∇_{a_i}ε_ij)`.
pub fn epsilon_derivs(space: &ModelSpace, pi: &BubbleParam, pj: &BubbleParam) -> (f64, Vec<f64>) {
    let (d, kappa) = eps_denominator(space, pi, pj);
    let h = space.dim.half_nm2();
    let eps = d.powf(-h);
    let (li, lj) = (pi.lambda, pj.lambda);
    let dlam = -h * eps * (li / lj - lj / li + li * lj * kappa) / d;
    let grad = kernel_grad_a(space, &pi.a, &pj.a);
    let da = grad.iter().map(|g| -h * eps * lj * g / d).collect();
    (dlam, da)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionTable {
    pub eps: Vec<Vec<f64>>,
    pub dlam: Vec<Vec<f64>>,
    pub da: Vec<Vec<Vec<f64>>>,
}

type TableRow = (Vec<f64>, Vec<f64>, Vec<Vec<f64>>);

pub fn interaction_table(space: &ModelSpace, ens: &BubbleEnsemble) -> InteractionTable {
    let p = ens.len();
    let rows: Vec<TableRow> = (0..p)
        .into_par_iter()
        .map(|i| {
            let mut e = vec![0.0; p];
            let mut dl = vec![0.0; p];
            let mut da = vec![vec![0.0; space.arity()]; p];
            for j in 0..p {
                if i == j {
                    continue;
                }
                e[j] = epsilon(space, &ens.params[i], &ens.params[j]);
                let (l, a) = epsilon_derivs(space, &ens.params[i], &ens.params[j]);
                dl[j] = l;
                da[j] = a;
            }
            (e, dl, da)
        })
        .collect();
    let mut t = InteractionTable { eps: vec![], dlam: vec![], da: vec![] };
    for (e, dl, da) in rows {
        t.eps.push(e);
        t.dlam.push(dl);
        t.da.push(da);
    }
    t
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "k", rename_all = "snake_case")]
pub enum InteractionKind {
    /// `∫ φ_i^{(n+2)/(n-2)} φ_{k,j}`; for `k = 3` the component along `a_j - a_i`.
    Pair(u8),
    /// `∫ φ^{2n/(n-2)}`.
    SelfNorm,
    /// `∫ φ^{(n+2)/(n-2)} φ_k`, `k = 2`.
    SelfCross(u8),
}

#[derive(Debug, Clone, Copy)]
pub struct InteractionQuad {
    /// Gauss–Kronrod panels per unit of `ln r` in the initial partition.
    pub panels_per_log_unit: f64,
    pub rel_tol: f64,
}

impl InteractionQuad {
    pub const MIN_POINTS_PER_SCALE: f64 = 32.0;

    /// Quadrature nodes per bubble length `1/λ` in the initial partition.
    pub fn points_per_scale(&self) -> f64 {
        15.0 * self.panels_per_log_unit
    }
}

impl Default for InteractionQuad {
    fn default() -> Self {
        InteractionQuad { panels_per_log_unit: 4.0, rel_tol: 1e-9 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InteractionEstimate {
    pub kind: InteractionKind,
    pub numeric: f64,
    pub predicted: f64,
    /// `numeric / predicted`, absent when the prediction is zero.
    pub ratio: Option<f64>,
}

/// Point in polar coordinates around one center, with everything the integrands need.
struct PolarPoint {
    rho2_i: f64,
    rho2_j: f64,
    /// `(x - a_j)·u` with `u` the unit vector from `a_i` to `a_j` (flat chart only).
    axial_j: f64,
}

struct Layout {
    backend: Backend,
    dim: Dim,
    /// Chart distance (flat) or geodesic angle (sphere) between the centers.
    sep: f64,
}

impl Layout {
    /// Measure density and kernel values at `(r, ψ)` around center `i` (or `j` when `around_j`).
    fn point(&self, r: f64, psi: f64, around_j: bool) -> (f64, PolarPoint) {
        let n = self.dim.n();
        let sin_psi = psi.sin();
        let cos_psi = psi.cos();
        let omega = Dim::sphere_area(self.dim.get() - 2);
        let (jac, rho_c, rho_o) = match self.backend {
            Backend::Flat => {
                let d = self.sep;
                let other = (r * r + d * d - 2.0 * r * d * cos_psi).max(0.0);
                (r.powf(n - 1.0), r * r, other)
            }
            Backend::Sphere => {
                let (sr, cr) = r.sin_cos();
                let (sd, cd) = self.sep.sin_cos();
                let c = 2.0 * (1.0 - cr);
                let cosang = cr * cd + sr * sd * cos_psi;
                (sr.powf(n - 1.0), c, (2.0 * (1.0 - cosang)).max(0.0))
            }
        };
        let jac = omega * jac * sin_psi.powf(n - 2.0);
        let pt = if around_j {
            PolarPoint { rho2_i: rho_o, rho2_j: rho_c, axial_j: -r * cos_psi }
        } else {
            PolarPoint { rho2_i: rho_c, rho2_j: rho_o, axial_j: r * cos_psi - self.sep }
        };
        (jac, pt)
    }
}

fn log_breaks(lo: f64, hi: f64, per_unit: f64, extra: &[f64]) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    let m = ((b - a) * per_unit).ceil().max(1.0) as usize;
    let mut v: Vec<f64> = (0..=m).map(|k| a + (b - a) * k as f64 / m as f64).collect();
    for &e in extra {
        if e > lo && e < hi {
            v.push(e.ln());
        }
    }
    v.sort_by(f64::total_cmp);
    v.dedup_by(|x, y| (*x - *y).abs() < 1e-12);
    v
}

/// Quadrature value of an interaction integral together with its asymptotic prediction.
pub fn interaction_integral(
    space: &ModelSpace,
    kind: InteractionKind,
    pi: &BubbleParam,
    pj: Option<&BubbleParam>,
    consts: &ConstantsTable,
    quad: &InteractionQuad,
) -> Result<InteractionEstimate> {
    if quad.points_per_scale() < InteractionQuad::MIN_POINTS_PER_SCALE {
        return Err(Error::UnresolvedScale {
            got: quad.points_per_scale(),
            need: InteractionQuad::MIN_POINTS_PER_SCALE,
        });
    }
    pi.validate(space)?;
    let dim = space.dim;
    let p = dim.p();
    let h = dim.half_nm2();
    let prof = |l: f64, rho2: f64| bubble_profile(dim, l, rho2);
    let r_max = match space.backend {
        Backend::Flat => 1e6,
        Backend::Sphere => PI,
    };
    let opts_inner = QuadOpts { abs_tol: 0.0, rel_tol: quad.rel_tol * 0.1, max_intervals: 2000 };

    match kind {
        InteractionKind::SelfNorm | InteractionKind::SelfCross(_) => {
            let k = match kind {
                InteractionKind::SelfCross(k) => k,
                _ => 1,
            };
            if kind != InteractionKind::SelfNorm && k != 2 {
                return Err(Error::Config(format!("self_cross needs k = 2 (got {k})")));
            }
            let l = pi.lambda;
            let layout = Layout { backend: space.backend, dim, sep: 0.0 };
            let f = |s: f64| {
                let r = s.exp();
                let (jac, pt) = layout.point(r, PI / 2.0, false);
                // integrate the angular factor analytically: ∫ sin^{n-2}ψ dψ = ω_{n-1}/ω_{n-2}
                let ang = dim.omega_nm1() / Dim::sphere_area(dim.get() - 2);
                let phi = prof(l, pt.rho2_i);
                let g = if kind == InteractionKind::SelfNorm {
                    phi.powf(dim.crit())
                } else {
                    let l2r2 = l * l * pt.rho2_i;
                    phi.powf(p) * h * phi * (l2r2 - 1.0) / (l2r2 + 1.0)
                };
                g * jac * ang * r
            };
            let breaks = log_breaks(1e-8 / l, r_max, quad.panels_per_log_unit, &[1.0 / l]);
            let scale = consts.c1;
            let opts = QuadOpts { abs_tol: 1e-14 * scale, rel_tol: quad.rel_tol, max_intervals: 20_000 };
            let v = integrate_with_breaks(f, &breaks, opts)?.value;
            let predicted = if kind == InteractionKind::SelfNorm { consts.c1 } else { 0.0 };
            Ok(InteractionEstimate { kind, numeric: v, predicted, ratio: ratio(v, predicted) })
        }
        InteractionKind::Pair(k) => {
            let pj = pj.ok_or_else(|| Error::Config("pair integral needs two bubbles".into()))?;
            pj.validate(space)?;
            if !(1..=3).contains(&k) {
                return Err(Error::Config(format!("pair_k needs k in 1..=3 (got {k})")));
            }
            if k == 3 && space.backend != Backend::Flat {
                return Err(Error::Config("pair_3 is available on the flat backend only".into()));
            }
            let kappa = kernel_sq_unchecked(space.backend, &pi.a, &pj.a);
            if kappa == 0.0 && k == 3 {
                return Err(Error::Config("pair_3 needs distinct centers".into()));
            }
            let sep = match space.backend {
                Backend::Flat => kappa.sqrt(),
                Backend::Sphere => dot(&pi.a, &pj.a).clamp(-1.0, 1.0).acos(),
            };
            let layout = Layout { backend: space.backend, dim, sep };
            let (li, lj) = (pi.lambda, pj.lambda);
            let integrand = |pt: &PolarPoint| {
                let phi_i = prof(li, pt.rho2_i);
                let phi_j = prof(lj, pt.rho2_j);
                let l2r2 = lj * lj * pt.rho2_j;
                let factor = match k {
                    1 => phi_j,
                    2 => h * phi_j * (l2r2 - 1.0) / (l2r2 + 1.0),
                    _ => 2.0 * h * lj * pt.axial_j / (1.0 + l2r2) * phi_j,
                };
                phi_i.powf(p) * factor
            };
            // smooth partition of unity between the two bubbles
            let weight = |pt: &PolarPoint, around_j: bool| {
                let wi = (li / (1.0 + li * li * pt.rho2_i)).powi(4);
                let wj = (lj / (1.0 + lj * lj * pt.rho2_j)).powi(4);
                if around_j { wj / (wi + wj) } else { wi / (wi + wj) }
            };
            let eps = epsilon(space, pi, pj);
            let scale = eps.max(li.powf(2.0 - dim.n())).max(lj.powf(2.0 - dim.n()));
            let outer_abs = 1e-6 * quad.rel_tol * scale;
            let piece = |around_j: bool| -> Result<f64> {
                let lc = if around_j { lj } else { li };
                let breaks = log_breaks(1e-8 / lc, r_max, quad.panels_per_log_unit, &[1.0 / lc, sep]);
                let span = breaks[breaks.len() - 1] - breaks[0];
                let outer = |s: f64| -> f64 {
                    let r = s.exp();
                    let inner = |psi: f64| {
                        let (jac, pt) = layout.point(r, psi, around_j);
                        integrand(&pt) * weight(&pt, around_j) * jac
                    };
                    let psi_breaks = [0.0, PI / 64.0, PI / 8.0, PI / 2.0, PI];
                    let opts = QuadOpts { abs_tol: 1e-2 * outer_abs / (r * span), ..opts_inner };
                    integrate_with_breaks(inner, &psi_breaks, opts).map(|q| q.value).unwrap_or(f64::NAN) * r
                };
                let opts = QuadOpts { abs_tol: outer_abs, rel_tol: quad.rel_tol, max_intervals: 20_000 };
                let v = integrate_with_breaks(outer, &breaks, opts)?.value;
                if v.is_nan() {
                    return Err(Error::Quadrature { err: f64::NAN, intervals: 0 });
                }
                Ok(v)
            };
            let numeric = piece(false)? + piece(true)?;
            let (dl, da) = epsilon_derivs(space, pj, pi);
            let predicted = match k {
                1 => consts.b1 * eps,
                2 => -consts.b1 * dl,
                _ => {
                    let u: Vec<f64> = pj.a.iter().zip(&pi.a).map(|(x, y)| (x - y) / sep).collect();
                    consts.b1 * dot(&da, &u)
                }
            };
            Ok(InteractionEstimate { kind, numeric, predicted, ratio: ratio(numeric, predicted) })
        }
    }
}

fn ratio(v: f64, pred: f64) -> Option<f64> {
    (pred != 0.0).then(|| v / pred)
}
