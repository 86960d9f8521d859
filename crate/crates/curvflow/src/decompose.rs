//! Least-squares splitting of a symmetric field into pole-centred bubbles and a
//! remainder `v`, in the pairing `⟨f, g⟩ = ∫ K u^{4/(n-2)} f g`.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::bubbles::{bubble_derivs, BubbleEnsemble, BubbleParam};
use crate::energy::{ScalarField, SymmetricK};
use crate::error::{Error, Result};
use crate::geometry::ModelSpace;

pub const MAX_ITERATIONS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Pole {
    North,
    South,
}

impl Pole {
    pub fn point(self, n: usize) -> Vec<f64> {
        let mut a = vec![0.0; n + 1];
        a[n] = if self == Pole::North { 1.0 } else { -1.0 };
        a
    }

    fn of(a: &[f64]) -> Option<Pole> {
        let n = a.len() - 1;
        [Pole::North, Pole::South].into_iter().find(|p| {
            let q = p.point(n);
            q.iter().zip(a).all(|(x, y)| (x - y).abs() < 1e-9)
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OrthoResidual {
    /// 1 for `φ`, 2 for `-λ∂_λφ`.
    pub k: u8,
    pub i: usize,
    pub value: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DecompositionResult {
    pub ensemble: BubbleEnsemble,
    pub v: Vec<f64>,
    pub misfit: f64,
    /// `‖v‖` in the weighted pairing.
    pub v_norm: f64,
    pub residuals: Vec<OrthoResidual>,
    /// `(∂_{α_i} m, α_i^{-1}(-λ_i∂_{λ_i} m))` per bubble.
    pub gradient: Vec<(f64, f64)>,
    pub converged: bool,
    pub iterations: usize,
}

/// `(φ₁, φ₂)` sampled on the grid, one pair per bubble.
type Columns = Vec<(Vec<f64>, Vec<f64>)>;

struct Problem<'a> {
    field: &'a ScalarField,
    space: ModelSpace,
    poles: Vec<Pole>,
    /// `w_m K_m u_m^{4/(n-2)}`.
    weight: Vec<f64>,
    points: Vec<Vec<f64>>,
}

impl<'a> Problem<'a> {
    fn new(field: &'a ScalarField, k: &SymmetricK, poles: Vec<Pole>) -> Self {
        let d = field.dim();
        let grid = field.grid();
        let e = 4.0 / (d.n() - 2.0);
        let weight = (0..grid.len())
            .map(|m| grid.weights()[m] * k.values()[m] * field.values()[m].powf(e))
            .collect();
        let points = grid.theta().iter().map(|&t| grid.point(t)).collect();
        Problem { field, space: ModelSpace::sphere(d), poles, weight, points }
    }

    fn ensemble(&self, x: &[f64]) -> BubbleEnsemble {
        let n = self.field.dim().usize();
        BubbleEnsemble::new(
            self.poles.iter().enumerate().map(|(i, p)| BubbleParam::new(x[2 * i], p.point(n), x[2 * i + 1].exp())).collect(),
        )
    }

    /// Remainder `v` and per-bubble `(φ₁, φ₂)` columns.
    fn evaluate(&self, ens: &BubbleEnsemble) -> (Vec<f64>, Columns) {
        let mut v = self.field.values().to_vec();
        let mut cols = Vec::with_capacity(ens.len());
        for p in &ens.params {
            let mut c1 = Vec::with_capacity(v.len());
            let mut c2 = Vec::with_capacity(v.len());
            for (m, x) in self.points.iter().enumerate() {
                let b = bubble_derivs(&self.space, p, x);
                v[m] -= p.alpha * b.phi1;
                c1.push(b.phi1);
                c2.push(b.phi2);
            }
            cols.push((c1, c2));
        }
        (v, cols)
    }

    fn pair(&self, f: &[f64], g: &[f64]) -> f64 {
        self.weight.iter().zip(f).zip(g).map(|((w, a), b)| w * a * b).sum()
    }
}

fn weighted_grad(pr: &Problem, v: &[f64], cols: &Columns, x: &[f64]) -> f64 {
    cols.iter()
        .enumerate()
        .flat_map(|(i, (c1, c2))| [pr.pair(v, c1), x[2 * i] * pr.pair(v, c2)])
        .fold(0.0, |m, g| m.max(g.abs()))
}

fn poles_of(init: &BubbleEnsemble, n: usize) -> Result<Vec<Pole>> {
    if init.is_empty() || init.len() > 2 {
        return Err(Error::Config(format!("symmetric decomposition takes 1 or 2 bubbles (got {})", init.len())));
    }
    let mut poles = Vec::new();
    for (i, p) in init.params.iter().enumerate() {
        if p.a.len() != n + 1 {
            return Err(Error::Config(format!("bubble {i} centre has {} coordinates, expected {}", p.a.len(), n + 1)));
        }
        let pole = Pole::of(&p.a).ok_or_else(|| Error::Config(format!("bubble {i} is not centred at a pole")))?;
        if poles.contains(&pole) {
            return Err(Error::Config("two bubbles share a pole".into()));
        }
        if !(p.alpha > 0.0 && p.lambda > 0.0) {
            return Err(Error::Config(format!("bubble {i} needs alpha > 0 and lambda > 0")));
        }
        poles.push(pole);
    }
    Ok(poles)
}

/// Pairings `⟨v, φ_{k,i}⟩` of the remainder of `ens` with the bubble derivatives.
pub fn orthogonality_residuals(field: &ScalarField, k: &SymmetricK, ens: &BubbleEnsemble) -> Result<Vec<OrthoResidual>> {
    let poles = poles_of(ens, field.dim().usize())?;
    let pr = Problem::new(field, k, poles);
    let (v, cols) = pr.evaluate(ens);
    Ok(cols
        .iter()
        .enumerate()
        .flat_map(|(i, (c1, c2))| {
            [OrthoResidual { k: 1, i, value: pr.pair(&v, c1) }, OrthoResidual { k: 2, i, value: pr.pair(&v, c2) }]
        })
        .collect())
}

/// Misfit `m = ⟨v, v⟩` of an ensemble.
pub fn misfit(field: &ScalarField, k: &SymmetricK, ens: &BubbleEnsemble) -> Result<f64> {
    let poles = poles_of(ens, field.dim().usize())?;
    let pr = Problem::new(field, k, poles);
    let (v, _) = pr.evaluate(ens);
    Ok(pr.pair(&v, &v))
}

/// Levenberg–Marquardt over `(α_i, ln λ_i)` with centres fixed at the poles of `init`.
/// Leaving `λ >= 1` or exhausting the iteration budget gives `converged = false`.
pub fn fit(field: &ScalarField, k: &SymmetricK, init: &BubbleEnsemble) -> Result<DecompositionResult> {
    let n = field.dim().usize();
    let poles = poles_of(init, n)?;
    let pr = Problem::new(field, k, poles);
    let p = init.len();
    let mut x: Vec<f64> = init.params.iter().flat_map(|b| [b.alpha, b.lambda.ln()]).collect();
    let sqrt_w: Vec<f64> = pr.weight.iter().map(|w| w.sqrt()).collect();
    let scale = pr.pair(field.values(), field.values());
    let mut mu = 1e-3;
    let mut iterations = 0;
    let mut converged = false;
    let (mut v, mut cols) = pr.evaluate(&pr.ensemble(&x));
    let mut m = pr.pair(&v, &v);
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let rows = v.len();
        // residual r = sqrt(w) v; dr/dα = -sqrt(w) φ₁, dr/d ln λ = sqrt(w) α φ₂
        let r = DVector::from_iterator(rows, v.iter().zip(&sqrt_w).map(|(a, s)| a * s));
        let mut jac = DMatrix::zeros(rows, 2 * p);
        for (i, (c1, c2)) in cols.iter().enumerate() {
            for row in 0..rows {
                jac[(row, 2 * i)] = -sqrt_w[row] * c1[row];
                jac[(row, 2 * i + 1)] = sqrt_w[row] * x[2 * i] * c2[row];
            }
        }
        let jtj = jac.transpose() * &jac;
        let g = jac.transpose() * &r;
        if g.amax() <= 1e-13 * scale.max(1e-300) {
            converged = true;
            break;
        }
        let mut improved = false;
        for _ in 0..40 {
            let mut a = jtj.clone();
            for d in 0..2 * p {
                a[(d, d)] += mu * jtj[(d, d)].max(1e-300);
            }
            let Some(step) = a.lu().solve(&(-&g)) else {
                mu *= 10.0;
                continue;
            };
            let trial: Vec<f64> = x.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            if trial.chunks(2).any(|c| !(c[0] > 0.0)) {
                mu *= 10.0;
                continue;
            }
            let (tv, tc) = pr.evaluate(&pr.ensemble(&trial));
            let tm = pr.pair(&tv, &tv);
            // at the bottom m stalls at roundoff; a shrinking gradient still counts as progress
            let flat = tm <= m * (1.0 + 1e-13) && weighted_grad(&pr, &tv, &tc, &trial) < g.amax();
            if tm < m || flat {
                let rel = step.iter().zip(&trial).map(|(s, t)| s.abs() / t.abs().max(1.0)).fold(0.0, f64::max);
                x = trial;
                v = tv;
                cols = tc;
                m = tm;
                mu = (mu * 0.3).max(1e-12);
                improved = true;
                if rel < 1e-15 {
                    converged = true;
                }
                break;
            }
            mu *= 10.0;
        }
        if !improved {
            // no descent left at machine resolution
            converged = true;
        }
        if x.chunks(2).any(|c| c[1] < 0.0) {
            converged = false;
            break;
        }
        if converged {
            break;
        }
    }
    let ensemble = pr.ensemble(&x);
    let mut residuals = Vec::new();
    let mut gradient = Vec::new();
    for (i, (c1, c2)) in cols.iter().enumerate() {
        let r1 = pr.pair(&v, c1);
        let r2 = pr.pair(&v, c2);
        residuals.push(OrthoResidual { k: 1, i, value: r1 });
        residuals.push(OrthoResidual { k: 2, i, value: r2 });
        gradient.push(misfit_gradient_parts(&pr, &x, i));
    }
    let lambda_ok = x.chunks(2).all(|c| c[1] >= 0.0);
    Ok(DecompositionResult {
        ensemble,
        misfit: m,
        v_norm: m.sqrt(),
        v,
        residuals,
        gradient,
        converged: converged && lambda_ok,
        iterations,
    })
}

/// Central differences of the misfit in `α_i` and `ln λ_i`, the latter divided by `α_i`;
/// independent of the analytic pairings.
fn misfit_gradient_parts(pr: &Problem, x: &[f64], i: usize) -> (f64, f64) {
    let m_at = |y: &[f64]| {
        let (v, _) = pr.evaluate(&pr.ensemble(y));
        pr.pair(&v, &v)
    };
    let fd = |idx: usize, h: f64| {
        let mut a = x.to_vec();
        let mut b = x.to_vec();
        a[idx] += h;
        b[idx] -= h;
        (m_at(&a) - m_at(&b)) / (2.0 * h)
    };
    let ha = 1e-6 * x[2 * i].abs().max(1e-3);
    let dalpha = fd(2 * i, ha);
    // -λ∂_λ m = -∂_{ln λ} m
    let dlog = -fd(2 * i + 1, 1e-6);
    (dalpha, dlog / x[2 * i])
}
