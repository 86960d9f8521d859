//! The functional `J`, its variations and the curvature of `g_u = u^{4/(n-2)} g_0`
//! for rotationally symmetric conformal factors on `S^n`.
//!
//! Fields live on cell centers `θ_m` of a partition of `[0, π]`. Cell weights are
//! exact integrals of `ω_{n-1} sin^{n-1}θ`, and the Laplacian is the symmetric
//! two-point flux form with face areas `ω_{n-1} sin^{n-1}` (zero at the poles),
//! so `Σ w v Δu = -Σ A (Δ_f v)(Δ_f u)/Δθ` holds exactly.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::io::{Read, Write};
use std::sync::Arc;

use crate::dim::Dim;
use crate::error::{Error, Result};
use crate::geometry::{Backend, KSpec};

/// Polar-angle grid over `S^n` with finite-volume geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct SphereGrid {
    dim: Dim,
    theta: Vec<f64>,
    weights: Vec<f64>,
    /// `A_{m+1/2} / (θ_{m+1} - θ_m)` for the interior faces.
    face_coef: Vec<f64>,
}

fn sin_power_antiderivative(dim: Dim, t: f64) -> f64 {
    match dim.get() {
        3 => t / 2.0 - (2.0 * t).sin() / 4.0,
        4 => -t.cos() + t.cos().powi(3) / 3.0,
        _ => 3.0 * t / 8.0 - (2.0 * t).sin() / 4.0 + (4.0 * t).sin() / 32.0,
    }
}

impl SphereGrid {
    /// Arbitrary strictly increasing nodes in `(0, π)`.
    pub fn new(dim: Dim, theta: Vec<f64>) -> Result<Self> {
        if theta.len() < 3 {
            return Err(Error::Field("need at least 3 grid points".into()));
        }
        if theta.windows(2).any(|w| w[1] <= w[0]) || theta[0] <= 0.0 || theta[theta.len() - 1] >= PI {
            return Err(Error::Field("grid must be strictly increasing inside (0, π)".into()));
        }
        let m = theta.len();
        let omega = dim.omega_nm1();
        let mut faces = Vec::with_capacity(m + 1);
        faces.push(0.0);
        faces.extend(theta.windows(2).map(|w| 0.5 * (w[0] + w[1])));
        faces.push(PI);
        let weights = faces
            .windows(2)
            .map(|f| omega * (sin_power_antiderivative(dim, f[1]) - sin_power_antiderivative(dim, f[0])))
            .collect();
        let face_coef = (0..m - 1)
            .map(|j| omega * faces[j + 1].sin().powi(dim.get() as i32 - 1) / (theta[j + 1] - theta[j]))
            .collect();
        Ok(SphereGrid { dim, theta, weights, face_coef })
    }

    /// `m` equal cells, nodes at the cell centers.
    pub fn uniform(dim: Dim, m: usize) -> Result<Self> {
        let h = PI / m as f64;
        Self::new(dim, (0..m).map(|j| (j as f64 + 0.5) * h).collect())
    }

    pub fn dim(&self) -> Dim {
        self.dim
    }
    pub fn len(&self) -> usize {
        self.theta.len()
    }
    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }
    pub fn theta(&self) -> &[f64] {
        &self.theta
    }
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
    pub fn face_coef(&self) -> &[f64] {
        &self.face_coef
    }

    /// Ambient point at polar angle `θ` on the meridian through `e_1`.
    pub fn point(&self, theta: f64) -> Vec<f64> {
        let mut x = vec![0.0; self.dim.usize() + 1];
        x[0] = theta.sin();
        x[self.dim.usize()] = theta.cos();
        x
    }

    pub fn integrate(&self, f: &[f64]) -> f64 {
        self.weights.iter().zip(f).map(|(w, v)| w * v).sum()
    }

    /// `Δ_h u`.
    pub fn laplacian(&self, u: &[f64]) -> Vec<f64> {
        self.flux_laplacian(u, None)
    }

    /// `(1/w) Σ_faces c_f A/Δθ (jump)`, with optional per-face coefficients `c_f`.
    pub fn flux_laplacian(&self, u: &[f64], face_extra: Option<&[f64]>) -> Vec<f64> {
        let m = self.len();
        let mut out = vec![0.0; m];
        for j in 0..m - 1 {
            let c = self.face_coef[j] * face_extra.map_or(1.0, |e| e[j]);
            let flux = c * (u[j + 1] - u[j]);
            out[j] += flux;
            out[j + 1] -= flux;
        }
        out.iter_mut().zip(&self.weights).for_each(|(o, w)| *o /= w);
        out
    }

    /// `Σ_faces A/Δθ (v_{j+1}-v_j)(w_{j+1}-w_j) = -Σ w v Δ_h w`.
    pub fn dirichlet(&self, v: &[f64], w: &[f64]) -> f64 {
        self.face_coef
            .iter()
            .enumerate()
            .map(|(j, c)| c * (v[j + 1] - v[j]) * (w[j + 1] - w[j]))
            .sum()
    }
}

/// Rotationally symmetric `K` sampled on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricK {
    values: Vec<f64>,
    max: f64,
}

impl SymmetricK {
    /// Sample `K` along a meridian; `K` must be positive and invariant under rotations
    /// fixing the poles (checked against a second meridian).
    pub fn new(k: &KSpec, grid: &SphereGrid) -> Result<Self> {
        if k.dim() != grid.dim() {
            return Err(Error::Config(format!("K has dim {} but the grid has dim {}", k.dim(), grid.dim())));
        }
        if k.backend() != Backend::Sphere && !k.is_constant() {
            return Err(Error::Config("a non-constant K for the flow must use the sphere backend".into()));
        }
        let n = grid.dim().usize();
        let mut values = Vec::with_capacity(grid.len());
        for &t in grid.theta() {
            let x = grid.point(t);
            let v = if k.is_constant() { k.value(&vec![0.0; k.backend().arity(k.dim())]) } else { k.value(&x) };
            if k.backend() == Backend::Sphere && !k.is_constant() {
                let mut y = vec![0.0; n + 1];
                y[1] = t.sin();
                y[n] = t.cos();
                let v2 = k.value(&y);
                if (v - v2).abs() > 1e-12 * v.abs().max(1.0) {
                    return Err(Error::Config(format!("K is not rotationally symmetric about the pole axis (θ = {t})")));
                }
            }
            if v <= 0.0 || !v.is_finite() {
                return Err(Error::Positivity { at: x, value: v });
            }
            values.push(v);
        }
        let max = values.iter().cloned().fold(f64::MIN, f64::max);
        Ok(SymmetricK { values, max })
    }

    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if let Some((i, &v)) = values.iter().enumerate().find(|(_, &v)| v <= 0.0 || !v.is_finite()) {
            return Err(Error::Positivity { at: vec![i as f64], value: v });
        }
        let max = values.iter().cloned().fold(f64::MIN, f64::max);
        Ok(SymmetricK { values, max })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn max(&self) -> f64 {
        self.max
    }
}

/// Conformal factor `u > 0` on a [`SphereGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Arc<SphereGrid>,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: Arc<SphereGrid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Field(format!("{} values for {} grid points", values.len(), grid.len())));
        }
        if let Some((index, &value)) = values.iter().enumerate().find(|(_, &v)| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::NonPositiveField { index, value });
        }
        Ok(ScalarField { grid, values })
    }

    pub fn from_fn(grid: Arc<SphereGrid>, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = grid.theta().iter().map(|&t| f(t)).collect();
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &Arc<SphereGrid> {
        &self.grid
    }
    pub fn dim(&self) -> Dim {
        self.grid.dim()
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn scaled(&self, s: f64) -> Result<ScalarField> {
        ScalarField::new(self.grid.clone(), self.values.iter().map(|v| v * s).collect())
    }

    /// Perturbed copy `u + h v` (must stay positive).
    pub fn offset(&self, v: &[f64], h: f64) -> Result<ScalarField> {
        ScalarField::new(self.grid.clone(), self.values.iter().zip(v).map(|(u, v)| u + h * v).collect())
    }

    /// `k = ∫ K u^{2n/(n-2)} dμ_{g0}`.
    pub fn volume(&self, k: &SymmetricK) -> f64 {
        let q = self.dim().crit();
        let f: Vec<f64> = self.values.iter().zip(k.values()).map(|(u, kv)| kv * u.powf(q)).collect();
        self.grid.integrate(&f)
    }

    /// Rescale so that `k = 1`.
    pub fn normalized(&self, k: &SymmetricK) -> Result<ScalarField> {
        let kv = self.volume(k);
        self.scaled(kv.powf(-1.0 / self.dim().crit()))
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["theta", "u"])?;
        for (t, u) in self.grid.theta().iter().zip(&self.values) {
            wr.write_record([format!("{t:.17e}"), format!("{u:.17e}")])?;
        }
        wr.flush()?;
        Ok(())
    }

    /// Read a `theta,u` table; the grid is rebuilt from the listed angles.
    pub fn read_csv<R: Read>(dim: Dim, r: R) -> Result<ScalarField> {
        let mut rd = csv::Reader::from_reader(r);
        let headers = rd.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["theta", "u"] {
            return Err(Error::Field(format!("expected header `theta,u`, got `{}`", headers.iter().collect::<Vec<_>>().join(","))));
        }
        let mut theta = Vec::new();
        let mut u = Vec::new();
        for (line, rec) in rd.records().enumerate() {
            let rec = rec?;
            let parse = |i: usize| -> Result<f64> {
                rec.get(i)
                    .and_then(|s| s.trim().parse().ok())
                    .ok_or_else(|| Error::Field(format!("row {}: bad number in column {}", line + 2, i + 1)))
            };
            theta.push(parse(0)?);
            u.push(parse(1)?);
        }
        let grid = Arc::new(SphereGrid::new(dim, theta)?);
        ScalarField::new(grid, u)
    }
}

/// Curvature of `g_u` and the scalar quantities of the functional.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvatureData {
    /// Scalar curvature at each node.
    pub curvature: Vec<f64>,
    pub r: f64,
    pub k: f64,
    pub j: f64,
    pub delta_j: f64,
}

/// `L_h u = -c_n Δ_h u + n(n-1) u`.
pub fn conformal_laplacian(field: &ScalarField) -> Vec<f64> {
    let d = field.dim();
    let lap = field.grid.laplacian(&field.values);
    field.values.iter().zip(&lap).map(|(u, l)| -d.c_n() * l + d.r0() * u).collect()
}

/// `r = ∫ L u · u`, via summation by parts.
fn energy_r(field: &ScalarField) -> f64 {
    let d = field.dim();
    let u = &field.values;
    let sq: Vec<f64> = u.iter().map(|x| x * x).collect();
    d.c_n() * field.grid.dirichlet(u, u) + d.r0() * field.grid.integrate(&sq)
}

/// `J(u) = r / k^{(n-2)/n}`.
pub fn functional(field: &ScalarField, k: &SymmetricK) -> f64 {
    let d = field.dim();
    energy_r(field) / field.volume(k).powf((d.n() - 2.0) / d.n())
}

pub fn curvature(field: &ScalarField, k: &SymmetricK) -> CurvatureData {
    let d = field.dim();
    let lu = conformal_laplacian(field);
    let p = d.p();
    let curv: Vec<f64> = field.values.iter().zip(&lu).map(|(u, l)| l * u.powf(-p)).collect();
    let r = energy_r(field);
    let kv = field.volume(k);
    let a = (d.n() - 2.0) / d.n();
    let j = r / kv.powf(a);
    let dev: Vec<f64> = curv
        .iter()
        .zip(k.values())
        .zip(&field.values)
        .map(|((rr, kk), u)| (rr - r * kk / kv).powi(2) * u.powf(d.crit()))
        .collect();
    let delta_j = 2.0 / kv.powf(a) * field.grid.integrate(&dev).sqrt();
    CurvatureData { curvature: curv, r, k: kv, j, delta_j }
}

/// `∂J(u) v`.
pub fn first_variation(field: &ScalarField, k: &SymmetricK, v: &[f64]) -> f64 {
    let d = field.dim();
    let u = &field.values;
    let a = (d.n() - 2.0) / d.n();
    let r = energy_r(field);
    let kv = field.volume(k);
    let uv: Vec<f64> = u.iter().zip(v).map(|(x, y)| x * y).collect();
    let luv = d.c_n() * field.grid.dirichlet(u, v) + d.r0() * field.grid.integrate(&uv);
    let kuv: Vec<f64> = u.iter().zip(v).zip(k.values()).map(|((x, y), kk)| kk * x.powf(d.p()) * y).collect();
    2.0 * kv.powf(-a) * (luv - r / kv * field.grid.integrate(&kuv))
}

/// `∂²J(u)(v, w)`; exactly symmetric in `(v, w)`.
pub fn second_variation(field: &ScalarField, k: &SymmetricK, v: &[f64], w: &[f64]) -> f64 {
    let d = field.dim();
    let g = &field.grid;
    let u = &field.values;
    let a = (d.n() - 2.0) / d.n();
    let q = d.crit();
    let kk = k.values();
    let bilinear = |x: &[f64], y: &[f64]| {
        let xy: Vec<f64> = x.iter().zip(y).map(|(p, q)| p * q).collect();
        d.c_n() * g.dirichlet(x, y) + d.r0() * g.integrate(&xy)
    };
    let f = bilinear(u, u);
    let gk = field.volume(k);
    let dg = |x: &[f64]| {
        let t: Vec<f64> = u.iter().zip(x).zip(kk).map(|((uu, xx), kv)| kv * uu.powf(q - 1.0) * xx).collect();
        q * g.integrate(&t)
    };
    let ddg: f64 = {
        let t: Vec<f64> = u
            .iter()
            .zip(v)
            .zip(w)
            .zip(kk)
            .map(|(((uu, vv), ww), kv)| kv * uu.powf(q - 2.0) * vv * ww)
            .collect();
        q * (q - 1.0) * g.integrate(&t)
    };
    let (fv, fw) = (2.0 * bilinear(u, v), 2.0 * bilinear(u, w));
    let (gv, gw) = (dg(v), dg(w));
    let fvw = 2.0 * bilinear(v, w);
    fvw * gk.powf(-a) - a * gk.powf(-a - 1.0) * (fv * gw + fw * gv) - a * f * gk.powf(-a - 1.0) * ddg
        + a * (a + 1.0) * f * gk.powf(-a - 2.0) * (gv * gw)
}

/// Named initial data, each normalized to `k = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "snake_case", deny_unknown_fields)]
pub enum Preset {
    Constant,
    /// `1 + amplitude·cos θ`.
    Cosine { amplitude: f64 },
    /// Bubble concentrated at the north pole.
    PoleBubble { lambda: f64 },
}

impl Preset {
    pub fn build(&self, grid: Arc<SphereGrid>, k: &SymmetricK) -> Result<ScalarField> {
        let dim = grid.dim();
        let f = match *self {
            Preset::Constant => ScalarField::from_fn(grid, |_| 1.0)?,
            Preset::Cosine { amplitude } => ScalarField::from_fn(grid, |t| 1.0 + amplitude * t.cos())?,
            Preset::PoleBubble { lambda } => ScalarField::from_fn(grid, |t| {
                // chordal distance squared to the north pole is 2(1 - cos θ)
                crate::bubbles::bubble_profile(dim, lambda, 2.0 * (1.0 - t.cos()))
            })?,
        };
        f.normalized(k)
    }
}
