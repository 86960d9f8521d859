//! Model spaces (round sphere, flat chart), the Green-kernel surrogate and
//! closed-form evaluation of the prescribed function `K`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dim::Dim;
use crate::error::{Error, Result};
use crate::poly::{Monomial, Poly};

const SPHERE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Sphere,
    Flat,
}

impl Backend {
    /// Number of coordinates of a point: `n+1` ambient coordinates on the sphere, `n` on the chart.
    pub fn arity(self, dim: Dim) -> usize {
        match self {
            Backend::Sphere => dim.usize() + 1,
            Backend::Flat => dim.usize(),
        }
    }
}

/// Serialized form of a closed-form scalar function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum FnSpec {
    Polynomial { monomials: Vec<Monomial> },
    Constant { value: f64 },
}

impl FnSpec {
    pub fn constant(value: f64) -> Self {
        FnSpec::Constant { value }
    }

    pub fn to_poly(&self, nvars: usize) -> Result<Poly> {
        match self {
            FnSpec::Constant { value } => Ok(Poly::constant(nvars, *value)),
            FnSpec::Polynomial { monomials } => Poly::from_monomials(nvars, monomials).ok_or_else(|| {
                Error::Config(format!("every monomial needs {nvars} powers"))
            }),
        }
    }

    /// Multiply by a positive constant, as in `K -> sK`.
    pub fn scaled(&self, s: f64) -> FnSpec {
        match self {
            FnSpec::Constant { value } => FnSpec::Constant { value: value * s },
            FnSpec::Polynomial { monomials } => FnSpec::Polynomial {
                monomials: monomials
                    .iter()
                    .map(|m| Monomial { coeff: m.coeff * s, powers: m.powers.clone() })
                    .collect(),
            },
        }
    }
}

/// A scalar function on the active backend without derivative bookkeeping
/// (mass `H`, solution values `ω`).
#[derive(Debug, Clone)]
pub struct ScalarFn {
    spec: FnSpec,
    poly: Poly,
}

impl ScalarFn {
    pub fn new(spec: FnSpec, dim: Dim, backend: Backend) -> Result<Self> {
        let poly = spec.to_poly(backend.arity(dim))?;
        Ok(ScalarFn { spec, poly })
    }

    pub fn spec(&self) -> &FnSpec {
        &self.spec
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.poly.eval(x)
    }
}

#[derive(Debug, Clone)]
pub struct ModelSpace {
    pub dim: Dim,
    pub backend: Backend,
    mass: ScalarFn,
}

impl ModelSpace {
    pub fn new(dim: Dim, backend: Backend, mass: FnSpec) -> Result<Self> {
        let mass = ScalarFn::new(mass, dim, backend)?;
        Ok(ModelSpace { dim, backend, mass })
    }

    /// Flat chart with zero mass.
    pub fn flat(dim: Dim) -> Self {
        Self::new(dim, Backend::Flat, FnSpec::constant(0.0)).expect("constant mass")
    }

    /// Round sphere; its mass vanishes identically.
    pub fn sphere(dim: Dim) -> Self {
        Self::new(dim, Backend::Sphere, FnSpec::constant(0.0)).expect("constant mass")
    }

    pub fn with_mass(mut self, mass: FnSpec) -> Result<Self> {
        self.mass = ScalarFn::new(mass, self.dim, self.backend)?;
        Ok(self)
    }

    pub fn mass_spec(&self) -> &FnSpec {
        self.mass.spec()
    }

    pub fn arity(&self) -> usize {
        self.backend.arity(self.dim)
    }

    /// `H(a)`; negative values are rejected.
    pub fn mass(&self, a: &[f64]) -> Result<f64> {
        self.check_point(a)?;
        let h = self.mass.eval(a);
        if h < 0.0 {
            return Err(Error::NegativeMass { at: a.to_vec(), value: h });
        }
        Ok(h)
    }

    pub fn check_point(&self, a: &[f64]) -> Result<()> {
        if a.len() != self.arity() {
            return Err(Error::InvalidPoint(format!(
                "expected {} coordinates, got {}",
                self.arity(),
                a.len()
            )));
        }
        if a.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidPoint(format!("non-finite coordinate in {a:?}")));
        }
        if self.backend == Backend::Sphere {
            let norm = dot(a, a).sqrt();
            if (norm - 1.0).abs() > SPHERE_TOL {
                return Err(Error::InvalidPoint(format!("|a| = {norm} is not 1")));
            }
        }
        Ok(())
    }

    /// Tangent projection at `a` (identity on the flat chart).
    pub fn project_tangent(&self, a: &[f64], v: &mut [f64]) {
        if self.backend == Backend::Sphere {
            let s = dot(a, v);
            for (vi, ai) in v.iter_mut().zip(a) {
                *vi -= s * ai;
            }
        }
    }

    /// Move from `a` along tangent vector `v`; on the sphere the result is renormalized.
    pub fn retract(&self, a: &[f64], v: &[f64]) -> Vec<f64> {
        let mut x: Vec<f64> = a.iter().zip(v).map(|(p, q)| p + q).collect();
        if self.backend == Backend::Sphere {
            let s = dot(&x, &x).sqrt();
            x.iter_mut().for_each(|c| *c /= s);
        }
        x
    }

    /// Orthonormal basis of the tangent space at `a`.
    pub fn tangent_frame(&self, a: &[f64]) -> Vec<Vec<f64>> {
        let m = self.arity();
        let n = self.dim.usize();
        if self.backend == Backend::Flat {
            return (0..n).map(|i| unit(m, i)).collect();
        }
        let mut frame: Vec<Vec<f64>> = Vec::with_capacity(n);
        let mut basis = vec![a.to_vec()];
        // Gram–Schmidt over coordinate axes, least aligned with a first
        let mut axes: Vec<usize> = (0..m).collect();
        axes.sort_by(|&i, &j| a[i].abs().total_cmp(&a[j].abs()));
        for i in axes {
            let mut v = unit(m, i);
            for b in &basis {
                let s = dot(&v, b);
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= s * y);
            }
            let norm = dot(&v, &v).sqrt();
            if norm > 1e-6 {
                v.iter_mut().for_each(|x| *x /= norm);
                basis.push(v.clone());
                frame.push(v);
            }
            if frame.len() == n {
                break;
            }
        }
        frame
    }

    /// Geodesic-free distance used for sampling tubes.
    pub fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn unit(m: usize, i: usize) -> Vec<f64> {
    let mut v = vec![0.0; m];
    v[i] = 1.0;
    v
}

/// `γ_n G^{2/(2-n)}(a, b)`: squared Euclidean distance on the chart,
/// squared chordal distance on the sphere.
pub fn green_kernel_sq(space: &ModelSpace, a: &[f64], b: &[f64]) -> Result<f64> {
    space.check_point(a)?;
    space.check_point(b)?;
    Ok(kernel_sq_unchecked(space.backend, a, b))
}

pub(crate) fn kernel_sq_unchecked(_backend: Backend, a: &[f64], b: &[f64]) -> f64 {
    // on the unit sphere |a-b|² is the chordal distance squared; this form keeps
    // digits for nearby points where 2 - 2<a,b> would cancel
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Gradient of the kernel in its first argument, as a tangent vector at `a`.
pub fn kernel_grad_a(space: &ModelSpace, a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut g: Vec<f64> = a.iter().zip(b).map(|(x, y)| 2.0 * (x - y)).collect();
    space.project_tangent(a, &mut g);
    g
}

/// Values of `K` and the derivatives entering the shadow flow at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct KValues {
    pub k: f64,
    pub grad: Vec<f64>,
    pub lap: f64,
    pub grad_lap: Vec<f64>,
}

/// Prescribed function `K` with exact derivative evaluators.
#[derive(Debug, Clone)]
pub struct KSpec {
    spec: FnSpec,
    dim: Dim,
    backend: Backend,
    poly: Poly,
    grad: Vec<Poly>,
    hess: Vec<Vec<Poly>>,
    // on the sphere this extends the Laplace–Beltrami operator off the sphere
    lap: Poly,
    grad_lap: Vec<Poly>,
}

impl KSpec {
    pub fn new(spec: FnSpec, dim: Dim, backend: Backend) -> Result<Self> {
        let nvars = backend.arity(dim);
        let poly = spec.to_poly(nvars)?;
        let lap = match backend {
            Backend::Flat => poly.laplacian(),
            Backend::Sphere => {
                // Δ_S F = ΔF - E(EF) - (n-1) EF on |x| = 1, E the Euler operator
                let e = poly.euler();
                poly.laplacian()
                    .add(&e.euler().scale(-1.0))
                    .add(&e.scale(-(dim.n() - 1.0)))
            }
        };
        Ok(KSpec {
            spec,
            dim,
            backend,
            grad: poly.gradient(),
            hess: poly.hessian(),
            grad_lap: lap.gradient(),
            lap,
            poly,
        })
    }

    pub fn constant(value: f64, dim: Dim, backend: Backend) -> Self {
        Self::new(FnSpec::constant(value), dim, backend).expect("constant spec")
    }

    pub fn spec(&self) -> &FnSpec {
        &self.spec
    }

    pub fn dim(&self) -> Dim {
        self.dim
    }

    pub fn backend(&self) -> Backend {
        self.backend
    }

    pub fn is_constant(&self) -> bool {
        self.poly.is_constant()
    }

    /// `sK` with the same backend.
    pub fn scaled(&self, s: f64) -> KSpec {
        KSpec::new(self.spec.scaled(s), self.dim, self.backend).expect("scaling keeps arity")
    }

    /// Value without the positivity check.
    pub fn value(&self, x: &[f64]) -> f64 {
        self.poly.eval(x)
    }

    fn project(&self, a: &[f64], mut v: Vec<f64>) -> Vec<f64> {
        if self.backend == Backend::Sphere {
            let s = dot(a, &v);
            v.iter_mut().zip(a).for_each(|(vi, ai)| *vi -= s * ai);
        }
        v
    }

    pub fn gradient(&self, a: &[f64]) -> Vec<f64> {
        let g = self.grad.iter().map(|p| p.eval(a)).collect();
        self.project(a, g)
    }

    pub fn laplacian(&self, a: &[f64]) -> f64 {
        self.lap.eval(a)
    }

    pub fn grad_laplacian(&self, a: &[f64]) -> Vec<f64> {
        let g = self.grad_lap.iter().map(|p| p.eval(a)).collect();
        self.project(a, g)
    }

    /// Covariant Hessian as a matrix acting on ambient (sphere) or chart vectors.
    pub fn hessian(&self, a: &[f64]) -> Vec<Vec<f64>> {
        let m = a.len();
        let h: Vec<Vec<f64>> = self.hess.iter().map(|row| row.iter().map(|p| p.eval(a)).collect()).collect();
        if self.backend == Backend::Flat {
            return h;
        }
        // P H P - <x, ∇F> P
        let radial = dot(a, &self.grad.iter().map(|p| p.eval(a)).collect::<Vec<_>>());
        let proj = |i: usize, j: usize| if i == j { 1.0 } else { 0.0 } - a[i] * a[j];
        let mut out = vec![vec![0.0; m]; m];
        for i in 0..m {
            for j in 0..m {
                let mut s = 0.0;
                for k in 0..m {
                    for l in 0..m {
                        s += proj(i, k) * h[k][l] * proj(l, j);
                    }
                }
                out[i][j] = s - radial * proj(i, j);
            }
        }
        out
    }
}

/// `(K, ∇K, ΔK, ∇ΔK)` at `a`.
pub fn kspec_eval(k: &KSpec, space: &ModelSpace, a: &[f64]) -> Result<KValues> {
    space.check_point(a)?;
    let value = k.value(a);
    if value <= 0.0 || !value.is_finite() {
        return Err(Error::Positivity { at: a.to_vec(), value });
    }
    Ok(KValues { k: value, grad: k.gradient(a), lap: k.laplacian(a), grad_lap: k.grad_laplacian(a) })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CondVariant {
    /// Inequalities on the critical set of `K`.
    #[serde(rename = "Cond_n")]
    Critical,
    /// Inequalities on the maximum set of `K`.
    #[serde(rename = "Cond_n'")]
    MaxSet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CondStatus {
    Pass,
    Fail,
    Inconclusive,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CondReport {
    pub dim: Dim,
    pub condition: CondVariant,
    pub status: CondStatus,
    pub pass: bool,
    /// Worst slack of the required inequality; `+inf` when the tested set is empty.
    pub margin: f64,
    pub witness: Option<Vec<f64>>,
    pub critical_points: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct CondOptions {
    pub budget: usize,
    /// `c` in `ΔK/K > -c`.
    pub margin_c: f64,
    pub variant: CondVariant,
    /// Half-width of the seed box on the flat chart.
    pub box_radius: f64,
    pub tube_radius: f64,
    /// The manifold clause: true when the manifold is not conformally the round sphere.
    pub not_round_sphere: bool,
}

impl Default for CondOptions {
    fn default() -> Self {
        CondOptions {
            budget: 64,
            margin_c: 1e-3,
            variant: CondVariant::Critical,
            box_radius: 0.5,
            tube_radius: 0.1,
            not_round_sphere: true,
        }
    }
}

const PRIMES: [u32; 8] = [2, 3, 5, 7, 11, 13, 17, 19];

fn radical_inverse(mut i: u64, base: u32) -> f64 {
    let b = base as f64;
    let mut inv = 1.0 / b;
    let mut r = 0.0;
    while i > 0 {
        r += (i % base as u64) as f64 * inv;
        i /= base as u64;
        inv /= b;
    }
    r
}

/// Point `i` of the Halton sequence in `[0,1)^d`.
pub fn halton(i: u64, d: usize) -> Vec<f64> {
    (0..d).map(|k| radical_inverse(i + 1, PRIMES[k])).collect()
}

fn halton_direction(i: u64, m: usize) -> Vec<f64> {
    // skip points too close to the cube center to normalize
    let mut j = i;
    loop {
        let v: Vec<f64> = halton(j, m).into_iter().map(|x| 2.0 * x - 1.0).collect();
        let s = dot(&v, &v).sqrt();
        if s > 0.1 && s <= 1.0 {
            return v.into_iter().map(|x| x / s).collect();
        }
        j += 7919;
    }
}

fn seed_point(space: &ModelSpace, i: u64, radius: f64) -> Vec<f64> {
    match space.backend {
        Backend::Flat => halton(i, space.arity()).into_iter().map(|x| radius * (2.0 * x - 1.0)).collect(),
        Backend::Sphere => halton_direction(i, space.arity()),
    }
}

/// Damped Newton on `∇K = 0`; returns the point once `|∇K| < 1e-8`.
fn locate_critical(k: &KSpec, space: &ModelSpace, seed: Vec<f64>, radius: f64) -> Option<Vec<f64>> {
    let mut x = seed;
    let mut mu = 1e-12;
    for _ in 0..200 {
        let g = k.gradient(&x);
        let gnorm = dot(&g, &g).sqrt();
        if gnorm < 1e-8 {
            return Some(x);
        }
        let frame = space.tangent_frame(&x);
        let h = k.hessian(&x);
        let n = frame.len();
        let gf = DVector::from_iterator(n, frame.iter().map(|e| dot(e, &g)));
        let hf = DMatrix::from_fn(n, n, |i, j| {
            let hej: Vec<f64> = h.iter().map(|row| dot(row, &frame[j])).collect();
            dot(&frame[i], &hej)
        });
        // Levenberg–Marquardt on |∇K|²: (HᵀH + μ) s = -Hᵀ g
        let hth = hf.transpose() * &hf;
        let rhs = -(hf.transpose() * &gf);
        let mut accepted = false;
        for _ in 0..30 {
            let damped = &hth + DMatrix::identity(n, n) * mu * (1.0 + hth.diagonal().amax());
            let Some(step) = damped.lu().solve(&rhs) else {
                mu *= 10.0;
                continue;
            };
            let v: Vec<f64> = (0..space.arity())
                .map(|c| (0..n).map(|i| step[i] * frame[i][c]).sum())
                .collect();
            let trial = space.retract(&x, &v);
            let gt = k.gradient(&trial);
            if dot(&gt, &gt) < dot(&g, &g) {
                x = trial;
                mu = (mu * 0.1).max(1e-15);
                accepted = true;
                break;
            }
            mu *= 10.0;
        }
        if !accepted {
            return None;
        }
        if space.backend == Backend::Flat && x.iter().any(|c| c.abs() > 4.0 * radius) {
            return None;
        }
    }
    None
}

fn critical_set(k: &KSpec, space: &ModelSpace, opts: &CondOptions) -> Vec<Vec<f64>> {
    let mut found: Vec<Vec<f64>> = Vec::new();
    for i in 0..opts.budget.max(1) as u64 {
        let seed = seed_point(space, i, opts.box_radius);
        if let Some(x) = locate_critical(k, space, seed, opts.box_radius) {
            if k.value(&x) > 0.0 && !found.iter().any(|y| space.distance(y, &x) < 1e-6) {
                found.push(x);
            }
        }
    }
    found
}

/// Sample the dimension-specific condition on the critical (or maximum) set of `K`.
pub fn check_cond(k: &KSpec, space: &ModelSpace, opts: &CondOptions) -> Result<CondReport> {
    if opts.budget == 0 {
        return Err(Error::Config("sample budget must be at least 1".into()));
    }
    let dim = space.dim;
    let mut crit = critical_set(k, space, opts);
    let report = |status: CondStatus, margin: f64, witness: Option<Vec<f64>>, count: usize| CondReport {
        dim,
        condition: opts.variant,
        pass: margin > 0.0,
        status,
        margin,
        witness,
        critical_points: count,
    };
    if crit.is_empty() {
        return Ok(report(CondStatus::Inconclusive, 0.0, None, 0));
    }
    if opts.variant == CondVariant::MaxSet {
        let kmax = crit.iter().map(|x| k.value(x)).fold(f64::MIN, f64::max);
        crit.retain(|x| k.value(x) >= kmax - 1e-10 * kmax.abs().max(1.0));
    }
    let count = crit.len();
    if !opts.not_round_sphere {
        return Ok(report(CondStatus::Fail, 0.0, crit.first().cloned(), count));
    }
    let mut margin = f64::INFINITY;
    let mut witness = None;
    match dim.get() {
        3 => {}
        4 => {
            for x in &crit {
                let m = k.laplacian(x) / k.value(x) + opts.margin_c;
                if m < margin {
                    margin = m;
                    witness = Some(x.clone());
                }
            }
        }
        _ => {
            let m = space.arity();
            let per_point = opts.budget.max(64) as u64;
            for x in &crit {
                for s in 0..per_point {
                    let h = halton(s, 1)[0];
                    let dir = halton_direction(s * 31 + 5, m);
                    let mut v: Vec<f64> = dir.iter().map(|d| d * opts.tube_radius * (h + 1e-3)).collect();
                    space.project_tangent(x, &mut v);
                    let y = space.retract(x, &v);
                    if k.value(&y) <= 0.0 {
                        continue;
                    }
                    let lap = k.laplacian(&y);
                    if lap >= 0.0 {
                        continue;
                    }
                    let ratio = dot(&k.grad_laplacian(&y), &k.gradient(&y)) / (lap * lap);
                    let slack = ratio - 1.0 / 3.0;
                    if slack < margin {
                        margin = slack;
                        witness = Some(y);
                    }
                }
            }
        }
    }
    let status = if margin > 0.0 { CondStatus::Pass } else { CondStatus::Fail };
    Ok(report(status, margin, witness.or_else(|| crit.first().cloned()), count))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quartic_k(n: usize) -> FnSpec {
        let mut monomials = vec![Monomial { coeff: 1.0, powers: vec![0; n] }];
        for i in 0..n {
            let mut p = vec![0; n];
            p[i] = 4;
            monomials.push(Monomial { coeff: -1.0, powers: p });
        }
        FnSpec::Polynomial { monomials }
    }

    #[test]
    fn kernel_examples() {
        let s3 = ModelSpace::sphere(Dim::THREE);
        let north = [0.0, 0.0, 0.0, 1.0];
        let south = [0.0, 0.0, 0.0, -1.0];
        assert_eq!(green_kernel_sq(&s3, &north, &north).unwrap(), 0.0);
        assert!((green_kernel_sq(&s3, &north, &south).unwrap() - 4.0).abs() < 1e-15);
        let f5 = ModelSpace::flat(Dim::FIVE);
        let o = [0.0; 5];
        let e = [1.0, 0.0, 0.0, 0.0, 0.0];
        assert_eq!(green_kernel_sq(&f5, &o, &e).unwrap(), 1.0);
    }

    #[test]
    fn kernel_rejects_off_sphere_points() {
        let s3 = ModelSpace::sphere(Dim::THREE);
        let bad = [0.0, 0.0, 0.0, 1.1];
        let north = [0.0, 0.0, 0.0, 1.0];
        assert!(matches!(green_kernel_sq(&s3, &bad, &north), Err(Error::InvalidPoint(_))));
    }

    #[test]
    fn kspec_examples() {
        let d = Dim::FIVE;
        let space = ModelSpace::flat(d);
        let k1 = KSpec::constant(1.0, d, Backend::Flat);
        let v = kspec_eval(&k1, &space, &[0.3; 5]).unwrap();
        assert_eq!((v.k, v.lap), (1.0, 0.0));
        assert!(v.grad.iter().chain(&v.grad_lap).all(|&x| x == 0.0));

        let k = KSpec::new(quartic_k(5), d, Backend::Flat).unwrap();
        let t = 0.2;
        let v = kspec_eval(&k, &space, &[t; 5]).unwrap();
        assert!((v.lap + 60.0 * t * t).abs() < 1e-14);

        let d4 = Dim::FOUR;
        let k = KSpec::new(
            FnSpec::Polynomial {
                monomials: vec![
                    Monomial { coeff: 1.0, powers: vec![0; 4] },
                    Monomial { coeff: 1.0, powers: vec![2, 0, 0, 0] },
                ],
            },
            d4,
            Backend::Flat,
        )
        .unwrap();
        let v = kspec_eval(&k, &ModelSpace::flat(d4), &[0.0; 4]).unwrap();
        assert!(v.grad.iter().all(|&g| g == 0.0));
        assert_eq!(v.lap, 2.0);
    }

    #[test]
    fn positivity_violation() {
        let d = Dim::FIVE;
        let k = KSpec::new(quartic_k(5), d, Backend::Flat).unwrap();
        let r = kspec_eval(&k, &ModelSpace::flat(d), &[1.0; 5]);
        assert!(matches!(r, Err(Error::Positivity { .. })));
    }

    #[test]
    fn sphere_laplacian_of_height_function() {
        // x_{n+1} is a first spherical harmonic: Δ_S = -n
        for d in Dim::all() {
            let m = d.usize() + 1;
            let mut p = vec![0; m];
            p[m - 1] = 1;
            let spec = FnSpec::Polynomial {
                monomials: vec![
                    Monomial { coeff: 2.0, powers: vec![0; m] },
                    Monomial { coeff: 1.0, powers: p },
                ],
            };
            let k = KSpec::new(spec, d, Backend::Sphere).unwrap();
            let mut x = vec![0.0; m];
            x[0] = 0.6;
            x[m - 1] = 0.8;
            assert!((k.laplacian(&x) + d.n() * 0.8).abs() < 1e-14);
            let g = k.gradient(&x);
            assert!(dot(&g, &x).abs() < 1e-15);
        }
    }

    #[test]
    fn cond_constant_k_passes_everywhere() {
        for d in Dim::all() {
            let space = ModelSpace::flat(d);
            let k = KSpec::constant(1.0, d, Backend::Flat);
            let r = check_cond(&k, &space, &CondOptions { budget: 4, ..Default::default() }).unwrap();
            assert!(r.pass, "{d}: {r:?}");
            if d == Dim::FOUR {
                assert!((r.margin - 1e-3).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn cond5_fails_for_quartic_scenario() {
        let d = Dim::FIVE;
        let k = KSpec::new(quartic_k(5), d, Backend::Flat).unwrap();
        let r = check_cond(&k, &ModelSpace::flat(d), &CondOptions { budget: 8, ..Default::default() }).unwrap();
        assert_eq!(r.status, CondStatus::Fail);
        assert!(r.margin < 0.0);
        // the worst ratio over all directions is 2/15, reached on the diagonals
        assert!(r.margin >= 2.0 / 15.0 - 1.0 / 3.0 - 1e-12);
    }

    #[test]
    fn cond4_passes_at_chart_minimum() {
        let d = Dim::FOUR;
        let spec = FnSpec::Polynomial {
            monomials: vec![
                Monomial { coeff: 1.0, powers: vec![0; 4] },
                Monomial { coeff: 1.0, powers: vec![2, 0, 0, 0] },
            ],
        };
        let k = KSpec::new(spec, d, Backend::Flat).unwrap();
        let r = check_cond(&k, &ModelSpace::flat(d), &CondOptions::default()).unwrap();
        assert!(r.pass);
        assert!((r.margin - 2.001).abs() < 1e-9);
    }

    #[test]
    fn manifold_clause_failure_is_reported() {
        let d = Dim::THREE;
        let k = KSpec::constant(1.0, d, Backend::Flat);
        let opts = CondOptions { not_round_sphere: false, budget: 2, ..Default::default() };
        let r = check_cond(&k, &ModelSpace::flat(d), &opts).unwrap();
        assert!(!r.pass);
    }

    #[test]
    fn no_critical_point_is_inconclusive() {
        let d = Dim::THREE;
        let spec = FnSpec::Polynomial {
            monomials: vec![
                Monomial { coeff: 10.0, powers: vec![0; 3] },
                Monomial { coeff: 1.0, powers: vec![1, 0, 0] },
            ],
        };
        let k = KSpec::new(spec, d, Backend::Flat).unwrap();
        let r = check_cond(&k, &ModelSpace::flat(d), &CondOptions { budget: 4, ..Default::default() }).unwrap();
        assert_eq!(r.status, CondStatus::Inconclusive);
        assert!(!r.pass);
    }
}
