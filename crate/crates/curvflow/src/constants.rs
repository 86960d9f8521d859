//! Radial-integral constants `c_k, b_k, e_k, d_k` and their ratios.
//!
//! Every constant is `prefactor * ∫_{R^n} f(|x|) dx` for a rational radial
//! profile `f(r) = r^m P(r²) / (1+r²)^e`. The integral is reduced to
//! `ω_{n-1} ∫_0^∞ f(r) r^{n-1} dr` and evaluated adaptively on `[0, R]`, with
//! `R` picked from an explicit bound on the tail.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::dim::Dim;
use crate::error::{Error, Result};
use crate::quad::{integrate_with_breaks, QuadOpts};

/// Version of the layout of [`ConstantsTable`] as written to JSON.
pub const SCHEMA_VERSION: &str = "1";

const TAIL_TOL: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConstId {
    C1,
    C2,
    C3,
    B1,
    B2,
    B3,
    E1,
    E2,
    E3,
    /// Second expression for `e3`, from the `r²/(1+r²)^{n+1}` moment.
    E3alt,
    E4,
    D1,
    D2,
}

impl ConstId {
    pub const ALL: [ConstId; 13] = [
        ConstId::C1,
        ConstId::C2,
        ConstId::C3,
        ConstId::B1,
        ConstId::B2,
        ConstId::B3,
        ConstId::E1,
        ConstId::E2,
        ConstId::E3,
        ConstId::E3alt,
        ConstId::E4,
        ConstId::D1,
        ConstId::D2,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ConstId::C1 => "c1",
            ConstId::C2 => "c2",
            ConstId::C3 => "c3",
            ConstId::B1 => "b1",
            ConstId::B2 => "b2",
            ConstId::B3 => "b3",
            ConstId::E1 => "e1",
            ConstId::E2 => "e2",
            ConstId::E3 => "e3",
            ConstId::E3alt => "e3alt",
            ConstId::E4 => "e4",
            ConstId::D1 => "d1",
            ConstId::D2 => "d2",
        }
    }
}

impl fmt::Display for ConstId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ConstId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ConstId::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown integrand `{s}`")))
    }
}

/// `prefactor * r^rpow * Σ numer[k] r^{2k} / (1+r²)^denom`.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialForm {
    pub prefactor: f64,
    pub rpow: f64,
    pub numer: Vec<f64>,
    pub denom: f64,
}

impl RadialForm {
    pub fn eval(&self, r: f64) -> f64 {
        let r2 = r * r;
        let p = self.numer.iter().rev().fold(0.0, |acc, &c| acc * r2 + c);
        let rp = if self.rpow == 0.0 { 1.0 } else { r.powf(self.rpow) };
        self.prefactor * rp * p / (1.0 + r2).powf(self.denom)
    }

    /// Exponent `s` with `|f(r)| r^{n-1} <= C r^{s-1}` for `r >= 1`.
    fn tail_exponent(&self, dim: Dim) -> f64 {
        let deg = (self.numer.len().max(1) - 1) as f64;
        self.rpow + 2.0 * deg - 2.0 * self.denom + dim.n()
    }
}

/// Radial profile of each registered constant.
pub fn radial_form(id: ConstId, dim: Dim) -> RadialForm {
    let n = dim.n();
    let form = |prefactor: f64, rpow: f64, numer: &[f64], denom: f64| RadialForm {
        prefactor,
        rpow,
        numer: numer.to_vec(),
        denom,
    };
    match id {
        ConstId::C1 => form(1.0, 0.0, &[1.0], n),
        ConstId::C2 => form((n - 2.0).powi(2) / 4.0, 0.0, &[1.0, -2.0, 1.0], n + 2.0),
        ConstId::C3 => form((n - 2.0).powi(2) / n, 0.0, &[0.0, 1.0], n + 2.0),
        ConstId::B1 => form(1.0, 0.0, &[1.0], (n + 2.0) / 2.0),
        ConstId::B2 => form((n + 2.0) / 2.0, 0.0, &[-1.0, 1.0], (n + 4.0) / 2.0),
        ConstId::B3 => form((n - 2.0) / 2.0, 0.0, &[1.0], (n + 2.0) / 2.0),
        ConstId::E1 => form(1.0 / (2.0 * n), 0.0, &[0.0, 1.0], n),
        ConstId::E2 => form((n - 2.0) / (4.0 * n), 0.0, &[0.0, -1.0, 1.0], n + 1.0),
        ConstId::E3 => form((n - 2.0) / (2.0 * n), 0.0, &[1.0], n),
        ConstId::E3alt => form((n - 2.0) / n, 0.0, &[0.0, 1.0], n + 1.0),
        ConstId::E4 => form((n - 2.0) / (4.0 * n * n), 0.0, &[0.0, 1.0], n),
        ConstId::D1 => form((n - 1.0) / n, n - 2.0, &[1.0], n),
        ConstId::D2 => form(n - 1.0, n - 2.0, &[-1.0, 1.0], n + 1.0),
    }
}

/// `∫_{R^n}` of a radial profile, to absolute error below `1e-10`.
pub fn radial_integral_form(form: &RadialForm, dim: Dim, label: &str) -> Result<f64> {
    let s = form.tail_exponent(dim);
    if s >= 0.0 {
        return Err(Error::Divergent(label.to_string()));
    }
    let omega = dim.omega_nm1();
    let bound: f64 = form.prefactor.abs() * form.numer.iter().map(|c| c.abs()).sum::<f64>() * omega;
    // tail over [R, ∞) is at most bound * R^s / |s|
    let mut breaks = vec![0.0, 0.5, 1.0];
    let mut r: f64 = 1.0;
    while bound * r.powf(s) / -s > TAIL_TOL {
        r *= 2.0;
        breaks.push(r);
    }
    let n = dim.n();
    let opts = QuadOpts { abs_tol: 1e-14, rel_tol: 1e-14, max_intervals: 20_000 };
    let res = integrate_with_breaks(|r| form.eval(r) * r.powf(n - 1.0), &breaks, opts)?;
    Ok(omega * res.value)
}

pub fn radial_integral(id: ConstId, dim: Dim) -> Result<f64> {
    radial_integral_form(&radial_form(id, dim), dim, id.name())
}

/// All constants for one dimension. `b1` is fixed as `∫(1+r²)^{-(n+2)/2}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantsTable {
    pub dim: Dim,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub b1: f64,
    pub b2: f64,
    pub b3: f64,
    pub e1: f64,
    pub e2: f64,
    pub e3: f64,
    pub e4: f64,
    pub d1: f64,
    pub d2: f64,
}

impl ConstantsTable {
    pub fn gamma1(&self) -> f64 {
        self.e1 / self.c1
    }
    /// Coefficient of `ΔK/(Kλ²)` in the scale equation.
    pub fn gamma2(&self) -> f64 {
        self.e2 / self.c2
    }
    /// Coefficient of `∇K/(Kλ)` in the position equation.
    pub fn gamma3(&self) -> f64 {
        self.e3 / self.c3
    }
    pub fn gamma4(&self) -> f64 {
        self.e4 / self.c3
    }
    pub fn gamma_d2(&self) -> f64 {
        self.d2 / self.c2
    }
    pub fn gamma3_over_gamma2(&self) -> f64 {
        self.gamma3() / self.gamma2()
    }

    /// `c₀ = 4n(n-1) c1^{2/n}`: the energy of one bubble under `K ≡ 1`.
    pub fn c0(&self) -> f64 {
        let n = self.dim.n();
        4.0 * n * (n - 1.0) * self.c1.powf(2.0 / n)
    }

    /// Flat key/value view used for the JSON table.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "schema_version": SCHEMA_VERSION,
            "dim": self.dim.get(),
            "c1": self.c1,
            "c2": self.c2,
            "c3": self.c3,
            "b1": self.b1,
            "b2": self.b2,
            "b3": self.b3,
            "e1": self.e1,
            "e2": self.e2,
            "e3": self.e3,
            "e4": self.e4,
            "d1": self.d1,
            "d2": self.d2,
            "gamma1": self.gamma1(),
            "gamma2": self.gamma2(),
            "gamma3": self.gamma3(),
            "gamma4": self.gamma4(),
            "gamma_d2": self.gamma_d2(),
            "gamma3_over_gamma2": self.gamma3_over_gamma2(),
            "c0": self.c0(),
        })
    }
}

pub fn constants_table(dim: Dim) -> Result<ConstantsTable> {
    let q = |id| radial_integral(id, dim);
    Ok(ConstantsTable {
        dim,
        c1: q(ConstId::C1)?,
        c2: q(ConstId::C2)?,
        c3: q(ConstId::C3)?,
        b1: q(ConstId::B1)?,
        b2: q(ConstId::B2)?,
        b3: q(ConstId::B3)?,
        e1: q(ConstId::E1)?,
        e2: q(ConstId::E2)?,
        e3: q(ConstId::E3)?,
        e4: q(ConstId::E4)?,
        d1: q(ConstId::D1)?,
        d2: q(ConstId::D2)?,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IdentityReport {
    pub dim: Dim,
    /// `γ3/γ2 - 3`, only meaningful for `n = 5`.
    pub gamma_ratio: Option<f64>,
    /// `e3` from the `(1+r²)^{-n}` moment minus `e3` from the `r²/(1+r²)^{n+1}` moment.
    pub e3_two_ways: f64,
    pub b2_minus_b3: f64,
    /// `b2/b1 - (n-2)/2`.
    pub b2_over_b1: f64,
    /// `d2/d1 - (n-2)`.
    pub d2_over_d1: f64,
}

impl IdentityReport {
    pub fn max_abs(&self) -> f64 {
        [self.gamma_ratio.unwrap_or(0.0), self.e3_two_ways, self.b2_minus_b3, self.b2_over_b1, self.d2_over_d1]
            .iter()
            .fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

pub fn verify_identities(table: &ConstantsTable) -> Result<IdentityReport> {
    let dim = table.dim;
    let e3alt = radial_integral(ConstId::E3alt, dim)?;
    Ok(IdentityReport {
        dim,
        gamma_ratio: (dim == Dim::FIVE).then(|| table.gamma3_over_gamma2() - 3.0),
        e3_two_ways: table.e3 - e3alt,
        b2_minus_b3: table.b2 - table.b3,
        b2_over_b1: table.b2 / table.b1 - dim.half_nm2(),
        d2_over_d1: table.d2 / table.d1 - (dim.n() - 2.0),
    })
}
