use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;

use crate::error::{Error, Result};

/// Space dimension `n`, restricted to 3, 4 or 5.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct Dim(u32);

impl Dim {
    pub const THREE: Dim = Dim(3);
    pub const FOUR: Dim = Dim(4);
    pub const FIVE: Dim = Dim(5);

    pub fn new(n: u32) -> Result<Self> {
        match n {
            3..=5 => Ok(Dim(n)),
            _ => Err(Error::BadDim(n)),
        }
    }

    pub fn all() -> [Dim; 3] {
        [Dim::THREE, Dim::FOUR, Dim::FIVE]
    }

    pub fn get(self) -> u32 {
        self.0
    }

    pub fn n(self) -> f64 {
        self.0 as f64
    }

    pub fn usize(self) -> usize {
        self.0 as usize
    }

    /// `c_n = 4(n-1)/(n-2)`, the Laplacian coefficient of the conformal Laplacian.
    pub fn c_n(self) -> f64 {
        let n = self.n();
        4.0 * (n - 1.0) / (n - 2.0)
    }

    /// Scalar curvature of the round unit sphere, `n(n-1)`.
    pub fn r0(self) -> f64 {
        let n = self.n();
        n * (n - 1.0)
    }

    /// Critical exponent `(n+2)/(n-2)`.
    pub fn p(self) -> f64 {
        let n = self.n();
        (n + 2.0) / (n - 2.0)
    }

    /// Critical Sobolev exponent `2n/(n-2)`.
    pub fn crit(self) -> f64 {
        let n = self.n();
        2.0 * n / (n - 2.0)
    }

    /// `(n-2)/2`, the homogeneity of a bubble in its scale.
    pub fn half_nm2(self) -> f64 {
        (self.n() - 2.0) / 2.0
    }

    /// Area of the unit sphere `S^m` embedded in `R^{m+1}`.
    pub fn sphere_area(m: u32) -> f64 {
        // ω_m = 2π^{(m+1)/2}/Γ((m+1)/2), tabulated for the small m we need
        match m {
            0 => 2.0,
            1 => 2.0 * PI,
            2 => 4.0 * PI,
            3 => 2.0 * PI * PI,
            4 => 8.0 * PI * PI / 3.0,
            5 => PI * PI * PI,
            6 => 16.0 * PI * PI * PI / 15.0,
            _ => {
                let mut w = [2.0, 2.0 * PI];
                for k in 2..=m {
                    let next = 2.0 * PI * w[0] / (k as f64 - 1.0);
                    w = [w[1], next];
                }
                w[1]
            }
        }
    }

    /// `ω_{n-1}`, area of the unit sphere in `R^n`.
    pub fn omega_nm1(self) -> f64 {
        Self::sphere_area(self.0 - 1)
    }

    /// `vol(S^n)`.
    pub fn vol_sphere(self) -> f64 {
        Self::sphere_area(self.0)
    }
}

impl TryFrom<u32> for Dim {
    type Error = Error;
    fn try_from(n: u32) -> Result<Self> {
        Dim::new(n)
    }
}

impl From<Dim> for u32 {
    fn from(d: Dim) -> u32 {
        d.0
    }
}

impl fmt::Display for Dim {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}
