//! Sparse multivariate polynomials with exact differentiation.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Monomial {
    pub coeff: f64,
    pub powers: Vec<u32>,
}

/// Polynomial in `nvars` variables, kept with like terms merged and zero terms dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct Poly {
    nvars: usize,
    terms: BTreeMap<Vec<u32>, f64>,
}

impl Poly {
    pub fn zero(nvars: usize) -> Self {
        Poly { nvars, terms: BTreeMap::new() }
    }

    pub fn constant(nvars: usize, c: f64) -> Self {
        let mut p = Poly::zero(nvars);
        p.add_term(vec![0; nvars], c);
        p
    }

    /// The coordinate function `x_i`.
    pub fn var(nvars: usize, i: usize) -> Self {
        let mut pw = vec![0; nvars];
        pw[i] = 1;
        let mut p = Poly::zero(nvars);
        p.add_term(pw, 1.0);
        p
    }

    /// Build from monomials. Returns `None` if a monomial has the wrong arity.
    pub fn from_monomials(nvars: usize, monomials: &[Monomial]) -> Option<Self> {
        let mut p = Poly::zero(nvars);
        for m in monomials {
            if m.powers.len() != nvars {
                return None;
            }
            p.add_term(m.powers.clone(), m.coeff);
        }
        Some(p)
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn degree(&self) -> u32 {
        self.terms.keys().map(|p| p.iter().sum()).max().unwrap_or(0)
    }

    pub fn is_constant(&self) -> bool {
        self.degree() == 0
    }

    pub fn monomials(&self) -> Vec<Monomial> {
        self.terms
            .iter()
            .map(|(p, &c)| Monomial { coeff: c, powers: p.clone() })
            .collect()
    }

    fn add_term(&mut self, powers: Vec<u32>, c: f64) {
        if c == 0.0 {
            return;
        }
        let e = self.terms.entry(powers).or_insert(0.0);
        *e += c;
        if *e == 0.0 {
            self.terms.retain(|_, v| *v != 0.0);
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.nvars);
        self.terms
            .iter()
            .map(|(pw, &c)| {
                pw.iter().zip(x).fold(c, |acc, (&k, &xi)| acc * xi.powi(k as i32))
            })
            .sum()
    }

    pub fn deriv(&self, i: usize) -> Poly {
        let mut out = Poly::zero(self.nvars);
        for (pw, &c) in &self.terms {
            if pw[i] > 0 {
                let mut q = pw.clone();
                q[i] -= 1;
                out.add_term(q, c * pw[i] as f64);
            }
        }
        out
    }

    pub fn mul_var(&self, i: usize) -> Poly {
        let mut out = Poly::zero(self.nvars);
        for (pw, &c) in &self.terms {
            let mut q = pw.clone();
            q[i] += 1;
            out.add_term(q, c);
        }
        out
    }

    pub fn scale(&self, s: f64) -> Poly {
        let mut out = Poly::zero(self.nvars);
        for (pw, &c) in &self.terms {
            out.add_term(pw.clone(), c * s);
        }
        out
    }

    pub fn add(&self, other: &Poly) -> Poly {
        assert_eq!(self.nvars, other.nvars);
        let mut out = self.clone();
        for (pw, &c) in &other.terms {
            out.add_term(pw.clone(), c);
        }
        out
    }

    pub fn gradient(&self) -> Vec<Poly> {
        (0..self.nvars).map(|i| self.deriv(i)).collect()
    }

    pub fn hessian(&self) -> Vec<Vec<Poly>> {
        let g = self.gradient();
        g.iter().map(|gi| (0..self.nvars).map(|j| gi.deriv(j)).collect()).collect()
    }

    /// Euclidean Laplacian.
    pub fn laplacian(&self) -> Poly {
        (0..self.nvars).fold(Poly::zero(self.nvars), |acc, i| acc.add(&self.deriv(i).deriv(i)))
    }

    /// Euler operator `Σ x_i ∂_i`.
    pub fn euler(&self) -> Poly {
        (0..self.nvars).fold(Poly::zero(self.nvars), |acc, i| acc.add(&self.deriv(i).mul_var(i)))
    }
}
