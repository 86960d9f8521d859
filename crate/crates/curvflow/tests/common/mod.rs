//! Shared generators for integration tests.
#![allow(dead_code)]

use curvflow::bubbles::SolutionPart;
use curvflow::constants::constants_table;
use curvflow::geometry::{check_cond, Backend, CondOptions, FnSpec, KSpec, ModelSpace};
use curvflow::poly::Monomial;
use curvflow::shadow::{
    shadow_rhs, LyapunovKind, LyapunovSpec, RkPolicy, ShadowConfig, ShadowMode, ShadowState,
};
use curvflow::Dim;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `1 + Σ q_i x_i²` on the flat chart.
pub fn quadratic_k(d: Dim, q: &[f64]) -> KSpec {
    let n = d.usize();
    let mut monomials = vec![Monomial { coeff: 1.0, powers: vec![0; n] }];
    for (i, qi) in q.iter().enumerate() {
        let mut p = vec![0; n];
        p[i] = 2;
        monomials.push(Monomial { coeff: *qi, powers: p });
    }
    KSpec::new(FnSpec::Polynomial { monomials }, d, Backend::Flat).unwrap()
}

pub struct LyapunovCase {
    pub cfg: ShadowConfig,
    pub state: ShadowState,
    pub spec: LyapunovSpec,
    pub t_end: f64,
}

fn separated_centers(r: &mut ChaCha8Rng, n: usize, p: usize) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::new();
    while out.len() < p {
        let c: Vec<f64> = (0..n).map(|_| r.random_range(-0.4..0.4)).collect();
        let ok = out.iter().all(|o| o.iter().zip(&c).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt() > 0.3);
        if ok {
            out.push(c);
        }
    }
    out
}

/// Random configuration whose `K` passes the dimension's compactness condition.
pub fn lyapunov_case(kind: LyapunovKind, seed: u64) -> LyapunovCase {
    let mut r = rng(seed);
    let d = match kind {
        LyapunovKind::N3 => Dim::THREE,
        LyapunovKind::N4 => Dim::FOUR,
        LyapunovKind::N5 => Dim::FIVE,
        LyapunovKind::OmegaPositive => Dim::all()[(seed % 3) as usize],
    };
    let n = d.usize();
    // n = 3 only needs the manifold clause; above that ΔK > 0 keeps every critical point admissible
    let q: Vec<f64> = if d == Dim::THREE {
        (0..n).map(|_| r.random_range(-0.2..0.2)).collect()
    } else {
        (0..n).map(|_| r.random_range(0.02..0.2)).collect()
    };
    let k = quadratic_k(d, &q);
    let consts = constants_table(d).unwrap();
    let h = r.random_range(0.5..2.0);
    let (space, mode, solution) = match kind {
        LyapunovKind::OmegaPositive => (
            ModelSpace::flat(d),
            ShadowMode::WithSolution,
            Some(SolutionPart { alpha: r.random_range(0.5..2.0), omega: FnSpec::constant(r.random_range(0.5..2.0)) }),
        ),
        _ => (ModelSpace::flat(d).with_mass(FnSpec::constant(h)).unwrap(), ShadowMode::NoSolution, None),
    };
    let report = check_cond(&k, &space, &CondOptions::default()).unwrap();
    assert!(report.pass, "generated K violates the condition: {report:?}");
    let cfg = ShadowConfig::new(space, mode, k, solution, consts.clone(), RkPolicy::LeadingEnergy).unwrap();
    let p = r.random_range(1..=3usize);
    let centers = separated_centers(&mut r, n, p)
        .into_iter()
        .map(|a| (a, (r.random_range(50f64.ln()..500f64.ln())).exp()))
        .collect();
    let state = ShadowState::locked(&cfg, centers).unwrap();
    let c = 10f64.powi(p as i32);
    let mut spec = LyapunovSpec::new(kind, c);
    if kind == LyapunovKind::N5 {
        spec.kappa = curvflow::shadow::default_kappa(&consts, report.margin, 1.0);
    }
    let rate = shadow_rhs(&state, &cfg).unwrap().ln_lambda.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    LyapunovCase { cfg, state, spec, t_end: 0.25 / rate }
}
