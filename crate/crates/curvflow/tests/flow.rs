use std::sync::Arc;

use curvflow::energy::{Preset, ScalarField, SphereGrid, SymmetricK};
use curvflow::pdeflow::{run, step, verify_monotonicity, FlowDiagnostics, FlowOptions, FlowState};
use curvflow::Dim;

fn setup(d: Dim, m: usize, k: impl Fn(f64) -> f64) -> (Arc<SphereGrid>, SymmetricK) {
    let g = Arc::new(SphereGrid::uniform(d, m).unwrap());
    let kv = SymmetricK::from_values(g.theta().iter().map(|&t| k(t)).collect()).unwrap();
    (g, kv)
}

#[test]
fn invariants_hold_for_every_dimension() {
    for d in Dim::all() {
        // With K constant the energy identity holds with equality, and the
        // first-order stepping error is O(dt), so the run uses a tight tolerance.
        let (g, k) = setup(d, 128, |_| 1.0);
        let u = Preset::Cosine { amplitude: 0.2 }.build(g, &k).unwrap();
        let out = run(u, &k, &FlowOptions { t_end: 0.1, dt_init: 1e-6, tol: 1e-6, dt_max: 0.05 }).unwrap();
        assert!(out.failure.is_none());
        let rep = verify_monotonicity(&out.diagnostics, k.max());
        assert!(rep.all_pass(), "{d}: {rep:?}");
    }
}

// A non-constant K drives concentration at its maxima, which a fixed grid only
// follows for a short while; the horizon and tolerance are chosen accordingly.
#[test]
fn invariants_hold_early_under_nonconstant_k() {
    for d in Dim::all() {
        let (g, k) = setup(d, 128, |t| 1.0 + 0.1 * (2.0 * t).cos());
        let u = Preset::Cosine { amplitude: 0.2 }.build(g, &k).unwrap();
        let out = run(u, &k, &FlowOptions { t_end: 0.02, dt_init: 1e-5, tol: 1e-3, dt_max: 0.05 }).unwrap();
        assert!(out.failure.is_none());
        let rep = verify_monotonicity(&out.diagnostics, k.max());
        assert!(rep.all_pass(), "{d}: {rep:?}");
    }
}

#[test]
fn rows_are_time_ordered_and_csv_has_header() {
    let (g, k) = setup(Dim::THREE, 64, |_| 1.0);
    let u = Preset::Cosine { amplitude: 0.1 }.build(g, &k).unwrap();
    let out = run(u, &k, &FlowOptions { t_end: 0.2, dt_init: 1e-3, tol: 1e-2, dt_max: 0.05 }).unwrap();
    assert!(out.diagnostics.rows.windows(2).all(|w| w[1].t > w[0].t));
    let mut buf = Vec::new();
    out.diagnostics.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().next().unwrap(), FlowDiagnostics::HEADER.join(","));
    assert_eq!(text.lines().count(), out.diagnostics.rows.len() + 1);
}

#[test]
fn step_preserves_unit_volume() {
    let (g, k) = setup(Dim::FIVE, 128, |t| 1.0 + 0.1 * (2.0 * t).cos());
    let u = Preset::PoleBubble { lambda: 3.0 }.build(g, &k).unwrap();
    let s = FlowState::new(u, &k);
    let next = step(&s, &k, 1e-3).unwrap();
    assert!((next.data.k - 1.0).abs() < 1e-12);
    assert!(next.data.j <= s.data.j);
}

#[test]
fn converges_towards_the_round_metric() {
    let (g, k) = setup(Dim::THREE, 128, |_| 1.0);
    let u = ScalarField::from_fn(g, |t| 1.0 + 0.2 * (2.0 * t).cos()).unwrap();
    let out = run(u, &k, &FlowOptions { t_end: 3.0, dt_init: 1e-3, tol: 1e-2, dt_max: 0.05 }).unwrap();
    let first = out.diagnostics.rows.first().unwrap();
    let last = out.diagnostics.rows.last().unwrap();
    assert!(last.delta_j < 1e-3 * first.delta_j, "{} vs {}", last.delta_j, first.delta_j);
}

#[test]
fn invalid_options_are_config_errors() {
    let (g, k) = setup(Dim::THREE, 16, |_| 1.0);
    let u = ScalarField::from_fn(g, |_| 1.0).unwrap();
    let r = run(u, &k, &FlowOptions { t_end: 1.0, dt_init: -1.0, tol: 1e-2, dt_max: 0.05 });
    assert!(matches!(r, Err(curvflow::Error::Config(_))));
}
