use std::sync::Arc;

use curvflow::bubbles::{bubble_eval, BubbleEnsemble, BubbleParam};
use curvflow::decompose::{fit, misfit, orthogonality_residuals, Pole};
use curvflow::energy::{ScalarField, SphereGrid, SymmetricK};
use curvflow::geometry::ModelSpace;
use curvflow::Dim;

fn grid(d: Dim, m: usize) -> (Arc<SphereGrid>, SymmetricK) {
    let g = Arc::new(SphereGrid::uniform(d, m).unwrap());
    let k = SymmetricK::from_values(g.theta().iter().map(|t| 1.0 + 0.1 * t.cos()).collect()).unwrap();
    (g, k)
}

fn pair(d: Dim, north: (f64, f64), south: (f64, f64)) -> BubbleEnsemble {
    let n = d.usize();
    BubbleEnsemble::new(vec![
        BubbleParam::new(north.0, Pole::North.point(n), north.1),
        BubbleParam::new(south.0, Pole::South.point(n), south.1),
    ])
}

/// Two pole bubbles plus a small smooth multiplicative perturbation.
fn two_bubble_field(g: &Arc<SphereGrid>, ens: &BubbleEnsemble) -> ScalarField {
    let s = ModelSpace::sphere(g.dim());
    ScalarField::from_fn(g.clone(), |t| {
        let x = g.point(t);
        let b: f64 = ens.params.iter().map(|p| p.alpha * bubble_eval(&s, p, &x)).sum();
        b * (1.0 + 0.005 * t.sin().powi(2))
    })
    .unwrap()
}

#[test]
fn scaling_the_field_scales_only_the_amplitudes() {
    for d in Dim::all() {
        let (g, k) = grid(d, 384);
        let truth = pair(d, (1.2, 25.0), (0.8, 12.0));
        let u = two_bubble_field(&g, &truth);
        let init = pair(d, (1.0, 20.0), (1.0, 10.0));
        let a = fit(&u, &k, &init).unwrap();
        let b = fit(&u.scaled(3.0).unwrap(), &k, &init).unwrap();
        assert!(a.converged && b.converged);
        for (p, q) in a.ensemble.params.iter().zip(&b.ensemble.params) {
            assert!((q.alpha / (3.0 * p.alpha) - 1.0).abs() < 1e-10, "{d}: {p:?} {q:?}");
            assert!((q.lambda / p.lambda - 1.0).abs() < 1e-10, "{d}: {p:?} {q:?}");
        }
    }
}

#[test]
fn different_starts_reach_the_same_minimizer() {
    let d = Dim::THREE;
    let (g, k) = grid(d, 384);
    let u = two_bubble_field(&g, &pair(d, (1.0, 30.0), (0.7, 15.0)));
    let a = fit(&u, &k, &pair(d, (1.0, 10.0), (1.0, 10.0))).unwrap();
    let b = fit(&u, &k, &pair(d, (2.0, 60.0), (0.4, 40.0))).unwrap();
    assert!(a.converged && b.converged);
    for (p, q) in a.ensemble.params.iter().zip(&b.ensemble.params) {
        assert!((p.alpha - q.alpha).abs() < 1e-8 * p.alpha);
        assert!((p.lambda - q.lambda).abs() < 1e-8 * p.lambda);
    }
    assert!((a.misfit - b.misfit).abs() <= 1e-10 * a.misfit.max(1e-30));
}

#[test]
fn residuals_are_half_the_descent_direction() {
    // ∂_α m = -2⟨v, φ₁⟩ and ∂_{ln λ} m = 2α⟨v, φ₂⟩, checked by differencing the misfit
    let d = Dim::FOUR;
    let (g, k) = grid(d, 384);
    let truth = pair(d, (1.0, 30.0), (0.6, 12.0));
    let u = two_bubble_field(&g, &truth);
    for offset in [1.1, 0.9] {
        let probe = pair(d, (1.0, 30.0 * offset), (0.6, 12.0));
        let res = orthogonality_residuals(&u, &k, &probe).unwrap();
        let shifted = |da: f64, dl: f64| {
            let mut e = probe.clone();
            e.params[0].alpha += da;
            e.params[0].lambda *= dl.exp();
            misfit(&u, &k, &e).unwrap()
        };
        let h = 1e-5;
        let d_alpha = (shifted(h, 0.0) - shifted(-h, 0.0)) / (2.0 * h);
        let d_ln_lambda = (shifted(0.0, h) - shifted(0.0, -h)) / (2.0 * h);
        let r1 = res.iter().find(|r| r.i == 0 && r.k == 1).unwrap().value;
        let r2 = res.iter().find(|r| r.i == 0 && r.k == 2).unwrap().value;
        assert!((d_alpha + 2.0 * r1).abs() < 1e-6 * d_alpha.abs().max(1.0));
        assert!((d_ln_lambda - 2.0 * r2).abs() < 1e-6 * d_ln_lambda.abs().max(1.0));
        // too large a λ is pushed back down, too small pushed up
        assert_eq!(r2 > 0.0, offset > 1.0, "offset {offset}: r2 = {r2}");
    }
}

#[test]
fn reported_gradient_matches_the_residuals() {
    for d in Dim::all() {
        let (g, k) = grid(d, 384);
        let u = two_bubble_field(&g, &pair(d, (1.1, 20.0), (0.9, 9.0)));
        let r = fit(&u, &k, &pair(d, (1.0, 15.0), (1.0, 15.0))).unwrap();
        assert!(r.converged, "{d}: {r:?}");
        for (i, (ga, gl)) in r.gradient.iter().enumerate() {
            let r1 = r.residuals.iter().find(|x| x.i == i && x.k == 1).unwrap().value;
            let r2 = r.residuals.iter().find(|x| x.i == i && x.k == 2).unwrap().value;
            assert!((ga + 2.0 * r1).abs() < 1e-8, "{d}: {ga} vs {r1}");
            assert!((gl + 2.0 * r2).abs() < 1e-8, "{d}: {gl} vs {r2}");
        }
        assert!(r.v_norm >= 0.0 && (r.v_norm * r.v_norm - r.misfit).abs() < 1e-12 * r.misfit.max(1.0));
    }
}

#[test]
fn remainder_is_field_minus_bubbles() {
    let d = Dim::FIVE;
    let (g, k) = grid(d, 256);
    let u = two_bubble_field(&g, &pair(d, (1.0, 10.0), (1.0, 6.0)));
    let r = fit(&u, &k, &pair(d, (1.0, 8.0), (1.0, 8.0))).unwrap();
    let s = ModelSpace::sphere(d);
    for (m, &t) in g.theta().iter().enumerate() {
        let x = g.point(t);
        let b: f64 = r.ensemble.params.iter().map(|p| p.alpha * bubble_eval(&s, p, &x)).sum();
        assert!((u.values()[m] - b - r.v[m]).abs() < 1e-12 * u.values()[m].abs().max(1.0));
    }
}
