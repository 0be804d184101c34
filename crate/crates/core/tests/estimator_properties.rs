mod common;

use common::{grid, per_axis_for_thousand, Case, CORPUS};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sfree::estimators::estimate;
use sfree::expr::parse;

const TOL: f64 = 1e-9;

fn scaled(v: f64) -> f64 {
    TOL * v.abs().max(1.0)
}

fn window(x_hat: &[f64]) -> (Vec<f64>, Vec<f64>) {
    (x_hat.iter().map(|v| v - 3.0).collect(), x_hat.iter().map(|v| v + 3.0).collect())
}

fn check_case(case: &Case, index: usize) {
    let f = case.expr();
    for (b, x_hat) in case.points(20, 100 + index as u64).iter().enumerate() {
        let p = estimate(&f, x_hat).unwrap_or_else(|e| panic!("{} at {x_hat:?}: {e}", case.text));
        let fx = f.eval(x_hat).unwrap();
        let (u0, o0) = (p.under.eval(x_hat).unwrap(), p.over.eval(x_hat).unwrap());
        assert!((u0 - fx).abs() <= scaled(fx), "{}: under not tight at {x_hat:?}: {u0} vs {fx}", case.text);
        assert!((o0 - fx).abs() <= scaled(fx), "{}: over not tight at {x_hat:?}: {o0} vs {fx}", case.text);

        let (lo, hi) = window(x_hat);
        let pts = grid(&lo, &hi, per_axis_for_thousand(case.dim));
        let mut vals = Vec::with_capacity(pts.len());
        for x in &pts {
            let v = f.eval(x).unwrap();
            let (u, o) = (p.under.eval(x).unwrap(), p.over.eval(x).unwrap());
            if v.is_finite() {
                assert!(u <= v + scaled(v), "{}: under above f at {x:?} ({u} > {v})", case.text);
                assert!(o >= v - scaled(v), "{}: over below f at {x:?} ({o} < {v})", case.text);
            }
            vals.push((u, o));
        }

        let mut rng = ChaCha8Rng::seed_from_u64(7 * index as u64 + b as u64);
        for _ in 0..1000 {
            let (i, j) = (rng.random_range(0..pts.len()), rng.random_range(0..pts.len()));
            let mid: Vec<f64> = pts[i].iter().zip(&pts[j]).map(|(a, b)| (a + b) / 2.0).collect();
            let (um, om) = (p.under.eval(&mid).unwrap(), p.over.eval(&mid).unwrap());
            let (ua, oa) = vals[i];
            let (ub, ob) = vals[j];
            let u_avg = (ua + ub) / 2.0;
            let o_avg = (oa + ob) / 2.0;
            assert!(um >= u_avg - scaled(u_avg), "{}: under not concave between {:?} and {:?}", case.text, pts[i], pts[j]);
            assert!(om <= o_avg + scaled(o_avg), "{}: over not convex between {:?} and {:?}", case.text, pts[i], pts[j]);
        }
    }
}

#[test]
fn corpus_is_large_enough() {
    assert!(CORPUS.len() >= 20);
}

#[test]
fn tightness_sandwich_and_midpoint_shape() {
    for (i, case) in CORPUS.iter().enumerate() {
        check_case(case, i);
    }
}

#[test]
fn example_one_matches_closed_form() {
    let f = parse(common::EXAMPLE_ONE, 1).unwrap();
    let p = estimate(&f, &[0.0]).unwrap();
    for i in 0..501 {
        let x = -2.5 + 5.0 * i as f64 / 500.0;
        let got = p.under.eval(&[x]).unwrap();
        let want = common::example_one_under(x);
        assert!((got - want).abs() <= 1e-12, "x = {x}: {got} vs {want}");
    }
    assert!((p.under.eval(&[0.0]).unwrap() - (-1.0f64).exp()).abs() <= 1e-12);
}

#[test]
fn quadratic_matches_hand_expansion() {
    let f = parse(common::QUADRATIC, 2).unwrap();
    let p = estimate(&f, &[1.0, 1.0]).unwrap();
    let hand = |x: f64, y: f64| 3.0 * x + 6.0 * y - 2.0 * y * y - (x - y).powi(2) - 4.0;
    for x in grid(&[-2.0, -2.0], &[4.0, 4.0], 41) {
        let got = p.under.eval(&x).unwrap();
        assert!((got - hand(x[0], x[1])).abs() <= 1e-9, "{x:?}");
    }
}

#[test]
fn bilinear_term_matches_polarization() {
    let f = parse("4*x1*x2", 2).unwrap();
    let p = estimate(&f, &[1.0, 1.0]).unwrap();
    let hand = |x: f64, y: f64| 4.0 * (x + y) - 4.0 - (x - y).powi(2);
    for x in grid(&[-3.0, -3.0], &[3.0, 3.0], 31) {
        assert!((p.under.eval(&x).unwrap() - hand(x[0], x[1])).abs() <= 1e-9, "{x:?}");
    }
}

#[test]
fn concave_input_is_its_own_underestimator() {
    let f = parse("-(x1^2)", 1).unwrap();
    let p = estimate(&f, &[0.7]).unwrap();
    for i in 0..101 {
        let x = -5.0 + 0.1 * i as f64;
        assert!((p.under.eval(&[x]).unwrap() - f.eval(&[x]).unwrap()).abs() <= 1e-12);
    }
}
