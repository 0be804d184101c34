mod common;

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sfree::bounds::Bounds;
use sfree::expr::parse;
use sfree::lp::{solve_lp, substitute_nonbasic, Instance, LpError, Tableau};

fn random_instance(rng: &mut ChaCha8Rng, feasible: bool) -> Instance {
    let m = rng.random_range(0..=5usize);
    let n = rng.random_range(m.max(1)..=8usize);
    let a: Vec<Vec<f64>> = (0..m).map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let c: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let lower: Vec<f64> = (0..n).map(|_| if rng.random_bool(0.5) { 0.0 } else { rng.random_range(-1.0..0.0) }).collect();
    let upper: Vec<f64> = lower.iter().map(|l| l + rng.random_range(0.5..3.0)).collect();
    let b: Vec<f64> = if feasible {
        let x0: Vec<f64> = lower.iter().zip(&upper).map(|(l, u)| rng.random_range(*l..*u)).collect();
        a.iter().map(|row| row.iter().zip(&x0).map(|(p, q)| p * q).sum()).collect()
    } else {
        (0..m).map(|_| rng.random_range(-10.0..10.0)).collect()
    };
    let bounds = Bounds::new(lower, upper).unwrap();
    Instance::new(None, c, a, b, bounds, BTreeSet::new(), Vec::new(), Vec::new(), BTreeSet::new()).unwrap()
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn go(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            go(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    go(0, n, k, &mut Vec::new(), &mut out);
    out
}

/// Best objective over all basic solutions with nonbasic variables at a bound.
fn vertex_oracle(inst: &Instance) -> Option<f64> {
    let (m, n) = (inst.rows(), inst.n);
    let (lo, hi) = (&inst.bounds.lower, &inst.bounds.upper);
    let mut best: Option<f64> = None;
    for basis in combinations(n, m) {
        let nonbasic: Vec<usize> = (0..n).filter(|j| !basis.contains(j)).collect();
        let ab = DMatrix::from_fn(m, m, |i, j| inst.a[i][basis[j]]);
        if m > 0 && ab.determinant().abs() < 1e-12 {
            continue;
        }
        for mask in 0..(1u32 << nonbasic.len()) {
            let mut x = vec![0.0; n];
            for (bit, &j) in nonbasic.iter().enumerate() {
                x[j] = if mask >> bit & 1 == 1 { hi[j] } else { lo[j] };
            }
            if m > 0 {
                let rhs = DVector::from_fn(m, |i, _| inst.b[i] - nonbasic.iter().map(|&j| inst.a[i][j] * x[j]).sum::<f64>());
                let Some(xb) = ab.clone().lu().solve(&rhs) else { continue };
                for (i, &j) in basis.iter().enumerate() {
                    x[j] = xb[i];
                }
            }
            if (0..n).any(|j| x[j] < lo[j] - 1e-9 || x[j] > hi[j] + 1e-9) {
                continue;
            }
            let obj: f64 = inst.c.iter().zip(&x).map(|(c, v)| c * v).sum();
            best = Some(best.map_or(obj, |b: f64| b.min(obj)));
        }
    }
    best
}

fn check_tableau(inst: &Instance, t: &Tableau, rng: &mut ChaCha8Rng) {
    for (i, row) in inst.a.iter().enumerate() {
        let ax: f64 = row.iter().zip(&t.x).map(|(a, x)| a * x).sum();
        assert!((ax - inst.b[i]).abs() <= 1e-9);
    }
    assert!(inst.bounds.contains(&t.x, 1e-9));
    assert!(t.reduced_costs.iter().all(|r| *r >= -1e-9), "{:?}", t.reduced_costs);
    for _ in 0..5 {
        let dir: Vec<f64> = t.nonbasic_upper.iter().map(|u| rng.random_range(0.0..=u.min(1.0))).collect();
        let x = t.lift(&dir);
        for (i, row) in inst.a.iter().enumerate() {
            let ax: f64 = row.iter().zip(&x).map(|(a, x)| a * x).sum();
            assert!((ax - inst.b[i]).abs() <= 1e-9);
        }
    }
}

#[test]
fn simplex_agrees_with_vertex_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for k in 0..50 {
        let r = random_instance(&mut rng, true);
        let t = solve_lp(&r).unwrap_or_else(|e| panic!("instance {k}: {e}"));
        let oracle = vertex_oracle(&r).expect("feasible by construction");
        assert!((t.objective - oracle).abs() <= 1e-8 * oracle.abs().max(1.0), "instance {k}: {} vs {oracle}", t.objective);
        check_tableau(&r, &t, &mut rng);
    }
}

#[test]
fn infeasibility_agrees_with_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut infeasible = 0;
    for k in 0..40 {
        let r = random_instance(&mut rng, false);
        match (solve_lp(&r), vertex_oracle(&r)) {
            (Err(LpError::Infeasible), None) => infeasible += 1,
            (Ok(t), Some(o)) => assert!((t.objective - o).abs() <= 1e-8 * o.abs().max(1.0), "instance {k}"),
            (a, b) => panic!("instance {k}: solver {a:?}, oracle {b:?}"),
        }
    }
    assert!(infeasible > 0);
}

#[test]
fn substitution_commutes_with_evaluation() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let funcs = ["x1*x2 - cos(x1 + x3)", "exp(-(x1^2)) - x2^2", "-(x1^2) + 1", "x1^3 - x1*x2*x1"];
    for _ in 0..30 {
        let mut r = random_instance(&mut rng, true);
        while r.n < 3 {
            r = random_instance(&mut rng, true);
        }
        let t = solve_lp(&r).unwrap();
        for text in funcs {
            let g = parse(text, 3).unwrap();
            let h = substitute_nonbasic(&g, &t);
            let at_zero = h.eval(&vec![0.0; t.dim()]).unwrap();
            let at_vertex = g.eval(&t.x).unwrap();
            assert!((at_zero - at_vertex).abs() <= 1e-10, "{text}: {at_zero} vs {at_vertex}");
            for _ in 0..10 {
                let s: Vec<f64> = t.nonbasic_upper.iter().map(|u| rng.random_range(0.0..=*u)).collect();
                let (a, b) = (h.eval(&s).unwrap(), g.eval(&t.lift(&s)).unwrap());
                assert!((a - b).abs() <= 1e-10 * a.abs().max(1.0), "{text}: {a} vs {b}");
            }
        }
    }
}

#[test]
fn corpus_instances_solve() {
    for path in common::instance_files() {
        let inst = common::load_path(&path);
        let t = solve_lp(&inst).unwrap();
        if let Some(o) = vertex_oracle(&inst) {
            assert!((t.objective - o).abs() <= 1e-9, "{}", path.display());
        }
    }
}

#[test]
fn monoidal_example_vertex_is_origin() {
    let inst = common::load("monoidal_example.json");
    let t = solve_lp(&inst).unwrap();
    assert_eq!(t.x, vec![0.0, 0.0]);
    assert_eq!(t.nonbasic, vec![0, 1]);
    assert_eq!(t.nonbasic_sign, vec![1.0, 1.0]);
}
