#![allow(dead_code)]

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sfree::expr::{parse, Expr};
use sfree::lp::Instance;

/// Expression with the box its base points are drawn from.
pub struct Case {
    pub text: &'static str,
    pub dim: usize,
    pub lo: f64,
    pub hi: f64,
}

const fn case(text: &'static str, dim: usize, lo: f64, hi: f64) -> Case {
    Case { text, dim, lo, hi }
}

pub const CORPUS: &[Case] = &[
    case("-(x1^2) + 1", 1, -2.0, 2.0),
    case("-(x1^2)", 1, -2.0, 2.0),
    case("exp(-(cos(x1^2) + x1/4)^2)", 1, -2.0, 2.0),
    case("cos(x1^2) + x1/4", 1, -2.0, 2.0),
    case("-(cos(x1^2) + x1/4)^2", 1, -2.0, 2.0),
    case("cos(x1)", 1, -3.0, 3.0),
    case("exp(x1)", 1, -2.0, 2.0),
    case("exp(-(cos(x1^2) + x1*x2/4)^2)", 2, -2.0, 2.0),
    case("-(10*x1^2) - 0.5*x2^2 + 2*x1*x2 + 4", 2, -1.0, 3.0),
    case("x1^2 - 2*x2^2 + 4*x1*x2 - 3*x1 + 2*x2 + 1", 2, 0.0, 2.0),
    case("4 - x1^2 - x2^2", 2, -2.0, 2.0),
    case("x1*x2", 2, -2.0, 2.0),
    case("x1*x2*x3", 3, -1.5, 1.5),
    case("sin(x1) + cos(x2)", 2, -3.0, 3.0),
    case("exp(x1 - x2)", 2, -1.0, 1.0),
    case("log(x1)", 1, 0.5, 4.0),
    case("sqrt(x1 + x2)", 2, 0.5, 3.0),
    case("abs(x1 - 1) - x2^2", 2, -2.0, 2.0),
    case("x1^3", 1, -2.0, 2.0),
    case("x1^4 - 3*x1^2", 1, -2.0, 2.0),
    case("cos(x1)*sin(x2)", 2, -2.0, 2.0),
    case("exp(x1)*x2", 2, -1.0, 1.0),
    case("log(1 + x1^2)", 1, -2.0, 2.0),
    case("(x1 + x2 - x3)^2", 3, -1.0, 1.0),
    case("sin(x1*x2) + x3", 3, -1.0, 1.0),
    case("x1^5 - x2", 2, -1.0, 1.0),
    case("-(x1^2) - x2^2 - x3^2 + 4", 3, -1.0, 1.0),
    case("sqrt(x1)*log(x2)", 2, 1.0, 3.0),
    case("exp(-(x1^2))", 1, -2.0, 2.0),
    case("x1*x2 - 1", 2, 0.0, 2.0),
];

impl Case {
    pub fn expr(&self) -> Expr {
        parse(self.text, self.dim).unwrap_or_else(|e| panic!("{}: {e}", self.text))
    }

    pub fn points(&self, count: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count).map(|_| (0..self.dim).map(|_| rng.random_range(self.lo..=self.hi)).collect()).collect()
    }
}

/// Tensor grid with `per_axis` points on `[lo_i, hi_i]`.
pub fn grid(lo: &[f64], hi: &[f64], per_axis: usize) -> Vec<Vec<f64>> {
    let mut out = vec![Vec::new()];
    for (l, h) in lo.iter().zip(hi) {
        let mut next = Vec::with_capacity(out.len() * per_axis);
        for p in &out {
            for i in 0..per_axis {
                let mut q = p.clone();
                q.push(l + (h - l) * i as f64 / (per_axis - 1) as f64);
                next.push(q);
            }
        }
        out = next;
    }
    out
}

/// About a thousand grid points in any dimension up to 3.
pub fn per_axis_for_thousand(dim: usize) -> usize {
    match dim {
        1 => 1000,
        2 => 32,
        _ => 10,
    }
}

pub fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests").join("data")
}

pub fn instance_files() -> Vec<PathBuf> {
    let mut files: Vec<PathBuf> =
        std::fs::read_dir(data_dir()).unwrap().map(|e| e.unwrap().path()).filter(|p| p.extension().is_some_and(|e| e == "json")).collect();
    files.sort();
    files
}

pub fn load(name: &str) -> Instance {
    let text = std::fs::read_to_string(data_dir().join(name)).unwrap();
    Instance::from_json(&text).unwrap()
}

pub fn load_path(path: &Path) -> Instance {
    Instance::from_json(&std::fs::read_to_string(path).unwrap()).unwrap()
}

pub const EXAMPLE_TWO: &str = "-(10*x1^2) - 0.5*x2^2 + 2*x1*x2 + 4";
pub const QUADRATIC: &str = "x1^2 - 2*x2^2 + 4*x1*x2 - 3*x1 + 2*x2 + 1";
pub const EXAMPLE_ONE: &str = "exp(-(cos(x1^2) + x1/4)^2)";

/// Closed-form concave underestimator of `EXAMPLE_ONE` at 0.
pub fn example_one_under(x: f64) -> f64 {
    let e1 = (-1.0f64).exp();
    let a = -(x.powi(2).cos() - x.powi(4) / 2.0 + x / 4.0).powi(2);
    let b = -(1.0 + x / 4.0).powi(2);
    e1 + e1 * (1.0 + a.min(b))
}

/// Boundary of the two-variable monoidal instance: `h = 0` as `x2 = 2x1 ± √(8 − 16x1²)`, restricted to `[0,2] × [0,5]`.
pub fn example_two_boundary(count: usize) -> Vec<[f64; 2]> {
    let top = 1.0 / 2f64.sqrt();
    let mut out = Vec::with_capacity(count);
    for i in 0..count / 2 {
        let x1 = top * i as f64 / (count / 2 - 1) as f64;
        let r = (8.0 - 16.0 * x1 * x1).max(0.0).sqrt();
        for x2 in [2.0 * x1 + r, 2.0 * x1 - r] {
            if (0.0..=5.0).contains(&x2) {
                out.push([x1, x2]);
            }
        }
    }
    out
}

pub fn example_two_gradient(y: [f64; 2]) -> [f64; 2] {
    [-20.0 * y[0] + 2.0 * y[1], -y[1] + 2.0 * y[0]]
}

/// Brute-force coefficients for the two-variable monoidal instance: `(α, γ₁)` from terms on the sampled boundary.
pub fn example_two_oracle(count: usize) -> ([f64; 2], f64) {
    let upper = [2.0, 5.0];
    let mut alpha = [f64::NEG_INFINITY; 2];
    let mut terms = Vec::new();
    for y in example_two_boundary(count) {
        let g = example_two_gradient(y);
        let inner = g[0] * y[0] + g[1] * y[1];
        if inner >= 0.0 {
            continue;
        }
        // minimum of gᵀx/inner over the box is attained at a corner
        let mut beta = f64::INFINITY;
        for c0 in [0.0, upper[0]] {
            for c1 in [0.0, upper[1]] {
                beta = beta.min((g[0] * c0 + g[1] * c1) / inner);
            }
        }
        let a = [g[0] / inner, g[1] / inner];
        if beta < 1.0 {
            alpha[0] = alpha[0].max(a[0]);
            alpha[1] = alpha[1].max(a[1]);
            terms.push((a[0], beta));
        }
    }
    let gamma = terms.iter().map(|(a0, b)| a0 + 1.0 - b).fold(alpha[0], f64::min);
    (alpha, gamma)
}
