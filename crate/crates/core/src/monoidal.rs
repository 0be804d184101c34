//! Monoidal strengthening of an intersection cut for integer nonbasic
//! variables.
//!
//! Works in the normal form `x ∈ [0, u]` with `h(0) > 0`, where `h` is the
//! concave function defining the S-free set. The boundary set
//! `Y = {y ∈ [0, u] : h(y) = 0}` is sampled by sweeping rays from the origin.
//! Each `y` yields the disjunctive term `∇h(y)ᵀx / ∇h(y)ᵀy ≥ 1`; the maximum
//! over `Y` gives the cut coefficients and the closed form
//!
//! ```text
//! γ_k = min(α_k, min_y ∂_k h(y)/∇h(y)ᵀy + 1 − β(y))
//! ```
//!
//! gives the strengthened coefficient of an integer variable `x_k`.

use std::f64::consts::FRAC_PI_2;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;
use thiserror::Error;

use crate::bounds::Bounds;
use crate::cutgen::{step_along, Cut, CutError, Method, Provenance, StepOptions};
use crate::expr::{Compiled, Expr, ExprError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MonoidalError {
    #[error("h(0) = {0} is not positive; the origin is not interior")]
    ApexNotInterior(f64),
    #[error("no boundary point found inside the box; the S-free set contains [0, u]")]
    EmptyBoundary,
    #[error("every boundary point is redundant")]
    EmptyAfterRedundancyFilter,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Cut(#[from] CutError),
    #[error(transparent)]
    Expr(#[from] ExprError),
}

#[derive(Debug, Clone)]
pub struct MonoidalConfig {
    /// Number of sweep directions; `None` picks 720 for n = 2 and 2000 otherwise.
    pub directions: Option<usize>,
    pub refine_iters: usize,
    /// 0-based indices of the integer variables to strengthen.
    pub integer: Vec<usize>,
    /// At most one of the integer variables can be nonzero.
    pub sos1: bool,
    /// Keep redundant terms (β ≥ 1) in the maximum defining α.
    pub keep_redundant_for_alpha: bool,
    pub seed: u64,
}

impl Default for MonoidalConfig {
    fn default() -> Self {
        MonoidalConfig {
            directions: None,
            refine_iters: 30,
            integer: Vec::new(),
            sos1: false,
            keep_redundant_for_alpha: false,
            seed: 0x5eed,
        }
    }
}

impl MonoidalConfig {
    pub fn direction_count(&self, n: usize) -> usize {
        match (self.directions, n) {
            (Some(d), _) => d.max(1),
            (None, 1) => 1,
            (None, 2) => 720,
            (None, _) => 2000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundaryPoint {
    pub direction: Vec<f64>,
    pub y: Vec<f64>,
    pub value: f64,
    pub gradient: Vec<f64>,
    /// `∇h(y)ᵀy`, always negative.
    pub inner: f64,
    pub beta: f64,
    pub redundant: bool,
    pub usable: bool,
}

#[derive(Debug, Clone)]
pub struct BoundarySample {
    pub points: Vec<BoundaryPoint>,
    pub h0: f64,
    pub discarded: usize,
}

/// Sweep directions in the nonnegative orthant, unit length.
pub fn sweep_directions(n: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    match n {
        0 => Vec::new(),
        1 => vec![vec![1.0]],
        2 => {
            let count = count.max(2);
            (0..count)
                .map(|i| {
                    let t = FRAC_PI_2 * i as f64 / (count - 1) as f64;
                    let (s, c) = t.sin_cos();
                    vec![if i + 1 == count { 0.0 } else { c }, if i == 0 { 0.0 } else { s }]
                })
                .collect()
        }
        3 => {
            // Fibonacci sphere folded into the positive orthant.
            let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
            (0..count)
                .map(|i| {
                    let z = 1.0 - (i as f64 + 0.5) * 2.0 / count as f64;
                    let r = (1.0 - z * z).sqrt();
                    let t = golden * i as f64;
                    vec![(r * t.cos()).abs(), (r * t.sin()).abs(), z.abs()]
                })
                .collect()
        }
        _ => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut out: Vec<Vec<f64>> = (0..n)
                .map(|j| {
                    let mut e = vec![0.0; n];
                    e[j] = 1.0;
                    e
                })
                .collect();
            while out.len() < count.max(n) {
                let d: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal).abs()).collect();
                if let Some(d) = normalize(d) {
                    out.push(d);
                }
            }
            out
        }
    }
}

fn normalize(mut d: Vec<f64>) -> Option<Vec<f64>> {
    let norm = d.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !norm.is_finite() || norm <= 0.0 {
        return None;
    }
    d.iter_mut().for_each(|v| *v /= norm);
    Some(d)
}

/// `β(y) = min_{x ∈ [0,u]} ∇h(y)ᵀx / ∇h(y)ᵀy`, in closed form.
pub fn beta(gradient: &[f64], inner: f64, upper: &[f64]) -> f64 {
    let scale = gradient.iter().map(|g| g.abs()).fold(0.0, f64::max);
    let mut num = 0.0;
    for (g, u) in gradient.iter().zip(upper) {
        if *g > 1e-9 * scale.max(1.0) {
            if u.is_infinite() {
                return f64::NEG_INFINITY;
            }
            num += g * u;
        }
    }
    num / inner
}

struct Sweeper<'a> {
    tape: Compiled,
    upper: &'a [f64],
    h0: f64,
    opts: StepOptions,
}

impl Sweeper<'_> {
    fn point(&self, direction: &[f64]) -> Option<BoundaryPoint> {
        let exit = direction.iter().zip(self.upper).filter(|(d, _)| **d > 0.0).map(|(d, u)| u / d).fold(f64::INFINITY, f64::min);
        let opts = StepOptions { lambda_max: exit.min(self.opts.lambda_max), ..self.opts };
        let mut p = vec![0.0; direction.len()];
        let lambda = step_along(
            |l| {
                for (v, d) in p.iter_mut().zip(direction) {
                    *v = l * d;
                }
                self.tape.eval(&p).map_err(CutError::from)
            },
            &opts,
        )
        .ok()?;
        if !lambda.is_finite() {
            return None;
        }
        let y: Vec<f64> = direction.iter().map(|d| lambda * d).collect();
        let value = self.tape.eval(&y).ok()?;
        let gradient = self.tape.gradient(&y).ok()?;
        let inner: f64 = gradient.iter().zip(&y).map(|(g, v)| g * v).sum();
        if inner.is_nan() || inner >= 0.0 {
            return None;
        }
        let beta = beta(&gradient, inner, self.upper);
        Some(BoundaryPoint {
            direction: direction.to_vec(),
            y,
            value,
            gradient,
            inner,
            beta,
            redundant: beta >= 1.0,
            usable: beta.is_finite(),
        })
    }

    /// Compass search over unit directions in the nonnegative orthant.
    fn polish<F: Fn(&BoundaryPoint) -> f64>(&self, start: &BoundaryPoint, score: F, step0: f64, iters: usize) -> (BoundaryPoint, f64) {
        let n = start.direction.len();
        let mut best = start.clone();
        let mut best_score = score(start);
        let mut step = step0;
        let mut budget = iters * 4;
        while budget > 0 && step > 1e-12 && n > 1 {
            budget -= 1;
            let mut improved = false;
            for i in 0..n {
                for sign in [1.0, -1.0] {
                    let mut d = best.direction.clone();
                    d[i] = (d[i] + sign * step).max(0.0);
                    let Some(d) = normalize(d) else { continue };
                    if let Some(p) = self.point(&d) {
                        let s = score(&p);
                        if s > best_score {
                            best = p;
                            best_score = s;
                            improved = true;
                        }
                    }
                }
            }
            if !improved {
                step *= 0.5;
            }
        }
        (best, best_score)
    }
}

fn check_box(bounds: &Bounds) -> Result<(), MonoidalError> {
    if bounds.lower.iter().any(|l| *l != 0.0) {
        return Err(MonoidalError::InvalidConfig("the box must have lower bounds 0".into()));
    }
    Ok(())
}

fn sweeper<'a>(h: &Expr, bounds: &'a Bounds) -> Result<Sweeper<'a>, MonoidalError> {
    check_box(bounds)?;
    let n = bounds.dim();
    if h.min_dimension() > n {
        return Err(MonoidalError::InvalidConfig(format!("expression uses {} variables, box has {n}", h.min_dimension())));
    }
    let tape = h.compile();
    let h0 = tape.eval(&vec![0.0; n])?;
    if h0.is_nan() || h0 <= 0.0 {
        return Err(MonoidalError::ApexNotInterior(h0));
    }
    let opts = StepOptions { lambda_max: 1e9, residual: 1e-13, max_bisections: 200 };
    Ok(Sweeper { tape, upper: &bounds.upper, h0, opts })
}

/// Samples `Y` along the configured sweep directions.
pub fn sweep_boundary(h: &Expr, bounds: &Bounds, cfg: &MonoidalConfig) -> Result<BoundarySample, MonoidalError> {
    let sw = sweeper(h, bounds)?;
    let n = bounds.dim();
    let dirs = sweep_directions(n, cfg.direction_count(n), cfg.seed);
    let total = dirs.len();
    let points: Vec<BoundaryPoint> = dirs.iter().filter_map(|d| sw.point(d)).collect();
    if points.is_empty() {
        return Err(MonoidalError::EmptyBoundary);
    }
    let discarded = total - points.len();
    Ok(BoundarySample { points, h0: sw.h0, discarded })
}

fn polish_step(n: usize, cfg: &MonoidalConfig) -> f64 {
    4.0 * FRAC_PI_2 / cfg.direction_count(n).max(2) as f64
}

/// Cut coefficients `α_j = max_{y ∈ Y} ∂_j h(y) / ∇h(y)ᵀy`.
pub fn alpha_coeffs(h: &Expr, bounds: &Bounds, sample: &BoundarySample, cfg: &MonoidalConfig) -> Result<Vec<f64>, MonoidalError> {
    let sw = sweeper(h, bounds)?;
    let n = bounds.dim();
    let keep = |p: &BoundaryPoint| cfg.keep_redundant_for_alpha || !p.redundant;
    let candidates: Vec<&BoundaryPoint> = sample.points.iter().filter(|p| keep(p)).collect();
    if candidates.is_empty() {
        return Err(MonoidalError::EmptyAfterRedundancyFilter);
    }
    let mut alpha = Vec::with_capacity(n);
    for j in 0..n {
        let score = |p: &BoundaryPoint| if keep(p) { p.gradient[j] / p.inner } else { f64::NEG_INFINITY };
        let start = candidates.iter().copied().max_by(|a, b| score(a).total_cmp(&score(b))).unwrap();
        let (_, best) = sw.polish(start, score, polish_step(n, cfg), cfg.refine_iters);
        alpha.push(best);
    }
    Ok(alpha)
}

/// Strengthened coefficient `γ_k`; equals `α_k` when no usable term exists.
pub fn gamma_coeff(
    h: &Expr,
    bounds: &Bounds,
    sample: &BoundarySample,
    alpha_k: f64,
    k: usize,
    cfg: &MonoidalConfig,
) -> Result<f64, MonoidalError> {
    let sw = sweeper(h, bounds)?;
    let n = bounds.dim();
    if k >= n {
        return Err(MonoidalError::InvalidConfig(format!("integer index {} out of range", k + 1)));
    }
    let objective = |p: &BoundaryPoint| {
        if p.usable && !p.redundant {
            p.gradient[k] / p.inner + 1.0 - p.beta
        } else {
            f64::INFINITY
        }
    };
    let Some(start) = sample.points.iter().filter(|p| objective(p).is_finite()).min_by(|a, b| objective(a).total_cmp(&objective(b))) else {
        return Ok(alpha_k);
    };
    let (_, best) = sw.polish(start, |p| -objective(p), polish_step(n, cfg), cfg.refine_iters);
    Ok(alpha_k.min(-best))
}

/// Monoidal cuts for the integer indices in `cfg.integer`.
pub fn monoidal_cut(h: &Expr, bounds: &Bounds, cfg: &MonoidalConfig) -> Result<Vec<Cut>, MonoidalError> {
    if cfg.integer.is_empty() {
        return Err(MonoidalError::InvalidConfig("no integer variables to strengthen".into()));
    }
    let sample = sweep_boundary(h, bounds, cfg)?;
    let alpha = alpha_coeffs(h, bounds, &sample, cfg)?;
    let mut gammas = Vec::with_capacity(cfg.integer.len());
    for &k in &cfg.integer {
        gammas.push((k, gamma_coeff(h, bounds, &sample, alpha[k], k, cfg)?));
    }
    let prov = Provenance::new(Method::IcMonoidal)
        .with("directions", cfg.direction_count(bounds.dim()) as f64)
        .with("refine_iters", cfg.refine_iters as f64)
        .with("sos1", if cfg.sos1 { 1.0 } else { 0.0 });
    if cfg.sos1 {
        let mut coeffs = alpha.clone();
        for (k, g) in &gammas {
            coeffs[*k] = *g;
        }
        return Ok(vec![Cut::nonbasic(coeffs, prov)]);
    }
    Ok(gammas
        .into_iter()
        .map(|(k, g)| {
            let mut coeffs = alpha.clone();
            coeffs[k] = g;
            Cut::nonbasic(coeffs, prov.clone())
        })
        .collect())
}
