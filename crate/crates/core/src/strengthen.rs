//! Enlarging the S-free set with variable bounds.
//!
//! The enlarged set is `{x : ĥ(x) ≥ 0}` with
//!
//! ```text
//! ĥ(x) = min { h_ave(z) + ∇h_ave(z)ᵀ(x − z) : z ∈ [l, u], h_ave(z) ≥ 0 }.
//! ```
//!
//! The inner minimization is not solved exactly. [`HhatEvaluator`] keeps the
//! linearizations at admitted grid points of the box and, per query, adds the
//! query point itself (when it is a feasible `z`), the boundary point on the
//! segment from the apex to the query, and a short projected descent on
//! `z ↦ h_ave(z) + ∇h_ave(z)ᵀ(x − z)`. The result is an upper bound on the
//! exact `ĥ`, which is why the final step lengths are shrunk by a safety
//! factor.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::bounds::Bounds;
use crate::cutgen::{coefficients_from_steps, step_along, Cut, CutError, Method, Provenance, RaySystem, StepOptions};
use crate::expr::{Compiled, Expr, ExprError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StrengthenError {
    #[error("bound strengthening supports at most {max} variables, got {got}")]
    UnsupportedDimension { got: usize, max: usize },
    #[error("no sampled point of the box satisfies h_ave(z) >= 0")]
    EmptyZRegion,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error(transparent)]
    Cut(#[from] CutError),
    #[error(transparent)]
    Expr(#[from] ExprError),
}

pub const MAX_DIMENSION: usize = 4;

#[derive(Debug, Clone)]
pub struct HhatOptions {
    pub grid_per_dim: usize,
    /// Projected-descent iterations per query point.
    pub refine_steps: usize,
    /// Random probes used to admit a sample's gradient as a supergradient.
    pub probes: usize,
    pub supergradient_tol: f64,
    /// Drop the restriction `h_ave(z) ≥ 0` (Tuy's variant).
    pub tuy: bool,
    /// Half-width of the sampling window for unbounded coordinates.
    pub fallback_radius: f64,
    pub seed: u64,
}

impl Default for HhatOptions {
    fn default() -> Self {
        HhatOptions {
            grid_per_dim: 64,
            refine_steps: 20,
            probes: 200,
            supergradient_tol: 1e-7,
            tuy: false,
            fallback_radius: 100.0,
            seed: 0x5eed,
        }
    }
}

/// Linear function `value + gradᵀ(x − z)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linearization {
    pub z: Vec<f64>,
    pub value: f64,
    pub grad: Vec<f64>,
}

impl Linearization {
    pub fn at(&self, x: &[f64]) -> f64 {
        self.value + self.grad.iter().zip(x.iter().zip(&self.z)).map(|(g, (xi, zi))| g * (xi - zi)).sum::<f64>()
    }
}

#[derive(Debug, Clone)]
pub struct HhatEvaluator {
    h_ave: Expr,
    tape: Compiled,
    window: Bounds,
    center: Vec<f64>,
    center_interior: bool,
    samples: Vec<Linearization>,
    rejected: usize,
    warnings: Vec<String>,
    opts: HhatOptions,
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if lo == hi || n <= 1 {
        return vec![lo];
    }
    (0..n).map(|i| if i + 1 == n { hi } else { lo + (hi - lo) * i as f64 / (n - 1) as f64 }).collect()
}

/// Samples the box and collects admitted linearizations of `h_ave`.
///
/// `center` is the apex of the cut (the point `x̂` where `h_ave > 0`); it
/// anchors the sampling window for unbounded coordinates.
pub fn build_hhat(h_ave: &Expr, bounds: &Bounds, center: &[f64], opts: &HhatOptions) -> Result<HhatEvaluator, StrengthenError> {
    let n = center.len();
    if bounds.dim() != n {
        return Err(StrengthenError::DimensionMismatch(format!("box has {} coordinates, point has {n}", bounds.dim())));
    }
    if n > MAX_DIMENSION {
        return Err(StrengthenError::UnsupportedDimension { got: n, max: MAX_DIMENSION });
    }
    if h_ave.min_dimension() > n {
        return Err(StrengthenError::DimensionMismatch(format!("expression uses {} variables", h_ave.min_dimension())));
    }
    let mut warnings = Vec::new();
    let mut lower = bounds.lower.clone();
    let mut upper = bounds.upper.clone();
    for i in 0..n {
        if !lower[i].is_finite() || !upper[i].is_finite() {
            let r = opts.fallback_radius;
            if !lower[i].is_finite() {
                lower[i] = (center[i] - r).min(upper[i]);
            }
            if !upper[i].is_finite() {
                upper[i] = (center[i] + r).max(lower[i]);
            }
            warnings.push(format!("x{} is unbounded; sampling window [{}, {}]", i + 1, lower[i], upper[i]));
        }
    }
    let window = Bounds { lower, upper };
    let tape = h_ave.compile();

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let probes: Vec<Vec<f64>> = (0..opts.probes)
        .map(|_| {
            (0..n)
                .map(|i| {
                    let (l, u) = (window.lower[i], window.upper[i]);
                    if l == u {
                        l
                    } else {
                        rng.random_range(l..=u)
                    }
                })
                .collect()
        })
        .collect();
    let probe_values: Vec<f64> = probes.iter().map(|p| tape.eval(p).unwrap_or(f64::NEG_INFINITY)).collect();

    let axes: Vec<Vec<f64>> = (0..n).map(|i| linspace(window.lower[i], window.upper[i], opts.grid_per_dim)).collect();
    let mut candidates: Vec<Vec<f64>> = Vec::new();
    let mut idx = vec![0usize; n];
    loop {
        candidates.push((0..n).map(|i| axes[i][idx[i]]).collect());
        let mut k = 0;
        while k < n {
            idx[k] += 1;
            if idx[k] < axes[k].len() {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
        if k == n {
            break;
        }
    }
    let center_value = tape.eval(center).unwrap_or(f64::NEG_INFINITY);
    let center_interior = window.contains(center, 0.0) && center_value > 0.0;
    if window.contains(center, 0.0) {
        candidates.push(center.to_vec());
    }

    let mut samples = Vec::new();
    let mut rejected = 0;
    for z in candidates {
        let Ok(value) = tape.eval(&z) else { continue };
        if !value.is_finite() || (!opts.tuy && value < 0.0) {
            continue;
        }
        let Ok(grad) = tape.gradient(&z) else {
            rejected += 1;
            continue;
        };
        let lin = Linearization { z, value, grad };
        let admitted = probes.iter().zip(&probe_values).all(|(p, hp)| {
            let l = lin.at(p);
            let tol = opts.supergradient_tol * 1f64.max(hp.abs()).max(value.abs());
            *hp <= l + tol
        });
        if admitted {
            samples.push(lin);
        } else {
            rejected += 1;
        }
    }
    if samples.is_empty() {
        return Err(StrengthenError::EmptyZRegion);
    }
    if rejected > 0 {
        warnings.push(format!("{rejected} samples failed the supergradient check"));
    }
    Ok(HhatEvaluator {
        h_ave: h_ave.clone(),
        tape,
        window,
        center: center.to_vec(),
        center_interior,
        samples,
        rejected,
        warnings,
        opts: opts.clone(),
    })
}

impl HhatEvaluator {
    pub fn samples(&self) -> &[Linearization] {
        &self.samples
    }

    pub fn rejected(&self) -> usize {
        self.rejected
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn window(&self) -> &Bounds {
        &self.window
    }

    pub fn h_ave(&self) -> &Expr {
        &self.h_ave
    }

    pub fn options(&self) -> &HhatOptions {
        &self.opts
    }

    /// Minimum over the stored linearizations only.
    pub fn eval_sampled(&self, x: &[f64]) -> f64 {
        self.samples.iter().map(|s| s.at(x)).fold(f64::INFINITY, f64::min)
    }

    fn admissible(&self, z: &[f64], value: f64) -> bool {
        self.window.contains(z, 0.0) && value.is_finite() && (self.opts.tuy || value >= 0.0)
    }

    fn linearize(&self, z: &[f64]) -> Option<Linearization> {
        let value = self.tape.eval(z).ok()?;
        if !value.is_finite() {
            return None;
        }
        let grad = self.tape.gradient(z).ok()?;
        Some(Linearization { z: z.to_vec(), value, grad })
    }

    /// Point where `h_ave` changes sign on the segment `[from, to]`, with
    /// `h_ave(from) ≥ 0 > h_ave(to)`; returned on the nonnegative side.
    fn segment_boundary(&self, from: &[f64], to: &[f64]) -> Vec<f64> {
        let at = |t: f64| -> Vec<f64> { from.iter().zip(to).map(|(a, b)| a + t * (b - a)).collect() };
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            match self.tape.eval(&at(mid)) {
                Ok(v) if v >= 0.0 => lo = mid,
                _ => hi = mid,
            }
        }
        at(lo)
    }

    /// Sampled value of `ĥ(x)`.
    pub fn eval(&self, x: &[f64]) -> Result<f64, StrengthenError> {
        if x.len() != self.center.len() {
            return Err(StrengthenError::DimensionMismatch(format!("expected {} coordinates", self.center.len())));
        }
        let (mut best, mut best_i) = (f64::INFINITY, 0);
        for (i, s) in self.samples.iter().enumerate() {
            let v = s.at(x);
            if v < best {
                best = v;
                best_i = i;
            }
        }
        let hx = self.tape.eval(x)?;
        // z = x is feasible: its linearization at x is h_ave(x) itself.
        if self.admissible(x, hx) {
            return Ok(best.min(hx));
        }
        let mut start = self.samples[best_i].clone();
        if self.center_interior && hx < 0.0 {
            let z = self.segment_boundary(&self.center, x);
            if self.window.contains(&z, 1e-12) {
                if let Some(lin) = self.linearize(&z) {
                    let v = lin.at(x);
                    if v < best {
                        best = v;
                        start = lin;
                    }
                }
            }
        }
        if self.opts.refine_steps > 0 {
            best = best.min(self.refine(x, start));
        }
        Ok(best)
    }

    fn refine(&self, x: &[f64], start: Linearization) -> f64 {
        let n = x.len();
        let mut cur = start;
        let mut best = cur.at(x);
        let width = (0..n).map(|i| self.window.upper[i] - self.window.lower[i]).fold(0.0, f64::max);
        let mut step = if width > 0.0 { width / self.opts.grid_per_dim.max(2) as f64 } else { return best };
        for _ in 0..self.opts.refine_steps {
            // ∇_z [h(z) + ∇h(z)ᵀ(x − z)] = ∇²h(z)(x − z), by a directional difference of the gradient.
            let w: Vec<f64> = x.iter().zip(&cur.z).map(|(a, b)| a - b).collect();
            let nw = w.iter().map(|v| v * v).sum::<f64>().sqrt();
            if nw == 0.0 {
                break;
            }
            let eps = 1e-5;
            let probe: Vec<f64> = cur.z.iter().zip(&w).map(|(z, wi)| z + eps * wi / nw).collect();
            let Ok(g2) = self.tape.gradient(&probe) else { break };
            let dir: Vec<f64> = g2.iter().zip(&cur.grad).map(|(a, b)| -(a - b) / eps * nw).collect();
            let nd = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
            if !nd.is_finite() || nd <= 0.0 {
                break;
            }
            let mut moved = false;
            for _ in 0..8 {
                let mut trial: Vec<f64> = cur.z.iter().zip(&dir).map(|(z, d)| z + step * d / nd).collect();
                self.window.clamp(&mut trial);
                if !self.opts.tuy && !matches!(self.tape.eval(&trial), Ok(v) if v >= 0.0) {
                    trial = self.segment_boundary(&cur.z, &trial);
                }
                if let Some(lin) = self.linearize(&trial) {
                    let v = lin.at(x);
                    if v < best && self.admissible(&trial, lin.value) {
                        best = v;
                        cur = lin;
                        step *= 2.0;
                        moved = true;
                        break;
                    }
                }
                step *= 0.5;
            }
            if !moved {
                break;
            }
        }
        best
    }
}

/// Intersection cut of `{ĥ ≥ 0}`; each step is multiplied by `1 − safety`.
pub fn strengthened_cut(ev: &HhatEvaluator, rays: &RaySystem, safety: f64, opts: &StepOptions) -> Result<Cut, StrengthenError> {
    let mut steps = Vec::with_capacity(rays.rays.len());
    for j in 0..rays.rays.len() {
        let s = step_along(|lambda| ev.eval(&rays.point(j, lambda)), opts)?;
        steps.push(s * (1.0 - safety));
    }
    let coeffs = coefficients_from_steps(&steps)?;
    let prov = Provenance::new(Method::IcBounds)
        .with("safety", safety)
        .with("grid_per_dim", ev.opts.grid_per_dim as f64)
        .with("supergradient_tol", ev.opts.supergradient_tol)
        .with("tuy", if ev.opts.tuy { 1.0 } else { 0.0 })
        .with("lambda_max", opts.lambda_max);
    Ok(Cut::nonbasic(coeffs, prov))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::estimate;
    use crate::expr::parse;

    fn fig2_h_ave() -> Expr {
        let h = parse("x1^2 - 2*x2^2 + 4*x1*x2 - 3*x1 + 2*x2 + 1", 2).unwrap();
        estimate(&h, &[1.0, 1.0]).unwrap().under
    }

    #[test]
    fn value_at_center_is_h_ave() {
        let b = Bounds::new(vec![0.0, 0.0], vec![2.0, 2.0]).unwrap();
        let ev = build_hhat(&fig2_h_ave(), &b, &[1.0, 1.0], &HhatOptions { grid_per_dim: 16, ..Default::default() }).unwrap();
        assert!((ev.eval(&[1.0, 1.0]).unwrap() - 3.0).abs() < 1e-6);
        assert!((ev.eval_sampled(&[1.0, 1.0]) - 3.0).abs() < 1e-6);
        assert_eq!(ev.rejected(), 0);
    }

    #[test]
    fn single_point_box_is_tangent_plane() {
        let h = parse("-(x1^2) - x2^2 + 4", 2).unwrap();
        let ev = build_hhat(&h, &Bounds::point(&[1.0, 0.5]), &[1.0, 0.5], &HhatOptions { refine_steps: 0, ..Default::default() }).unwrap();
        // tangent at (1, 0.5): 2.75 − 2(x1 − 1) − (x2 − 0.5)
        for x in [[0.0, 0.0], [2.0, 1.0], [-1.0, 3.0]] {
            let t = 2.75 - 2.0 * (x[0] - 1.0) - (x[1] - 0.5);
            assert!((ev.eval(&x).unwrap() - t).abs() < 1e-6, "{x:?}");
        }
    }

    #[test]
    fn empty_region() {
        let h = parse("-(x1^2) + 1", 1).unwrap();
        let b = Bounds::new(vec![5.0], vec![6.0]).unwrap();
        assert_eq!(build_hhat(&h, &b, &[0.0], &HhatOptions::default()).unwrap_err(), StrengthenError::EmptyZRegion);
    }

    #[test]
    fn region_clustered_at_center() {
        // h ≥ 0 only at x = 0 inside the box
        let h = parse("-(x1^2)", 1).unwrap();
        let b = Bounds::new(vec![-1.0], vec![1.0]).unwrap();
        let ev = build_hhat(&h, &b, &[0.0], &HhatOptions { grid_per_dim: 4, ..Default::default() }).unwrap();
        assert!(ev.samples().iter().all(|s| s.z[0].abs() < 1e-12));
    }

    #[test]
    fn dimension_limit() {
        let h = parse("1 - x1", 5).unwrap();
        let b = Bounds::from_upper(vec![1.0; 5]).unwrap();
        assert!(matches!(
            build_hhat(&h, &b, &[0.0; 5], &HhatOptions::default()),
            Err(StrengthenError::UnsupportedDimension { got: 5, .. })
        ));
    }

    #[test]
    fn unbounded_coordinates_warn() {
        let h = parse("-(x1^2) + 1", 1).unwrap();
        let ev = build_hhat(&h, &Bounds::unbounded(1), &[0.0], &HhatOptions::default()).unwrap();
        assert_eq!(ev.window().lower, vec![-100.0]);
        assert!(!ev.warnings().is_empty());
    }

    #[test]
    fn unbounded_box_reproduces_plain_cut() {
        let h = parse("-(x1^2) + 1", 1).unwrap();
        let rays = RaySystem::axis(&[0.0]);
        let ev = build_hhat(&h, &Bounds::unbounded(1), &[0.0], &HhatOptions::default()).unwrap();
        let cut = strengthened_cut(&ev, &rays, 0.0, &StepOptions::default()).unwrap();
        assert!((cut.coeffs[0] - 1.0).abs() < 1e-6, "{:?}", cut.coeffs);
        assert_eq!(cut.method(), Method::IcBounds);
    }

    #[test]
    fn box_information_enlarges_the_set() {
        // Only x1 ∈ [0, 1] matters; ĥ uses linearizations with z ≤ 1 only.
        let h = parse("-(x1^2) + 1", 1).unwrap();
        let b = Bounds::new(vec![-0.5], vec![0.5]).unwrap();
        let ev = build_hhat(&h, &b, &[0.0], &HhatOptions::default()).unwrap();
        let cut = strengthened_cut(&ev, &RaySystem::axis(&[0.0]), 1e-6, &StepOptions::default()).unwrap();
        // boundary of the tangent at z = 0.5: 0.75 − (x − 0.5) = 0 ⇒ x = 1.25
        assert!((cut.coeffs[0] - 1.0 / 1.25).abs() < 1e-5, "{:?}", cut.coeffs);
    }
}
