//! Intersection cuts from the S-free set `{x : h_ave(x) ≥ 0}`.
//!
//! Each ray of the simplicial cone is followed from the apex until the
//! concave function defining the set changes sign. Concavity along a ray
//! guarantees a single crossing, so exponential bracketing followed by
//! bisection finds it.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{Expr, ExprError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CutError {
    #[error("apex is not in the interior of the S-free set (value {0})")]
    ApexNotInterior(f64),
    #[error("every ray is unbounded; the S-free set contains the whole cone")]
    AllRaysUnbounded,
    #[error("invalid ray system: {0}")]
    InvalidRays(String),
    #[error(transparent)]
    Expr(#[from] ExprError),
}

/// Apex and ray directions of a translated simplicial cone.
#[derive(Debug, Clone, PartialEq)]
pub struct RaySystem {
    pub apex: Vec<f64>,
    pub rays: Vec<Vec<f64>>,
}

impl RaySystem {
    /// Unit axis rays at `apex`.
    pub fn axis(apex: &[f64]) -> RaySystem {
        let n = apex.len();
        let rays = (0..n)
            .map(|j| {
                let mut r = vec![0.0; n];
                r[j] = 1.0;
                r
            })
            .collect();
        RaySystem { apex: apex.to_vec(), rays }
    }

    pub fn new(apex: Vec<f64>, rays: Vec<Vec<f64>>) -> Result<RaySystem, CutError> {
        for (j, r) in rays.iter().enumerate() {
            if r.len() != apex.len() {
                return Err(CutError::InvalidRays(format!("ray {j} has dimension {}", r.len())));
            }
            if r.iter().all(|v| *v == 0.0) || r.iter().any(|v| !v.is_finite()) {
                return Err(CutError::InvalidRays(format!("ray {j} is zero or non-finite")));
            }
        }
        Ok(RaySystem { apex, rays })
    }

    pub fn point(&self, j: usize, lambda: f64) -> Vec<f64> {
        self.apex.iter().zip(&self.rays[j]).map(|(a, r)| a + lambda * r).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Space {
    Nonbasic,
    Original,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "ic")]
    Ic,
    #[serde(rename = "ic+bounds")]
    IcBounds,
    #[serde(rename = "ic+monoidal")]
    IcMonoidal,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Ic => "ic",
            Method::IcBounds => "ic+bounds",
            Method::IcMonoidal => "ic+monoidal",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub method: Method,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instance: Option<String>,
    #[serde(default)]
    pub tolerances: BTreeMap<String, f64>,
}

impl Provenance {
    pub fn new(method: Method) -> Self {
        Provenance { method, instance: None, tolerances: BTreeMap::new() }
    }

    pub fn with(mut self, key: &str, value: f64) -> Self {
        self.tolerances.insert(key.to_string(), value);
        self
    }
}

/// The inequality `coeffsᵀx ≥ rhs`.
///
/// Cuts in nonbasic space always have `rhs = 1` and are expressed relative
/// to the apex; cuts mapped back to original variables carry a general rhs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cut {
    pub space: Space,
    pub coeffs: Vec<f64>,
    pub rhs: f64,
    #[serde(flatten)]
    pub provenance: Provenance,
}

impl Cut {
    pub fn nonbasic(coeffs: Vec<f64>, provenance: Provenance) -> Cut {
        Cut { space: Space::Nonbasic, coeffs, rhs: 1.0, provenance }
    }

    pub fn lhs(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().zip(x).map(|(a, v)| a * v).sum()
    }

    /// `lhs(x) − rhs`; negative means `x` is cut off.
    pub fn margin(&self, x: &[f64]) -> f64 {
        self.lhs(x) - self.rhs
    }

    pub fn method(&self) -> Method {
        self.provenance.method
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).unwrap_or_default()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOptions {
    /// Steps beyond this are reported as unbounded.
    pub lambda_max: f64,
    /// Accept the crossing once `|f| ≤ residual · max(1, |f(0)|)`.
    pub residual: f64,
    pub max_bisections: usize,
}

impl Default for StepOptions {
    fn default() -> Self {
        StepOptions { lambda_max: 1e9, residual: 1e-9, max_bisections: 100 }
    }
}

/// Largest `λ ≥ 0` with `f(λ) ≥ 0`, for `f` concave on `[0, ∞)` and
/// `f(0) > 0`. Returns `+∞` when `f(lambda_max) ≥ 0`.
///
/// The returned step always satisfies `f(λ) ≥ 0`.
pub fn step_along<F, E>(mut f: F, opts: &StepOptions) -> Result<f64, E>
where
    F: FnMut(f64) -> Result<f64, E>,
    E: From<CutError>,
{
    let f0 = f(0.0)?;
    if f0.is_nan() || f0 <= 0.0 {
        return Err(CutError::ApexNotInterior(f0).into());
    }
    let tol = opts.residual * f0.abs().max(1.0);
    let mut lo = 0.0;
    let mut f_lo = f0;
    let mut hi = opts.lambda_max.min(1.0);
    loop {
        let v = f(hi)?;
        if v < 0.0 {
            break;
        }
        lo = hi;
        f_lo = v;
        if hi >= opts.lambda_max {
            return Ok(f64::INFINITY);
        }
        hi = (hi * 2.0).min(opts.lambda_max);
    }
    for _ in 0..opts.max_bisections {
        if f_lo <= tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let v = f(mid)?;
        if v >= 0.0 {
            lo = mid;
            f_lo = v;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// Step length from the apex along `ray` to the boundary of `{h_ave ≥ 0}`.
pub fn step_length(h_ave: &Expr, apex: &[f64], ray: &[f64], opts: &StepOptions) -> Result<f64, CutError> {
    let tape = h_ave.compile();
    let mut p = vec![0.0; apex.len()];
    step_along(
        |lambda| {
            for (k, v) in p.iter_mut().enumerate() {
                *v = apex[k] + lambda * ray[k];
            }
            tape.eval(&p).map_err(CutError::from)
        },
        opts,
    )
}

/// Coefficients `1/λⱼ` (zero for unbounded rays) from a set of step lengths.
pub fn coefficients_from_steps(steps: &[f64]) -> Result<Vec<f64>, CutError> {
    if steps.iter().all(|s| s.is_infinite()) {
        return Err(CutError::AllRaysUnbounded);
    }
    Ok(steps.iter().map(|s| if s.is_infinite() { 0.0 } else { 1.0 / s }).collect())
}

/// The intersection cut `Σ xⱼ/λⱼ ≥ 1` of the S-free set `{h_ave ≥ 0}`.
pub fn intersection_cut(h_ave: &Expr, rays: &RaySystem, opts: &StepOptions) -> Result<Cut, CutError> {
    let steps = rays.rays.iter().map(|r| step_length(h_ave, &rays.apex, r, opts)).collect::<Result<Vec<_>, _>>()?;
    let coeffs = coefficients_from_steps(&steps)?;
    let prov = Provenance::new(Method::Ic).with("lambda_max", opts.lambda_max).with("residual", opts.residual);
    Ok(Cut::nonbasic(coeffs, prov))
}
