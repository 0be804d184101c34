//! Brute-force cut validation on a feasibility mesh.
//!
//! A [`Region`] describes the feasible set in the coordinates the cut is
//! written in: a box, integrality of some coordinates, nonlinear constraints
//! `g(t) ≤ 0`, and affine constraints inherited from basic variables. The
//! mesh enumerates integer coordinates and samples continuous ones
//! uniformly; a cut is valid when no feasible mesh point violates it.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::bounds::Bounds;
use crate::cutgen::Cut;
use crate::expr::{Compiled, Expr};
use crate::lp::{substitute_nonbasic, Instance, Tableau};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ValidateError {
    #[error("coordinate x{0} is unbounded; pass a clip width to mesh it")]
    UnboundedMesh(usize),
    #[error("cut has {got} coefficients, region has {expected} coordinates")]
    DimensionMismatch { expected: usize, got: usize },
}

/// `lower ≤ coeffsᵀt + constant ≤ upper`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineRange {
    pub coeffs: Vec<f64>,
    pub constant: f64,
    pub lower: f64,
    pub upper: f64,
    pub integral: bool,
}

impl AffineRange {
    fn value(&self, t: &[f64]) -> f64 {
        self.constant + self.coeffs.iter().zip(t).map(|(a, v)| a * v).sum::<f64>()
    }
}

#[derive(Debug, Clone)]
pub struct Region {
    pub bounds: Bounds,
    pub integer: BTreeSet<usize>,
    pub constraints: Vec<Expr>,
    pub affine: Vec<AffineRange>,
}

fn is_integral(v: f64) -> bool {
    (v - v.round()).abs() <= 1e-9 * v.abs().max(1.0)
}

impl Region {
    /// `{t ∈ bounds : g(t) ≤ 0 for every g, t_i ∈ ℤ for i ∈ integer}`.
    pub fn new(bounds: Bounds, integer: BTreeSet<usize>, constraints: Vec<Expr>) -> Region {
        Region { bounds, integer, constraints, affine: Vec::new() }
    }

    /// The instance's feasible set in the nonbasic coordinates of `t`.
    pub fn from_tableau(inst: &Instance, t: &Tableau) -> Region {
        let n = t.dim();
        let mut integer = BTreeSet::new();
        for (j, &k) in t.nonbasic.iter().enumerate() {
            if inst.integer.contains(&k) && is_integral(t.x[k]) {
                integer.insert(j);
            }
        }
        let mut affine = Vec::new();
        for (i, &k) in t.basic.iter().enumerate() {
            affine.push(AffineRange {
                coeffs: t.r[i].clone(),
                constant: t.x[k],
                lower: inst.bounds.lower[k],
                upper: inst.bounds.upper[k],
                integral: inst.integer.contains(&k),
            });
        }
        for (j, &k) in t.nonbasic.iter().enumerate() {
            if inst.integer.contains(&k) && !integer.contains(&j) {
                let mut coeffs = vec![0.0; n];
                coeffs[j] = t.nonbasic_sign[j];
                affine.push(AffineRange { coeffs, constant: t.x[k], lower: f64::NEG_INFINITY, upper: f64::INFINITY, integral: true });
            }
        }
        let constraints = inst.nonlinear.iter().map(|g| substitute_nonbasic(g, t)).collect();
        Region { bounds: t.nonbasic_box(), integer, constraints, affine }
    }

    /// The instance's feasible set in its original variables.
    pub fn from_instance(inst: &Instance) -> Region {
        let mut affine = Vec::new();
        for (row, b) in inst.a.iter().zip(&inst.b) {
            affine.push(AffineRange { coeffs: row.clone(), constant: -b, lower: 0.0, upper: 0.0, integral: false });
        }
        Region { bounds: inst.bounds.clone(), integer: inst.integer.clone(), constraints: inst.nonlinear.clone(), affine }
    }

    pub fn dim(&self) -> usize {
        self.bounds.dim()
    }
}

#[derive(Debug, Clone)]
pub struct ValidateOptions {
    /// Mesh spacing for continuous coordinates.
    pub resolution: f64,
    /// Width used in place of an infinite bound; `None` rejects unbounded coordinates.
    pub clip: Option<f64>,
    /// Total point budget; spacing grows when the full mesh would exceed it.
    pub max_points: usize,
    /// Points whose constraint values are at most this are feasible.
    pub feasibility_tol: f64,
    /// A feasible point violates the cut when its margin is below `−cut_tol`.
    pub cut_tol: f64,
    /// Above this dimension the mesh is replaced by seeded random samples.
    pub max_mesh_dim: usize,
    pub seed: u64,
}

impl Default for ValidateOptions {
    fn default() -> Self {
        ValidateOptions {
            resolution: 0.01,
            clip: None,
            max_points: 2_000_000,
            feasibility_tol: 1e-9,
            cut_tol: 1e-7,
            max_mesh_dim: 3,
            seed: 0x5eed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub valid: bool,
    /// Feasible point with the smallest margin.
    pub worst_point: Option<Vec<f64>>,
    pub worst_margin: f64,
    pub points: usize,
    pub feasible_points: usize,
    pub sampled: bool,
    pub tolerance: f64,
}

struct Checker {
    tapes: Vec<Compiled>,
    affine: Vec<AffineRange>,
    tol: f64,
}

impl Checker {
    fn feasible(&self, t: &[f64]) -> bool {
        for a in &self.affine {
            let v = a.value(t);
            let slack = self.tol * v.abs().max(1.0);
            if v < a.lower - slack || v > a.upper + slack || (a.integral && !is_integral(v)) {
                return false;
            }
        }
        self.tapes.iter().all(|g| matches!(g.eval(t), Ok(v) if v <= self.tol))
    }
}

/// Axis values for each coordinate of the mesh.
pub fn mesh_axes(region: &Region, opts: &ValidateOptions) -> Result<Vec<Vec<f64>>, ValidateError> {
    let n = region.dim();
    let mut lower = region.bounds.lower.clone();
    let mut upper = region.bounds.upper.clone();
    for i in 0..n {
        if !lower[i].is_finite() || !upper[i].is_finite() {
            let w = opts.clip.ok_or(ValidateError::UnboundedMesh(i + 1))?;
            if !lower[i].is_finite() && !upper[i].is_finite() {
                lower[i] = -w;
                upper[i] = w;
            } else if !lower[i].is_finite() {
                lower[i] = upper[i] - w;
            } else {
                upper[i] = lower[i] + w;
            }
        }
    }
    let continuous = (0..n).filter(|i| !region.integer.contains(i)).count();
    let mut integer_points = 1usize;
    for &i in &region.integer {
        let count = (upper[i].floor() - lower[i].ceil() + 1.0).max(0.0) as usize;
        integer_points = integer_points.saturating_mul(count.max(1));
    }
    let per_dim = if continuous == 0 {
        usize::MAX
    } else {
        let budget = (opts.max_points / integer_points.max(1)).max(2) as f64;
        budget.powf(1.0 / continuous as f64).floor().max(2.0) as usize
    };
    Ok((0..n)
        .map(|i| {
            let (l, u) = (lower[i], upper[i]);
            if region.integer.contains(&i) {
                let (a, b) = (l.ceil() as i64, u.floor() as i64);
                (a..=b).map(|v| v as f64).collect()
            } else if u == l {
                vec![l]
            } else {
                let steps = (((u - l) / opts.resolution).round() as usize).clamp(1, per_dim - 1);
                (0..=steps).map(|k| if k == steps { u } else { l + (u - l) * k as f64 / steps as f64 }).collect()
            }
        })
        .collect())
}

/// Checks `cut` against every feasible mesh point of `region`.
pub fn validate_cut(cut: &Cut, region: &Region, opts: &ValidateOptions) -> Result<Verdict, ValidateError> {
    let n = region.dim();
    if cut.coeffs.len() != n {
        return Err(ValidateError::DimensionMismatch { expected: n, got: cut.coeffs.len() });
    }
    let checker =
        Checker { tapes: region.constraints.iter().map(Expr::compile).collect(), affine: region.affine.clone(), tol: opts.feasibility_tol };
    let axes = mesh_axes(region, opts)?;
    let mut verdict = Verdict {
        valid: true,
        worst_point: None,
        worst_margin: f64::INFINITY,
        points: 0,
        feasible_points: 0,
        sampled: n > opts.max_mesh_dim,
        tolerance: opts.cut_tol,
    };
    let visit = |t: &[f64], v: &mut Verdict| {
        v.points += 1;
        if !checker.feasible(t) {
            return;
        }
        v.feasible_points += 1;
        let m = cut.margin(t);
        if m < v.worst_margin {
            v.worst_margin = m;
            v.worst_point = Some(t.to_vec());
        }
    };
    if axes.iter().any(|a| a.is_empty()) {
        return Ok(verdict);
    }
    if verdict.sampled {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let mut t = vec![0.0; n];
        for _ in 0..opts.max_points.min(200_000) {
            for (i, a) in axes.iter().enumerate() {
                t[i] = a[rng.random_range(0..a.len())];
            }
            visit(&t, &mut verdict);
        }
    } else {
        let mut idx = vec![0usize; n];
        let mut t: Vec<f64> = axes.iter().map(|a| a[0]).collect();
        loop {
            visit(&t, &mut verdict);
            let mut k = 0;
            while k < n {
                idx[k] += 1;
                if idx[k] < axes[k].len() {
                    t[k] = axes[k][idx[k]];
                    break;
                }
                idx[k] = 0;
                t[k] = axes[k][0];
                k += 1;
            }
            if k == n {
                break;
            }
        }
    }
    verdict.valid = verdict.worst_margin >= -opts.cut_tol * cut.rhs.abs().max(1.0);
    Ok(verdict)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cutgen::{Method, Provenance};
    use crate::expr::parse;

    fn toy() -> Region {
        Region::new(Bounds::new(vec![0.0], vec![2.0]).unwrap(), BTreeSet::new(), vec![parse("-(x1^2) + 1", 1).unwrap()])
    }

    #[test]
    fn toy_cut_is_valid_and_tight() {
        let cut = Cut::nonbasic(vec![1.0], Provenance::new(Method::Ic));
        let v = validate_cut(&cut, &toy(), &ValidateOptions::default()).unwrap();
        assert!(v.valid);
        assert_eq!(v.worst_point, Some(vec![1.0]));
        assert!(v.worst_margin.abs() < 1e-12);
    }

    #[test]
    fn corrupted_cut_has_witness() {
        let mut cut = Cut::nonbasic(vec![1.0], Provenance::new(Method::Ic));
        cut.rhs = 1.1;
        let v = validate_cut(&cut, &toy(), &ValidateOptions::default()).unwrap();
        assert!(!v.valid);
        assert_eq!(v.worst_point, Some(vec![1.0]));
    }

    #[test]
    fn unbounded_needs_clip() {
        let r = Region::new(Bounds::new(vec![0.0], vec![f64::INFINITY]).unwrap(), BTreeSet::new(), vec![]);
        let cut = Cut::nonbasic(vec![0.0], Provenance::new(Method::Ic));
        assert_eq!(validate_cut(&cut, &r, &ValidateOptions::default()).unwrap_err(), ValidateError::UnboundedMesh(1));
        let opts = ValidateOptions { clip: Some(3.0), ..Default::default() };
        assert_eq!(mesh_axes(&r, &opts).unwrap()[0].last(), Some(&3.0));
    }

    #[test]
    fn integer_axes_enumerate() {
        let r = Region::new(Bounds::new(vec![0.0, 0.0], vec![2.0, 5.0]).unwrap(), [0].into(), vec![]);
        let axes = mesh_axes(&r, &ValidateOptions::default()).unwrap();
        assert_eq!(axes[0], vec![0.0, 1.0, 2.0]);
        assert_eq!(axes[1].len(), 501);
    }
}
