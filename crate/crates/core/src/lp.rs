//! LP relaxation, simplex tableau and the change to nonbasic variables.
//!
//! Instances are in equality form `min cᵀx` subject to `Ax = b`, `l ≤ x ≤ u`,
//! plus nonlinear constraints `g(x) ≤ 0` that the LP ignores. The solver is
//! a dense two-phase bounded-variable primal simplex with Bland's rule.
//!
//! At the optimal vertex `x̂` every nonbasic variable sits at one of its
//! bounds. The nonbasic coordinate `t_j ≥ 0` measures the distance from that
//! bound, so the vertex becomes the origin and every point of the affine hull
//! is `x̂ + Σ t_j r_j` for the tableau rays `r_j`.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bounds::Bounds;
use crate::cutgen::{Cut, Space};
use crate::expr::{parse, Expr, ExprError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LpError {
    #[error("the LP relaxation is infeasible")]
    Infeasible,
    #[error("the LP relaxation is unbounded")]
    Unbounded,
    #[error("the equality matrix has rank {rank} < {rows} rows")]
    RankDeficient { rank: usize, rows: usize },
    #[error("variable x{0} has no finite bound")]
    FreeVariable(usize),
    #[error("simplex iteration limit reached")]
    IterationLimit,
    #[error("invalid instance: {0}")]
    Invalid(String),
    #[error("cut is not in nonbasic space")]
    NotNonbasic,
    #[error(transparent)]
    Expr(#[from] ExprError),
}

/// A number in instance JSON: a double or a decimal string such as `"inf"`.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum Num {
    F(f64),
    S(String),
}

impl Num {
    fn value(&self) -> Result<f64, LpError> {
        match self {
            Num::F(v) => Ok(*v),
            Num::S(s) => match s.trim() {
                "inf" | "+inf" | "infinity" => Ok(f64::INFINITY),
                "-inf" | "-infinity" => Ok(f64::NEG_INFINITY),
                t => t.parse::<f64>().map_err(|_| LpError::Invalid(format!("bad number {s:?}"))),
            },
        }
    }
}

fn nums(v: &[Num]) -> Result<Vec<f64>, LpError> {
    v.iter().map(Num::value).collect()
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInstance {
    #[serde(default)]
    id: Option<String>,
    n: usize,
    c: Vec<Num>,
    #[serde(rename = "A", default)]
    a: Vec<Vec<Num>>,
    #[serde(default)]
    b: Vec<Num>,
    #[serde(default)]
    lb: Option<Vec<Num>>,
    #[serde(default)]
    ub: Option<Vec<Num>>,
    #[serde(rename = "int", default)]
    integer: Vec<usize>,
    #[serde(default)]
    nlcons: Vec<String>,
    #[serde(default)]
    slacks: Vec<usize>,
}

/// `min cᵀx` s.t. `Ax = b`, `x ∈ bounds`, `x_i ∈ ℤ (i ∈ integer)`, `g(x) ≤ 0`.
#[derive(Debug, Clone)]
pub struct Instance {
    pub id: Option<String>,
    pub n: usize,
    pub c: Vec<f64>,
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub bounds: Bounds,
    /// 0-based indices of integer variables.
    pub integer: BTreeSet<usize>,
    pub nonlinear: Vec<Expr>,
    pub nonlinear_text: Vec<String>,
    /// 0-based indices of slack variables, eliminated when mapping cuts back.
    pub slacks: BTreeSet<usize>,
}

impl Instance {
    /// Parses instance JSON; `int` and `slacks` hold 1-based indices.
    pub fn from_json(text: &str) -> Result<Instance, LpError> {
        let raw: RawInstance = serde_json::from_str(text).map_err(|e| LpError::Invalid(e.to_string()))?;
        let n = raw.n;
        let c = nums(&raw.c)?;
        let a = raw.a.iter().map(|r| nums(r)).collect::<Result<Vec<_>, _>>()?;
        let b = nums(&raw.b)?;
        let lower = match &raw.lb {
            Some(v) => nums(v)?,
            None => vec![0.0; n],
        };
        let upper = match &raw.ub {
            Some(v) => nums(v)?,
            None => vec![f64::INFINITY; n],
        };
        let bounds = Bounds::new(lower, upper).map_err(|e| LpError::Invalid(e.to_string()))?;
        let one_based = |v: &[usize], what: &str| -> Result<BTreeSet<usize>, LpError> {
            v.iter()
                .map(|&i| if i == 0 || i > n { Err(LpError::Invalid(format!("{what} index {i} out of range 1..={n}"))) } else { Ok(i - 1) })
                .collect()
        };
        let integer = one_based(&raw.integer, "int")?;
        let slacks = one_based(&raw.slacks, "slacks")?;
        let nonlinear = raw.nlcons.iter().map(|s| parse(s, n)).collect::<Result<Vec<_>, _>>()?;
        Instance::new(raw.id, c, a, b, bounds, integer, nonlinear, raw.nlcons, slacks)
    }

    #[allow(clippy::too_many_arguments)]
    pub fn new(
        id: Option<String>,
        c: Vec<f64>,
        a: Vec<Vec<f64>>,
        b: Vec<f64>,
        bounds: Bounds,
        integer: BTreeSet<usize>,
        nonlinear: Vec<Expr>,
        nonlinear_text: Vec<String>,
        slacks: BTreeSet<usize>,
    ) -> Result<Instance, LpError> {
        let n = c.len();
        if bounds.dim() != n {
            return Err(LpError::Invalid(format!("bounds have {} entries, expected {n}", bounds.dim())));
        }
        if a.len() != b.len() {
            return Err(LpError::Invalid(format!("A has {} rows but b has {}", a.len(), b.len())));
        }
        if let Some(r) = a.iter().position(|r| r.len() != n) {
            return Err(LpError::Invalid(format!("row {} of A has length {}", r + 1, a[r].len())));
        }
        let finite = c.iter().chain(&b).chain(a.iter().flatten()).all(|v| v.is_finite());
        if !finite {
            return Err(LpError::Invalid("c, A and b must be finite".into()));
        }
        if integer.iter().chain(&slacks).any(|&i| i >= n) || nonlinear.iter().any(|g| g.min_dimension() > n) {
            return Err(LpError::Invalid("index out of range".into()));
        }
        Ok(Instance { id, n, c, a, b, bounds, integer, nonlinear, nonlinear_text, slacks })
    }

    pub fn rows(&self) -> usize {
        self.a.len()
    }
}

/// Optimal basis in nonbasic coordinates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Tableau {
    pub basic: Vec<usize>,
    pub nonbasic: Vec<usize>,
    /// `x_{N_j} = x̂_{N_j} + sign_j · t_j`; `−1` for variables at their upper bound.
    pub nonbasic_sign: Vec<f64>,
    /// Range of `t_j`, i.e. `u_j − l_j`.
    pub nonbasic_upper: Vec<f64>,
    pub x_basic: Vec<f64>,
    /// `x_B = x̂_B + R t`, one column per nonbasic variable.
    pub r: Vec<Vec<f64>>,
    pub x: Vec<f64>,
    pub objective: f64,
    /// `cᵀ r_j`, nonnegative at optimality.
    pub reduced_costs: Vec<f64>,
}

impl Tableau {
    /// Full-space direction of nonbasic coordinate `j`.
    pub fn ray(&self, j: usize) -> Vec<f64> {
        let mut r = vec![0.0; self.x.len()];
        for (i, &k) in self.basic.iter().enumerate() {
            r[k] = self.r[i][j];
        }
        r[self.nonbasic[j]] = self.nonbasic_sign[j];
        r
    }

    /// `x̂ + Σ t_j r_j`.
    pub fn lift(&self, t: &[f64]) -> Vec<f64> {
        let mut x = self.x.clone();
        for (j, tj) in t.iter().enumerate() {
            for (i, &k) in self.basic.iter().enumerate() {
                x[k] += self.r[i][j] * tj;
            }
            x[self.nonbasic[j]] += self.nonbasic_sign[j] * tj;
        }
        x
    }

    /// Box `[0, u − l]` of the nonbasic coordinates.
    pub fn nonbasic_box(&self) -> Bounds {
        Bounds::from_upper(self.nonbasic_upper.clone()).expect("ranges are nonnegative")
    }

    pub fn dim(&self) -> usize {
        self.nonbasic.len()
    }
}

const PIVOT_TOL: f64 = 1e-9;
const COST_TOL: f64 = 1e-9;
const MAX_ITERATIONS: usize = 50_000;

struct Simplex {
    m: usize,
    /// Columns of `[A' | I]` in shifted coordinates.
    cols: Vec<DVector<f64>>,
    b: DVector<f64>,
    upper: Vec<f64>,
    basis: Vec<usize>,
    at_upper: Vec<bool>,
}

impl Simplex {
    fn basis_lu(&self) -> Option<nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>> {
        if self.m == 0 {
            return None;
        }
        let cols: Vec<DVector<f64>> = self.basis.iter().map(|&j| self.cols[j].clone()).collect();
        Some(DMatrix::from_columns(&cols).lu())
    }

    fn solve(&self, lu: &Option<nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>>, rhs: &DVector<f64>) -> DVector<f64> {
        match lu {
            Some(lu) => lu.solve(rhs).unwrap_or_else(|| DVector::from_element(self.m, f64::NAN)),
            None => DVector::zeros(0),
        }
    }

    fn basic_values(&self, lu: &Option<nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>>) -> DVector<f64> {
        let mut rhs = self.b.clone();
        for (j, col) in self.cols.iter().enumerate() {
            if self.at_upper[j] {
                rhs -= col * self.upper[j];
            }
        }
        self.solve(lu, &rhs)
    }

    /// Solves `Bᵀy = rhs`.
    fn dual(&self, rhs: &DVector<f64>) -> Result<DVector<f64>, LpError> {
        if self.m == 0 {
            return Ok(DVector::zeros(0));
        }
        let bt = DMatrix::from_columns(&self.basis.iter().map(|&j| self.cols[j].clone()).collect::<Vec<_>>()).transpose();
        bt.lu().solve(rhs).ok_or(LpError::RankDeficient { rank: self.m - 1, rows: self.m })
    }

    fn is_basic(&self, j: usize) -> bool {
        self.basis.contains(&j)
    }

    /// Runs primal simplex on `cost` over the columns `allowed` may enter.
    fn optimize(&mut self, cost: &[f64], allowed: usize) -> Result<(), LpError> {
        for _ in 0..MAX_ITERATIONS {
            let lu = self.basis_lu();
            let xb = self.basic_values(&lu);
            let cb = DVector::from_iterator(self.m, self.basis.iter().map(|&j| cost[j]));
            let y = self.dual(&cb)?;
            let entering = (0..allowed).find(|&j| {
                if self.is_basic(j) || self.upper[j] == 0.0 {
                    return false;
                }
                let d = cost[j] - y.dot(&self.cols[j]);
                (!self.at_upper[j] && d < -COST_TOL) || (self.at_upper[j] && d > COST_TOL)
            });
            let Some(j) = entering else { return Ok(()) };
            let delta = if self.at_upper[j] { -1.0 } else { 1.0 };
            let w = self.solve(&lu, &self.cols[j]);
            let mut theta = self.upper[j];
            let mut leave: Option<(usize, bool)> = None;
            for i in 0..self.m {
                let dw = delta * w[i];
                let bi = self.basis[i];
                let (cand, to_upper) = if dw > PIVOT_TOL {
                    (xb[i].max(0.0) / dw, false)
                } else if dw < -PIVOT_TOL && self.upper[bi].is_finite() {
                    ((self.upper[bi] - xb[i]).max(0.0) / -dw, true)
                } else {
                    continue;
                };
                let better = match leave {
                    None => cand < theta,
                    Some((l, _)) => cand < theta || (cand == theta && bi < self.basis[l]),
                };
                if better {
                    theta = cand;
                    leave = Some((i, to_upper));
                }
            }
            if theta.is_infinite() {
                return Err(LpError::Unbounded);
            }
            match leave {
                None => self.at_upper[j] = !self.at_upper[j],
                Some((i, to_upper)) => {
                    let out = self.basis[i];
                    self.at_upper[out] = to_upper;
                    self.basis[i] = j;
                    self.at_upper[j] = false;
                }
            }
        }
        Err(LpError::IterationLimit)
    }
}

/// Solves the LP relaxation and returns the optimal tableau.
pub fn solve_lp(inst: &Instance) -> Result<Tableau, LpError> {
    let n = inst.n;
    let m = inst.rows();
    // x_j = offset_j + scale_j · x'_j with x'_j ∈ [0, range_j]
    let mut offset = vec![0.0; n];
    let mut scale = vec![1.0; n];
    let mut range = vec![0.0; n];
    for j in 0..n {
        let (l, u) = (inst.bounds.lower[j], inst.bounds.upper[j]);
        if l.is_finite() {
            offset[j] = l;
        } else if u.is_finite() {
            offset[j] = u;
            scale[j] = -1.0;
        } else {
            return Err(LpError::FreeVariable(j + 1));
        }
        range[j] = u - l;
    }
    if m > 0 {
        let a = DMatrix::from_fn(m, n, |i, j| inst.a[i][j]);
        let rank = a.rank(1e-9 * a.amax().max(1.0));
        if rank < m {
            return Err(LpError::RankDeficient { rank, rows: m });
        }
    }
    let mut cols = Vec::with_capacity(n + m);
    let mut b = DVector::from_iterator(m, (0..m).map(|i| inst.b[i] - (0..n).map(|j| inst.a[i][j] * offset[j]).sum::<f64>()));
    let flip: Vec<f64> = (0..m).map(|i| if b[i] < 0.0 { -1.0 } else { 1.0 }).collect();
    for i in 0..m {
        b[i] *= flip[i];
    }
    for (j, s) in scale.iter().enumerate() {
        cols.push(DVector::from_iterator(m, (0..m).map(|i| flip[i] * inst.a[i][j] * s)));
    }
    for i in 0..m {
        let mut e = DVector::zeros(m);
        e[i] = 1.0;
        cols.push(e);
    }
    let mut upper = range.clone();
    upper.extend(std::iter::repeat_n(f64::INFINITY, m));
    let mut sx = Simplex { m, cols, b, upper, basis: (n..n + m).collect(), at_upper: vec![false; n + m] };

    let phase1: Vec<f64> = (0..n + m).map(|j| if j < n { 0.0 } else { 1.0 }).collect();
    sx.optimize(&phase1, n + m)?;
    let lu = sx.basis_lu();
    let xb = sx.basic_values(&lu);
    let infeas: f64 = sx.basis.iter().zip(xb.iter()).filter(|(j, _)| **j >= n).map(|(_, v)| v.max(0.0)).sum();
    if infeas > 1e-9 * sx.b.amax().max(1.0) {
        return Err(LpError::Infeasible);
    }
    // Drive zero-level artificials out of the basis.
    for i in 0..m {
        if sx.basis[i] < n {
            continue;
        }
        let mut e = DVector::zeros(m);
        e[i] = 1.0;
        // row i of B⁻¹
        let rinv = sx.dual(&e)?;
        let Some(j) = (0..n).find(|&j| !sx.is_basic(j) && rinv.dot(&sx.cols[j]).abs() > 1e-7) else {
            return Err(LpError::RankDeficient { rank: m - 1, rows: m });
        };
        let out = sx.basis[i];
        sx.at_upper[out] = false;
        sx.basis[i] = j;
        sx.at_upper[j] = false;
    }
    for j in n..n + m {
        sx.upper[j] = 0.0;
        sx.at_upper[j] = false;
    }
    let cost: Vec<f64> = (0..n + m).map(|j| if j < n { inst.c[j] * scale[j] } else { 0.0 }).collect();
    sx.optimize(&cost, n)?;

    let lu = sx.basis_lu();
    let xb = sx.basic_values(&lu);
    let mut xs = vec![0.0; n];
    for j in 0..n {
        if sx.at_upper[j] {
            xs[j] = range[j];
        }
    }
    for (i, &j) in sx.basis.iter().enumerate() {
        if j < n {
            xs[j] = xb[i].clamp(0.0, range[j]);
        }
    }
    let x: Vec<f64> = (0..n).map(|j| offset[j] + scale[j] * xs[j]).collect();
    let basic: Vec<usize> = sx.basis.clone();
    let nonbasic: Vec<usize> = (0..n).filter(|j| !sx.is_basic(*j)).collect();
    let mut nonbasic_sign = Vec::with_capacity(nonbasic.len());
    let mut r = vec![Vec::with_capacity(nonbasic.len()); m];
    for &j in &nonbasic {
        let eps = if sx.at_upper[j] { -1.0 } else { 1.0 };
        nonbasic_sign.push(scale[j] * eps);
        let w = sx.solve(&lu, &sx.cols[j]);
        for i in 0..m {
            r[i].push(-w[i] * eps * scale[basic[i]]);
        }
    }
    let x_basic = basic.iter().map(|&k| x[k]).collect();
    let nonbasic_upper = nonbasic.iter().map(|&j| range[j]).collect();
    let objective = inst.c.iter().zip(&x).map(|(c, v)| c * v).sum();
    let mut t = Tableau { basic, nonbasic, nonbasic_sign, nonbasic_upper, x_basic, r, x, objective, reduced_costs: Vec::new() };
    t.reduced_costs = (0..t.dim()).map(|j| t.ray(j).iter().zip(&inst.c).map(|(a, c)| a * c).sum()).collect();
    Ok(t)
}

/// Rewrites `g` over the nonbasic coordinates, so that `h(0) = g(x̂)`.
pub fn substitute_nonbasic(g: &Expr, t: &Tableau) -> Expr {
    let rays: Vec<Vec<f64>> = (0..t.dim()).map(|j| t.ray(j)).collect();
    g.substitute(&mut |k| {
        let mut terms = vec![(1.0, Expr::constant(t.x[k]))];
        for (j, r) in rays.iter().enumerate() {
            if r[k] != 0.0 {
                terms.push((r[k], Expr::var(j)));
            }
        }
        Expr::sum(terms)
    })
}

/// Expresses a nonbasic-space cut over the original variables, eliminating
/// slack variables through their defining rows.
pub fn map_cut_to_original(cut: &Cut, t: &Tableau, inst: &Instance) -> Result<Cut, LpError> {
    if cut.space != Space::Nonbasic || cut.coeffs.len() != t.dim() {
        return Err(LpError::NotNonbasic);
    }
    let mut pi = vec![0.0; inst.n];
    let mut rhs = cut.rhs;
    for (j, a) in cut.coeffs.iter().enumerate() {
        let k = t.nonbasic[j];
        let c = a * t.nonbasic_sign[j];
        pi[k] += c;
        rhs += c * t.x[k];
    }
    for &s in &inst.slacks {
        if pi[s] == 0.0 {
            continue;
        }
        let Some(row) = inst.a.iter().position(|r| r[s] != 0.0) else { continue };
        let f = pi[s] / inst.a[row][s];
        for (p, a) in pi.iter_mut().zip(&inst.a[row]) {
            *p -= f * a;
        }
        pi[s] = 0.0;
        rhs -= f * inst.b[row];
    }
    let mut provenance = cut.provenance.clone();
    if provenance.instance.is_none() {
        provenance.instance = inst.id.clone();
    }
    Ok(Cut { space: Space::Original, coeffs: pi, rhs, provenance })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cutgen::{Method, Provenance};

    fn inst(json: &str) -> Instance {
        Instance::from_json(json).unwrap()
    }

    #[test]
    fn one_row_maximization() {
        // max x1 ⇔ min −x1, x1 + s = 1
        let i = inst(r#"{"n":2,"c":[-1,0],"A":[[1,1]],"b":[1],"slacks":[2]}"#);
        let t = solve_lp(&i).unwrap();
        assert_eq!(t.x, vec![1.0, 0.0]);
        assert_eq!(t.nonbasic, vec![1]);
        assert!((t.objective + 1.0).abs() < 1e-12);
        assert!(t.reduced_costs.iter().all(|d| *d >= -1e-9));
    }

    #[test]
    fn origin_vertex_without_rows() {
        let i = inst(r#"{"n":2,"c":[1,1],"lb":[0,0],"ub":[2,5],"int":[1]}"#);
        let t = solve_lp(&i).unwrap();
        assert_eq!(t.x, vec![0.0, 0.0]);
        assert_eq!(t.nonbasic, vec![0, 1]);
        assert_eq!(t.nonbasic_upper, vec![2.0, 5.0]);
        let g = parse("x1*x2 - x2^3", 2).unwrap();
        let h = substitute_nonbasic(&g, &t);
        assert_eq!(h.to_text(), g.to_text());
    }

    #[test]
    fn upper_bound_mirroring() {
        let i = inst(r#"{"n":1,"c":["-1"],"lb":["-inf"],"ub":["3"]}"#);
        let t = solve_lp(&i).unwrap();
        assert_eq!(t.x, vec![3.0]);
        assert_eq!(t.nonbasic_sign, vec![-1.0]);
        assert_eq!(t.lift(&[0.5]), vec![2.5]);
    }

    #[test]
    fn substitution_example() {
        // min −x1 with x1 + x2 = 2 → x̂ = (2, 0), x1 = 2 − x2
        let i = inst(r#"{"n":2,"c":[-1,0],"A":[[1,1]],"b":[2],"nlcons":["x1^2 - 1"]}"#);
        let t = solve_lp(&i).unwrap();
        assert_eq!(t.basic, vec![0]);
        let h = substitute_nonbasic(&i.nonlinear[0], &t);
        assert!((h.eval(&[0.0]).unwrap() - 3.0).abs() < 1e-12);
        assert!((h.eval(&[0.5]).unwrap() - (1.5f64 * 1.5 - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn slack_elimination() {
        let i = inst(r#"{"n":2,"c":[-1,0],"A":[[1,1]],"b":[1],"slacks":[2]}"#);
        let t = solve_lp(&i).unwrap();
        // t = s ≥ 0.5 becomes 1 − x1 ≥ 0.5, i.e. −x1 ≥ −0.5
        let cut = Cut::nonbasic(vec![2.0], Provenance::new(Method::Ic));
        let orig = map_cut_to_original(&cut, &t, &i).unwrap();
        assert_eq!(orig.space, Space::Original);
        assert!((orig.coeffs[0] + 2.0).abs() < 1e-12 && orig.coeffs[1] == 0.0);
        assert!((orig.rhs + 1.0).abs() < 1e-12);
    }

    #[test]
    fn infeasible_and_unbounded() {
        assert_eq!(solve_lp(&inst(r#"{"n":1,"c":[0],"A":[[1]],"b":[-1]}"#)).unwrap_err(), LpError::Infeasible);
        assert_eq!(solve_lp(&inst(r#"{"n":1,"c":[-1]}"#)).unwrap_err(), LpError::Unbounded);
        assert!(matches!(
            solve_lp(&inst(r#"{"n":2,"c":[0,0],"A":[[1,1],[2,2]],"b":[1,2]}"#)).unwrap_err(),
            LpError::RankDeficient { rank: 1, rows: 2 }
        ));
        assert_eq!(solve_lp(&inst(r#"{"n":1,"c":[1],"lb":["-inf"]}"#)).unwrap_err(), LpError::FreeVariable(1));
    }

    #[test]
    fn bad_json() {
        assert!(Instance::from_json(r#"{"n":1,"c":["abc"]}"#).is_err());
        assert!(Instance::from_json(r#"{"n":1,"c":[1],"int":[0]}"#).is_err());
        assert!(Instance::from_json(r#"{"n":1,"c":[1],"nlcons":["x2"]}"#).is_err());
    }
}
