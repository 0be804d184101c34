//! Concave underestimators and convex overestimators tight at a point.
//!
//! Estimators are built by structural recursion over the expression DAG:
//! sums combine member-wise, products go through the polarization identity
//! `4ab = (a+b)² − (a−b)²`, squares use the tangent underestimator and the
//! pointwise max overestimator, and univariate compositions take the min
//! (max) of the outer atom estimator over the inner estimator interval.

use std::collections::{BTreeMap, HashMap};

use nalgebra::{DMatrix, SymmetricEigen};
use thiserror::Error;

use crate::expr::{Expr, ExprError, Func, Node};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EstimatorError {
    #[error("no estimator rule for {func} at {at}")]
    AtomUndefined { func: &'static str, at: f64 },
    #[error("expression is not finite at the base point (value {0})")]
    NotFiniteAtBase(f64),
    #[error("pointwise min/max nodes are not accepted as estimator input")]
    MinMaxInput,
    #[error("estimator pairs were built at different base points")]
    MismatchedBase,
    #[error(transparent)]
    Expr(#[from] ExprError),
}

/// Concave underestimator and convex overestimator of one function, both
/// tight at `base_point`.
#[derive(Debug, Clone)]
pub struct EstimatorPair {
    pub under: Expr,
    pub over: Expr,
    pub base_point: Vec<f64>,
    pub value_at_base: f64,
}

impl EstimatorPair {
    fn new(under: Expr, over: Expr, base_point: &[f64], value_at_base: f64) -> Self {
        EstimatorPair { under, over, base_point: base_point.to_vec(), value_at_base }
    }

    /// The pair `(e, e)` for an affine or constant `e`.
    pub fn exact(e: &Expr, base_point: &[f64]) -> Result<Self, EstimatorError> {
        let v = e.eval(base_point)?;
        Ok(Self::new(e.clone(), e.clone(), base_point, v))
    }

    fn constant_value(&self) -> Option<f64> {
        match (self.under.as_const(), self.over.as_const()) {
            (Some(a), Some(b)) if a == b => Some(a),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EstimatorOptions {
    /// The sqrt underestimator follows `sqrt` above `knot · v` and the chord
    /// through the origin below it.
    pub sqrt_knot: f64,
    /// Rewrite `min{ℓ(a), ℓ(b)}` as `ℓ(min{a, b})` for affine increasing `ℓ`.
    pub simplify_affine_min: bool,
    /// Quadratic polynomials with a semidefinite Hessian estimate themselves
    /// on the matching side.
    pub exact_quadratics: bool,
}

impl Default for EstimatorOptions {
    fn default() -> Self {
        EstimatorOptions { sqrt_knot: 0.5, simplify_affine_min: true, exact_quadratics: true }
    }
}

/// One side of a univariate atom: a function of `z = x1`.
#[derive(Debug, Clone)]
pub enum AtomFn {
    Affine { c0: f64, c1: f64 },
    General(Expr),
}

impl AtomFn {
    pub fn to_expr(&self) -> Expr {
        match self {
            AtomFn::Affine { c0, c1 } => Expr::var(0).scale(*c1).add_const(*c0),
            AtomFn::General(e) => e.clone(),
        }
    }

    fn compose(&self, inner: &Expr) -> Expr {
        match self {
            AtomFn::Affine { c0, c1 } => inner.scale(*c1).add_const(*c0),
            AtomFn::General(e) => e.substitute(&mut |_| inner.clone()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Atom {
    pub under: AtomFn,
    pub over: AtomFn,
}

fn tangent(value: f64, slope: f64, at: f64) -> AtomFn {
    AtomFn::Affine { c0: value - slope * at, c1: slope }
}

/// Estimators of a library function at `v`, valid on the whole real line
/// (with `-∞` outside the domain of `log`/`sqrt`).
pub fn univariate_atom(f: Func, v: f64, opts: &EstimatorOptions) -> Result<Atom, EstimatorError> {
    let z = Expr::var(0);
    let undefined = || EstimatorError::AtomUndefined { func: f.name(), at: v };
    if !v.is_finite() {
        return Err(undefined());
    }
    let atom = match f {
        Func::Exp => {
            let ev = v.exp();
            Atom { under: tangent(ev, ev, v), over: AtomFn::General(z.apply(Func::Exp)) }
        }
        Func::Log => {
            if v <= 0.0 {
                return Err(undefined());
            }
            Atom { under: AtomFn::General(z.apply(Func::Log)), over: tangent(v.ln(), 1.0 / v, v) }
        }
        Func::Sqrt => {
            if v <= 0.0 {
                return Err(undefined());
            }
            let knot = opts.sqrt_knot.clamp(f64::MIN_POSITIVE, 1.0) * v;
            let chord = z.scale(1.0 / knot.sqrt());
            let upper = z.max(&Expr::constant(knot)).apply(Func::Sqrt);
            let sv = v.sqrt();
            Atom { under: AtomFn::General(chord.min(&upper)), over: tangent(sv, 0.5 / sv, v) }
        }
        Func::Abs => {
            let slope = if v > 0.0 {
                1.0
            } else if v < 0.0 {
                -1.0
            } else {
                0.0
            };
            Atom { under: AtomFn::Affine { c0: 0.0, c1: slope }, over: AtomFn::General(z.apply(Func::Abs)) }
        }
        Func::Cos | Func::Sin => {
            // |f''| ≤ 1, so f ∓ (z − v)²/2 is concave/convex.
            let fv = f.apply(v);
            let shift = z.add_const(-v).pow(2).scale(0.5);
            let fz = z.apply(f);
            let under = if fv == -1.0 { AtomFn::Affine { c0: -1.0, c1: 0.0 } } else { AtomFn::General(fz.sub(&shift)) };
            let over = if fv == 1.0 { AtomFn::Affine { c0: 1.0, c1: 0.0 } } else { AtomFn::General(fz.add(&shift)) };
            Atom { under, over }
        }
        Func::Recip | Func::Sign => return Err(undefined()),
    };
    Ok(atom)
}

/// `Σ cᵢ·pairᵢ`; a negative coefficient swaps the roles of the members.
pub fn rule_sum(base: &[f64], terms: &[(f64, &EstimatorPair)]) -> Result<EstimatorPair, EstimatorError> {
    let mut under = Vec::with_capacity(terms.len());
    let mut over = Vec::with_capacity(terms.len());
    let mut value = 0.0;
    for (c, p) in terms {
        if p.base_point != base {
            return Err(EstimatorError::MismatchedBase);
        }
        let (u, o) = if *c >= 0.0 { (&p.under, &p.over) } else { (&p.over, &p.under) };
        under.push((*c, u.clone()));
        over.push((*c, o.clone()));
        value += c * p.value_at_base;
    }
    Ok(EstimatorPair::new(Expr::sum(under), Expr::sum(over), base, value))
}

/// Estimators of `p²`.
///
/// With `v = p(x̂)` the underestimator is the tangent `2v·p − v²`, where `p`
/// is replaced by `p.under` when `v > 0` and by `p.over` when `v ≤ 0`; the
/// overestimator is `max{p.under², p.over²}`.
pub fn rule_square(p: &EstimatorPair) -> EstimatorPair {
    let v = p.value_at_base;
    let member = if v > 0.0 { &p.under } else { &p.over };
    let under = member.scale(2.0 * v).add_const(0.0 - v * v);
    let over = p.under.pow(2).max(&p.over.pow(2));
    EstimatorPair::new(under, over, &p.base_point, v * v)
}

/// Estimators of `a·b` through `ab = ¼(a+b)² − ¼(a−b)²`.
pub fn rule_product(a: &EstimatorPair, b: &EstimatorPair) -> Result<EstimatorPair, EstimatorError> {
    if a.base_point != b.base_point {
        return Err(EstimatorError::MismatchedBase);
    }
    let base = &a.base_point;
    if let Some(c) = a.constant_value() {
        return rule_sum(base, &[(c, b)]);
    }
    if let Some(c) = b.constant_value() {
        return rule_sum(base, &[(c, a)]);
    }
    let s = rule_sum(base, &[(1.0, a), (1.0, b)])?;
    let d = rule_sum(base, &[(1.0, a), (-1.0, b)])?;
    let mut out = rule_sum(base, &[(0.25, &rule_square(&s)), (-0.25, &rule_square(&d))])?;
    out.value_at_base = a.value_at_base * b.value_at_base;
    Ok(out)
}

/// Estimators of `f(g(x))` for a univariate `f`:
/// `min{f_ave(g.under), f_ave(g.over)}` and `max{f_vex(g.under), f_vex(g.over)}`.
pub fn rule_compose(f: Func, g: &EstimatorPair, opts: &EstimatorOptions) -> Result<EstimatorPair, EstimatorError> {
    let atom = univariate_atom(f, g.value_at_base, opts)?;
    let under = extremum(&atom.under, &g.under, &g.over, true, opts);
    let over = extremum(&atom.over, &g.under, &g.over, false, opts);
    Ok(EstimatorPair::new(under, over, &g.base_point, f.apply(g.value_at_base)))
}

fn extremum(side: &AtomFn, a: &Expr, b: &Expr, take_min: bool, opts: &EstimatorOptions) -> Expr {
    if let (AtomFn::Affine { c0, c1 }, true) = (side, opts.simplify_affine_min) {
        if *c1 == 0.0 {
            return Expr::constant(*c0);
        }
        let inner = if (*c1 > 0.0) == take_min { a.min(b) } else { a.max(b) };
        return side.compose(&inner);
    }
    let (fa, fb) = (side.compose(a), side.compose(b));
    if take_min {
        fa.min(&fb)
    } else {
        fa.max(&fb)
    }
}

/// Estimator pair of `e` tight at `base`, with default options.
pub fn estimate(e: &Expr, base: &[f64]) -> Result<EstimatorPair, EstimatorError> {
    estimate_with(e, base, &EstimatorOptions::default())
}

pub fn estimate_with(e: &Expr, base: &[f64], opts: &EstimatorOptions) -> Result<EstimatorPair, EstimatorError> {
    if e.has_min_max() {
        return Err(EstimatorError::MinMaxInput);
    }
    let v = e.eval(base)?;
    if !v.is_finite() {
        return Err(EstimatorError::NotFiniteAtBase(v));
    }
    let mut builder = Builder { base, opts, memo: HashMap::new() };
    builder.go(e)
}

struct Builder<'a> {
    base: &'a [f64],
    opts: &'a EstimatorOptions,
    memo: HashMap<*const Node, EstimatorPair>,
}

impl Builder<'_> {
    fn go(&mut self, e: &Expr) -> Result<EstimatorPair, EstimatorError> {
        let key = e.node() as *const Node;
        if let Some(done) = self.memo.get(&key) {
            return Ok(done.clone());
        }
        let pair = match e.node() {
            Node::Const(_) | Node::Var(_) => EstimatorPair::exact(e, self.base)?,
            Node::Sum(terms) => {
                let children = terms.iter().map(|(c, t)| Ok((*c, self.go(t)?))).collect::<Result<Vec<_>, EstimatorError>>()?;
                let refs: Vec<(f64, &EstimatorPair)> = children.iter().map(|(c, p)| (*c, p)).collect();
                rule_sum(self.base, &refs)?
            }
            Node::Product(a, b) => {
                let (pa, pb) = (self.go(a)?, self.go(b)?);
                rule_product(&pa, &pb)?
            }
            Node::Power(a, p) => self.power(a, *p)?,
            Node::Apply(f, a) => {
                let pa = self.go(a)?;
                rule_compose(*f, &pa, self.opts)?
            }
            Node::Min(..) | Node::Max(..) => return Err(EstimatorError::MinMaxInput),
        };
        let pair = if self.opts.exact_quadratics { exact_quadratic_override(e, pair) } else { pair };
        self.memo.insert(key, pair.clone());
        Ok(pair)
    }

    fn power(&mut self, a: &Expr, p: u32) -> Result<EstimatorPair, EstimatorError> {
        match p {
            0 => EstimatorPair::exact(&Expr::constant(1.0), self.base),
            1 => self.go(a),
            _ if p.is_multiple_of(2) => {
                let half = if p == 2 { self.go(a)? } else { self.go(&a.pow(p / 2))? };
                Ok(rule_square(&half))
            }
            _ => {
                let lhs = self.go(a)?;
                let rhs = self.go(&a.pow(p - 1))?;
                rule_product(&lhs, &rhs)
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Quadratic detection

#[derive(Debug, Clone, Default)]
struct Quadratic {
    lin: BTreeMap<usize, f64>,
    quad: BTreeMap<(usize, usize), f64>,
    has_const: bool,
}

impl Quadratic {
    fn degree(&self) -> u32 {
        if self.quad.values().any(|c| *c != 0.0) {
            2
        } else if self.lin.values().any(|c| *c != 0.0) {
            1
        } else {
            0
        }
    }

    fn scaled_add(&mut self, c: f64, other: &Quadratic) {
        for (k, v) in &other.lin {
            *self.lin.entry(*k).or_default() += c * v;
        }
        for (k, v) in &other.quad {
            *self.quad.entry(*k).or_default() += c * v;
        }
        self.has_const |= other.has_const;
    }
}

/// Only the Hessian matters for classification, so constants are tracked by
/// presence and the constant value is carried separately in products.
fn quadratic_form(e: &Expr) -> Option<(Quadratic, f64)> {
    match e.node() {
        Node::Const(c) => Some((Quadratic { has_const: true, ..Default::default() }, *c)),
        Node::Var(i) => {
            let mut q = Quadratic::default();
            q.lin.insert(*i, 1.0);
            Some((q, 0.0))
        }
        Node::Sum(terms) => {
            let mut acc = Quadratic::default();
            let mut k = 0.0;
            for (c, t) in terms {
                let (q, k0) = quadratic_form(t)?;
                acc.scaled_add(*c, &q);
                k += c * k0;
            }
            Some((acc, k))
        }
        Node::Product(a, b) => multiply(&quadratic_form(a)?, &quadratic_form(b)?),
        Node::Power(a, 2) => {
            let qa = quadratic_form(a)?;
            multiply(&qa, &qa)
        }
        _ => None,
    }
}

fn multiply(a: &(Quadratic, f64), b: &(Quadratic, f64)) -> Option<(Quadratic, f64)> {
    let (qa, ka) = a;
    let (qb, kb) = b;
    if qa.degree() + qb.degree() > 2 {
        return None;
    }
    let mut out = Quadratic::default();
    out.scaled_add(*kb, qa);
    out.scaled_add(*ka, qb);
    for (i, ci) in &qa.lin {
        for (j, cj) in &qb.lin {
            let key = if i <= j { (*i, *j) } else { (*j, *i) };
            *out.quad.entry(key).or_default() += ci * cj;
        }
    }
    Some((out, ka * kb))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Curvature {
    Affine,
    Convex,
    Concave,
    Indefinite,
}

fn curvature(e: &Expr) -> Option<Curvature> {
    let (q, _) = quadratic_form(e)?;
    if q.degree() < 2 {
        return Some(Curvature::Affine);
    }
    let vars: Vec<usize> = {
        let mut v: Vec<usize> = q.quad.keys().flat_map(|(i, j)| [*i, *j]).collect();
        v.sort_unstable();
        v.dedup();
        v
    };
    let pos = |k: usize| vars.iter().position(|v| *v == k).unwrap_or(0);
    let n = vars.len();
    let mut h = DMatrix::<f64>::zeros(n, n);
    for ((i, j), c) in &q.quad {
        let (a, b) = (pos(*i), pos(*j));
        if a == b {
            h[(a, a)] += 2.0 * c;
        } else {
            h[(a, b)] += c;
            h[(b, a)] += c;
        }
    }
    let scale = h.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let tol = 1e-12 * scale;
    let eig = SymmetricEigen::new(h).eigenvalues;
    let max = eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
    Some(if max <= tol && min >= -tol {
        Curvature::Affine
    } else if max <= tol {
        Curvature::Concave
    } else if min >= -tol {
        Curvature::Convex
    } else {
        Curvature::Indefinite
    })
}

fn exact_quadratic_override(e: &Expr, mut pair: EstimatorPair) -> EstimatorPair {
    if !matches!(e.node(), Node::Sum(_) | Node::Product(..) | Node::Power(..)) {
        return pair;
    }
    match curvature(e) {
        Some(Curvature::Affine) => {
            pair.under = e.clone();
            pair.over = e.clone();
        }
        Some(Curvature::Concave) => pair.under = e.clone(),
        Some(Curvature::Convex) => pair.over = e.clone(),
        _ => {}
    }
    pair
}
