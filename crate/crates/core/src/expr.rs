//! Factorable-function expressions.
//!
//! An [`Expr`] is an immutable, reference-counted DAG. User input only ever
//! contains constants, variables, sums, products, integer powers and the
//! univariate library; estimator construction additionally produces
//! pointwise `min`/`max` nodes.
//!
//! Values follow extended-real semantics: `±∞` are ordinary values, while any
//! NaN produced during evaluation (for example `∞ − ∞` or `cos(∞)`) is an error.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("syntax error at byte {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("unknown function `{name}` at byte {pos}")]
    UnknownFunction { name: String, pos: usize },
    #[error("variable x{} out of range for dimension {dim} (byte {pos})", .index + 1)]
    VarOutOfRange { index: usize, dim: usize, pos: usize },
    #[error("point has dimension {got}, expression expects at least {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("evaluation produced NaN ({0})")]
    Evaluation(String),
    #[error("finite-difference stencil hit a non-finite value in coordinate {coordinate}")]
    FdGradient { coordinate: usize },
    #[error("pointwise min/max nodes have no exact derivative")]
    MinMaxNotDifferentiable,
}

/// Univariate functions.
///
/// The first six tags form the library available in the input grammar.
/// `Recip` and `Sign` only appear in symbolic derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Func {
    Cos,
    Sin,
    Exp,
    Log,
    Sqrt,
    Abs,
    Recip,
    Sign,
}

impl Func {
    pub const LIBRARY: [Func; 6] = [Func::Cos, Func::Sin, Func::Exp, Func::Log, Func::Sqrt, Func::Abs];

    pub fn name(self) -> &'static str {
        match self {
            Func::Cos => "cos",
            Func::Sin => "sin",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
            Func::Recip => "recip",
            Func::Sign => "sign",
        }
    }

    pub fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "cos" => Func::Cos,
            "sin" => Func::Sin,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sqrt" => Func::Sqrt,
            "abs" => Func::Abs,
            "recip" => Func::Recip,
            "sign" => Func::Sign,
            _ => return None,
        })
    }

    pub fn is_library(self) -> bool {
        !matches!(self, Func::Recip | Func::Sign)
    }

    /// Extended-value evaluation. `log` and `sqrt` map points outside their
    /// natural domain to `-∞`.
    pub fn apply(self, v: f64) -> f64 {
        match self {
            Func::Cos => v.cos(),
            Func::Sin => v.sin(),
            Func::Exp => v.exp(),
            Func::Log => {
                if v <= 0.0 {
                    f64::NEG_INFINITY
                } else {
                    v.ln()
                }
            }
            Func::Sqrt => {
                if v < 0.0 {
                    f64::NEG_INFINITY
                } else {
                    v.sqrt()
                }
            }
            Func::Abs => v.abs(),
            Func::Recip => 1.0 / v,
            Func::Sign => {
                if v > 0.0 {
                    1.0
                } else if v < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Const(f64),
    Var(usize),
    /// Linear combination `Σ cᵢ·eᵢ`.
    Sum(Vec<(f64, Expr)>),
    Product(Expr, Expr),
    /// Integer power, exponent ≥ 2.
    Power(Expr, u32),
    Apply(Func, Expr),
    Min(Expr, Expr),
    Max(Expr, Expr),
}

/// Shared handle to an expression node.
#[derive(Clone)]
pub struct Expr(Arc<Node>);

impl PartialEq for Expr {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.0, &other.0) || *self.0 == *other.0
    }
}

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Expr({self})")
    }
}

/// `v^p` by repeated squaring.
pub fn powi(v: f64, p: u32) -> f64 {
    let mut base = v;
    let mut exp = p;
    let mut acc = 1.0;
    while exp > 0 {
        if exp & 1 == 1 {
            acc *= base;
        }
        exp >>= 1;
        if exp > 0 {
            base *= base;
        }
    }
    acc
}

fn check(v: f64, what: &str) -> Result<f64, ExprError> {
    if v.is_nan() {
        Err(ExprError::Evaluation(what.to_string()))
    } else {
        Ok(v)
    }
}

impl Expr {
    fn new(node: Node) -> Expr {
        Expr(Arc::new(node))
    }

    pub fn node(&self) -> &Node {
        &self.0
    }

    pub fn ptr_eq(&self, other: &Expr) -> bool {
        Arc::ptr_eq(&self.0, &other.0)
    }

    fn key(&self) -> usize {
        Arc::as_ptr(&self.0) as usize
    }

    pub fn constant(c: f64) -> Expr {
        Expr::new(Node::Const(c))
    }

    pub fn var(index: usize) -> Expr {
        Expr::new(Node::Var(index))
    }

    pub fn as_const(&self) -> Option<f64> {
        match self.node() {
            Node::Const(c) => Some(*c),
            _ => None,
        }
    }

    /// Linear combination with flattening of nested sums, a single merged
    /// constant term and removal of zero coefficients.
    pub fn sum(terms: Vec<(f64, Expr)>) -> Expr {
        let mut out: Vec<(f64, Expr)> = Vec::with_capacity(terms.len());
        let mut constant: Option<(usize, f64)> = None;
        fn push(out: &mut Vec<(f64, Expr)>, constant: &mut Option<(usize, f64)>, c: f64, e: Expr) {
            if c == 0.0 {
                return;
            }
            match e.node() {
                Node::Const(k) => {
                    let v = c * k;
                    match constant {
                        Some((_, acc)) => *acc += v,
                        None => {
                            *constant = Some((out.len(), v));
                            out.push((1.0, Expr::constant(0.0)));
                        }
                    }
                }
                Node::Sum(inner) => {
                    for (d, child) in inner {
                        push(out, constant, c * d, child.clone());
                    }
                }
                _ => out.push((c, e)),
            }
        }
        for (c, e) in terms {
            push(&mut out, &mut constant, c, e);
        }
        if let Some((pos, value)) = constant {
            if value == 0.0 && out.len() > 1 {
                out.remove(pos);
            } else {
                out[pos] = (1.0, Expr::constant(value));
            }
        }
        match out.len() {
            0 => Expr::constant(0.0),
            1 if out[0].0 == 1.0 => out.pop().map(|(_, e)| e).unwrap_or_else(|| Expr::constant(0.0)),
            _ => Expr::new(Node::Sum(out)),
        }
    }

    pub fn add(&self, other: &Expr) -> Expr {
        Expr::sum(vec![(1.0, self.clone()), (1.0, other.clone())])
    }

    pub fn sub(&self, other: &Expr) -> Expr {
        Expr::sum(vec![(1.0, self.clone()), (-1.0, other.clone())])
    }

    pub fn scale(&self, c: f64) -> Expr {
        Expr::sum(vec![(c, self.clone())])
    }

    pub fn neg(&self) -> Expr {
        self.scale(-1.0)
    }

    pub fn add_const(&self, c: f64) -> Expr {
        self.add(&Expr::constant(c))
    }

    /// Product with constant factors pulled out into a scaling.
    pub fn mul(&self, other: &Expr) -> Expr {
        if let Some(c) = self.as_const() {
            return other.scale(c);
        }
        if let Some(c) = other.as_const() {
            return self.scale(c);
        }
        if let Node::Sum(terms) = self.node() {
            if terms.len() == 1 {
                let (c, e) = &terms[0];
                return e.mul(other).scale(*c);
            }
        }
        if let Node::Sum(terms) = other.node() {
            if terms.len() == 1 {
                let (c, e) = &terms[0];
                return self.mul(e).scale(*c);
            }
        }
        Expr::new(Node::Product(self.clone(), other.clone()))
    }

    pub fn pow(&self, p: u32) -> Expr {
        match p {
            0 => Expr::constant(1.0),
            1 => self.clone(),
            _ => match self.as_const() {
                Some(c) => Expr::constant(powi(c, p)),
                None => Expr::new(Node::Power(self.clone(), p)),
            },
        }
    }

    pub fn apply(&self, f: Func) -> Expr {
        if let Some(c) = self.as_const() {
            let v = f.apply(c);
            if v.is_finite() {
                return Expr::constant(v);
            }
        }
        Expr::new(Node::Apply(f, self.clone()))
    }

    pub fn min(&self, other: &Expr) -> Expr {
        if self == other {
            return self.clone();
        }
        if let (Some(a), Some(b)) = (self.as_const(), other.as_const()) {
            return Expr::constant(a.min(b));
        }
        Expr::new(Node::Min(self.clone(), other.clone()))
    }

    pub fn max(&self, other: &Expr) -> Expr {
        if self == other {
            return self.clone();
        }
        if let (Some(a), Some(b)) = (self.as_const(), other.as_const()) {
            return Expr::constant(a.max(b));
        }
        Expr::new(Node::Max(self.clone(), other.clone()))
    }

    /// Smallest dimension this expression can be evaluated in.
    pub fn min_dimension(&self) -> usize {
        let mut best = 0;
        self.visit(&mut |e| {
            if let Node::Var(i) = e.node() {
                best = best.max(i + 1);
            }
        });
        best
    }

    pub fn has_min_max(&self) -> bool {
        let mut found = false;
        self.visit(&mut |e| {
            if matches!(e.node(), Node::Min(..) | Node::Max(..)) {
                found = true;
            }
        });
        found
    }

    /// Visits every distinct node once (children before parents).
    pub fn visit(&self, f: &mut dyn FnMut(&Expr)) {
        fn go(e: &Expr, seen: &mut std::collections::HashSet<usize>, f: &mut dyn FnMut(&Expr)) {
            if !seen.insert(e.key()) {
                return;
            }
            for child in e.children() {
                go(child, seen, f);
            }
            f(e);
        }
        let mut seen = std::collections::HashSet::new();
        go(self, &mut seen, f);
    }

    pub fn children(&self) -> Vec<&Expr> {
        match self.node() {
            Node::Const(_) | Node::Var(_) => vec![],
            Node::Sum(terms) => terms.iter().map(|(_, e)| e).collect(),
            Node::Product(a, b) | Node::Min(a, b) | Node::Max(a, b) => vec![a, b],
            Node::Power(a, _) | Node::Apply(_, a) => vec![a],
        }
    }

    /// Replaces every variable by an expression, rebuilding through the smart
    /// constructors so constants fold.
    pub fn substitute(&self, map: &mut dyn FnMut(usize) -> Expr) -> Expr {
        fn go(e: &Expr, map: &mut dyn FnMut(usize) -> Expr, memo: &mut HashMap<usize, Expr>) -> Expr {
            if let Some(done) = memo.get(&e.key()) {
                return done.clone();
            }
            let out = match e.node() {
                Node::Const(_) => e.clone(),
                Node::Var(i) => map(*i),
                Node::Sum(terms) => Expr::sum(terms.iter().map(|(c, t)| (*c, go(t, map, memo))).collect()),
                Node::Product(a, b) => go(a, map, memo).mul(&go(b, map, memo)),
                Node::Power(a, p) => go(a, map, memo).pow(*p),
                Node::Apply(f, a) => go(a, map, memo).apply(*f),
                Node::Min(a, b) => go(a, map, memo).min(&go(b, map, memo)),
                Node::Max(a, b) => go(a, map, memo).max(&go(b, map, memo)),
            };
            memo.insert(e.key(), out.clone());
            out
        }
        go(self, map, &mut HashMap::new())
    }

    /// Extended-real evaluation.
    pub fn eval(&self, x: &[f64]) -> Result<f64, ExprError> {
        fn go(e: &Expr, x: &[f64]) -> Result<f64, ExprError> {
            match e.node() {
                Node::Const(c) => Ok(*c),
                Node::Var(i) => x.get(*i).copied().ok_or(ExprError::DimensionMismatch { expected: i + 1, got: x.len() }),
                Node::Sum(terms) => {
                    let mut acc = 0.0;
                    for (c, t) in terms {
                        acc += c * go(t, x)?;
                    }
                    check(acc, "sum")
                }
                Node::Product(a, b) => check(go(a, x)? * go(b, x)?, "product"),
                Node::Power(a, p) => check(powi(go(a, x)?, *p), "power"),
                Node::Apply(f, a) => check(f.apply(go(a, x)?), f.name()),
                Node::Min(a, b) => Ok(go(a, x)?.min(go(b, x)?)),
                Node::Max(a, b) => Ok(go(a, x)?.max(go(b, x)?)),
            }
        }
        if x.iter().any(|v| v.is_nan()) {
            return Err(ExprError::Evaluation("NaN in input point".into()));
        }
        go(self, x)
    }

    pub fn compile(&self) -> Compiled {
        Compiled::new(self)
    }

    /// Central finite-difference gradient over the first `dim` coordinates.
    pub fn grad_fd(&self, x: &[f64], step: f64) -> Result<Vec<f64>, ExprError> {
        grad_fd_with(|p| self.eval(p), x, step)
    }

    /// Symbolic partial derivative with respect to `var`.
    pub fn deriv_exact(&self, var: usize) -> Result<Expr, ExprError> {
        fn go(e: &Expr, var: usize, memo: &mut HashMap<usize, Expr>) -> Result<Expr, ExprError> {
            if let Some(done) = memo.get(&e.key()) {
                return Ok(done.clone());
            }
            let out = match e.node() {
                Node::Const(_) => Expr::constant(0.0),
                Node::Var(i) => Expr::constant(if *i == var { 1.0 } else { 0.0 }),
                Node::Sum(terms) => {
                    let mut parts = Vec::with_capacity(terms.len());
                    for (c, t) in terms {
                        parts.push((*c, go(t, var, memo)?));
                    }
                    Expr::sum(parts)
                }
                Node::Product(a, b) => {
                    let da = go(a, var, memo)?;
                    let db = go(b, var, memo)?;
                    da.mul(b).add(&a.mul(&db))
                }
                Node::Power(a, p) => {
                    let da = go(a, var, memo)?;
                    a.pow(p - 1).mul(&da).scale(*p as f64)
                }
                Node::Apply(f, a) => {
                    let da = go(a, var, memo)?;
                    let outer = match f {
                        Func::Cos => a.apply(Func::Sin).neg(),
                        Func::Sin => a.apply(Func::Cos),
                        Func::Exp => e.clone(),
                        Func::Log => a.apply(Func::Recip),
                        Func::Sqrt => e.apply(Func::Recip).scale(0.5),
                        Func::Abs => a.apply(Func::Sign),
                        Func::Recip => e.pow(2).neg(),
                        Func::Sign => Expr::constant(0.0),
                    };
                    outer.mul(&da)
                }
                Node::Min(..) | Node::Max(..) => return Err(ExprError::MinMaxNotDifferentiable),
            };
            memo.insert(e.key(), out.clone());
            Ok(out)
        }
        go(self, var, &mut HashMap::new())
    }

    /// Printing in the estimator grammar (`min{a, b}` / `max{a, b}` allowed).
    pub fn to_text(&self) -> String {
        self.to_string()
    }
}

/// Central differences `(f(x+h·eⱼ) − f(x−h·eⱼ)) / 2h`; errors if any stencil
/// value is non-finite.
pub fn grad_fd_with<F>(mut f: F, x: &[f64], step: f64) -> Result<Vec<f64>, ExprError>
where
    F: FnMut(&[f64]) -> Result<f64, ExprError>,
{
    let mut p = x.to_vec();
    let mut g = Vec::with_capacity(x.len());
    for j in 0..x.len() {
        let orig = p[j];
        p[j] = orig + step;
        let fp = f(&p)?;
        p[j] = orig - step;
        let fm = f(&p)?;
        p[j] = orig;
        if !fp.is_finite() || !fm.is_finite() {
            return Err(ExprError::FdGradient { coordinate: j });
        }
        g.push((fp - fm) / (2.0 * step));
    }
    Ok(g)
}

/// Default gradient: central differences at `1e-6`; a coordinate whose
/// stencil leaves the finite region falls back to a one-sided difference.
pub fn gradient_with<F>(mut f: F, x: &[f64]) -> Result<Vec<f64>, ExprError>
where
    F: FnMut(&[f64]) -> Result<f64, ExprError>,
{
    const STEP: f64 = 1e-6;
    let f0 = f(x)?;
    let mut p = x.to_vec();
    let mut g = Vec::with_capacity(x.len());
    for j in 0..x.len() {
        let orig = p[j];
        p[j] = orig + STEP;
        let fp = f(&p)?;
        p[j] = orig - STEP;
        let fm = f(&p)?;
        p[j] = orig;
        let d = match (fp.is_finite(), fm.is_finite(), f0.is_finite()) {
            (true, true, _) => (fp - fm) / (2.0 * STEP),
            (true, false, true) => (fp - f0) / STEP,
            (false, true, true) => (f0 - fm) / STEP,
            _ => return Err(ExprError::FdGradient { coordinate: j }),
        };
        g.push(d);
    }
    Ok(g)
}

// ---------------------------------------------------------------------------
// Compiled tape

#[derive(Debug, Clone)]
enum Op {
    Const(f64),
    Var(usize),
    Sum(Vec<(f64, usize)>),
    Product(usize, usize),
    Power(usize, u32),
    Apply(Func, usize),
    Min(usize, usize),
    Max(usize, usize),
}

/// Topologically sorted evaluation tape; shared DAG nodes are evaluated once.
#[derive(Debug, Clone)]
pub struct Compiled {
    ops: Vec<Op>,
    dim: usize,
}

impl Compiled {
    fn new(e: &Expr) -> Compiled {
        let mut ops = Vec::new();
        let mut slot: HashMap<usize, usize> = HashMap::new();
        e.visit(&mut |node| {
            let id = |c: &Expr| slot[&c.key()];
            let op = match node.node() {
                Node::Const(c) => Op::Const(*c),
                Node::Var(i) => Op::Var(*i),
                Node::Sum(terms) => Op::Sum(terms.iter().map(|(c, t)| (*c, id(t))).collect()),
                Node::Product(a, b) => Op::Product(id(a), id(b)),
                Node::Power(a, p) => Op::Power(id(a), *p),
                Node::Apply(f, a) => Op::Apply(*f, id(a)),
                Node::Min(a, b) => Op::Min(id(a), id(b)),
                Node::Max(a, b) => Op::Max(id(a), id(b)),
            };
            slot.insert(node.key(), ops.len());
            ops.push(op);
        });
        Compiled { ops, dim: e.min_dimension() }
    }

    pub fn min_dimension(&self) -> usize {
        self.dim
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64, ExprError> {
        if x.len() < self.dim {
            return Err(ExprError::DimensionMismatch { expected: self.dim, got: x.len() });
        }
        if x.iter().any(|v| v.is_nan()) {
            return Err(ExprError::Evaluation("NaN in input point".into()));
        }
        let mut vals = Vec::with_capacity(self.ops.len());
        for op in &self.ops {
            let v = match op {
                Op::Const(c) => *c,
                Op::Var(i) => x[*i],
                Op::Sum(terms) => {
                    let mut acc = 0.0;
                    for (c, t) in terms {
                        acc += c * vals[*t];
                    }
                    check(acc, "sum")?
                }
                Op::Product(a, b) => check(vals[*a] * vals[*b], "product")?,
                Op::Power(a, p) => check(powi(vals[*a], *p), "power")?,
                Op::Apply(f, a) => check(f.apply(vals[*a]), f.name())?,
                Op::Min(a, b) => f64::min(vals[*a], vals[*b]),
                Op::Max(a, b) => f64::max(vals[*a], vals[*b]),
            };
            vals.push(v);
        }
        Ok(vals.last().copied().unwrap_or(0.0))
    }

    pub fn grad_fd(&self, x: &[f64], step: f64) -> Result<Vec<f64>, ExprError> {
        grad_fd_with(|p| self.eval(p), x, step)
    }

    pub fn gradient(&self, x: &[f64]) -> Result<Vec<f64>, ExprError> {
        gradient_with(|p| self.eval(p), x)
    }
}

// ---------------------------------------------------------------------------
// Printing

fn fmt_num(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    } else {
        format!("{v}")
    }
}

#[derive(PartialEq, PartialOrd, Clone, Copy)]
enum Prec {
    Sum,
    Product,
    Power,
    Atom,
}

impl Expr {
    fn prec(&self) -> Prec {
        match self.node() {
            Node::Sum(_) => Prec::Sum,
            Node::Const(c) if *c < 0.0 => Prec::Sum,
            Node::Product(..) => Prec::Product,
            Node::Power(..) => Prec::Power,
            _ => Prec::Atom,
        }
    }

    fn write_at(&self, f: &mut fmt::Formatter<'_>, min: Prec) -> fmt::Result {
        if self.prec() < min {
            write!(f, "(")?;
            self.write_at(f, Prec::Sum)?;
            return write!(f, ")");
        }
        match self.node() {
            Node::Const(c) => write!(f, "{}", fmt_num(*c)),
            Node::Var(i) => write!(f, "x{}", i + 1),
            Node::Sum(terms) => {
                for (i, (c, t)) in terms.iter().enumerate() {
                    let (neg, mag, body) = match t.node() {
                        Node::Const(k) => {
                            let v = c * k;
                            (v < 0.0 || (v == 0.0 && v.is_sign_negative()), v.abs(), None)
                        }
                        _ => (*c < 0.0, c.abs(), Some(t)),
                    };
                    match (i, neg) {
                        (0, true) => write!(f, "-")?,
                        (0, false) => {}
                        (_, true) => write!(f, " - ")?,
                        (_, false) => write!(f, " + ")?,
                    }
                    match body {
                        None => write!(f, "{}", fmt_num(mag))?,
                        Some(t) if mag == 1.0 => t.write_at(f, Prec::Product)?,
                        Some(t) => {
                            write!(f, "{}*", fmt_num(mag))?;
                            t.write_at(f, Prec::Product)?;
                        }
                    }
                }
                Ok(())
            }
            Node::Product(a, b) => {
                a.write_at(f, Prec::Product)?;
                write!(f, "*")?;
                b.write_at(f, Prec::Power)
            }
            Node::Power(a, p) => {
                a.write_at(f, Prec::Atom)?;
                write!(f, "^{p}")
            }
            Node::Apply(func, a) => {
                write!(f, "{}(", func.name())?;
                a.write_at(f, Prec::Sum)?;
                write!(f, ")")
            }
            Node::Min(a, b) | Node::Max(a, b) => {
                let name = if matches!(self.node(), Node::Min(..)) { "min" } else { "max" };
                write!(f, "{name}{{")?;
                a.write_at(f, Prec::Sum)?;
                write!(f, ", ")?;
                b.write_at(f, Prec::Sum)?;
                write!(f, "}}")
            }
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.write_at(f, Prec::Sum)
    }
}

// ---------------------------------------------------------------------------
// Parsing

/// Parses user input: `x1..xn`, numbers, `+ - * ^`, division by a numeric
/// literal, and the univariate library.
pub fn parse(text: &str, dimension: usize) -> Result<Expr, ExprError> {
    Parser { src: text.as_bytes(), pos: 0, dim: dimension, extended: false }.run()
}

/// Like [`parse`] but also accepts `min{a, b}`, `max{a, b}` and the
/// derivative helpers `recip`/`sign`, i.e. everything [`Expr`]'s printer emits.
pub fn parse_estimator(text: &str, dimension: usize) -> Result<Expr, ExprError> {
    Parser { src: text.as_bytes(), pos: 0, dim: dimension, extended: true }.run()
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    dim: usize,
    extended: bool,
}

impl Parser<'_> {
    fn err<T>(&self, msg: impl Into<String>) -> Result<T, ExprError> {
        Err(ExprError::Syntax { pos: self.pos, msg: msg.into() })
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: u8) -> Result<(), ExprError> {
        if self.eat(c) {
            Ok(())
        } else {
            self.err(format!("expected `{}`", c as char))
        }
    }

    fn run(mut self) -> Result<Expr, ExprError> {
        let e = self.expr()?;
        if self.peek().is_some() {
            return self.err("unexpected trailing input");
        }
        Ok(e)
    }

    fn expr(&mut self) -> Result<Expr, ExprError> {
        let mut terms = vec![(1.0, self.term()?)];
        loop {
            if self.eat(b'+') {
                terms.push((1.0, self.term()?));
            } else if self.eat(b'-') {
                terms.push((-1.0, self.term()?));
            } else {
                break;
            }
        }
        Ok(Expr::sum(terms))
    }

    fn term(&mut self) -> Result<Expr, ExprError> {
        let mut acc = self.unary()?;
        loop {
            if self.eat(b'*') {
                let rhs = self.unary()?;
                acc = acc.mul(&rhs);
            } else if self.eat(b'/') {
                self.skip_ws();
                let start = self.pos;
                let d = self.number()?;
                if d == 0.0 {
                    self.pos = start;
                    return self.err("division by zero");
                }
                acc = acc.scale(1.0 / d);
            } else {
                break;
            }
        }
        Ok(acc)
    }

    fn unary(&mut self) -> Result<Expr, ExprError> {
        if self.eat(b'-') {
            Ok(self.factor()?.neg())
        } else {
            self.factor()
        }
    }

    fn factor(&mut self) -> Result<Expr, ExprError> {
        let base = self.base()?;
        if self.eat(b'^') {
            self.skip_ws();
            let start = self.pos;
            while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
            let digits = std::str::from_utf8(&self.src[start..self.pos]).unwrap_or("");
            match digits.parse::<u32>() {
                Ok(p) => Ok(base.pow(p)),
                Err(_) => {
                    self.pos = start;
                    self.err("expected a non-negative integer exponent")
                }
            }
        } else {
            Ok(base)
        }
    }

    fn number(&mut self) -> Result<f64, ExprError> {
        self.skip_ws();
        let start = self.pos;
        let s = self.src;
        let digits = |p: &mut usize| {
            let b = *p;
            while *p < s.len() && s[*p].is_ascii_digit() {
                *p += 1;
            }
            *p > b
        };
        let mut p = self.pos;
        let int = digits(&mut p);
        let mut frac = false;
        if p < s.len() && s[p] == b'.' {
            p += 1;
            frac = digits(&mut p);
        }
        if !int && !frac {
            return self.err("expected a number");
        }
        if p < s.len() && (s[p] == b'e' || s[p] == b'E') {
            let mut q = p + 1;
            if q < s.len() && (s[q] == b'+' || s[q] == b'-') {
                q += 1;
            }
            if digits(&mut q) {
                p = q;
            }
        }
        self.pos = p;
        let text = std::str::from_utf8(&s[start..p]).unwrap_or("");
        text.parse::<f64>().or_else(|_| {
            self.pos = start;
            self.err("malformed number")
        })
    }

    fn base(&mut self) -> Result<Expr, ExprError> {
        match self.peek() {
            Some(c) if c.is_ascii_digit() || c == b'.' => Ok(Expr::constant(self.number()?)),
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(b')')?;
                Ok(e)
            }
            Some(c) if c.is_ascii_alphabetic() => {
                let start = self.pos;
                while self.pos < self.src.len() && self.src[self.pos].is_ascii_alphanumeric() {
                    self.pos += 1;
                }
                let word = std::str::from_utf8(&self.src[start..self.pos]).unwrap_or("");
                if let Some(idx) = word.strip_prefix('x') {
                    if !idx.is_empty() && !idx.starts_with('0') && idx.bytes().all(|b| b.is_ascii_digit()) {
                        let index =
                            idx.parse::<usize>().map_err(|_| ExprError::Syntax { pos: start, msg: "variable index too large".into() })? - 1;
                        if index >= self.dim {
                            return Err(ExprError::VarOutOfRange { index, dim: self.dim, pos: start });
                        }
                        return Ok(Expr::var(index));
                    }
                }
                if self.extended && (word == "min" || word == "max") {
                    self.expect(b'{')?;
                    let a = self.expr()?;
                    self.expect(b',')?;
                    let b = self.expr()?;
                    self.expect(b'}')?;
                    return Ok(if word == "min" { a.min(&b) } else { a.max(&b) });
                }
                if self.extended && word == "inf" {
                    return Ok(Expr::constant(f64::INFINITY));
                }
                match Func::from_name(word) {
                    Some(f) if f.is_library() || self.extended => {
                        self.expect(b'(')?;
                        let arg = self.expr()?;
                        self.expect(b')')?;
                        Ok(arg.apply(f))
                    }
                    _ if self.peek() == Some(b'(') => Err(ExprError::UnknownFunction { name: word.to_string(), pos: start }),
                    _ => {
                        self.pos = start;
                        self.err(format!("unknown identifier `{word}`"))
                    }
                }
            }
            Some(_) => self.err("unexpected character"),
            None => self.err("unexpected end of input"),
        }
    }
}
