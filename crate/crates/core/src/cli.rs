//! Command-line interface.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use crate::bounds::Bounds;
use crate::cutgen::{intersection_cut, Cut, RaySystem, Space, StepOptions};
use crate::estimators::{estimate, EstimatorPair};
use crate::expr::{parse, Expr};
use crate::lp::{solve_lp, Instance};
use crate::monoidal::{monoidal_cut, sweep_boundary, MonoidalConfig};
use crate::pipeline::{report_status, run_pipeline, PipelineOptions};
use crate::plot::{boundary_csv, cuts_csv, estimate_csv, region_csv, Grid};
use crate::strengthen::{build_hhat, strengthened_cut, HhatEvaluator, HhatOptions};
use crate::validate::{validate_cut, Region, ValidateOptions, Verdict};

#[derive(Debug, Parser)]
#[command(name = "sfree", version, about = "Intersection cuts from concave underestimators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Concave underestimator and convex overestimator tight at a point
    Estimate(EstimateArgs),
    /// Intersection cut for a constraint g(x) <= 0 violated at a point
    Cut(CutArgs),
    /// Plain and bound-strengthened intersection cuts
    Strengthen(StrengthenArgs),
    /// Monoidal strengthening for integer variables in [0, u]
    Monoidal(MonoidalArgs),
    /// Full separation run on an instance file
    Pipeline(PipelineArgs),
    /// Check a cut against a feasibility mesh
    Validate(ValidateArgs),
    /// Write CSV plot data
    Plot(PlotArgs),
}

fn parse_num(s: &str) -> Result<f64, String> {
    match s.trim() {
        "inf" | "+inf" => Ok(f64::INFINITY),
        "-inf" => Ok(f64::NEG_INFINITY),
        t => t.parse::<f64>().map_err(|e| format!("{s:?}: {e}")),
    }
}

#[derive(Debug, Args)]
struct ExprArgs {
    /// Expression over x1..xn
    #[arg(long, allow_hyphen_values = true)]
    expr: String,
    /// Point, comma separated
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, value_parser = parse_num)]
    at: Vec<f64>,
    /// Number of variables (defaults to the length of --at or the bounds)
    #[arg(long)]
    n: Option<usize>,
}

#[derive(Debug, Args)]
struct BoxArgs {
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, value_parser = parse_num)]
    lb: Vec<f64>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, value_parser = parse_num)]
    ub: Vec<f64>,
    /// 1-based indices of integer variables
    #[arg(long = "int", value_delimiter = ',')]
    integer: Vec<usize>,
    /// Mesh spacing used for validation
    #[arg(long, default_value_t = 0.01)]
    resolution: f64,
    /// Width substituted for infinite bounds when meshing
    #[arg(long)]
    clip: Option<f64>,
}

#[derive(Debug, Args)]
struct EstimateArgs {
    #[command(flatten)]
    expr: ExprArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CutArgs {
    #[command(flatten)]
    expr: ExprArgs,
    #[command(flatten)]
    bounds: BoxArgs,
    #[arg(long, default_value_t = 1e9)]
    lambda_max: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct StrengthenArgs {
    #[command(flatten)]
    expr: ExprArgs,
    #[command(flatten)]
    bounds: BoxArgs,
    /// Also compute the variant without the restriction h_ave(z) >= 0
    #[arg(long)]
    tuy: bool,
    #[arg(long, default_value_t = 64)]
    grid: usize,
    #[arg(long, default_value_t = 1e-6)]
    safety: f64,
    /// Samples per axis of the region CSV written to --out
    #[arg(long, default_value_t = 201)]
    samples: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct MonoidalArgs {
    /// Expression over x1..xn; the apex is the origin
    #[arg(long, allow_hyphen_values = true)]
    expr: String,
    /// Upper bounds u of the box [0, u]
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, value_parser = parse_num, required = true)]
    ub: Vec<f64>,
    /// 1-based index of the integer variable to strengthen
    #[arg(long, conflicts_with = "all_k")]
    k: Option<usize>,
    /// Strengthen every variable
    #[arg(long)]
    all_k: bool,
    #[arg(long)]
    sos1: bool,
    #[arg(long)]
    directions: Option<usize>,
    #[arg(long, default_value_t = 0.01)]
    resolution: f64,
    #[arg(long)]
    clip: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PipelineArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long)]
    bounds: bool,
    #[arg(long)]
    monoidal: bool,
    /// 1-based index of the integer variable to strengthen
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    sos1: bool,
    #[arg(long)]
    tuy: bool,
    #[arg(long)]
    directions: Option<usize>,
    #[arg(long, default_value_t = 64)]
    grid: usize,
    #[arg(long, default_value_t = 0.01)]
    resolution: f64,
    #[arg(long, default_value_t = 10.0)]
    clip: f64,
    #[arg(long)]
    no_timing: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    /// JSON file with a cut or a list of cuts
    #[arg(long)]
    cut: PathBuf,
    #[arg(long, conflicts_with = "expr")]
    instance: Option<PathBuf>,
    /// Constraint g(x) <= 0 defining the set together with the box
    #[arg(long, allow_hyphen_values = true)]
    expr: Option<String>,
    #[command(flatten)]
    bounds: BoxArgs,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PlotKind {
    Estimate,
    Region,
    Cuts,
}

#[derive(Debug, Args)]
struct PlotArgs {
    what: PlotKind,
    #[arg(long, allow_hyphen_values = true)]
    expr: Option<String>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, value_parser = parse_num)]
    at: Vec<f64>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, value_parser = parse_num)]
    lb: Vec<f64>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, value_parser = parse_num)]
    ub: Vec<f64>,
    /// Plot window "lo,hi" applied to every axis
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, value_parser = parse_num, default_value = "-2.5,2.5")]
    range: Vec<f64>,
    #[arg(long, default_value_t = 501)]
    samples: usize,
    #[arg(long)]
    tuy: bool,
    #[arg(long, default_value_t = 64)]
    grid: usize,
    /// Cuts JSON for `plot cuts`
    #[arg(long)]
    cuts: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Failure with its exit code.
struct Failure {
    code: i32,
    message: String,
}

fn fail(code: i32, message: impl ToString) -> Failure {
    Failure { code, message: message.to_string() }
}

type CmdResult = Result<(i32, String), Failure>;

/// Runs the CLI with `args` (including the program name) and returns the exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { write!(stdout, "{text}") } else { write!(stderr, "{text}") };
            return code;
        }
    };
    let result = match cli.command {
        Command::Estimate(a) => cmd_estimate(a),
        Command::Cut(a) => cmd_cut(a),
        Command::Strengthen(a) => cmd_strengthen(a),
        Command::Monoidal(a) => cmd_monoidal(a),
        Command::Pipeline(a) => cmd_pipeline(a),
        Command::Validate(a) => cmd_validate(a),
        Command::Plot(a) => cmd_plot(a),
    };
    match result {
        Ok((code, text)) => {
            let _ = writeln!(stdout, "{text}");
            code
        }
        Err(f) => {
            let _ = writeln!(stderr, "error: {}", f.message);
            f.code
        }
    }
}

fn pretty<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("output serializes")
}

fn write_out(dir: &Option<PathBuf>, name: &str, contents: &[u8]) -> Result<(), Failure> {
    if let Some(dir) = dir {
        fs::create_dir_all(dir).map_err(|e| fail(1, format!("{}: {e}", dir.display())))?;
        let path = dir.join(name);
        fs::write(&path, contents).map_err(|e| fail(1, format!("{}: {e}", path.display())))?;
    }
    Ok(())
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| fail(2, format!("{}: {e}", path.display())))
}

fn dimension(explicit: Option<usize>, hints: &[usize], e: &str) -> Result<usize, Failure> {
    if let Some(n) = explicit {
        return Ok(n);
    }
    if let Some(n) = hints.iter().copied().find(|n| *n > 0) {
        return Ok(n);
    }
    // fall back to the largest variable index in the text
    let probe = parse(e, usize::MAX >> 1).map_err(|e| fail(2, e))?;
    Ok(probe.min_dimension().max(1))
}

fn parse_expr(text: &str, n: usize) -> Result<Expr, Failure> {
    parse(text, n).map_err(|e| fail(2, e))
}

fn make_box(lb: &[f64], ub: &[f64], n: usize, default_lower: f64) -> Result<Bounds, Failure> {
    let lower = if lb.is_empty() { vec![default_lower; n] } else { lb.to_vec() };
    let upper = if ub.is_empty() { vec![f64::INFINITY; n] } else { ub.to_vec() };
    if lower.len() != n || upper.len() != n {
        return Err(fail(2, format!("bounds must have {n} entries")));
    }
    Bounds::new(lower, upper).map_err(|e| fail(2, e))
}

fn one_based(v: &[usize], n: usize) -> Result<BTreeSet<usize>, Failure> {
    v.iter().map(|&i| if i == 0 || i > n { Err(fail(2, format!("index {i} out of range 1..={n}"))) } else { Ok(i - 1) }).collect()
}

fn point(at: &[f64], n: usize) -> Result<Vec<f64>, Failure> {
    match at.len() {
        0 => Ok(vec![0.0; n]),
        l if l == n => Ok(at.to_vec()),
        l => Err(fail(2, format!("--at has {l} entries, expected {n}"))),
    }
}

fn pair_json(pair: &EstimatorPair) -> serde_json::Value {
    json!({
        "under": pair.under.to_text(),
        "over": pair.over.to_text(),
        "base_point": pair.base_point,
        "value_at_base": pair.value_at_base,
    })
}

fn cmd_estimate(a: EstimateArgs) -> CmdResult {
    let n = dimension(a.expr.n, &[a.expr.at.len()], &a.expr.expr)?;
    let e = parse_expr(&a.expr.expr, n)?;
    let at = point(&a.expr.at, n)?;
    let pair = estimate(&e, &at).map_err(|e| fail(5, e))?;
    let text = pretty(&pair_json(&pair));
    write_out(&a.out, "estimate.json", text.as_bytes())?;
    if a.out.is_some() && n <= 2 {
        let mut buf = Vec::new();
        let (lo, hi) = (at.iter().cloned().fold(f64::INFINITY, f64::min) - 3.0, at.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 3.0);
        let samples = if n == 1 { 501 } else { 101 };
        estimate_csv(&e, &pair, Grid { lo, hi, samples }, &mut buf).map_err(|e| fail(1, e))?;
        write_out(&a.out, "estimate.csv", &buf)?;
    }
    Ok((0, text))
}

#[derive(Serialize)]
struct CutEntry {
    #[serde(flatten)]
    cut: Cut,
    /// The same inequality over x, shifted by the apex.
    original: Cut,
    #[serde(skip_serializing_if = "Option::is_none")]
    verdict: Option<Verdict>,
}

/// Cut `αᵀ(x − x̂) ≥ 1` written as `αᵀx ≥ 1 + αᵀx̂`.
fn shift(cut: &Cut, apex: &[f64]) -> Cut {
    let mut c = cut.clone();
    c.space = Space::Original;
    c.rhs = cut.rhs + cut.lhs(apex);
    c
}

fn entry(cut: Cut, apex: &[f64], region: Option<&Region>, vopts: &ValidateOptions) -> Result<CutEntry, Failure> {
    let original = shift(&cut, apex);
    let verdict = match region {
        Some(r) => Some(validate_cut(&original, r, vopts).map_err(|e| fail(5, e))?),
        None => None,
    };
    Ok(CutEntry { cut, original, verdict })
}

/// Feasible points of the box inside the cone `x ≥ apex` spanned by the axis rays.
fn validation_region(g: &Expr, bounds: &Bounds, apex: &[f64], integer: BTreeSet<usize>, clip: Option<f64>) -> Option<Region> {
    let lower: Vec<f64> = bounds.lower.iter().zip(apex).map(|(l, a)| l.max(*a)).collect();
    let upper: Vec<f64> = bounds.upper.iter().zip(&lower).map(|(u, l)| u.max(*l)).collect();
    let cone = Bounds { lower, upper };
    (cone.is_bounded() || clip.is_some()).then(|| Region::new(cone, integer, vec![g.clone()]))
}

fn cmd_cut(a: CutArgs) -> CmdResult {
    let n = dimension(a.expr.n, &[a.expr.at.len(), a.bounds.lb.len(), a.bounds.ub.len()], &a.expr.expr)?;
    let g = parse_expr(&a.expr.expr, n)?;
    let at = point(&a.expr.at, n)?;
    let bounds = make_box(&a.bounds.lb, &a.bounds.ub, n, f64::NEG_INFINITY)?;
    let pair = estimate(&g, &at).map_err(|e| fail(5, e))?;
    let step = StepOptions { lambda_max: a.lambda_max, ..Default::default() };
    let cut = intersection_cut(&pair.under, &RaySystem::axis(&at), &step).map_err(|e| fail(5, e))?;
    let vopts = ValidateOptions { resolution: a.bounds.resolution, clip: a.bounds.clip, ..Default::default() };
    let region = validation_region(&g, &bounds, &at, one_based(&a.bounds.integer, n)?, a.bounds.clip);
    let cuts = vec![entry(cut, &at, region.as_ref(), &vopts)?];
    let text = pretty(&json!({ "h_ave": pair.under.to_text(), "cuts": cuts }));
    write_out(&a.out, "cuts.json", text.as_bytes())?;
    Ok((0, text))
}

fn cmd_strengthen(a: StrengthenArgs) -> CmdResult {
    let n = dimension(a.expr.n, &[a.expr.at.len(), a.bounds.lb.len(), a.bounds.ub.len()], &a.expr.expr)?;
    let g = parse_expr(&a.expr.expr, n)?;
    let at = point(&a.expr.at, n)?;
    let bounds = make_box(&a.bounds.lb, &a.bounds.ub, n, f64::NEG_INFINITY)?;
    let pair = estimate(&g, &at).map_err(|e| fail(5, e))?;
    let rays = RaySystem::axis(&at);
    let step = StepOptions::default();
    let plain = intersection_cut(&pair.under, &rays, &step).map_err(|e| fail(5, e))?;
    let hopts = HhatOptions { grid_per_dim: a.grid, ..Default::default() };
    let ev = build_hhat(&pair.under, &bounds, &at, &hopts).map_err(|e| fail(5, e))?;
    let strong = strengthened_cut(&ev, &rays, a.safety, &step).map_err(|e| fail(5, e))?;
    let tuy: Option<HhatEvaluator> = if a.tuy {
        Some(build_hhat(&pair.under, &bounds, &at, &HhatOptions { tuy: true, ..hopts }).map_err(|e| fail(5, e))?)
    } else {
        None
    };
    let vopts = ValidateOptions { resolution: a.bounds.resolution, clip: a.bounds.clip, ..Default::default() };
    let region = validation_region(&g, &bounds, &at, one_based(&a.bounds.integer, n)?, a.bounds.clip);
    let mut cuts = vec![entry(plain, &at, region.as_ref(), &vopts)?, entry(strong, &at, region.as_ref(), &vopts)?];
    if let Some(t) = &tuy {
        cuts.push(entry(strengthened_cut(t, &rays, a.safety, &step).map_err(|e| fail(5, e))?, &at, region.as_ref(), &vopts)?);
    }
    let text = pretty(&json!({
        "h_ave": pair.under.to_text(),
        "samples": ev.samples().len(),
        "rejected_samples": ev.rejected(),
        "warnings": ev.warnings(),
        "cuts": cuts,
    }));
    write_out(&a.out, "cuts.json", text.as_bytes())?;
    if a.out.is_some() && n <= 2 {
        let w = ev.window();
        let lo = w.lower.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = w.upper.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut buf = Vec::new();
        region_csv(&g, &pair.under, Some(&ev), tuy.as_ref(), n, Grid { lo, hi, samples: a.samples }, &mut buf).map_err(|e| fail(1, e))?;
        write_out(&a.out, "region.csv", &buf)?;
    }
    Ok((0, text))
}

fn cmd_monoidal(a: MonoidalArgs) -> CmdResult {
    let n = a.ub.len();
    let g = parse_expr(&a.expr, n)?;
    let bounds = make_box(&[], &a.ub, n, 0.0)?;
    let integer: Vec<usize> = match (a.k, a.all_k) {
        (Some(k), _) => one_based(&[k], n)?.into_iter().collect(),
        (None, true) => (0..n).collect(),
        (None, false) => return Err(fail(2, "pass --k IDX or --all-k")),
    };
    let origin = vec![0.0; n];
    let pair = estimate(&g, &origin).map_err(|e| fail(5, e))?;
    let cfg = MonoidalConfig { directions: a.directions, integer: integer.clone(), sos1: a.sos1, ..Default::default() };
    let plain = intersection_cut(&pair.under, &RaySystem::axis(&origin), &StepOptions::default()).map_err(|e| fail(5, e))?;
    let strengthened = monoidal_cut(&pair.under, &bounds, &cfg).map_err(|e| fail(5, e))?;
    let vopts = ValidateOptions { resolution: a.resolution, clip: a.clip, ..Default::default() };
    let region = validation_region(&g, &bounds, &origin, integer.into_iter().collect(), a.clip);
    let mut cuts = vec![entry(plain, &origin, region.as_ref(), &vopts)?];
    for c in strengthened {
        cuts.push(entry(c, &origin, region.as_ref(), &vopts)?);
    }
    let text = pretty(&json!({ "h_ave": pair.under.to_text(), "cuts": cuts }));
    write_out(&a.out, "cuts.json", text.as_bytes())?;
    if a.out.is_some() {
        let sample = sweep_boundary(&pair.under, &bounds, &cfg).map_err(|e| fail(5, e))?;
        let mut buf = Vec::new();
        boundary_csv(&sample, &mut buf).map_err(|e| fail(1, e))?;
        write_out(&a.out, "boundary.csv", &buf)?;
    }
    Ok((0, text))
}

fn load_instance(path: &Path) -> Result<Instance, Failure> {
    Instance::from_json(&read(path)?).map_err(|e| fail(2, e))
}

fn cmd_pipeline(a: PipelineArgs) -> CmdResult {
    let inst = load_instance(&a.instance)?;
    let opts = PipelineOptions {
        bounds: a.bounds,
        monoidal: a.monoidal,
        k: a.k,
        sos1: a.sos1,
        tuy: a.tuy,
        directions: a.directions,
        grid: a.grid,
        timing: !a.no_timing,
        validate: ValidateOptions { resolution: a.resolution, clip: Some(a.clip), ..Default::default() },
        ..Default::default()
    };
    let report = run_pipeline(&inst, &opts).map_err(|e| fail(e.exit_code(), e))?;
    let text = report.to_json();
    write_out(&a.out, "report.json", text.as_bytes())?;
    let cuts: Vec<&Cut> = report.cuts().map(|c| &c.original).collect();
    write_out(&a.out, "cuts.json", pretty(&cuts).as_bytes())?;
    if a.out.is_some() {
        let owned: Vec<Cut> = report.cuts().map(|c| c.cut.clone()).collect();
        let mut buf = Vec::new();
        cuts_csv(&owned, &mut buf).map_err(|e| fail(1, e))?;
        write_out(&a.out, "cuts.csv", &buf)?;
    }
    Ok((report_status(&report), text))
}

fn load_cuts(path: &Path) -> Result<Vec<Cut>, Failure> {
    let text = read(path)?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| fail(2, e))?;
    let items = match value {
        serde_json::Value::Array(v) => v,
        serde_json::Value::Object(ref m) if m.contains_key("cuts") => m["cuts"].as_array().cloned().unwrap_or_default(),
        other => vec![other],
    };
    items.into_iter().map(|v| serde_json::from_value(v).map_err(|e| fail(2, e))).collect()
}

fn cmd_validate(a: ValidateArgs) -> CmdResult {
    let cuts = load_cuts(&a.cut)?;
    let vopts = ValidateOptions { resolution: a.bounds.resolution, clip: a.bounds.clip, ..Default::default() };
    let mut verdicts = Vec::new();
    if let Some(path) = &a.instance {
        let inst = load_instance(path)?;
        let tableau = solve_lp(&inst).map_err(|e| fail(3, e))?;
        let nonbasic = Region::from_tableau(&inst, &tableau);
        let original = Region::from_instance(&inst);
        for c in &cuts {
            let region = if c.space == Space::Nonbasic { &nonbasic } else { &original };
            verdicts.push(validate_cut(c, region, &vopts).map_err(|e| fail(2, e))?);
        }
    } else {
        let text = a.expr.as_deref().ok_or_else(|| fail(2, "pass --instance or --expr"))?;
        let n = cuts.first().map(|c| c.coeffs.len()).unwrap_or(0);
        let g = parse_expr(text, n)?;
        let bounds = make_box(&a.bounds.lb, &a.bounds.ub, n, f64::NEG_INFINITY)?;
        let region = Region::new(bounds, one_based(&a.bounds.integer, n)?, vec![g]);
        for c in &cuts {
            verdicts.push(validate_cut(c, &region, &vopts).map_err(|e| fail(2, e))?);
        }
    }
    let code = if verdicts.iter().all(|v| v.valid) { 0 } else { 1 };
    Ok((code, pretty(&verdicts)))
}

fn cmd_plot(a: PlotArgs) -> CmdResult {
    if a.range.len() != 2 {
        return Err(fail(2, "--range takes lo,hi"));
    }
    let grid = Grid { lo: a.range[0], hi: a.range[1], samples: a.samples };
    let mut buf = Vec::new();
    let name = match a.what {
        PlotKind::Estimate => {
            let text = a.expr.as_deref().ok_or_else(|| fail(2, "--expr is required"))?;
            let n = dimension(None, &[a.at.len()], text)?;
            let e = parse_expr(text, n)?;
            let pair = estimate(&e, &point(&a.at, n)?).map_err(|e| fail(5, e))?;
            estimate_csv(&e, &pair, grid, &mut buf).map_err(|e| fail(2, e))?;
            "estimate.csv"
        }
        PlotKind::Region => {
            let text = a.expr.as_deref().ok_or_else(|| fail(2, "--expr is required"))?;
            let n = dimension(None, &[a.at.len(), a.lb.len(), a.ub.len()], text)?;
            let g = parse_expr(text, n)?;
            let at = point(&a.at, n)?;
            let bounds = make_box(&a.lb, &a.ub, n, f64::NEG_INFINITY)?;
            let pair = estimate(&g, &at).map_err(|e| fail(5, e))?;
            let hopts = HhatOptions { grid_per_dim: a.grid, ..Default::default() };
            let ev = build_hhat(&pair.under, &bounds, &at, &hopts).map_err(|e| fail(5, e))?;
            let tuy = if a.tuy {
                Some(build_hhat(&pair.under, &bounds, &at, &HhatOptions { tuy: true, ..hopts }).map_err(|e| fail(5, e))?)
            } else {
                None
            };
            region_csv(&g, &pair.under, Some(&ev), tuy.as_ref(), n, grid, &mut buf).map_err(|e| fail(2, e))?;
            "region.csv"
        }
        PlotKind::Cuts => {
            let path = a.cuts.as_ref().ok_or_else(|| fail(2, "--cuts is required"))?;
            cuts_csv(&load_cuts(path)?, &mut buf).map_err(|e| fail(2, e))?;
            "cuts.csv"
        }
    };
    if a.out.is_some() {
        write_out(&a.out, name, &buf)?;
        Ok((0, json!({ "written": name }).to_string()))
    } else {
        Ok((0, String::from_utf8(buf).unwrap_or_default().trim_end().to_string()))
    }
}
