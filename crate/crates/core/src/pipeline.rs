//! End-to-end separation: LP relaxation, change to nonbasic variables,
//! estimation, intersection cut and the optional strengthenings.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::Serialize;
use thiserror::Error;

use crate::cutgen::{intersection_cut, Cut, RaySystem, StepOptions};
use crate::estimators::estimate;
use crate::lp::{map_cut_to_original, solve_lp, substitute_nonbasic, Instance, LpError, Tableau};
use crate::monoidal::{monoidal_cut, MonoidalConfig};
use crate::strengthen::{build_hhat, strengthened_cut, HhatOptions};
use crate::validate::{validate_cut, Region, ValidateOptions, Verdict};

/// Constraint values above this at the LP optimum count as violated.
pub const VIOLATION_TOL: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct PipelineOptions {
    pub bounds: bool,
    pub monoidal: bool,
    /// 1-based original index of the integer variable to strengthen; all when `None`.
    pub k: Option<usize>,
    pub sos1: bool,
    pub tuy: bool,
    pub directions: Option<usize>,
    pub grid: usize,
    pub safety: f64,
    pub timing: bool,
    pub step: StepOptions,
    pub validate: ValidateOptions,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions {
            bounds: false,
            monoidal: false,
            k: None,
            sos1: false,
            tuy: false,
            directions: None,
            grid: 64,
            safety: 1e-6,
            timing: true,
            step: StepOptions::default(),
            validate: ValidateOptions { clip: Some(10.0), ..Default::default() },
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ReportedCut {
    /// Cut in nonbasic coordinates.
    pub cut: Cut,
    /// The same inequality over the original variables.
    pub original: Cut,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConstraintReport {
    /// 1-based index into the instance's nonlinear constraints.
    pub index: usize,
    pub expression: String,
    pub value_at_x_hat: f64,
    pub violated: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h_ave: Option<String>,
    pub cuts: Vec<ReportedCut>,
    /// Cuts that failed validation; never part of `cuts`.
    pub rejected: Vec<ReportedCut>,
    pub errors: Vec<String>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub instance: Option<String>,
    pub x_hat: Vec<f64>,
    pub objective: f64,
    /// 1-based indices.
    pub basic: Vec<usize>,
    pub nonbasic: Vec<usize>,
    pub constraints: Vec<ConstraintReport>,
    pub settings: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timing_ms: Option<BTreeMap<String, f64>>,
}

impl RunReport {
    pub fn cuts(&self) -> impl Iterator<Item = &ReportedCut> {
        self.constraints.iter().flat_map(|c| c.cuts.iter())
    }

    pub fn violated(&self) -> usize {
        self.constraints.iter().filter(|c| c.violated).count()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{0}")]
    Parse(String),
    #[error(transparent)]
    Lp(#[from] LpError),
}

impl PipelineError {
    /// Process exit code for the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Parse(_) => 2,
            PipelineError::Lp(LpError::Invalid(_)) | PipelineError::Lp(LpError::Expr(_)) => 2,
            PipelineError::Lp(_) => 3,
        }
    }
}

/// Exit status of a finished report: 0 with cuts, 4 when nothing is violated,
/// 5 when some violated constraint produced no cut.
pub fn report_status(report: &RunReport) -> i32 {
    if report.violated() == 0 {
        4
    } else if report.constraints.iter().any(|c| c.violated && c.cuts.is_empty()) {
        5
    } else {
        0
    }
}

struct Clock {
    enabled: bool,
    times: BTreeMap<String, f64>,
}

impl Clock {
    fn time<T>(&mut self, name: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        if self.enabled {
            *self.times.entry(name.to_string()).or_default() += start.elapsed().as_secs_f64() * 1e3;
        }
        out
    }
}

fn settings(opts: &PipelineOptions) -> BTreeMap<String, f64> {
    let mut s = BTreeMap::new();
    s.insert("violation_tol".into(), VIOLATION_TOL);
    s.insert("lambda_max".into(), opts.step.lambda_max);
    s.insert("residual".into(), opts.step.residual);
    s.insert("mesh_resolution".into(), opts.validate.resolution);
    s.insert("cut_tol".into(), opts.validate.cut_tol);
    if let Some(c) = opts.validate.clip {
        s.insert("mesh_clip".into(), c);
    }
    if opts.bounds {
        s.insert("grid".into(), opts.grid as f64);
        s.insert("safety".into(), opts.safety);
    }
    s
}

/// Runs the separation pipeline on `inst`.
pub fn run_pipeline(inst: &Instance, opts: &PipelineOptions) -> Result<RunReport, PipelineError> {
    let mut clock = Clock { enabled: opts.timing, times: BTreeMap::new() };
    let t = clock.time("lp", || solve_lp(inst))?;
    let region = Region::from_tableau(inst, &t);
    let mut constraints = Vec::new();
    for (i, g) in inst.nonlinear.iter().enumerate() {
        let value = g.eval(&t.x).unwrap_or(f64::INFINITY);
        let mut rep = ConstraintReport {
            index: i + 1,
            expression: inst.nonlinear_text.get(i).cloned().unwrap_or_else(|| g.to_text()),
            value_at_x_hat: value,
            violated: value > VIOLATION_TOL,
            h: None,
            h_ave: None,
            cuts: Vec::new(),
            rejected: Vec::new(),
            errors: Vec::new(),
            warnings: Vec::new(),
        };
        if rep.violated {
            clock.time("separation", || separate(inst, &t, &region, g, opts, &mut rep));
        }
        constraints.push(rep);
    }
    Ok(RunReport {
        instance: inst.id.clone(),
        x_hat: t.x.clone(),
        objective: t.objective,
        basic: t.basic.iter().map(|k| k + 1).collect(),
        nonbasic: t.nonbasic.iter().map(|k| k + 1).collect(),
        constraints,
        settings: settings(opts),
        timing_ms: opts.timing.then_some(clock.times),
    })
}

fn separate(inst: &Instance, t: &Tableau, region: &Region, g: &crate::expr::Expr, opts: &PipelineOptions, rep: &mut ConstraintReport) {
    let n = t.dim();
    let h = substitute_nonbasic(g, t);
    rep.h = Some(h.to_text());
    let origin = vec![0.0; n];
    let pair = match estimate(&h, &origin) {
        Ok(p) => p,
        Err(e) => {
            rep.errors.push(format!("estimate: {e}"));
            return;
        }
    };
    rep.h_ave = Some(pair.under.to_text());
    let emit = |cut: Cut, rep: &mut ConstraintReport| {
        let mut cut = cut;
        cut.provenance.instance = inst.id.clone();
        let original = match map_cut_to_original(&cut, t, inst) {
            Ok(c) => c,
            Err(e) => {
                rep.errors.push(format!("map to original space: {e}"));
                return;
            }
        };
        match validate_cut(&cut, region, &opts.validate) {
            Ok(verdict) if verdict.valid => rep.cuts.push(ReportedCut { cut, original, verdict }),
            Ok(verdict) => rep.rejected.push(ReportedCut { cut, original, verdict }),
            Err(e) => rep.errors.push(format!("validate: {e}")),
        }
    };
    let rays = RaySystem::axis(&origin);
    match intersection_cut(&pair.under, &rays, &opts.step) {
        Ok(cut) => emit(cut, rep),
        Err(e) => rep.errors.push(format!("intersection cut: {e}")),
    }
    if opts.bounds {
        let hopts = HhatOptions { grid_per_dim: opts.grid, tuy: opts.tuy, ..Default::default() };
        match build_hhat(&pair.under, &t.nonbasic_box(), &origin, &hopts)
            .and_then(|ev| strengthened_cut(&ev, &rays, opts.safety, &opts.step).map(|c| (c, ev)))
        {
            Ok((cut, ev)) => {
                rep.warnings.extend(ev.warnings().iter().cloned());
                emit(cut, rep)
            }
            Err(e) => rep.errors.push(format!("bound strengthening: {e}")),
        }
    }
    if opts.monoidal {
        let mut integer: Vec<usize> = region.integer.iter().copied().collect();
        if let Some(k) = opts.k {
            match t.nonbasic.iter().position(|&j| j + 1 == k) {
                Some(pos) if integer.contains(&pos) => integer = vec![pos],
                _ => {
                    rep.errors.push(format!("monoidal: x{k} is not an integer nonbasic variable"));
                    return;
                }
            }
        }
        if integer.is_empty() {
            rep.warnings.push("monoidal: no integer nonbasic variables".into());
            return;
        }
        let cfg = MonoidalConfig { directions: opts.directions, integer, sos1: opts.sos1, ..Default::default() };
        match monoidal_cut(&pair.under, &t.nonbasic_box(), &cfg) {
            Ok(cuts) => cuts.into_iter().for_each(|c| emit(c, rep)),
            Err(e) => rep.errors.push(format!("monoidal: {e}")),
        }
    }
}
