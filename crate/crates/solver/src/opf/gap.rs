//! Optimality-gap computation and batch reporting.
//!
//! For each case the AC heuristic (a local interior-point solve from
//! the stored starting point) gives an upper bound; each selected
//! relaxation gives a lower bound; the gap is their relative difference
//! `100 (AC - relax) / AC`. Failed solves render as `err.` and
//! inapplicable models as `---`, and per-case errors never abort a
//! batch.

use crate::nlp::{solve_nlp, NlpProblem, SolveOptions, SolveStatus};
use crate::opf::ac::{formulate_ac, AcSolution};
use crate::opf::cp::formulate_cp;
use crate::opf::nfll::formulate_nfll;
use crate::opf::soc::formulate_soc;
use crate::opf::FormulateError;
use gridcase_core::{matpower, Network};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use serde::Serialize;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GapError {
    #[error("AC objective must be positive to define a gap, got {0}")]
    NonPositiveAc(f64),
}

/// Relative optimality gap in percent: `100 (ac - relax) / ac`.
pub fn gap(ac_objective: f64, relax_objective: f64) -> Result<f64, GapError> {
    if ac_objective > 0.0 {
        Ok(100.0 * (ac_objective - relax_objective) / ac_objective)
    } else {
        Err(GapError::NonPositiveAc(ac_objective))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Ac,
    Cp,
    Nfll,
    Soc,
}

impl ModelKind {
    pub const RELAXATIONS: [ModelKind; 3] = [ModelKind::Cp, ModelKind::Nfll, ModelKind::Soc];

    pub fn label(&self) -> &'static str {
        match self {
            ModelKind::Ac => "AC",
            ModelKind::Cp => "CP",
            ModelKind::Nfll => "NF+LL",
            ModelKind::Soc => "SOC",
        }
    }

    pub fn parse(s: &str) -> Option<ModelKind> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ac" => Some(ModelKind::Ac),
            "cp" => Some(ModelKind::Cp),
            "nfll" | "nf+ll" => Some(ModelKind::Nfll),
            "soc" => Some(ModelKind::Soc),
            _ => None,
        }
    }
}

/// How one model solve ended, in table semantics.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "detail")]
pub enum EntryStatus {
    Optimal,
    /// `err.`: the solver failed to converge.
    Error(String),
    /// `---`: the model is not applicable to this input.
    NotApplicable(String),
}

impl EntryStatus {
    pub fn table_cell(&self) -> &'static str {
        match self {
            EntryStatus::Optimal => "ok",
            EntryStatus::Error(_) => "err.",
            EntryStatus::NotApplicable(_) => "---",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RelaxEntry {
    pub model: ModelKind,
    pub status: EntryStatus,
    pub objective: Option<f64>,
    pub gap_percent: Option<f64>,
}

/// Gap results for one case.
#[derive(Debug, Clone, Serialize)]
pub struct GapReport {
    pub case: String,
    /// case-level failure (parse error etc.); entries are empty then
    pub error: Option<String>,
    pub ac_status: Option<EntryStatus>,
    pub ac_objective: Option<f64>,
    pub relaxations: Vec<RelaxEntry>,
}

/// Options for gap evaluation.
#[derive(Debug, Clone, Copy)]
pub struct GapOptions {
    pub solve: SolveOptions,
    /// extra AC starts from perturbed initial points; best objective wins
    pub multi_start: u32,
    pub multi_start_seed: u64,
}

impl Default for GapOptions {
    fn default() -> Self {
        GapOptions { solve: SolveOptions::default(), multi_start: 0, multi_start_seed: 0 }
    }
}

/// Solve the AC heuristic, optionally multi-started, returning the best
/// local solution found.
pub fn solve_ac(
    net: &Network,
    options: &GapOptions,
) -> Result<(SolveStatus, f64, AcSolution), FormulateError> {
    let problem = formulate_ac(net)?;
    let mut best: Option<(SolveStatus, f64, Vec<f64>)> = None;
    let base_start = problem.initial_point();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(options.multi_start_seed);
    for trial in 0..=options.multi_start {
        let start: Vec<f64> = if trial == 0 {
            base_start.clone()
        } else {
            base_start
                .iter()
                .map(|&v| v + rng.random_range(-0.05..0.05) * (1.0 + v.abs()))
                .collect()
        };
        let shifted = WithStart { inner: &problem, start };
        let out = solve_nlp(&shifted, &options.solve);
        let better = match &best {
            None => true,
            Some((st, obj, _)) => {
                (out.status == SolveStatus::Optimal && *st != SolveStatus::Optimal)
                    || (out.status == SolveStatus::Optimal && out.objective < *obj)
            }
        };
        if better {
            best = Some((out.status, out.objective, out.x));
        }
    }
    let (status, objective, x) = best.expect("at least one AC start");
    let sol = problem.solution(&x, net.buses.len(), net.generators.len());
    Ok((status, objective, sol))
}

/// Wrap a problem with a replacement starting point.
struct WithStart<'a, P: NlpProblem + ?Sized> {
    inner: &'a P,
    start: Vec<f64>,
}

impl<P: NlpProblem + ?Sized> NlpProblem for WithStart<'_, P> {
    fn num_vars(&self) -> usize {
        self.inner.num_vars()
    }
    fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        self.inner.bounds()
    }
    fn initial_point(&self) -> Vec<f64> {
        self.start.clone()
    }
    fn num_eq(&self) -> usize {
        self.inner.num_eq()
    }
    fn num_ineq(&self) -> usize {
        self.inner.num_ineq()
    }
    fn objective(&self, x: &[f64]) -> f64 {
        self.inner.objective(x)
    }
    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        self.inner.gradient(x, out)
    }
    fn constraints(&self, x: &[f64], eq: &mut [f64], ineq: &mut [f64]) {
        self.inner.constraints(x, eq, ineq)
    }
    fn jacobians(&self, x: &[f64]) -> (crate::linalg::Triplets, crate::linalg::Triplets) {
        self.inner.jacobians(x)
    }
    fn lagrangian_hessian(
        &self,
        x: &[f64],
        obj_weight: f64,
        lam_eq: &[f64],
        lam_ineq: &[f64],
    ) -> crate::linalg::Triplets {
        self.inner.lagrangian_hessian(x, obj_weight, lam_eq, lam_ineq)
    }
    fn is_convex(&self) -> bool {
        self.inner.is_convex()
    }
}

/// Solve one relaxation of a network.
pub fn solve_relaxation(
    net: &Network,
    model: ModelKind,
    options: &SolveOptions,
) -> (EntryStatus, Option<f64>) {
    let result = match model {
        ModelKind::Cp => formulate_cp(net).map(|p| solve_nlp(&p, options)),
        ModelKind::Nfll => formulate_nfll(net).map(|p| solve_nlp(&p, options)),
        ModelKind::Soc => formulate_soc(net).map(|p| solve_nlp(&p, options)),
        ModelKind::Ac => formulate_ac(net).map(|p| solve_nlp(&p, options)),
    };
    match result {
        Err(e) => (EntryStatus::NotApplicable(e.to_string()), None),
        Ok(out) => match out.status {
            SolveStatus::Optimal => (EntryStatus::Optimal, Some(out.objective)),
            other => (EntryStatus::Error(format!("{other:?}")), None),
        },
    }
}

/// Evaluate the gap table for one already-loaded network.
pub fn gap_report(net: &Network, name: &str, models: &[ModelKind], options: &GapOptions) -> GapReport {
    let mut report = GapReport {
        case: name.to_string(),
        error: None,
        ac_status: None,
        ac_objective: None,
        relaxations: Vec::new(),
    };
    let ac = match solve_ac(net, options) {
        Ok((status, obj, _)) => {
            if status == SolveStatus::Optimal {
                report.ac_status = Some(EntryStatus::Optimal);
                report.ac_objective = Some(obj);
                Some(obj)
            } else {
                report.ac_status = Some(EntryStatus::Error(format!("{status:?}")));
                None
            }
        }
        Err(e) => {
            report.ac_status = Some(EntryStatus::NotApplicable(e.to_string()));
            None
        }
    };
    for &model in models {
        if model == ModelKind::Ac {
            continue;
        }
        let (status, objective) = solve_relaxation(net, model, &options.solve);
        let gap_percent = match (ac, objective) {
            (Some(ac), Some(relax)) => gap(ac, relax).ok(),
            _ => None,
        };
        report.relaxations.push(RelaxEntry { model, status, objective, gap_percent });
    }
    report
}

/// Evaluate gap tables for a batch of case files, in parallel, with
/// per-case errors captured in the report. Output order matches input
/// order.
pub fn gap_table(paths: &[PathBuf], models: &[ModelKind], options: &GapOptions) -> Vec<GapReport> {
    use rayon::prelude::*;
    paths
        .par_iter()
        .map(|path| {
            let name = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| path.display().to_string());
            match load_network(path) {
                Ok(net) => gap_report(&net, &name, models, options),
                Err(e) => GapReport {
                    case: name,
                    error: Some(e),
                    ac_status: None,
                    ac_objective: None,
                    relaxations: Vec::new(),
                },
            }
        })
        .collect()
}

fn load_network(path: &Path) -> Result<Network, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let case = matpower::parse(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    matpower::lower(&case).map_err(|e| format!("{}: {e}", path.display()))
}

/// Render reports as a markdown table.
pub fn render_markdown(reports: &[GapReport], models: &[ModelKind]) -> String {
    use std::fmt::Write;
    let mut out = String::new();
    let mut header = String::from("| Case | AC ($/h) |");
    let mut rule = String::from("|---|---|");
    for m in models.iter().filter(|m| **m != ModelKind::Ac) {
        write!(header, " {} gap (%) |", m.label()).unwrap();
        rule.push_str("---|");
    }
    out.push_str(&header);
    out.push('\n');
    out.push_str(&rule);
    out.push('\n');
    for r in reports {
        if let Some(err) = &r.error {
            writeln!(out, "| {} | error: {} |", r.case, err).unwrap();
            continue;
        }
        let ac_cell = match (&r.ac_status, r.ac_objective) {
            (Some(EntryStatus::Optimal), Some(obj)) => format!("{obj:.2}"),
            (Some(s), _) => s.table_cell().to_string(),
            (None, _) => "?".into(),
        };
        write!(out, "| {} | {} |", r.case, ac_cell).unwrap();
        for e in &r.relaxations {
            let cell = match (&e.status, e.gap_percent) {
                (EntryStatus::Optimal, Some(g)) => format!("{g:.2}"),
                (EntryStatus::Optimal, None) => "ok".into(),
                (s, _) => s.table_cell().to_string(),
            };
            write!(out, " {cell} |").unwrap();
        }
        out.push('\n');
    }
    out
}
