//! Active power increase (API) case generation.
//!
//! Generator capabilities are opened up, demands are scaled uniformly
//! until the thermal limits bind (bisection against the elastic
//! feasibility oracle), and the resulting operating point becomes a new
//! power-flow case whose generator data is then re-completed with the
//! capacity, reactive-bound, and cost models.

use crate::oracle::{check_feasible, Feasibility};
use crate::ScenarioError;
use gridcase_core::Network;
use gridcase_solver::nlp::SolveOptions;
use gridcase_solver::opf::AcSolution;
use gridcase_stats::{apply_plan, AugmentLog, AugmentModels, AugmentPlan, ReactiveModel};
use serde::Serialize;

/// Bisection bracket for the demand scale.
pub const ALPHA_BRACKET: (f64, f64) = (1.0, 64.0);
/// Relative tolerance on the demand scale.
pub const ALPHA_REL_TOL: f64 = 1e-4;

#[derive(Debug, Clone, Serialize)]
pub struct ApiLog {
    pub schema_version: u32,
    pub seed: u64,
    /// Maximal uniform demand scale found feasible.
    pub alpha_star: f64,
    /// Every oracle probe: (scale, feasible).
    pub probes: Vec<(f64, bool)>,
    /// Oracle probes that had to be retried with tightened tolerances.
    pub oracle_noise: Vec<String>,
    /// Reactive bounds widened beyond the model to admit the set-point.
    pub q_widened: Vec<usize>,
    pub augment: AugmentLog,
}

/// Scale every demand by `alpha` (both active and reactive, preserving
/// power factors; see the crate documentation for the rationale).
fn scale_demand(net: &Network, alpha: f64, active_only: bool) -> Network {
    let mut out = net.clone();
    for bus in out.buses.iter_mut() {
        bus.pd *= alpha;
        if !active_only {
            bus.qd *= alpha;
        }
    }
    out
}

/// Prepare the demand-increase search problem: capability boxes are
/// opened (reactive bounds free everywhere, slack-bus generation free)
/// while every other generator holds its stated active set-point, so
/// the growing demand must flow through the network. This is the
/// elastic power-flow reading of the search: the operating point, not
/// an economic re-dispatch, is stressed until the limits bind.
fn relax_for_search(net: &Network) -> Network {
    let mut out = net.clone();
    let idx = out.bus_index();
    let slack: Vec<bool> = out
        .generators
        .iter()
        .map(|g| {
            idx.get(&g.bus)
                .is_some_and(|&b| out.buses[b].kind == gridcase_core::BusKind::Slack)
        })
        .collect();
    for (g, at_slack) in out.generators.iter_mut().zip(slack) {
        if at_slack {
            g.p_min = f64::NEG_INFINITY;
            g.p_max = f64::INFINITY;
        } else {
            g.p_min = g.pg;
            g.p_max = g.pg;
        }
        g.q_min = f64::NEG_INFINITY;
        g.q_max = f64::INFINITY;
    }
    out
}

struct Probe<'a> {
    relaxed: &'a Network,
    options: SolveOptions,
    probes: Vec<(f64, bool)>,
    noise: Vec<String>,
    active_only: bool,
}

impl Probe<'_> {
    fn run(&mut self, alpha: f64) -> Result<Option<AcSolution>, ScenarioError> {
        let scaled = scale_demand(self.relaxed, alpha, self.active_only);
        let mut verdict = check_feasible(&scaled, &self.options)?;
        if let Feasibility::Unknown { status } = verdict {
            // retry once with a tighter, longer solve
            self.noise.push(format!("scale {alpha:.6}: oracle {status:?}, retried"));
            let tight = SolveOptions {
                max_iterations: 2 * self.options.max_iterations,
                tolerance: self.options.tolerance * 0.1,
                ..self.options
            };
            verdict = check_feasible(&scaled, &tight)?;
        }
        let feasible = verdict.is_feasible();
        self.probes.push((alpha, feasible));
        Ok(match verdict {
            Feasibility::Feasible(sol) => Some(*sol),
            _ => None,
        })
    }
}

/// Generate the congested variant of a case.
///
/// `models` provides the capacity/cost distributions (and, when the
/// case has no fuel categories yet, the classifier bins) for the
/// re-completion step.
pub fn gen_api(
    net: &Network,
    models: &AugmentModels,
    seed: u64,
) -> Result<(Network, ApiLog), ScenarioError> {
    gen_api_with(net, models, seed, false)
}

/// `gen_api` with the literal reading that only active demand scales.
pub fn gen_api_with(
    net: &Network,
    models: &AugmentModels,
    seed: u64,
    active_only: bool,
) -> Result<(Network, ApiLog), ScenarioError> {
    let idx_active = net.active_branch_positions();
    if !idx_active.iter().any(|&b| net.branches[b].rate_a.is_some()) {
        return Err(ScenarioError::NoFiniteLimits);
    }
    let relaxed = relax_for_search(net);
    let mut probe = Probe {
        relaxed: &relaxed,
        options: SolveOptions { max_iterations: 300, ..Default::default() },
        probes: Vec::new(),
        noise: Vec::new(),
        active_only,
    };

    let (mut lo, mut hi) = ALPHA_BRACKET;
    let mut witness = probe.run(lo)?.ok_or(ScenarioError::InfeasibleBase)?;
    if let Some(sol) = probe.run(hi)? {
        // the bracket cap is itself feasible; take it
        witness = sol;
        lo = hi;
    } else {
        while hi - lo > ALPHA_REL_TOL * lo {
            let mid = 0.5 * (lo + hi);
            match probe.run(mid)? {
                Some(sol) => {
                    witness = sol;
                    lo = mid;
                }
                None => hi = mid,
            }
        }
    }
    let alpha_star = lo;

    // The witness dispatch and scaled loads define a power-flow case:
    // active outputs become the capability snapshot the capacity model
    // references (a zero-output unit reads as a synchronous condenser),
    // the slack pickup stays unbounded, and reactive bounds return to
    // their stated values for the at-least-50% model to expand.
    let mut pf_case = scale_demand(net, alpha_star, active_only);
    pf_case.name = format!("{}__api", net.name);
    let bus_index = pf_case.bus_index();
    for (gp, g) in pf_case.generators.iter_mut().enumerate() {
        let at_slack = bus_index
            .get(&g.bus)
            .is_some_and(|&b| pf_case.buses[b].kind == gridcase_core::BusKind::Slack);
        g.pg = witness.pg[gp];
        g.qg = witness.qg[gp];
        g.v_set = witness.v[bus_index[&g.bus]];
        if at_slack {
            g.p_max = f64::INFINITY;
            g.p_min = 0.0f64.min(g.pg);
        } else {
            g.p_max = g.pg;
            g.p_min = g.p_min.min(g.pg);
        }
    }
    for (bp, b) in pf_case.buses.iter_mut().enumerate() {
        b.v_init = witness.v[bp];
        b.theta_init = witness.theta[bp];
    }

    let needs_classification = pf_case
        .generators
        .iter()
        .any(|g| g.status && g.fuel.is_none());
    let plan = AugmentPlan {
        gf_stat: needs_classification,
        ag_stat: true,
        reactive: Some(ReactiveModel::Al50),
        ac_stat: true,
        seed,
        ..Default::default()
    };
    let (mut out, augment) = apply_plan(&pf_case, &plan, models)?;

    // the completed case must admit its own set-points
    let mut q_widened = Vec::new();
    for (gp, g) in out.generators.iter_mut().enumerate() {
        if g.qg < g.q_min || g.qg > g.q_max {
            g.q_min = g.q_min.min(g.qg);
            g.q_max = g.q_max.max(g.qg);
            q_widened.push(gp);
        }
        if g.pg < g.p_min {
            g.p_min = g.pg.min(0.0);
        }
    }

    let log = ApiLog {
        schema_version: 1,
        seed,
        alpha_star,
        probes: probe.probes,
        oracle_noise: probe.noise,
        q_widened,
        augment,
    };
    Ok((out, log))
}
