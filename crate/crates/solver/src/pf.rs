//! Newton-Raphson AC power flow in polar coordinates.
//!
//! The feasibility oracle used for case validation and scenario
//! generation. Starts from each bus's stored voltage guess, holds
//! generator voltage set-points at PV buses and the slack bus, and
//! iterates full Newton steps on the polar mismatch equations.

use crate::linalg::{solve_sparse, LinalgError, Triplets};
use crate::ybus::{C64, GridIndex, YBus};
use gridcase_core::model::Element;
use gridcase_core::{BusKind, Network, Violation};
use thiserror::Error;

/// Matrices smaller than this solve through the dense path.
const DENSE_CUTOFF: usize = 100;

pub const DEFAULT_TOLERANCE: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 30;

#[derive(Debug, Error)]
pub enum PfError {
    #[error("no slack bus among active buses")]
    NoSlack,
    #[error("{0} slack buses among active buses; exactly one required")]
    MultipleSlack(usize),
    #[error("Jacobian is singular at iteration {iteration}")]
    SingularJacobian { iteration: usize },
    #[error("diverged: mismatch {mismatch:.3e} after {iterations} iterations")]
    Diverged { iterations: usize, mismatch: f64 },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Apparent power flow at both ends of one branch (p.u.).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BranchFlow {
    pub p_from: f64,
    pub q_from: f64,
    pub p_to: f64,
    pub q_to: f64,
    pub s_from: f64,
    pub s_to: f64,
}

/// Converged operating point. Vectors are indexed by position in the
/// network's bus/branch/generator lists; inactive elements keep their
/// input values (voltages) or zeros (flows, dispatch).
#[derive(Debug, Clone)]
pub struct PowerFlowSolution {
    pub v: Vec<f64>,
    pub theta: Vec<f64>,
    pub flows: Vec<BranchFlow>,
    pub gen_p: Vec<f64>,
    pub gen_q: Vec<f64>,
    pub mismatch_inf: f64,
    pub iterations: usize,
    pub converged: bool,
}


/// Precomputed power-flow structure: admittances, injections, bus
/// roles, and the unknown layout.
struct PfSetup {
    n: usize,
    ybus: YBus,
    gen_at: Vec<Vec<usize>>,
    slack: usize,
    is_pv: Vec<bool>,
    s_spec: Vec<C64>,
    theta_cols: Vec<usize>,
    vm_cols: Vec<usize>,
    col_of_theta: Vec<usize>,
    col_of_vm: Vec<usize>,
    nth: usize,
    nun: usize,
}

impl PfSetup {
    fn new(net: &Network, index: &GridIndex) -> Result<PfSetup, PfError> {
        let n = index.n_bus();
        let ybus = YBus::new(net, index);
        let mut gen_at = vec![Vec::new(); n];
        for &gp in &index.gen_pos {
            gen_at[index.of_bus_id[&net.generators[gp].bus]].push(gp);
        }
        let mut slack = None;
        let mut is_pv = vec![false; n];
        for (s, &p) in index.bus_pos.iter().enumerate() {
            match net.buses[p].kind {
                BusKind::Slack => {
                    if slack.replace(s).is_some() {
                        let count = index
                            .bus_pos
                            .iter()
                            .filter(|&&p| net.buses[p].kind == BusKind::Slack)
                            .count();
                        return Err(PfError::MultipleSlack(count));
                    }
                }
                BusKind::Pv => is_pv[s] = !gen_at[s].is_empty(),
                _ => {}
            }
        }
        let slack = slack.ok_or(PfError::NoSlack)?;
        let mut s_spec = vec![C64::default(); n];
        for (s, &p) in index.bus_pos.iter().enumerate() {
            let bus = &net.buses[p];
            s_spec[s] -= C64::new(bus.pd, bus.qd);
            for &gp in &gen_at[s] {
                let g = &net.generators[gp];
                s_spec[s] += C64::new(g.pg, g.qg);
            }
        }
        let mut theta_cols = Vec::new();
        let mut vm_cols = Vec::new();
        for s in 0..n {
            if s != slack {
                theta_cols.push(s);
            }
            if s != slack && !is_pv[s] {
                vm_cols.push(s);
            }
        }
        let nth = theta_cols.len();
        let nun = nth + vm_cols.len();
        let mut col_of_theta = vec![usize::MAX; n];
        let mut col_of_vm = vec![usize::MAX; n];
        for (c, &s) in theta_cols.iter().enumerate() {
            col_of_theta[s] = c;
        }
        for (c, &s) in vm_cols.iter().enumerate() {
            col_of_vm[s] = nth + c;
        }
        Ok(PfSetup {
            n,
            ybus,
            gen_at,
            slack,
            is_pv,
            s_spec,
            theta_cols,
            vm_cols,
            col_of_theta,
            col_of_vm,
            nth,
            nun,
        })
    }

    /// Mismatch vector (P rows at non-slack, Q rows at PQ), complex
    /// voltages, and the worst absolute residual.
    fn mismatch(&self, vm: &[f64], va: &[f64]) -> (Vec<f64>, Vec<C64>, f64) {
        let v: Vec<C64> = vm.iter().zip(va).map(|(&m, &a)| C64::from_polar(m, a)).collect();
        let s = self.ybus.injections(&v);
        let mut f = vec![0.0; self.nun];
        let mut worst = 0.0f64;
        for i in 0..self.n {
            let d = s[i] - self.s_spec[i];
            if self.col_of_theta[i] != usize::MAX {
                f[self.col_of_theta[i]] = d.re;
                worst = worst.max(d.re.abs());
            }
            if self.col_of_vm[i] != usize::MAX {
                f[self.col_of_vm[i]] = d.im;
                worst = worst.max(d.im.abs());
            }
        }
        (f, v, worst)
    }

    /// Analytic mismatch Jacobian over the unknowns (theta, vm).
    fn jacobian(&self, vm: &[f64], vc: &[C64]) -> Triplets {
        let currents = self.ybus.currents(vc);
        let (row_of_p, row_of_q) = (&self.col_of_theta, &self.col_of_vm);
        let mut jac = Triplets::new(self.nun, self.nun);
        for i in 0..self.n {
            let rp = row_of_p[i];
            let rq = row_of_q[i];
            if rp == usize::MAX && rq == usize::MAX {
                continue;
            }
            for &(k, y) in &self.ybus.rows[i] {
                // dS_i/dtheta_k and dS_i/d|V_k|
                let (ds_dth, ds_dvm) = if i == k {
                    let dth = C64::i() * vc[i] * (currents[i] - y * vc[i]).conj();
                    let dvm =
                        vc[i] * (y * vc[i] / vm[i]).conj() + currents[i].conj() * vc[i] / vm[i];
                    (dth, dvm)
                } else {
                    let dth = -C64::i() * vc[i] * (y * vc[k]).conj();
                    let dvm = vc[i] * (y * vc[k] / vm[k]).conj();
                    (dth, dvm)
                };
                let cth = self.col_of_theta[k];
                let cvm = self.col_of_vm[k];
                if cth != usize::MAX {
                    if rp != usize::MAX {
                        jac.push(rp, cth, ds_dth.re);
                    }
                    if rq != usize::MAX {
                        jac.push(rq, cth, ds_dth.im);
                    }
                }
                if cvm != usize::MAX {
                    if rp != usize::MAX {
                        jac.push(rp, cvm, ds_dvm.re);
                    }
                    if rq != usize::MAX {
                        jac.push(rq, cvm, ds_dvm.im);
                    }
                }
            }
        }
        jac
    }
}

/// Solve the AC power flow. PV buses without an in-service generator
/// are treated as PQ.
pub fn solve_pf(net: &Network, tolerance: f64, max_iter: usize) -> Result<PowerFlowSolution, PfError> {
    let index = GridIndex::new(net);
    let sys = PfSetup::new(net, &index)?;
    let n = sys.n;

    // initial voltages: stored guess, set-points at voltage-held buses,
    // angles referenced to the slack
    let theta_ref = net.buses[index.bus_pos[sys.slack]].theta_init;
    let mut vm: Vec<f64> = index.bus_pos.iter().map(|&p| net.buses[p].v_init).collect();
    let mut va: Vec<f64> =
        index.bus_pos.iter().map(|&p| net.buses[p].theta_init - theta_ref).collect();
    for s in 0..n {
        if s == sys.slack || sys.is_pv[s] {
            if let Some(&gp) = sys.gen_at[s].first() {
                vm[s] = net.generators[gp].v_set;
            }
        }
    }

    let mut iterations = 0;
    let mut converged = false;
    let (mut f, mut vc, mut worst) = sys.mismatch(&vm, &va);
    if sys.nun == 0 {
        worst = 0.0;
    }
    while worst > tolerance && iterations < max_iter {
        iterations += 1;
        let jac = sys.jacobian(&vm, &vc);
        let rhs: Vec<f64> = f.iter().map(|v| -v).collect();
        let dx = solve_sparse(&jac.to_csc(), &rhs, DENSE_CUTOFF).map_err(|e| match e {
            LinalgError::Singular(_) => PfError::SingularJacobian { iteration: iterations },
            other => PfError::Linalg(other),
        })?;
        for (c, &s) in sys.theta_cols.iter().enumerate() {
            va[s] += dx[c];
        }
        for (c, &s) in sys.vm_cols.iter().enumerate() {
            vm[s] += dx[sys.nth + c];
        }
        (f, vc, worst) = sys.mismatch(&vm, &va);
        if !worst.is_finite() {
            return Err(PfError::Diverged { iterations, mismatch: worst });
        }
    }
    drop(f);
    converged |= worst <= tolerance;

    // dispatch recovered at voltage-controlled buses
    let injections = sys.ybus.injections(&vc);
    let mut gen_p = vec![0.0; net.generators.len()];
    let mut gen_q = vec![0.0; net.generators.len()];
    for &gp in &index.gen_pos {
        gen_p[gp] = net.generators[gp].pg;
        gen_q[gp] = net.generators[gp].qg;
    }
    for s in 0..n {
        if sys.gen_at[s].is_empty() {
            continue;
        }
        let bus = &net.buses[index.bus_pos[s]];
        if s == sys.slack {
            let p_total = injections[s].re + bus.pd;
            share_out(net, &sys.gen_at[s], p_total, &mut gen_p, ShareBy::ActiveRange);
        }
        if s == sys.slack || sys.is_pv[s] {
            let q_total = injections[s].im + bus.qd;
            share_out(net, &sys.gen_at[s], q_total, &mut gen_q, ShareBy::ReactiveRange);
        }
    }

    let flows = branch_flows_inner(&sys.ybus, &vc);

    let mut v_out: Vec<f64> = net.buses.iter().map(|b| b.v_init).collect();
    let mut th_out: Vec<f64> = net.buses.iter().map(|b| b.theta_init).collect();
    for (s, &p) in index.bus_pos.iter().enumerate() {
        v_out[p] = vm[s];
        th_out[p] = va[s];
    }
    let mut flow_out = vec![BranchFlow::default(); net.branches.len()];
    for (bf, ba) in flows.iter().zip(&sys.ybus.branches) {
        flow_out[ba.pos] = *bf;
    }

    if !converged {
        return Err(PfError::Diverged { iterations, mismatch: worst });
    }
    Ok(PowerFlowSolution {
        v: v_out,
        theta: th_out,
        flows: flow_out,
        gen_p,
        gen_q,
        mismatch_inf: worst,
        iterations,
        converged,
    })
}

enum ShareBy {
    ActiveRange,
    ReactiveRange,
}

/// Split a bus total across its generators proportionally to their
/// capability range, equally when ranges are degenerate or infinite.
fn share_out(net: &Network, gens: &[usize], total: f64, out: &mut [f64], by: ShareBy) {
    let range = |gp: usize| -> f64 {
        let g = &net.generators[gp];
        let r = match by {
            ShareBy::ActiveRange => g.p_max - g.p_min,
            ShareBy::ReactiveRange => g.q_max - g.q_min,
        };
        if r.is_finite() && r > 0.0 {
            r
        } else {
            -1.0
        }
    };
    let ranges: Vec<f64> = gens.iter().map(|&g| range(g)).collect();
    let all_finite = ranges.iter().all(|&r| r >= 0.0);
    let sum: f64 = ranges.iter().sum();
    for (k, &gp) in gens.iter().enumerate() {
        let w = if all_finite && sum > 0.0 { ranges[k] / sum } else { 1.0 / gens.len() as f64 };
        out[gp] = total * w;
    }
}

fn branch_flows_inner(ybus: &YBus, v: &[C64]) -> Vec<BranchFlow> {
    ybus.branches
        .iter()
        .map(|ba| {
            let sf = v[ba.from] * (ba.yff * v[ba.from] + ba.yft * v[ba.to]).conj();
            let st = v[ba.to] * (ba.ytf * v[ba.from] + ba.ytt * v[ba.to]).conj();
            BranchFlow {
                p_from: sf.re,
                q_from: sf.im,
                p_to: st.re,
                q_to: st.im,
                s_from: sf.norm(),
                s_to: st.norm(),
            }
        })
        .collect()
}

/// Π-model branch flows for externally supplied voltages (indexed by
/// position in `net.buses`). Open branches report zeros.
pub fn branch_flows(net: &Network, v: &[f64], theta: &[f64]) -> Vec<BranchFlow> {
    let index = GridIndex::new(net);
    let ybus = YBus::new(net, &index);
    let vc: Vec<C64> = index
        .bus_pos
        .iter()
        .map(|&p| C64::from_polar(v[p], theta[p]))
        .collect();
    let flows = branch_flows_inner(&ybus, &vc);
    let mut out = vec![BranchFlow::default(); net.branches.len()];
    for (bf, ba) in flows.iter().zip(&ybus.branches) {
        out[ba.pos] = *bf;
    }
    out
}

/// Operating-limit tolerance used by `check_operational`.
const LIMIT_TOL: f64 = 1e-6;

/// Report every thermal, voltage, generator-bound, and angle-difference
/// violation of a solved operating point.
pub fn check_operational(net: &Network, sol: &PowerFlowSolution) -> Vec<Violation> {
    let mut out = Vec::new();
    let index = GridIndex::new(net);
    for &p in &index.bus_pos {
        let bus = &net.buses[p];
        let v = sol.v[p];
        if v < bus.v_min - LIMIT_TOL || v > bus.v_max + LIMIT_TOL {
            out.push(Violation {
                element: Element::Bus(bus.id),
                reason: format!(
                    "voltage {v:.4} p.u. outside [{}, {}]",
                    bus.v_min, bus.v_max
                ),
            });
        }
    }
    for &bp in &index.branch_pos {
        let br = &net.branches[bp];
        let flow = &sol.flows[bp];
        if let Some(rate) = br.rate_a {
            let s = flow.s_from.max(flow.s_to);
            if s > rate + LIMIT_TOL {
                out.push(Violation {
                    element: Element::Branch(bp),
                    reason: format!(
                        "apparent flow {s:.4} p.u. exceeds thermal limit {rate} ({:.1}%)",
                        100.0 * s / rate
                    ),
                });
            }
        }
        let f = index.of_bus_id[&br.from_bus];
        let t = index.of_bus_id[&br.to_bus];
        let delta = sol.theta[index.bus_pos[f]] - sol.theta[index.bus_pos[t]];
        if delta < br.angle_min - LIMIT_TOL || delta > br.angle_max + LIMIT_TOL {
            out.push(Violation {
                element: Element::Branch(bp),
                reason: format!(
                    "angle difference {:.3} deg outside [{:.3}, {:.3}]",
                    delta.to_degrees(),
                    br.angle_min.to_degrees(),
                    br.angle_max.to_degrees()
                ),
            });
        }
    }
    for &gp in &index.gen_pos {
        let g = &net.generators[gp];
        let (pg, qg) = (sol.gen_p[gp], sol.gen_q[gp]);
        if pg < g.p_min - LIMIT_TOL || pg > g.p_max + LIMIT_TOL {
            out.push(Violation {
                element: Element::Generator(gp),
                reason: format!("active output {pg:.4} p.u. outside [{}, {}]", g.p_min, g.p_max),
            });
        }
        if qg < g.q_min - LIMIT_TOL || qg > g.q_max + LIMIT_TOL {
            out.push(Violation {
                element: Element::Generator(gp),
                reason: format!(
                    "reactive output {qg:.4} p.u. outside [{}, {}]",
                    g.q_min, g.q_max
                ),
            });
        }
    }
    out
}
