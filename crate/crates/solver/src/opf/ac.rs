//! Full non-convex AC-OPF in polar voltage coordinates.
//!
//! Variables are bus voltage magnitudes and angles plus generator
//! injections; constraints are the AC power balances, two-sided
//! apparent-power thermal limits, and angle-difference bounds. All
//! first and second derivatives are analytic.
//!
//! The feasibility variant zeroes the cost and adds a nonnegative
//! elastic slack to every thermal and angle row, minimizing the total
//! violation: a zero optimum certifies feasibility and a positive one
//! measures the gap.

use crate::linalg::Triplets;
use crate::nlp::NlpProblem;
use crate::opf::FormulateError;
use crate::ybus::{branch_admittance, GridIndex};
use gridcase_core::{BusKind, Network};

/// What the formulation optimizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AcObjective {
    /// Generation cost in $/h.
    Cost,
    /// Total elastic violation of thermal and angle constraints.
    Feasibility,
}

#[derive(Debug, Clone, Copy)]
struct BusData {
    pd: f64,
    qd: f64,
    gs: f64,
    bs: f64,
    v_min: f64,
    v_max: f64,
    v0: f64,
    th0: f64,
}

#[derive(Debug, Clone, Copy)]
struct GenData {
    bus: usize,
    p_min: f64,
    p_max: f64,
    q_min: f64,
    q_max: f64,
    c2: f64,
    c1: f64,
    c0: f64,
    pg0: f64,
    qg0: f64,
}

#[derive(Debug, Clone, Copy)]
struct BranchData {
    from: usize,
    to: usize,
    // S_f = V_f (yff V_f + yft V_t)*, split into re/im parts
    gff: f64,
    bff: f64,
    gft: f64,
    bft: f64,
    gtt: f64,
    btt: f64,
    gtf: f64,
    btf: f64,
    rate: Option<f64>,
    angle: Option<(f64, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum End {
    From,
    To,
}

/// Polar AC-OPF as an [`NlpProblem`].
pub struct AcOpf {
    base: f64,
    nb: usize,
    ng: usize,
    buses: Vec<BusData>,
    gens: Vec<GenData>,
    branches: Vec<BranchData>,
    slack: usize,
    mode: AcObjective,
    /// inequality registry: one (branch, end) per thermal row
    thermal: Vec<(usize, End)>,
    /// branches with finite angle bounds: two rows each (max, then min)
    angles: Vec<usize>,
    /// network positions for mapping solutions back
    bus_pos: Vec<usize>,
    gen_pos: Vec<usize>,
}

/// Operating point recovered from a solve, indexed by the original
/// network positions.
#[derive(Debug, Clone)]
pub struct AcSolution {
    pub v: Vec<f64>,
    pub theta: Vec<f64>,
    pub pg: Vec<f64>,
    pub qg: Vec<f64>,
    /// total elastic violation (feasibility mode only)
    pub elastic_total: f64,
}

struct EndFlow {
    i_own: usize,
    i_oth: usize,
    p: f64,
    q: f64,
    gp: [f64; 3],
    gq: [f64; 3],
    hp: [[f64; 3]; 3],
    hq: [[f64; 3]; 3],
}

impl AcOpf {
    pub fn build(net: &Network, mode: AcObjective) -> Result<AcOpf, FormulateError> {
        let index = GridIndex::new(net);
        if index.gen_pos.is_empty() {
            return Err(FormulateError::NoGenerators);
        }
        let slack = index
            .bus_pos
            .iter()
            .position(|&p| net.buses[p].kind == BusKind::Slack)
            .ok_or(FormulateError::NoReference)?;
        let buses: Vec<BusData> = index
            .bus_pos
            .iter()
            .map(|&p| {
                let b = &net.buses[p];
                BusData {
                    pd: b.pd,
                    qd: b.qd,
                    gs: b.gs,
                    bs: b.bs,
                    v_min: b.v_min,
                    v_max: b.v_max,
                    v0: b.v_init.clamp(b.v_min, b.v_max),
                    th0: b.theta_init,
                }
            })
            .collect();
        let gens: Vec<GenData> = index
            .gen_pos
            .iter()
            .map(|&p| {
                let g = &net.generators[p];
                GenData {
                    bus: index.of_bus_id[&g.bus],
                    p_min: g.p_min,
                    p_max: g.p_max,
                    q_min: g.q_min,
                    q_max: g.q_max,
                    c2: g.cost.c2,
                    c1: g.cost.c1,
                    c0: g.cost.c0,
                    pg0: g.pg,
                    qg0: g.qg,
                }
            })
            .collect();
        let branches: Vec<BranchData> = index
            .branch_pos
            .iter()
            .map(|&p| {
                let ba = branch_admittance(net, &index, p);
                let br = &net.branches[p];
                BranchData {
                    from: ba.from,
                    to: ba.to,
                    gff: ba.yff.re,
                    bff: ba.yff.im,
                    gft: ba.yft.re,
                    bft: ba.yft.im,
                    gtt: ba.ytt.re,
                    btt: ba.ytt.im,
                    gtf: ba.ytf.re,
                    btf: ba.ytf.im,
                    rate: br.rate_a,
                    angle: br.has_angle_bounds().then_some((br.angle_min, br.angle_max)),
                }
            })
            .collect();
        let mut thermal = Vec::new();
        let mut angles = Vec::new();
        for (k, br) in branches.iter().enumerate() {
            if br.rate.is_some() {
                thermal.push((k, End::From));
                thermal.push((k, End::To));
            }
            if br.angle.is_some() {
                angles.push(k);
            }
        }
        Ok(AcOpf {
            base: net.base_mva,
            nb: buses.len(),
            ng: gens.len(),
            buses,
            gens,
            branches,
            slack,
            mode,
            thermal,
            angles,
            bus_pos: index.bus_pos,
            gen_pos: index.gen_pos,
        })
    }

    // variable layout
    fn off_th(&self) -> usize {
        self.nb
    }
    fn off_pg(&self) -> usize {
        2 * self.nb
    }
    fn off_qg(&self) -> usize {
        2 * self.nb + self.ng
    }
    fn off_elastic(&self) -> usize {
        2 * self.nb + 2 * self.ng
    }
    fn n_elastic(&self) -> usize {
        match self.mode {
            AcObjective::Cost => 0,
            AcObjective::Feasibility => self.thermal.len() + 2 * self.angles.len(),
        }
    }

    /// Map a solve result back to network positions.
    pub fn solution(&self, x: &[f64], nets_buses: usize, nets_gens: usize) -> AcSolution {
        let mut v = vec![1.0; nets_buses];
        let mut theta = vec![0.0; nets_buses];
        let mut pg = vec![0.0; nets_gens];
        let mut qg = vec![0.0; nets_gens];
        for (s, &p) in self.bus_pos.iter().enumerate() {
            v[p] = x[s];
            theta[p] = x[self.off_th() + s];
        }
        for (s, &p) in self.gen_pos.iter().enumerate() {
            pg[p] = x[self.off_pg() + s];
            qg[p] = x[self.off_qg() + s];
        }
        let elastic_total = x[self.off_elastic()..].iter().sum();
        AcSolution { v, theta, pg, qg, elastic_total }
    }

    /// Evaluate one branch end's (p, q) with local derivatives over
    /// (v_own, v_other, delta) where delta is the angle own - other.
    fn end_flow(&self, br: &BranchData, end: End, x: &[f64]) -> EndFlow {
        let (a, b, c, d, i_own, i_oth) = match end {
            End::From => (br.gff, br.bff, br.gft, br.bft, br.from, br.to),
            End::To => (br.gtt, br.btt, br.gtf, br.btf, br.to, br.from),
        };
        let nb_off = self.off_th();
        let v1 = x[i_own];
        let v2 = x[i_oth];
        let delta = x[nb_off + i_own] - x[nb_off + i_oth];
        let (sin, cos) = delta.sin_cos();
        let kk = c * cos + d * sin;
        let mm = c * sin - d * cos;
        EndFlow {
            i_own,
            i_oth,
            p: a * v1 * v1 + v1 * v2 * kk,
            q: -b * v1 * v1 + v1 * v2 * mm,
            gp: [2.0 * a * v1 + v2 * kk, v1 * kk, -v1 * v2 * mm],
            gq: [-2.0 * b * v1 + v2 * mm, v1 * mm, v1 * v2 * kk],
            hp: [
                [2.0 * a, kk, -v2 * mm],
                [kk, 0.0, -v1 * mm],
                [-v2 * mm, -v1 * mm, -v1 * v2 * kk],
            ],
            hq: [
                [-2.0 * b, mm, v2 * kk],
                [mm, 0.0, v1 * kk],
                [v2 * kk, v1 * kk, -v1 * v2 * mm],
            ],
        }
    }

    /// One end flow's local gradient as global (column, value) entries.
    fn grad_entries(&self, ef: &EndFlow, g: &[f64; 3]) -> [(usize, f64); 4] {
        [
            (ef.i_own, g[0]),
            (ef.i_oth, g[1]),
            (self.off_th() + ef.i_own, g[2]),
            (self.off_th() + ef.i_oth, -g[2]),
        ]
    }

    /// Scatter a weighted local symmetric Hessian over (v1, v2, delta).
    fn scatter_hess(&self, ef: &EndFlow, h: &[[f64; 3]; 3], w: f64, out: &mut Triplets) {
        if w == 0.0 {
            return;
        }
        let vars = [ef.i_own, ef.i_oth];
        for a in 0..2 {
            for b in 0..2 {
                if h[a][b] != 0.0 {
                    out.push(vars[a], vars[b], w * h[a][b]);
                }
            }
        }
        let tha = self.off_th() + ef.i_own;
        let thb = self.off_th() + ef.i_oth;
        for a in 0..2 {
            let hv = h[a][2];
            if hv != 0.0 {
                out.push(vars[a], tha, w * hv);
                out.push(tha, vars[a], w * hv);
                out.push(vars[a], thb, -w * hv);
                out.push(thb, vars[a], -w * hv);
            }
        }
        let hdd = h[2][2];
        if hdd != 0.0 {
            out.push(tha, tha, w * hdd);
            out.push(thb, thb, w * hdd);
            out.push(tha, thb, -w * hdd);
            out.push(thb, tha, -w * hdd);
        }
    }
}

impl NlpProblem for AcOpf {
    fn num_vars(&self) -> usize {
        2 * self.nb + 2 * self.ng + self.n_elastic()
    }

    fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.num_vars();
        let mut lo = vec![f64::NEG_INFINITY; n];
        let mut hi = vec![f64::INFINITY; n];
        for (i, b) in self.buses.iter().enumerate() {
            lo[i] = b.v_min;
            hi[i] = b.v_max;
        }
        // reference angle pinned at zero
        lo[self.off_th() + self.slack] = 0.0;
        hi[self.off_th() + self.slack] = 0.0;
        for (k, g) in self.gens.iter().enumerate() {
            lo[self.off_pg() + k] = g.p_min;
            hi[self.off_pg() + k] = g.p_max;
            lo[self.off_qg() + k] = g.q_min;
            hi[self.off_qg() + k] = g.q_max;
        }
        for e in 0..self.n_elastic() {
            lo[self.off_elastic() + e] = 0.0;
        }
        (lo, hi)
    }

    fn initial_point(&self) -> Vec<f64> {
        let mut x = vec![0.0; self.num_vars()];
        for (i, b) in self.buses.iter().enumerate() {
            x[i] = b.v0;
            x[self.off_th() + i] = b.th0 - self.buses[self.slack].th0;
        }
        for (k, g) in self.gens.iter().enumerate() {
            let pmid = if g.p_max.is_finite() { 0.5 * (g.p_min + g.p_max) } else { g.p_min };
            x[self.off_pg() + k] =
                if g.pg0.is_finite() { g.pg0.clamp(g.p_min, g.p_max) } else { pmid };
            let qmid = match (g.q_min.is_finite(), g.q_max.is_finite()) {
                (true, true) => 0.5 * (g.q_min + g.q_max),
                _ => 0.0,
            };
            x[self.off_qg() + k] =
                if g.qg0.is_finite() { g.qg0.clamp(g.q_min, g.q_max) } else { qmid };
        }
        x
    }

    fn num_eq(&self) -> usize {
        2 * self.nb
    }

    fn num_ineq(&self) -> usize {
        self.thermal.len() + 2 * self.angles.len()
    }

    fn objective(&self, x: &[f64]) -> f64 {
        match self.mode {
            AcObjective::Cost => self
                .gens
                .iter()
                .enumerate()
                .map(|(k, g)| {
                    let mw = x[self.off_pg() + k] * self.base;
                    g.c2 * mw * mw + g.c1 * mw + g.c0
                })
                .sum(),
            AcObjective::Feasibility => x[self.off_elastic()..].iter().sum(),
        }
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        match self.mode {
            AcObjective::Cost => {
                for (k, g) in self.gens.iter().enumerate() {
                    let mw = x[self.off_pg() + k] * self.base;
                    out[self.off_pg() + k] = (2.0 * g.c2 * mw + g.c1) * self.base;
                }
            }
            AcObjective::Feasibility => {
                for e in 0..self.n_elastic() {
                    out[self.off_elastic() + e] = 1.0;
                }
            }
        }
    }

    fn constraints(&self, x: &[f64], eq: &mut [f64], ineq: &mut [f64]) {
        eq.fill(0.0);
        for (i, b) in self.buses.iter().enumerate() {
            let v = x[i];
            eq[i] = b.pd + b.gs * v * v;
            eq[self.nb + i] = b.qd - b.bs * v * v;
        }
        for br in &self.branches {
            let ef = self.end_flow(br, End::From, x);
            eq[br.from] += ef.p;
            eq[self.nb + br.from] += ef.q;
            let et = self.end_flow(br, End::To, x);
            eq[br.to] += et.p;
            eq[self.nb + br.to] += et.q;
        }
        for (k, g) in self.gens.iter().enumerate() {
            eq[g.bus] -= x[self.off_pg() + k];
            eq[self.nb + g.bus] -= x[self.off_qg() + k];
        }

        let elastic = self.mode == AcObjective::Feasibility;
        for (row, &(bk, end)) in self.thermal.iter().enumerate() {
            let br = &self.branches[bk];
            let ef = self.end_flow(br, end, x);
            let t = br.rate.expect("thermal row on rated branch");
            // normalized by t^2 so every thermal row has unit scale
            let mut val = (ef.p * ef.p + ef.q * ef.q) / (t * t) - 1.0;
            if elastic {
                val -= x[self.off_elastic() + row];
            }
            ineq[row] = val;
        }
        let base_row = self.thermal.len();
        for (j, &bk) in self.angles.iter().enumerate() {
            let br = &self.branches[bk];
            let (amin, amax) = br.angle.expect("angle row on bounded branch");
            let delta = x[self.off_th() + br.from] - x[self.off_th() + br.to];
            let mut hi = delta - amax;
            let mut lo = amin - delta;
            if elastic {
                hi -= x[self.off_elastic() + base_row + 2 * j];
                lo -= x[self.off_elastic() + base_row + 2 * j + 1];
            }
            ineq[base_row + 2 * j] = hi;
            ineq[base_row + 2 * j + 1] = lo;
        }
    }

    fn jacobians(&self, x: &[f64]) -> (Triplets, Triplets) {
        let n = self.num_vars();
        let mut jeq = Triplets::new(2 * self.nb, n);
        for (i, b) in self.buses.iter().enumerate() {
            let v = x[i];
            if b.gs != 0.0 {
                jeq.push(i, i, 2.0 * b.gs * v);
            }
            if b.bs != 0.0 {
                jeq.push(self.nb + i, i, -2.0 * b.bs * v);
            }
        }
        for br in &self.branches {
            for end in [End::From, End::To] {
                let ef = self.end_flow(br, end, x);
                let bus = if end == End::From { br.from } else { br.to };
                for (col, v) in self.grad_entries(&ef, &ef.gp) {
                    jeq.push(bus, col, v);
                }
                for (col, v) in self.grad_entries(&ef, &ef.gq) {
                    jeq.push(self.nb + bus, col, v);
                }
            }
        }
        for (k, g) in self.gens.iter().enumerate() {
            jeq.push(g.bus, self.off_pg() + k, -1.0);
            jeq.push(self.nb + g.bus, self.off_qg() + k, -1.0);
        }

        let elastic = self.mode == AcObjective::Feasibility;
        let mut ji = Triplets::new(self.num_ineq(), n);
        for (row, &(bk, end)) in self.thermal.iter().enumerate() {
            let br = &self.branches[bk];
            let ef = self.end_flow(br, end, x);
            let t = br.rate.expect("thermal row on rated branch");
            let inv = 1.0 / (t * t);
            for (col, gpv) in self.grad_entries(&ef, &ef.gp) {
                ji.push(row, col, 2.0 * inv * ef.p * gpv);
            }
            for (col, gqv) in self.grad_entries(&ef, &ef.gq) {
                ji.push(row, col, 2.0 * inv * ef.q * gqv);
            }
            if elastic {
                ji.push(row, self.off_elastic() + row, -1.0);
            }
        }
        let base_row = self.thermal.len();
        for (j, &bk) in self.angles.iter().enumerate() {
            let br = &self.branches[bk];
            let (thf, tht) = (self.off_th() + br.from, self.off_th() + br.to);
            ji.push(base_row + 2 * j, thf, 1.0);
            ji.push(base_row + 2 * j, tht, -1.0);
            ji.push(base_row + 2 * j + 1, thf, -1.0);
            ji.push(base_row + 2 * j + 1, tht, 1.0);
            if elastic {
                ji.push(base_row + 2 * j, self.off_elastic() + base_row + 2 * j, -1.0);
                ji.push(base_row + 2 * j + 1, self.off_elastic() + base_row + 2 * j + 1, -1.0);
            }
        }
        (jeq, ji)
    }

    fn lagrangian_hessian(
        &self,
        x: &[f64],
        obj_weight: f64,
        lam_eq: &[f64],
        lam_ineq: &[f64],
    ) -> Triplets {
        let n = self.num_vars();
        let mut h = Triplets::new(n, n);
        if obj_weight != 0.0 {
            if let AcObjective::Cost = self.mode {
                for (k, g) in self.gens.iter().enumerate() {
                    if g.c2 != 0.0 {
                        let slot = self.off_pg() + k;
                        h.push(slot, slot, obj_weight * 2.0 * g.c2 * self.base * self.base);
                    }
                }
            }
        }
        // shunt curvature in the balance rows
        for (i, b) in self.buses.iter().enumerate() {
            let w = 2.0 * b.gs * lam_eq[i] - 2.0 * b.bs * lam_eq[self.nb + i];
            if w != 0.0 {
                h.push(i, i, w);
            }
        }
        // thermal multipliers by (branch, end) slot
        let mut thermal_lam: Vec<f64> = vec![0.0; self.branches.len() * 2];
        for (row, &(bk, end)) in self.thermal.iter().enumerate() {
            let slot = 2 * bk + usize::from(end == End::To);
            thermal_lam[slot] = lam_ineq[row];
        }
        for (bk, br) in self.branches.iter().enumerate() {
            for end in [End::From, End::To] {
                let ef = self.end_flow(br, end, x);
                let bus = if end == End::From { br.from } else { br.to };
                let mut wp = lam_eq[bus];
                let mut wq = lam_eq[self.nb + bus];
                let mut lam_t = thermal_lam[2 * bk + usize::from(end == End::To)];
                if let Some(t) = br.rate {
                    lam_t /= t * t;
                }
                if lam_t != 0.0 {
                    // s^2 = p^2 + q^2: outer products plus chained curvature
                    wp += 2.0 * ef.p * lam_t;
                    wq += 2.0 * ef.q * lam_t;
                    let gp = self.grad_entries(&ef, &ef.gp);
                    let gq = self.grad_entries(&ef, &ef.gq);
                    for &(ca, va) in &gp {
                        for &(cb, vb) in &gp {
                            h.push(ca, cb, 2.0 * lam_t * va * vb);
                        }
                    }
                    for &(ca, va) in &gq {
                        for &(cb, vb) in &gq {
                            h.push(ca, cb, 2.0 * lam_t * va * vb);
                        }
                    }
                }
                self.scatter_hess(&ef, &ef.hp, wp, &mut h);
                self.scatter_hess(&ef, &ef.hq, wq, &mut h);
            }
        }
        h
    }
}

/// Formulate the cost-minimizing AC-OPF.
pub fn formulate_ac(net: &Network) -> Result<AcOpf, FormulateError> {
    AcOpf::build(net, AcObjective::Cost)
}

/// Formulate the elastic feasibility problem: zero cost, minimized
/// violation slacks on thermal and angle rows.
pub fn formulate_ac_feasibility(net: &Network) -> Result<AcOpf, FormulateError> {
    AcOpf::build(net, AcObjective::Feasibility)
}
