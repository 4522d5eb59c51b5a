//! Network-flow relaxation with convexified line losses.
//!
//! Directed terminal flows per branch end obey bus-level conservation;
//! a per-branch series current proxy couples them to losses:
//!
//! ```text
//!   p_f + p_t >= r * l
//!   q_f + q_t >= x * l - (bc/2) (w_f / tap^2 + w_t)       (x > 0 only)
//!   l >= tap^2 (p_f^2 + q_sf^2) / vmax_f^2,  q_sf = q_f + (bc/2) w_f / tap^2
//!   l >=        (p_t^2 + q_st^2) / vmax_t^2,  q_st = q_t + (bc/2) w_t
//! ```
//!
//! where `w` is a boxed squared-voltage variable used for shunts and
//! charging. Every AC-feasible point maps onto a feasible point here
//! with the same cost, and the model is convex, so its optimum is a
//! valid lower bound that also dominates the copper plate.

use crate::linalg::Triplets;
use crate::nlp::NlpProblem;
use crate::opf::FormulateError;
use crate::ybus::GridIndex;
use gridcase_core::Network;

#[derive(Debug, Clone, Copy)]
struct NfBranch {
    from: usize,
    to: usize,
    r: f64,
    x: f64,
    half_charge: f64,
    inv_tap2: f64,
    vmax2_f: f64,
    vmax2_t: f64,
    rate: Option<f64>,
}

pub struct NetworkFlow {
    base: f64,
    nb: usize,
    ng: usize,
    nl: usize,
    pd: Vec<f64>,
    qd: Vec<f64>,
    gs: Vec<f64>,
    bs: Vec<f64>,
    w_lo: Vec<f64>,
    w_hi: Vec<f64>,
    gen_bus: Vec<usize>,
    gen_bounds: Vec<(f64, f64, f64, f64)>,
    gen_start: Vec<(f64, f64)>,
    cost: Vec<(f64, f64, f64)>,
    branches: Vec<NfBranch>,
    /// rows: (branch, is_to_end) for each thermal constraint
    thermal: Vec<(usize, bool)>,
    /// branches with an x > 0 reactive loss row
    qloss: Vec<usize>,
    pub gen_pos: Vec<usize>,
}

pub fn formulate_nfll(net: &Network) -> Result<NetworkFlow, FormulateError> {
    let index = GridIndex::new(net);
    if index.gen_pos.is_empty() {
        return Err(FormulateError::NoGenerators);
    }
    let nb = index.n_bus();
    let branches: Vec<NfBranch> = index
        .branch_pos
        .iter()
        .map(|&p| {
            let br = &net.branches[p];
            let f = index.of_bus_id[&br.from_bus];
            let t = index.of_bus_id[&br.to_bus];
            NfBranch {
                from: f,
                to: t,
                r: br.r,
                x: br.x,
                half_charge: br.b_charge / 2.0,
                inv_tap2: 1.0 / (br.tap * br.tap),
                vmax2_f: net.buses[index.bus_pos[f]].v_max.powi(2),
                vmax2_t: net.buses[index.bus_pos[t]].v_max.powi(2),
                rate: br.rate_a,
            }
        })
        .collect();
    let mut thermal = Vec::new();
    let mut qloss = Vec::new();
    for (k, br) in branches.iter().enumerate() {
        if br.rate.is_some() {
            thermal.push((k, false));
            thermal.push((k, true));
        }
        if br.x > 0.0 {
            qloss.push(k);
        }
    }
    let gens: Vec<_> = index.gen_pos.iter().map(|&p| &net.generators[p]).collect();
    Ok(NetworkFlow {
        base: net.base_mva,
        nb,
        ng: gens.len(),
        nl: branches.len(),
        pd: index.bus_pos.iter().map(|&p| net.buses[p].pd).collect(),
        qd: index.bus_pos.iter().map(|&p| net.buses[p].qd).collect(),
        gs: index.bus_pos.iter().map(|&p| net.buses[p].gs).collect(),
        bs: index.bus_pos.iter().map(|&p| net.buses[p].bs).collect(),
        w_lo: index.bus_pos.iter().map(|&p| net.buses[p].v_min.powi(2)).collect(),
        w_hi: index.bus_pos.iter().map(|&p| net.buses[p].v_max.powi(2)).collect(),
        gen_bus: gens.iter().map(|g| index.of_bus_id[&g.bus]).collect(),
        gen_bounds: gens.iter().map(|g| (g.p_min, g.p_max, g.q_min, g.q_max)).collect(),
        gen_start: gens.iter().map(|g| (g.pg, g.qg)).collect(),
        cost: gens.iter().map(|g| (g.cost.c2, g.cost.c1, g.cost.c0)).collect(),
        branches,
        thermal,
        qloss,
        gen_pos: index.gen_pos,
    })
}

impl NetworkFlow {
    // variable layout: pg, qg, w, then per branch (pf, pt, qf, qt, l)
    fn off_qg(&self) -> usize {
        self.ng
    }
    fn off_w(&self) -> usize {
        2 * self.ng
    }
    fn off_br(&self, k: usize) -> usize {
        2 * self.ng + self.nb + 5 * k
    }

    fn series_q(&self, x: &[f64], k: usize, to_end: bool) -> (f64, f64) {
        // (series reactive flow, dq/dw coefficient)
        let br = &self.branches[k];
        let o = self.off_br(k);
        if to_end {
            let coef = br.half_charge;
            (x[o + 3] + coef * x[self.off_w() + br.to], coef)
        } else {
            let coef = br.half_charge * br.inv_tap2;
            (x[o + 2] + coef * x[self.off_w() + br.from], coef)
        }
    }
}

impl NlpProblem for NetworkFlow {
    fn num_vars(&self) -> usize {
        2 * self.ng + self.nb + 5 * self.nl
    }

    fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.num_vars();
        let mut lo = vec![f64::NEG_INFINITY; n];
        let mut hi = vec![f64::INFINITY; n];
        for (k, &(pmin, pmax, qmin, qmax)) in self.gen_bounds.iter().enumerate() {
            lo[k] = pmin;
            hi[k] = pmax;
            lo[self.off_qg() + k] = qmin;
            hi[self.off_qg() + k] = qmax;
        }
        for i in 0..self.nb {
            lo[self.off_w() + i] = self.w_lo[i];
            hi[self.off_w() + i] = self.w_hi[i];
        }
        for k in 0..self.nl {
            lo[self.off_br(k) + 4] = 0.0; // current proxy is nonnegative
        }
        (lo, hi)
    }

    fn initial_point(&self) -> Vec<f64> {
        let mut x = vec![0.0; self.num_vars()];
        for (k, &(pg, qg)) in self.gen_start.iter().enumerate() {
            let (pmin, pmax, qmin, qmax) = self.gen_bounds[k];
            x[k] = pg.clamp(pmin, pmax);
            x[self.off_qg() + k] = qg.clamp(qmin, qmax);
        }
        for i in 0..self.nb {
            x[self.off_w() + i] = 0.5 * (self.w_lo[i] + self.w_hi[i]);
        }
        for k in 0..self.nl {
            x[self.off_br(k) + 4] = 0.1;
        }
        x
    }

    fn num_eq(&self) -> usize {
        2 * self.nb
    }

    fn num_ineq(&self) -> usize {
        // p-loss and two current rows per branch, q-loss where x > 0,
        // thermal rows per rated end
        3 * self.nl + self.qloss.len() + self.thermal.len()
    }

    fn objective(&self, x: &[f64]) -> f64 {
        x.iter()
            .take(self.ng)
            .zip(&self.cost)
            .map(|(&p, &(c2, c1, c0))| {
                let mw = p * self.base;
                c2 * mw * mw + c1 * mw + c0
            })
            .sum()
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for (k, &(c2, c1, _)) in self.cost.iter().enumerate() {
            out[k] = (2.0 * c2 * x[k] * self.base + c1) * self.base;
        }
    }

    fn constraints(&self, x: &[f64], eq: &mut [f64], ineq: &mut [f64]) {
        for i in 0..self.nb {
            let w = x[self.off_w() + i];
            eq[i] = self.pd[i] + self.gs[i] * w;
            eq[self.nb + i] = self.qd[i] - self.bs[i] * w;
        }
        for (k, br) in self.branches.iter().enumerate() {
            let o = self.off_br(k);
            eq[br.from] += x[o];
            eq[br.to] += x[o + 1];
            eq[self.nb + br.from] += x[o + 2];
            eq[self.nb + br.to] += x[o + 3];
        }
        for (k, &bus) in self.gen_bus.iter().enumerate() {
            eq[bus] -= x[k];
            eq[self.nb + bus] -= x[self.off_qg() + k];
        }

        let mut row = 0;
        for (k, br) in self.branches.iter().enumerate() {
            let o = self.off_br(k);
            let l = x[o + 4];
            ineq[row] = br.r * l - x[o] - x[o + 1];
            row += 1;
            let (qsf, _) = self.series_q(x, k, false);
            let (qst, _) = self.series_q(x, k, true);
            let tap2 = br.inv_tap2.recip();
            ineq[row] = (x[o] * x[o] + qsf * qsf) * tap2 / br.vmax2_f - l;
            row += 1;
            ineq[row] = (x[o + 1] * x[o + 1] + qst * qst) / br.vmax2_t - l;
            row += 1;
        }
        for &k in &self.qloss {
            let br = &self.branches[k];
            let o = self.off_br(k);
            let wf = x[self.off_w() + br.from];
            let wt = x[self.off_w() + br.to];
            ineq[row] = br.x * x[o + 4]
                - x[o + 2]
                - x[o + 3]
                - br.half_charge * (wf * br.inv_tap2 + wt);
            row += 1;
        }
        for &(k, to_end) in &self.thermal {
            let br = &self.branches[k];
            let o = self.off_br(k);
            let t = br.rate.expect("thermal row on rated branch");
            let (p, q) = if to_end { (x[o + 1], x[o + 3]) } else { (x[o], x[o + 2]) };
            ineq[row] = (p * p + q * q) / (t * t) - 1.0;
            row += 1;
        }
    }

    fn jacobians(&self, x: &[f64]) -> (Triplets, Triplets) {
        let n = self.num_vars();
        let mut jeq = Triplets::new(2 * self.nb, n);
        for i in 0..self.nb {
            if self.gs[i] != 0.0 {
                jeq.push(i, self.off_w() + i, self.gs[i]);
            }
            if self.bs[i] != 0.0 {
                jeq.push(self.nb + i, self.off_w() + i, -self.bs[i]);
            }
        }
        for (k, br) in self.branches.iter().enumerate() {
            let o = self.off_br(k);
            jeq.push(br.from, o, 1.0);
            jeq.push(br.to, o + 1, 1.0);
            jeq.push(self.nb + br.from, o + 2, 1.0);
            jeq.push(self.nb + br.to, o + 3, 1.0);
        }
        for (k, &bus) in self.gen_bus.iter().enumerate() {
            jeq.push(bus, k, -1.0);
            jeq.push(self.nb + bus, self.off_qg() + k, -1.0);
        }

        let mut ji = Triplets::new(self.num_ineq(), n);
        let mut row = 0;
        for (k, br) in self.branches.iter().enumerate() {
            let o = self.off_br(k);
            ji.push(row, o + 4, br.r);
            ji.push(row, o, -1.0);
            ji.push(row, o + 1, -1.0);
            row += 1;
            // from-side current: tap^2 (pf^2 + qsf^2)/vmax2_f - l
            let tap2 = br.inv_tap2.recip();
            let (qsf, dw_f) = self.series_q(x, k, false);
            let sf = tap2 / br.vmax2_f;
            ji.push(row, o, 2.0 * sf * x[o]);
            ji.push(row, o + 2, 2.0 * sf * qsf);
            if dw_f != 0.0 {
                ji.push(row, self.off_w() + br.from, 2.0 * sf * qsf * dw_f);
            }
            ji.push(row, o + 4, -1.0);
            row += 1;
            let (qst, dw_t) = self.series_q(x, k, true);
            let st = 1.0 / br.vmax2_t;
            ji.push(row, o + 1, 2.0 * st * x[o + 1]);
            ji.push(row, o + 3, 2.0 * st * qst);
            if dw_t != 0.0 {
                ji.push(row, self.off_w() + br.to, 2.0 * st * qst * dw_t);
            }
            ji.push(row, o + 4, -1.0);
            row += 1;
        }
        for &k in &self.qloss {
            let br = &self.branches[k];
            let o = self.off_br(k);
            ji.push(row, o + 4, br.x);
            ji.push(row, o + 2, -1.0);
            ji.push(row, o + 3, -1.0);
            if br.half_charge != 0.0 {
                ji.push(row, self.off_w() + br.from, -br.half_charge * br.inv_tap2);
                ji.push(row, self.off_w() + br.to, -br.half_charge);
            }
            row += 1;
        }
        for &(k, to_end) in &self.thermal {
            let o = self.off_br(k);
            let t = self.branches[k].rate.expect("thermal row on rated branch");
            let inv = 1.0 / (t * t);
            let (ip, iq) = if to_end { (o + 1, o + 3) } else { (o, o + 2) };
            ji.push(row, ip, 2.0 * inv * x[ip]);
            ji.push(row, iq, 2.0 * inv * x[iq]);
            row += 1;
        }
        (jeq, ji)
    }

    fn lagrangian_hessian(
        &self,
        x: &[f64],
        obj_weight: f64,
        _lam_eq: &[f64],
        lam_ineq: &[f64],
    ) -> Triplets {
        let _ = x;
        let n = self.num_vars();
        let mut h = Triplets::new(n, n);
        for (k, &(c2, ..)) in self.cost.iter().enumerate() {
            if c2 != 0.0 && obj_weight != 0.0 {
                h.push(k, k, obj_weight * 2.0 * c2 * self.base * self.base);
            }
        }
        let mut row = 0;
        for (k, br) in self.branches.iter().enumerate() {
            let o = self.off_br(k);
            row += 1; // p-loss row is linear
            // current rows: quadratic forms (p, q + c w)^2 scaled
            let tap2 = br.inv_tap2.recip();
            for to_end in [false, true] {
                let lam = lam_ineq[row];
                row += 1;
                if lam == 0.0 {
                    continue;
                }
                let (s, ip, iq, iw, cw) = if to_end {
                    (1.0 / br.vmax2_t, o + 1, o + 3, self.off_w() + br.to, br.half_charge)
                } else {
                        (
                            tap2 / br.vmax2_f,
                            o,
                            o + 2,
                            self.off_w() + br.from,
                            br.half_charge * br.inv_tap2,
                        )
                };
                h.push(ip, ip, 2.0 * s * lam);
                h.push(iq, iq, 2.0 * s * lam);
                if cw != 0.0 {
                    h.push(iq, iw, 2.0 * s * cw * lam);
                    h.push(iw, iq, 2.0 * s * cw * lam);
                    h.push(iw, iw, 2.0 * s * cw * cw * lam);
                }
            }
        }
        row += self.qloss.len(); // linear rows
        for &(k, to_end) in &self.thermal {
            let lam = lam_ineq[row];
            row += 1;
            if lam == 0.0 {
                continue;
            }
            let o = self.off_br(k);
            let t = self.branches[k].rate.expect("thermal row on rated branch");
            let inv = 1.0 / (t * t);
            let (ip, iq) = if to_end { (o + 1, o + 3) } else { (o, o + 2) };
            h.push(ip, ip, 2.0 * inv * lam);
            h.push(iq, iq, 2.0 * inv * lam);
        }
        h
    }

    fn is_convex(&self) -> bool {
        true
    }
}
