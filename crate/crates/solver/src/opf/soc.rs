//! Second-order-cone relaxation of the AC feasible set.
//!
//! Lifted variables per bus `w ~ v^2` and per branch `(wr, wi)` with the
//! rotated-cone coupling `wr^2 + wi^2 <= w_f w_t` make every power flow
//! affine. The cone is written in its smooth convex norm form
//!
//! ```text
//!   sqrt(4 wr^2 + 4 wi^2 + (w_f - w_t)^2 + eps) - w_f - w_t <= 0
//! ```
//!
//! with a tiny `eps` so the gradient exists at the cone origin. Angle
//! bounds within (-90, 90) degrees become linear constraints
//! `tan(amin) wr <= wi <= tan(amax) wr` together with `wr >= 0`.

use crate::linalg::Triplets;
use crate::nlp::NlpProblem;
use crate::opf::FormulateError;
use crate::ybus::{branch_admittance, GridIndex};
use gridcase_core::Network;
use std::f64::consts::FRAC_PI_2;

/// Smoothing at the cone origin.
const CONE_EPS: f64 = 1e-10;

#[derive(Debug, Clone, Copy)]
struct SocBranch {
    from: usize,
    to: usize,
    gff: f64,
    bff: f64,
    gft: f64,
    bft: f64,
    gtt: f64,
    btt: f64,
    gtf: f64,
    btf: f64,
    rate: Option<f64>,
    /// linear angle cuts (tan amin, tan amax), requires wr >= 0
    tan_bounds: Option<(f64, f64)>,
    wmax_prod: f64,
}

pub struct SocRelaxation {
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
    branches: Vec<SocBranch>,
    thermal: Vec<(usize, bool)>,
    angles: Vec<usize>,
    pub gen_pos: Vec<usize>,
}

pub fn formulate_soc(net: &Network) -> Result<SocRelaxation, FormulateError> {
    let index = GridIndex::new(net);
    if index.gen_pos.is_empty() {
        return Err(FormulateError::NoGenerators);
    }
    let branches: Vec<SocBranch> = index
        .branch_pos
        .iter()
        .map(|&p| {
            let ba = branch_admittance(net, &index, p);
            let br = &net.branches[p];
            let vuf = net.buses[index.bus_pos[ba.from]].v_max;
            let vut = net.buses[index.bus_pos[ba.to]].v_max;
            let tan_bounds = (br.has_angle_bounds()
                && br.angle_min > -FRAC_PI_2
                && br.angle_max < FRAC_PI_2)
                .then(|| (br.angle_min.tan(), br.angle_max.tan()));
            SocBranch {
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
                tan_bounds,
                wmax_prod: vuf * vut,
            }
        })
        .collect();
    let mut thermal = Vec::new();
    let mut angles = Vec::new();
    for (k, br) in branches.iter().enumerate() {
        if br.rate.is_some() {
            thermal.push((k, false));
            thermal.push((k, true));
        }
        if br.tan_bounds.is_some() {
            angles.push(k);
        }
    }
    let gens: Vec<_> = index.gen_pos.iter().map(|&p| &net.generators[p]).collect();
    Ok(SocRelaxation {
        base: net.base_mva,
        nb: index.n_bus(),
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
        angles,
        gen_pos: index.gen_pos,
    })
}

impl SocRelaxation {
    // layout: pg, qg, w, then per branch (wr, wi)
    fn off_qg(&self) -> usize {
        self.ng
    }
    fn off_w(&self) -> usize {
        2 * self.ng
    }
    fn off_wr(&self, k: usize) -> usize {
        2 * self.ng + self.nb + 2 * k
    }

    /// Affine end-flow coefficients over (w_own_bus, wr, wi): returns
    /// (c_w, c_wr, c_wi) for p and q at the requested end.
    fn coefs(br: &SocBranch, to_end: bool) -> ([f64; 3], [f64; 3]) {
        if to_end {
            ([br.gtt, br.gtf, -br.btf], [-br.btt, -br.btf, -br.gtf])
        } else {
            ([br.gff, br.gft, br.bft], [-br.bff, -br.bft, br.gft])
        }
    }

    fn end_pq(&self, x: &[f64], k: usize, to_end: bool) -> (f64, f64) {
        let br = &self.branches[k];
        let w = x[self.off_w() + if to_end { br.to } else { br.from }];
        let wr = x[self.off_wr(k)];
        let wi = x[self.off_wr(k) + 1];
        let (cp, cq) = Self::coefs(br, to_end);
        (
            cp[0] * w + cp[1] * wr + cp[2] * wi,
            cq[0] * w + cq[1] * wr + cq[2] * wi,
        )
    }

    /// Cone residual with gradient and Hessian over
    /// (w_f, w_t, wr, wi).
    fn cone(&self, x: &[f64], k: usize) -> (f64, [f64; 4], [[f64; 4]; 4]) {
        let br = &self.branches[k];
        let wf = x[self.off_w() + br.from];
        let wt = x[self.off_w() + br.to];
        let wr = x[self.off_wr(k)];
        let wi = x[self.off_wr(k) + 1];
        let u = [2.0 * wr, 2.0 * wi, wf - wt];
        let n = (u[0] * u[0] + u[1] * u[1] + u[2] * u[2] + CONE_EPS).sqrt();
        let val = n - wf - wt;
        // v = J^T u over (wf, wt, wr, wi) with J = du/dvars
        let v = [u[2], -u[2], 2.0 * u[0], 2.0 * u[1]];
        let grad = [v[0] / n - 1.0, v[1] / n - 1.0, v[2] / n, v[3] / n];
        // J^T J over the same order
        let jtj = [
            [1.0, -1.0, 0.0, 0.0],
            [-1.0, 1.0, 0.0, 0.0],
            [0.0, 0.0, 4.0, 0.0],
            [0.0, 0.0, 0.0, 4.0],
        ];
        let mut hess = [[0.0; 4]; 4];
        for a in 0..4 {
            for b in 0..4 {
                hess[a][b] = jtj[a][b] / n - v[a] * v[b] / (n * n * n);
            }
        }
        (val, grad, hess)
    }

    fn cone_vars(&self, k: usize) -> [usize; 4] {
        let br = &self.branches[k];
        [
            self.off_w() + br.from,
            self.off_w() + br.to,
            self.off_wr(k),
            self.off_wr(k) + 1,
        ]
    }

    fn thermal_vars(&self, k: usize, to_end: bool) -> [usize; 3] {
        let br = &self.branches[k];
        [
            self.off_w() + if to_end { br.to } else { br.from },
            self.off_wr(k),
            self.off_wr(k) + 1,
        ]
    }
}

impl NlpProblem for SocRelaxation {
    fn num_vars(&self) -> usize {
        2 * self.ng + self.nb + 2 * self.nl
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
        for (k, br) in self.branches.iter().enumerate() {
            let cap = br.wmax_prod;
            lo[self.off_wr(k)] = if br.tan_bounds.is_some() { 0.0 } else { -cap };
            hi[self.off_wr(k)] = cap;
            lo[self.off_wr(k) + 1] = -cap;
            hi[self.off_wr(k) + 1] = cap;
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
        for (k, br) in self.branches.iter().enumerate() {
            // flat start: wr at the cone boundary gives zero branch flow
            let wf = x[self.off_w() + br.from];
            let wt = x[self.off_w() + br.to];
            x[self.off_wr(k)] = (wf * wt).sqrt();
            x[self.off_wr(k) + 1] = 0.0;
        }
        x
    }

    fn num_eq(&self) -> usize {
        2 * self.nb
    }

    fn num_ineq(&self) -> usize {
        self.nl + self.thermal.len() + 2 * self.angles.len()
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
            let (pf, qf) = self.end_pq(x, k, false);
            let (pt, qt) = self.end_pq(x, k, true);
            eq[br.from] += pf;
            eq[self.nb + br.from] += qf;
            eq[br.to] += pt;
            eq[self.nb + br.to] += qt;
        }
        for (k, &bus) in self.gen_bus.iter().enumerate() {
            eq[bus] -= x[k];
            eq[self.nb + bus] -= x[self.off_qg() + k];
        }

        let mut row = 0;
        for k in 0..self.nl {
            ineq[row] = self.cone(x, k).0;
            row += 1;
        }
        for &(k, to_end) in &self.thermal {
            let t = self.branches[k].rate.expect("thermal row on rated branch");
            let (p, q) = self.end_pq(x, k, to_end);
            ineq[row] = (p * p + q * q) / (t * t) - 1.0;
            row += 1;
        }
        for &k in &self.angles {
            let (tmin, tmax) = self.branches[k].tan_bounds.expect("angle row");
            let wr = x[self.off_wr(k)];
            let wi = x[self.off_wr(k) + 1];
            ineq[row] = wi - tmax * wr;
            ineq[row + 1] = tmin * wr - wi;
            row += 2;
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
            for to_end in [false, true] {
                let bus = if to_end { br.to } else { br.from };
                let (cp, cq) = Self::coefs(br, to_end);
                let vars = self.thermal_vars(k, to_end);
                for (j, &col) in vars.iter().enumerate() {
                    if cp[j] != 0.0 {
                        jeq.push(bus, col, cp[j]);
                    }
                    if cq[j] != 0.0 {
                        jeq.push(self.nb + bus, col, cq[j]);
                    }
                }
            }
        }
        for (k, &bus) in self.gen_bus.iter().enumerate() {
            jeq.push(bus, k, -1.0);
            jeq.push(self.nb + bus, self.off_qg() + k, -1.0);
        }

        let mut ji = Triplets::new(self.num_ineq(), n);
        let mut row = 0;
        for k in 0..self.nl {
            let (_, grad, _) = self.cone(x, k);
            for (j, &col) in self.cone_vars(k).iter().enumerate() {
                ji.push(row, col, grad[j]);
            }
            row += 1;
        }
        for &(k, to_end) in &self.thermal {
            let br = &self.branches[k];
            let t = br.rate.expect("thermal row on rated branch");
            let inv = 1.0 / (t * t);
            let (p, q) = self.end_pq(x, k, to_end);
            let (cp, cq) = Self::coefs(br, to_end);
            for (j, &col) in self.thermal_vars(k, to_end).iter().enumerate() {
                let g = inv * (2.0 * p * cp[j] + 2.0 * q * cq[j]);
                if g != 0.0 {
                    ji.push(row, col, g);
                }
            }
            row += 1;
        }
        for &k in &self.angles {
            let (tmin, tmax) = self.branches[k].tan_bounds.expect("angle row");
            ji.push(row, self.off_wr(k) + 1, 1.0);
            ji.push(row, self.off_wr(k), -tmax);
            ji.push(row + 1, self.off_wr(k), tmin);
            ji.push(row + 1, self.off_wr(k) + 1, -1.0);
            row += 2;
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
        let n = self.num_vars();
        let mut h = Triplets::new(n, n);
        if obj_weight != 0.0 {
            for (k, &(c2, ..)) in self.cost.iter().enumerate() {
                if c2 != 0.0 {
                    h.push(k, k, obj_weight * 2.0 * c2 * self.base * self.base);
                }
            }
        }
        let mut row = 0;
        for k in 0..self.nl {
            let lam = lam_ineq[row];
            row += 1;
            if lam == 0.0 {
                continue;
            }
            let (_, _, hess) = self.cone(x, k);
            let vars = self.cone_vars(k);
            for a in 0..4 {
                for b in 0..4 {
                    if hess[a][b] != 0.0 {
                        h.push(vars[a], vars[b], lam * hess[a][b]);
                    }
                }
            }
        }
        for &(k, to_end) in &self.thermal {
            let lam = lam_ineq[row];
            row += 1;
            if lam == 0.0 {
                continue;
            }
            let br = &self.branches[k];
            let t = br.rate.expect("thermal row on rated branch");
            let inv = 1.0 / (t * t);
            let (cp, cq) = Self::coefs(br, to_end);
            let vars = self.thermal_vars(k, to_end);
            for a in 0..3 {
                for b in 0..3 {
                    let v = 2.0 * inv * lam * (cp[a] * cp[b] + cq[a] * cq[b]);
                    if v != 0.0 {
                        h.push(vars[a], vars[b], v);
                    }
                }
            }
        }
        h
    }

    fn is_convex(&self) -> bool {
        true
    }
}
