//! Copper-plate relaxation: a single system-wide active power balance
//! with generator boxes and the cost objective. Every network
//! constraint is ignored, which is only a valid lower bound when no
//! branch can inject power (negative series impedance).

use crate::linalg::Triplets;
use crate::nlp::NlpProblem;
use crate::opf::FormulateError;
use crate::ybus::GridIndex;
use gridcase_core::Network;

pub struct CopperPlate {
    base: f64,
    total_pd: f64,
    p_min: Vec<f64>,
    p_max: Vec<f64>,
    pg0: Vec<f64>,
    cost: Vec<(f64, f64, f64)>,
    pub gen_pos: Vec<usize>,
}

/// Formulate the copper-plate dispatch. Not applicable to networks with
/// negative branch resistance or reactance.
pub fn formulate_cp(net: &Network) -> Result<CopperPlate, FormulateError> {
    let index = GridIndex::new(net);
    if index.gen_pos.is_empty() {
        return Err(FormulateError::NoGenerators);
    }
    for &bp in &index.branch_pos {
        let br = &net.branches[bp];
        if br.r < 0.0 || br.x < 0.0 {
            return Err(FormulateError::NegativeImpedance { branch: bp });
        }
    }
    let total_pd = index.bus_pos.iter().map(|&p| net.buses[p].pd).sum();
    let gens: Vec<_> = index.gen_pos.iter().map(|&p| &net.generators[p]).collect();
    Ok(CopperPlate {
        base: net.base_mva,
        total_pd,
        p_min: gens.iter().map(|g| g.p_min).collect(),
        p_max: gens.iter().map(|g| g.p_max).collect(),
        pg0: gens.iter().map(|g| g.pg).collect(),
        cost: gens.iter().map(|g| (g.cost.c2, g.cost.c1, g.cost.c0)).collect(),
        gen_pos: index.gen_pos,
    })
}

impl NlpProblem for CopperPlate {
    fn num_vars(&self) -> usize {
        self.p_min.len()
    }
    fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        (self.p_min.clone(), self.p_max.clone())
    }
    fn initial_point(&self) -> Vec<f64> {
        self.pg0
            .iter()
            .zip(self.p_min.iter().zip(&self.p_max))
            .map(|(&p, (&lo, &hi))| p.clamp(lo, hi))
            .collect()
    }
    fn num_eq(&self) -> usize {
        1
    }
    fn num_ineq(&self) -> usize {
        0
    }
    fn objective(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(&self.cost)
            .map(|(&p, &(c2, c1, c0))| {
                let mw = p * self.base;
                c2 * mw * mw + c1 * mw + c0
            })
            .sum()
    }
    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        for (k, (&p, &(c2, c1, _))) in x.iter().zip(&self.cost).enumerate() {
            out[k] = (2.0 * c2 * p * self.base + c1) * self.base;
        }
    }
    fn constraints(&self, x: &[f64], eq: &mut [f64], _ineq: &mut [f64]) {
        eq[0] = x.iter().sum::<f64>() - self.total_pd;
    }
    fn jacobians(&self, _x: &[f64]) -> (Triplets, Triplets) {
        let mut jeq = Triplets::new(1, self.num_vars());
        for k in 0..self.num_vars() {
            jeq.push(0, k, 1.0);
        }
        (jeq, Triplets::new(0, self.num_vars()))
    }
    fn lagrangian_hessian(
        &self,
        _x: &[f64],
        obj_weight: f64,
        _lam_eq: &[f64],
        _lam_ineq: &[f64],
    ) -> Triplets {
        let mut h = Triplets::new(self.num_vars(), self.num_vars());
        for (k, &(c2, ..)) in self.cost.iter().enumerate() {
            if c2 != 0.0 {
                h.push(k, k, obj_weight * 2.0 * c2 * self.base * self.base);
            }
        }
        h
    }
    fn is_convex(&self) -> bool {
        true
    }
}
