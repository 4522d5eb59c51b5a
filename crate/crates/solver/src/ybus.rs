//! Bus admittance assembly and the solver index space.
//!
//! Inactive buses (and branches or generators touching them) are
//! excluded from the index space entirely; solvers work on contiguous
//! active-bus indices and map back at the boundary.

use gridcase_core::Network;
use nalgebra::Complex;
use std::collections::HashMap;

pub type C64 = Complex<f64>;

/// Index translation between a network and its active-element solver
/// space.
#[derive(Debug, Clone)]
pub struct GridIndex {
    /// solver bus index -> position in `net.buses`
    pub bus_pos: Vec<usize>,
    /// bus id -> solver bus index
    pub of_bus_id: HashMap<u32, usize>,
    /// active generator positions in `net.generators`
    pub gen_pos: Vec<usize>,
    /// active branch positions in `net.branches`
    pub branch_pos: Vec<usize>,
}

impl GridIndex {
    pub fn new(net: &Network) -> Self {
        let bus_pos = net.active_bus_positions();
        let of_bus_id =
            bus_pos.iter().enumerate().map(|(s, &p)| (net.buses[p].id, s)).collect();
        GridIndex {
            bus_pos,
            of_bus_id,
            gen_pos: net.active_gen_positions(),
            branch_pos: net.active_branch_positions(),
        }
    }

    pub fn n_bus(&self) -> usize {
        self.bus_pos.len()
    }
}

/// Π-model admittance coefficients of one branch:
/// `S_f = V_f (yff V_f + yft V_t)*`, `S_t = V_t (ytf V_f + ytt V_t)*`.
#[derive(Debug, Clone, Copy)]
pub struct BranchAdmittance {
    /// position in `net.branches`
    pub pos: usize,
    /// solver bus indices
    pub from: usize,
    pub to: usize,
    pub yff: C64,
    pub yft: C64,
    pub ytf: C64,
    pub ytt: C64,
}

pub fn branch_admittance(net: &Network, index: &GridIndex, pos: usize) -> BranchAdmittance {
    let br = &net.branches[pos];
    let ys = C64::new(1.0, 0.0) / C64::new(br.r, br.x);
    let charge = C64::new(0.0, br.b_charge / 2.0);
    let tap = C64::from_polar(br.tap, br.shift);
    BranchAdmittance {
        pos,
        from: index.of_bus_id[&br.from_bus],
        to: index.of_bus_id[&br.to_bus],
        yff: (ys + charge) / (tap * tap.conj()),
        yft: -ys / tap.conj(),
        ytf: -ys / tap,
        ytt: ys + charge,
    }
}

/// Sparse complex admittance matrix over the active buses, stored as
/// sorted adjacency rows.
#[derive(Debug, Clone)]
pub struct YBus {
    /// rows[i] = sorted (column, complex admittance)
    pub rows: Vec<Vec<(usize, C64)>>,
    pub branches: Vec<BranchAdmittance>,
}

impl YBus {
    pub fn new(net: &Network, index: &GridIndex) -> Self {
        let n = index.n_bus();
        let mut entries: HashMap<(usize, usize), C64> = HashMap::new();
        let branches: Vec<BranchAdmittance> =
            index.branch_pos.iter().map(|&p| branch_admittance(net, index, p)).collect();
        for ba in &branches {
            *entries.entry((ba.from, ba.from)).or_insert_with(C64::default) += ba.yff;
            *entries.entry((ba.from, ba.to)).or_insert_with(C64::default) += ba.yft;
            *entries.entry((ba.to, ba.from)).or_insert_with(C64::default) += ba.ytf;
            *entries.entry((ba.to, ba.to)).or_insert_with(C64::default) += ba.ytt;
        }
        for (s, &p) in index.bus_pos.iter().enumerate() {
            let bus = &net.buses[p];
            if bus.gs != 0.0 || bus.bs != 0.0 {
                *entries.entry((s, s)).or_insert_with(C64::default) += C64::new(bus.gs, bus.bs);
            }
        }
        let mut rows = vec![Vec::new(); n];
        for ((i, j), y) in entries {
            rows[i].push((j, y));
        }
        for row in rows.iter_mut() {
            row.sort_unstable_by_key(|e| e.0);
        }
        YBus { rows, branches }
    }

    pub fn n(&self) -> usize {
        self.rows.len()
    }

    /// I = Y V
    pub fn currents(&self, v: &[C64]) -> Vec<C64> {
        self.rows
            .iter()
            .map(|row| row.iter().map(|&(j, y)| y * v[j]).sum())
            .collect()
    }

    /// S = diag(V) (Y V)*  — net complex injection into the network.
    pub fn injections(&self, v: &[C64]) -> Vec<C64> {
        self.currents(v).iter().zip(v).map(|(i, vi)| vi * i.conj()).collect()
    }
}
