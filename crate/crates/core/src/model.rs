//! Core network data model.
//!
//! All quantities are stored in per-unit on the network's MVA base;
//! conversion to engineering units happens only at I/O boundaries.
//! A `Network` is treated as an immutable value after construction:
//! augmentation and scenario generation produce new networks rather
//! than mutating in place, so read-only sharing across workers is safe.

use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fmt;

/// Bus identifier as it appears in case files. Not necessarily contiguous.
pub type BusId = u32;

/// Role of a bus in the power flow problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BusKind {
    /// Load bus: fixed active and reactive demand.
    Pq,
    /// Generator bus: fixed active injection and voltage magnitude.
    Pv,
    /// Reference bus: fixed voltage magnitude and angle.
    Slack,
    /// Out-of-service bus, excluded from all solver index spaces.
    Inactive,
}

/// One bus of the network. Demands and shunts are in per-unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: BusId,
    pub kind: BusKind,
    /// Active power demand (p.u.).
    pub pd: f64,
    /// Reactive power demand (p.u.).
    pub qd: f64,
    /// Shunt conductance (p.u. power demanded at v = 1).
    pub gs: f64,
    /// Shunt susceptance (p.u. power injected at v = 1).
    pub bs: f64,
    /// Voltage magnitude lower bound (p.u.).
    pub v_min: f64,
    /// Voltage magnitude upper bound (p.u.).
    pub v_max: f64,
    /// Nominal voltage (kV); 0 when unknown.
    pub base_kv: f64,
    /// Starting voltage magnitude for iterative solvers (p.u.).
    pub v_init: f64,
    /// Starting voltage angle (rad).
    pub theta_init: f64,
}

/// One branch (line or transformer), Π-model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub from_bus: BusId,
    pub to_bus: BusId,
    /// Series resistance (p.u.).
    pub r: f64,
    /// Series reactance (p.u.).
    pub x: f64,
    /// Total line charging susceptance (p.u.).
    pub b_charge: f64,
    /// Off-nominal tap ratio; 1 means no transformer.
    pub tap: f64,
    /// Phase shift (rad).
    pub shift: f64,
    /// Apparent-power thermal limit (p.u.); `None` = unlimited.
    pub rate_a: Option<f64>,
    /// Angle-difference lower bound (rad); `-inf` = unbounded.
    pub angle_min: f64,
    /// Angle-difference upper bound (rad); `+inf` = unbounded.
    pub angle_max: f64,
    /// In-service flag.
    pub status: bool,
}

impl Branch {
    /// Series admittance magnitude `y = 1/sqrt(r^2 + x^2)`.
    pub fn admittance_magnitude(&self) -> f64 {
        1.0 / (self.r * self.r + self.x * self.x).sqrt()
    }

    /// Whether both angle-difference bounds are finite.
    pub fn has_angle_bounds(&self) -> bool {
        self.angle_min.is_finite() && self.angle_max.is_finite()
    }
}

/// Polynomial generation cost: `c2*p^2 + c1*p + c0` with `p` in MW,
/// giving $/h.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostPoly {
    /// Quadratic coefficient ($/MW^2 h). Must be >= 0 for the convex
    /// relaxation solvers.
    pub c2: f64,
    /// Linear coefficient ($/MWh).
    pub c1: f64,
    /// Constant term ($/h).
    pub c0: f64,
}

impl CostPoly {
    pub const ZERO: CostPoly = CostPoly { c2: 0.0, c1: 0.0, c0: 0.0 };

    /// Evaluate the cost at an output of `mw` megawatts.
    pub fn eval(&self, mw: f64) -> f64 {
        self.c2 * mw * mw + self.c1 * mw + self.c0
    }
}

/// Broad generator fuel category.
///
/// The augmentation models are defined only for `Cow`, `Pel`, `Ng`,
/// `Nuc` and `Sync`; the remaining categories exist so that fleet data
/// can be classified and filtered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum FuelCategory {
    /// Coal.
    Cow,
    /// Petroleum.
    Pel,
    /// Natural gas.
    Ng,
    /// Nuclear.
    Nuc,
    /// Biomass.
    Bio,
    /// Dispatchable renewables (hydro, geothermal).
    Drn,
    /// Non-dispatchable renewables (solar, wind).
    Rn,
    /// Synchronous condenser: reactive support only, zero active capability.
    Sync,
}

impl FuelCategory {
    pub fn as_str(&self) -> &'static str {
        match self {
            FuelCategory::Cow => "COW",
            FuelCategory::Pel => "PEL",
            FuelCategory::Ng => "NG",
            FuelCategory::Nuc => "NUC",
            FuelCategory::Bio => "BIO",
            FuelCategory::Drn => "DRN",
            FuelCategory::Rn => "RN",
            FuelCategory::Sync => "SYNC",
        }
    }
}

impl fmt::Display for FuelCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One generating unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub bus: BusId,
    /// Current active output (p.u.).
    pub pg: f64,
    /// Current reactive output (p.u.).
    pub qg: f64,
    /// Active output bounds (p.u.); `p_max` may be `+inf` for unlimited.
    pub p_min: f64,
    pub p_max: f64,
    /// Reactive output bounds (p.u.); may be infinite.
    pub q_min: f64,
    pub q_max: f64,
    /// Voltage set-point (p.u.).
    pub v_set: f64,
    /// In-service flag.
    pub status: bool,
    pub cost: CostPoly,
    pub fuel: Option<FuelCategory>,
}

/// A complete transmission network in per-unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub name: String,
    /// System MVA base; all power quantities are per-unit on this base.
    pub base_mva: f64,
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    pub generators: Vec<Generator>,
}

impl Network {
    /// Map from bus id to position in `buses`.
    pub fn bus_index(&self) -> HashMap<BusId, usize> {
        self.buses.iter().enumerate().map(|(i, b)| (b.id, i)).collect()
    }

    /// Positions of buses that participate in solves (not inactive).
    pub fn active_bus_positions(&self) -> Vec<usize> {
        self.buses
            .iter()
            .enumerate()
            .filter(|(_, b)| b.kind != BusKind::Inactive)
            .map(|(i, _)| i)
            .collect()
    }

    /// Indices of in-service generators attached to active buses.
    pub fn active_gen_positions(&self) -> Vec<usize> {
        let idx = self.bus_index();
        self.generators
            .iter()
            .enumerate()
            .filter(|(_, g)| {
                g.status
                    && idx
                        .get(&g.bus)
                        .is_some_and(|&i| self.buses[i].kind != BusKind::Inactive)
            })
            .map(|(i, _)| i)
            .collect()
    }

    /// Indices of in-service branches whose endpoints are both active.
    pub fn active_branch_positions(&self) -> Vec<usize> {
        let idx = self.bus_index();
        self.branches
            .iter()
            .enumerate()
            .filter(|(_, br)| {
                br.status
                    && idx
                        .get(&br.from_bus)
                        .is_some_and(|&i| self.buses[i].kind != BusKind::Inactive)
                    && idx
                        .get(&br.to_bus)
                        .is_some_and(|&i| self.buses[i].kind != BusKind::Inactive)
            })
            .map(|(i, _)| i)
            .collect()
    }

    /// Total active demand over active buses (p.u.).
    pub fn total_pd(&self) -> f64 {
        self.buses
            .iter()
            .filter(|b| b.kind != BusKind::Inactive)
            .map(|b| b.pd)
            .sum()
    }
}

/// Network element referenced by a violation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Element {
    Network,
    Bus(BusId),
    /// Position in `Network::branches`.
    Branch(usize),
    /// Position in `Network::generators`.
    Generator(usize),
}

impl fmt::Display for Element {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Element::Network => write!(f, "network"),
            Element::Bus(id) => write!(f, "bus {id}"),
            Element::Branch(i) => write!(f, "branch[{i}]"),
            Element::Generator(i) => write!(f, "gen[{i}]"),
        }
    }
}

/// One structural or operational rule violation. Violations are data,
/// not failures: `validate` reports them all instead of stopping early.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub element: Element,
    pub reason: String,
}

impl Violation {
    fn new(element: Element, reason: impl Into<String>) -> Self {
        Violation { element, reason: reason.into() }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.element, self.reason)
    }
}

/// Check every structural invariant of a network. Returns all violations
/// found; an empty list means the network is structurally sound. Total:
/// never panics on any well-typed `Network`.
pub fn validate(net: &Network) -> Vec<Violation> {
    let mut out = Vec::new();

    if !(net.base_mva > 0.0) {
        out.push(Violation::new(
            Element::Network,
            format!("base MVA must be positive, got {}", net.base_mva),
        ));
    }

    let mut seen: HashMap<BusId, usize> = HashMap::new();
    for bus in &net.buses {
        if let Some(n) = seen.get_mut(&bus.id) {
            *n += 1;
        } else {
            seen.insert(bus.id, 1);
        }
    }
    for (id, n) in seen.iter() {
        if *n > 1 {
            out.push(Violation::new(Element::Bus(*id), format!("bus id appears {n} times")));
        }
    }

    for bus in &net.buses {
        if !(bus.v_min > 0.0) {
            out.push(Violation::new(
                Element::Bus(bus.id),
                format!("voltage lower bound must be positive, got {}", bus.v_min),
            ));
        }
        if bus.v_min > bus.v_max {
            out.push(Violation::new(
                Element::Bus(bus.id),
                format!("voltage bounds inverted: [{}, {}]", bus.v_min, bus.v_max),
            ));
        }
        if bus.base_kv < 0.0 {
            out.push(Violation::new(
                Element::Bus(bus.id),
                format!("nominal voltage must be >= 0 (0 = unknown), got {}", bus.base_kv),
            ));
        }
    }

    for (i, br) in net.branches.iter().enumerate() {
        if br.from_bus == br.to_bus {
            out.push(Violation::new(
                Element::Branch(i),
                format!("self-loop at bus {}", br.from_bus),
            ));
        }
        if !seen.contains_key(&br.from_bus) {
            out.push(Violation::new(
                Element::Branch(i),
                format!("from-bus {} does not exist", br.from_bus),
            ));
        }
        if !seen.contains_key(&br.to_bus) {
            out.push(Violation::new(
                Element::Branch(i),
                format!("to-bus {} does not exist", br.to_bus),
            ));
        }
        if br.x == 0.0 {
            out.push(Violation::new(Element::Branch(i), "zero series reactance"));
        }
        if !(br.tap > 0.0) {
            out.push(Violation::new(
                Element::Branch(i),
                format!("tap ratio must be positive, got {}", br.tap),
            ));
        }
        if !(br.angle_min <= 0.0 && 0.0 <= br.angle_max) {
            out.push(Violation::new(
                Element::Branch(i),
                format!(
                    "angle bounds must straddle zero: [{}, {}] rad",
                    br.angle_min, br.angle_max
                ),
            ));
        }
        if let Some(t) = br.rate_a {
            if !(t > 0.0) {
                out.push(Violation::new(
                    Element::Branch(i),
                    format!("thermal limit must be positive when present, got {t}"),
                ));
            }
        }
    }

    for (i, g) in net.generators.iter().enumerate() {
        if !seen.contains_key(&g.bus) {
            out.push(Violation::new(
                Element::Generator(i),
                format!("references absent bus {}", g.bus),
            ));
        }
        if g.p_min > g.p_max {
            out.push(Violation::new(
                Element::Generator(i),
                format!("active bounds inverted: [{}, {}]", g.p_min, g.p_max),
            ));
        }
        if g.q_min > g.q_max {
            out.push(Violation::new(
                Element::Generator(i),
                format!("reactive bounds inverted: [{}, {}]", g.q_min, g.q_max),
            ));
        }
        if !(g.cost.c0.is_finite() && g.cost.c1.is_finite() && g.cost.c2.is_finite()) {
            out.push(Violation::new(Element::Generator(i), "non-finite cost coefficients"));
        } else if g.cost.c2 < 0.0 {
            out.push(Violation::new(
                Element::Generator(i),
                format!("concave cost: c2 = {}", g.cost.c2),
            ));
        }
    }

    out
}
