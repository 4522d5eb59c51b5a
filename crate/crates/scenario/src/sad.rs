//! Small angle difference (SAD) case generation: the smallest uniform
//! angle-difference bound that keeps the case AC-feasible, applied to
//! every branch.

use crate::oracle::{check_feasible, Feasibility};
use crate::ScenarioError;
use gridcase_core::Network;
use gridcase_solver::nlp::SolveOptions;
use serde::Serialize;

/// Widest bound probed (degrees); the base case must be feasible here.
pub const WIDEST_ANGLE_DEG: f64 = 30.0;
/// Absolute bisection tolerance (degrees).
pub const ANGLE_TOL_DEG: f64 = 0.01;

#[derive(Debug, Clone, Serialize)]
pub struct SadLog {
    pub schema_version: u32,
    /// Smallest verified-feasible uniform bound (degrees).
    pub theta_delta_deg: f64,
    /// Every oracle probe: (bound in degrees, feasible).
    pub probes: Vec<(f64, bool)>,
    pub oracle_noise: Vec<String>,
}

fn with_bound(net: &Network, deg: f64) -> Network {
    let rad = deg.to_radians();
    let mut out = net.clone();
    for br in out.branches.iter_mut() {
        br.angle_min = -rad;
        br.angle_max = rad;
    }
    out
}

/// Generate the angle-constrained variant of a case.
pub fn gen_sad(net: &Network) -> Result<(Network, SadLog), ScenarioError> {
    let options = SolveOptions { max_iterations: 300, ..Default::default() };
    let mut probes = Vec::new();
    let mut noise = Vec::new();
    let mut probe = |deg: f64| -> Result<bool, ScenarioError> {
        let candidate = with_bound(net, deg);
        let mut verdict = check_feasible(&candidate, &options)?;
        if let Feasibility::Unknown { status } = verdict {
            noise.push(format!("bound {deg:.4} deg: oracle {status:?}, retried"));
            let tight = SolveOptions {
                max_iterations: 2 * options.max_iterations,
                tolerance: options.tolerance * 0.1,
                ..options
            };
            verdict = check_feasible(&candidate, &tight)?;
        }
        let feasible = verdict.is_feasible();
        probes.push((deg, feasible));
        Ok(feasible)
    };

    if !probe(WIDEST_ANGLE_DEG)? {
        return Err(ScenarioError::InfeasibleAtWidestAngle(WIDEST_ANGLE_DEG));
    }
    let mut lo = 0.0;
    let mut hi = WIDEST_ANGLE_DEG;
    while hi - lo > ANGLE_TOL_DEG {
        let mid = 0.5 * (lo + hi);
        if probe(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }

    let mut out = with_bound(net, hi);
    out.name = format!("{}__sad", net.name);
    let log = SadLog { schema_version: 1, theta_delta_deg: hi, probes, oracle_noise: noise };
    Ok((out, log))
}
