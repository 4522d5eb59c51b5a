//! OPF formulation tests: published 3-bus and 9-bus reference values,
//! finite-difference derivative checks for every formulation, and the
//! relaxation-dominance property suite.

use gridcase_core::{matpower, Branch, Bus, BusKind, CostPoly, Generator, Network};
use gridcase_solver::nlp::{solve_nlp, NlpProblem, SolveOptions, SolveStatus};
use gridcase_solver::opf::{
    formulate_ac, formulate_ac_feasibility, formulate_cp, formulate_nfll, formulate_soc, gap,
    solve_ac, FormulateError, GapOptions, ModelKind,
};
use gridcase_solver::{branch_flows, check_operational, solve_pf};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::path::PathBuf;

fn fixture(name: &str) -> Network {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../core/tests/fixtures")
        .join(name);
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{path:?}: {e}"));
    matpower::lower(&matpower::parse(&text).unwrap()).unwrap()
}

fn default_gap_options() -> GapOptions {
    GapOptions::default()
}

// -------------------------------------------------------------------------
// 3-bus reference values (frozen from independent numerical oracles)

/// Power flow on the 3-bus case reproduces the published bus table:
/// v = (1.100, 1.090, 1.080), angles (0, -1.434, -2.895) degrees.
#[test]
fn three_bus_power_flow_matches_the_published_solution() {
    let net = fixture("case3.m");
    let sol = solve_pf(&net, 1e-10, 30).unwrap();
    assert!(sol.converged);
    assert!((sol.v[0] - 1.100).abs() < 1e-9);
    assert!((sol.v[1] - 1.090).abs() < 1e-3, "v2 = {}", sol.v[1]);
    assert!((sol.v[2] - 1.080).abs() < 1e-3, "v3 = {}", sol.v[2]);
    assert!((sol.theta[1].to_degrees() + 1.434).abs() < 0.01);
    assert!((sol.theta[2].to_degrees() + 2.895).abs() < 0.01);
    // from-end apparent flows (MVA): 64.4, 63.8 on the two series lines;
    // the direct line carries 45.5 from / 44.7 to
    assert!((sol.flows[0].s_from * 100.0 - 64.41).abs() < 0.05);
    assert!((sol.flows[1].s_from * 100.0 - 63.81).abs() < 0.05);
    assert!((sol.flows[2].s_from * 100.0 - 45.55).abs() < 0.05);
    assert!((sol.flows[2].s_to * 100.0 - 44.72).abs() < 0.05);
    // slack picks up the demand plus the series loss
    assert!((sol.gen_p[0] * 100.0 - 101.71).abs() < 0.05);
    assert!((sol.gen_q[0] * 100.0 - 5.14).abs() < 0.05);
}

/// Independent flow evaluation from externally supplied voltages.
#[test]
fn branch_flows_recompute_the_solved_point() {
    let net = fixture("case3.m");
    let sol = solve_pf(&net, 1e-10, 30).unwrap();
    let flows = branch_flows(&net, &sol.v, &sol.theta);
    for (a, b) in flows.iter().zip(&sol.flows) {
        assert!((a.s_from - b.s_from).abs() < 1e-12);
        assert!((a.s_to - b.s_to).abs() < 1e-12);
    }
}

#[test]
fn operational_checks_flag_the_published_congestion_scenarios() {
    let net = fixture("case3.m");
    let sol = solve_pf(&net, 1e-10, 30).unwrap();
    assert!(check_operational(&net, &sol).is_empty());

    // thermal limit of the 2-3 line reduced to 1 MVA
    let mut capacity = net.clone();
    capacity.branches[1].rate_a = Some(0.01);
    let violations = check_operational(&capacity, &sol);
    assert_eq!(violations.len(), 1);
    assert!(violations[0].reason.contains("thermal"));

    // voltage range tightened to 1.0 +- 0.02 flags bus 1 at 1.1
    let mut voltage = net.clone();
    for b in voltage.buses.iter_mut() {
        b.v_min = 0.98;
        b.v_max = 1.02;
    }
    let violations = check_operational(&voltage, &sol);
    assert!(violations
        .iter()
        .any(|v| format!("{}", v.element) == "bus 1" && v.reason.contains("voltage")));
}

/// The uncongested AC optimum serves the whole load from the cheap
/// generator; cost = 100 MW plus 1.71 MW of series losses at 1 $/MWh.
#[test]
fn three_bus_uncongested_ac_objective() {
    let net = fixture("case3.m");
    let (status, obj, sol) = solve_ac(&net, &default_gap_options()).unwrap();
    assert_eq!(status, SolveStatus::Optimal);
    assert!((obj - 101.714).abs() < 0.05, "objective {obj}");
    assert!((sol.v[0] - 1.1).abs() < 1e-4);
    assert!(sol.pg[1] * 100.0 < 0.01, "expensive generator stays off");
}

#[test]
fn three_bus_capacity_scenario_objectives() {
    let net = fixture("case3_capacity.m");
    let (status, ac, _) = solve_ac(&net, &default_gap_options()).unwrap();
    assert_eq!(status, SolveStatus::Optimal);
    assert!((ac - 985.77).abs() < 1.0, "AC objective {ac}");

    let cp = solve_convex(&formulate_cp(&net).unwrap());
    assert!((cp - 100.0).abs() < 0.01, "CP {cp}");
    let nfll = solve_convex(&formulate_nfll(&net).unwrap());
    assert!((nfll - 109.877).abs() < 0.1, "NF+LL {nfll}");
    let soc = solve_convex(&formulate_soc(&net).unwrap());
    assert!((soc - 109.877).abs() < 0.1, "SOC {soc}");

    let gap_cp = gap(ac, cp).unwrap();
    assert!((gap_cp - 89.84).abs() < 0.2, "CP gap {gap_cp}");
    let gap_nfll = gap(ac, nfll).unwrap();
    assert!((gap_nfll - 88.93).abs() < 0.5, "NF+LL gap {gap_nfll}");
    let gap_soc = gap(ac, soc).unwrap();
    assert!((gap_soc - 88.93).abs() < 0.5, "SOC gap {gap_soc}");
}

#[test]
fn three_bus_voltage_scenario_objectives() {
    let net = fixture("case3_voltage.m");
    let (status, ac, _) = solve_ac(&net, &default_gap_options()).unwrap();
    assert_eq!(status, SolveStatus::Optimal);
    assert!((ac - 102.007).abs() < 0.5, "AC objective {ac}");
    for (model, expect) in [(ModelKind::Cp, 100.0), (ModelKind::Nfll, 100.0), (ModelKind::Soc, 100.0)]
    {
        let obj = match model {
            ModelKind::Cp => solve_convex(&formulate_cp(&net).unwrap()),
            ModelKind::Nfll => solve_convex(&formulate_nfll(&net).unwrap()),
            ModelKind::Soc => solve_convex(&formulate_soc(&net).unwrap()),
            ModelKind::Ac => unreachable!(),
        };
        assert!((obj - expect).abs() < 0.05, "{model:?} {obj}");
        let g = gap(ac, obj).unwrap();
        assert!((g - 1.96).abs() < 0.2, "{model:?} gap {g}");
    }
}

/// case9: AC optimum 5296.69 $/h with an essentially closed SOC gap.
#[test]
fn case9_ac_and_soc() {
    let net = fixture("case9.m");
    let (status, ac, _) = solve_ac(&net, &default_gap_options()).unwrap();
    assert_eq!(status, SolveStatus::Optimal);
    assert!((ac - 5296.69).abs() < 1.0, "AC {ac}");
    let soc = solve_convex(&formulate_soc(&net).unwrap());
    let g = gap(ac, soc).unwrap();
    assert!(g.abs() <= 0.05, "SOC gap {g}%");
}

/// case5: merit-order copper plate lands at 14810 $/h, a 15.62% gap
/// against the published 17551.89 AC value.
#[test]
fn case5_copper_plate_gap() {
    let net = fixture("case5.m");
    let cp = solve_convex(&formulate_cp(&net).unwrap());
    assert!((cp - 14810.0).abs() < 0.5, "CP {cp}");
    let g = gap(17551.89, cp).unwrap();
    assert!((g - 15.62).abs() < 0.05, "gap {g}");
}

#[test]
fn lossless_network_flow_equals_copper_plate() {
    let mut net = fixture("case3.m");
    for br in net.branches.iter_mut() {
        br.r = 0.0;
    }
    let cp = solve_convex(&formulate_cp(&net).unwrap());
    let nfll = solve_convex(&formulate_nfll(&net).unwrap());
    assert!((cp - nfll).abs() < 1e-3, "CP {cp} vs NF+LL {nfll}");
}

#[test]
fn copper_plate_rejects_negative_impedance() {
    let mut net = fixture("case3.m");
    net.branches[2].r = -0.01;
    assert!(matches!(
        formulate_cp(&net),
        Err(FormulateError::NegativeImpedance { branch: 2 })
    ));
}

/// Fixing the AC-OPF dispatch and re-running the power-flow oracle
/// reproduces the same operating point.
#[test]
fn ac_solution_satisfies_the_power_flow_oracle() {
    let net = fixture("case9.m");
    let (_, _, sol) = solve_ac(&net, &default_gap_options()).unwrap();
    let mut redispatched = net.clone();
    let idx = net.bus_index();
    for (gp, g) in redispatched.generators.iter_mut().enumerate() {
        g.pg = sol.pg[gp];
        g.qg = sol.qg[gp];
        g.v_set = sol.v[idx[&g.bus]];
    }
    for (bp, b) in redispatched.buses.iter_mut().enumerate() {
        b.v_init = sol.v[bp];
        b.theta_init = sol.theta[bp];
    }
    let pf = solve_pf(&redispatched, 1e-6, 20).unwrap();
    assert!(pf.mismatch_inf <= 1e-6);
    for (a, b) in pf.v.iter().zip(&sol.v) {
        assert!((a - b).abs() < 1e-4, "pf voltage {a} vs opf {b}");
    }
}

/// Convex formulations reach the same objective from scattered starts.
#[test]
fn convex_models_are_start_independent()  {
    let net = fixture("case3_capacity.m");
    let soc = formulate_soc(&net).unwrap();
    let reference = solve_convex(&soc);
    let (lo, hi) = soc.bounds();
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    for _ in 0..10 {
        // blend the nominal start toward a uniform random point; fully
        // adversarial corner starts are a solver-hardening concern, not
        // a statement about the optimum
        let start: Vec<f64> = soc
            .initial_point()
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let (l, h) = (lo[i], hi[i]);
                if l.is_finite() && h.is_finite() {
                    let u = rng.random_range(0.0..1.0) * (h - l) + l;
                    0.6 * v + 0.4 * u
                } else {
                    v + rng.random_range(-0.5..0.5)
                }
            })
            .collect();
        let shifted = Restart { inner: &soc, start };
        let opts = SolveOptions { max_iterations: 600, ..Default::default() };
        let out = solve_nlp(&shifted, &opts);
        assert_eq!(out.status, SolveStatus::Optimal);
        assert!(
            (out.objective - reference).abs() <= 1e-6 * (1.0 + reference.abs()),
            "{} vs {}",
            out.objective,
            reference
        );
    }
}

// -------------------------------------------------------------------------
// finite-difference derivative checks

#[test]
fn derivatives_match_finite_differences_on_random_networks() {
    for seed in 0..6u64 {
        let net = random_network(seed, 4 + (seed as usize % 3));
        check_problem_derivatives(&formulate_ac(&net).unwrap(), seed, "ac");
        check_problem_derivatives(&formulate_ac_feasibility(&net).unwrap(), seed, "ac-feas");
        check_problem_derivatives(&formulate_cp(&net).unwrap(), seed, "cp");
        check_problem_derivatives(&formulate_nfll(&net).unwrap(), seed, "nfll");
        check_problem_derivatives(&formulate_soc(&net).unwrap(), seed, "soc");
    }
}

/// Central-difference verification of gradient, both Jacobians, and the
/// Lagrangian Hessian at a random interior point.
fn check_problem_derivatives(p: &dyn NlpProblem, seed: u64, label: &str) {
    let n = p.num_vars();
    let (lo, hi) = p.bounds();
    let mut rng = ChaCha8Rng::seed_from_u64(7000 + seed);
    let mut x = p.initial_point();
    for i in 0..n {
        if lo[i].is_finite() && hi[i].is_finite() && hi[i] - lo[i] < 3e-3 {
            x[i] = 0.5 * (lo[i] + hi[i]);
            continue;
        }
        let jitter = rng.random_range(-0.03..0.03);
        let floor = if lo[i].is_finite() { lo[i] + 1e-3 } else { f64::NEG_INFINITY };
        let ceil = if hi[i].is_finite() { hi[i] - 1e-3 } else { f64::INFINITY };
        x[i] = (x[i] + jitter).clamp(floor, ceil);
    }
    let h = 1e-6;
    let me = p.num_eq();
    let mi = p.num_ineq();

    // objective gradient
    let mut grad = vec![0.0; n];
    p.gradient(&x, &mut grad);
    for i in 0..n {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[i] += h;
        xm[i] -= h;
        let fd = (p.objective(&xp) - p.objective(&xm)) / (2.0 * h);
        assert!(
            (grad[i] - fd).abs() <= 1e-6 * (1.0 + grad[i].abs().max(fd.abs())),
            "{label} seed {seed}: grad[{i}] {} vs {}",
            grad[i],
            fd
        );
    }

    // jacobians
    let (jeq, jineq) = p.jacobians(&x);
    let dense_eq = densify(&jeq, me, n);
    let dense_ineq = densify(&jineq, mi, n);
    for i in 0..n {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[i] += h;
        xm[i] -= h;
        let (mut ep, mut ip) = (vec![0.0; me], vec![0.0; mi]);
        let (mut em, mut im) = (vec![0.0; me], vec![0.0; mi]);
        p.constraints(&xp, &mut ep, &mut ip);
        p.constraints(&xm, &mut em, &mut im);
        for r in 0..me {
            let fd = (ep[r] - em[r]) / (2.0 * h);
            let a = dense_eq[r * n + i];
            assert!(
                (a - fd).abs() <= 1e-6 * (1.0 + a.abs().max(fd.abs())),
                "{label} seed {seed}: eq jac[{r},{i}] {a} vs {fd}"
            );
        }
        for r in 0..mi {
            let fd = (ip[r] - im[r]) / (2.0 * h);
            let a = dense_ineq[r * n + i];
            assert!(
                (a - fd).abs() <= 1e-6 * (1.0 + a.abs().max(fd.abs())),
                "{label} seed {seed}: ineq jac[{r},{i}] {a} vs {fd}"
            );
        }
    }

    // Lagrangian Hessian against differences of the Lagrangian gradient
    let lam_eq: Vec<f64> = (0..me).map(|_| rng.random_range(-2.0..2.0)).collect();
    let lam_ineq: Vec<f64> = (0..mi).map(|_| rng.random_range(-2.0..2.0)).collect();
    let hess = p.lagrangian_hessian(&x, 1.0, &lam_eq, &lam_ineq);
    let dense_h = densify(&hess, n, n);
    let lag_grad = |x: &[f64]| -> Vec<f64> {
        let mut g = vec![0.0; n];
        p.gradient(x, &mut g);
        let (jeq, jineq) = p.jacobians(x);
        for &(r, c, v) in jeq.iter() {
            g[c] += lam_eq[r] * v;
        }
        for &(r, c, v) in jineq.iter() {
            g[c] += lam_ineq[r] * v;
        }
        g
    };
    for i in 0..n {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[i] += h;
        xm[i] -= h;
        let gp = lag_grad(&xp);
        let gm = lag_grad(&xm);
        for r in 0..n {
            let fd = (gp[r] - gm[r]) / (2.0 * h);
            let a = dense_h[r * n + i];
            assert!(
                (a - fd).abs() <= 2e-5 * (1.0 + a.abs().max(fd.abs())),
                "{label} seed {seed}: hess[{r},{i}] {a} vs {fd}"
            );
        }
    }
}

fn densify(t: &gridcase_solver::linalg::Triplets, rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; rows * cols];
    for &(r, c, v) in t.iter() {
        out[r * cols + c] += v;
    }
    out
}

// -------------------------------------------------------------------------
// relaxation dominance

/// On random small networks where every model solves to optimality, the
/// objective ordering CP <= NF+LL <= SOC <= AC must hold.
#[test]
fn relaxation_dominance_holds_on_random_networks() {
    let mut checked = 0;
    let mut seed = 0u64;
    while checked < 50 && seed < 200 {
        seed += 1;
        let net = random_network(seed, 3 + (seed as usize % 4));
        let opts = SolveOptions::default();
        let Ok((SolveStatus::Optimal, ac, _)) =
            solve_ac(&net, &default_gap_options()).map(|t| (t.0, t.1, t.2))
        else {
            continue;
        };
        let cp_out = solve_nlp(&formulate_cp(&net).unwrap(), &opts);
        let nf_out = solve_nlp(&formulate_nfll(&net).unwrap(), &opts);
        let soc_out = solve_nlp(&formulate_soc(&net).unwrap(), &opts);
        if cp_out.status != SolveStatus::Optimal
            || nf_out.status != SolveStatus::Optimal
            || soc_out.status != SolveStatus::Optimal
        {
            continue;
        }
        checked += 1;
        let slack = 1e-6 * (1.0 + ac.abs());
        assert!(
            cp_out.objective <= nf_out.objective + slack,
            "seed {seed}: CP {} > NF+LL {}",
            cp_out.objective,
            nf_out.objective
        );
        assert!(
            nf_out.objective <= soc_out.objective + slack,
            "seed {seed}: NF+LL {} > SOC {}",
            nf_out.objective,
            soc_out.objective
        );
        assert!(
            soc_out.objective <= ac + slack,
            "seed {seed}: SOC {} > AC {ac}",
            soc_out.objective
        );
    }
    assert!(checked >= 50, "only {checked} fully-solved networks");
}

// -------------------------------------------------------------------------
// helpers

fn solve_convex(p: &dyn NlpProblem) -> f64 {
    let out = solve_nlp(p, &SolveOptions::default());
    assert_eq!(out.status, SolveStatus::Optimal, "convex solve failed");
    out.objective
}

struct Restart<'a, P: NlpProblem + ?Sized> {
    inner: &'a P,
    start: Vec<f64>,
}

impl<P: NlpProblem + ?Sized> NlpProblem for Restart<'_, P> {
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
    fn jacobians(
        &self,
        x: &[f64],
    ) -> (gridcase_solver::linalg::Triplets, gridcase_solver::linalg::Triplets) {
        self.inner.jacobians(x)
    }
    fn lagrangian_hessian(
        &self,
        x: &[f64],
        w: f64,
        le: &[f64],
        li: &[f64],
    ) -> gridcase_solver::linalg::Triplets {
        self.inner.lagrangian_hessian(x, w, le, li)
    }
    fn is_convex(&self) -> bool {
        self.inner.is_convex()
    }
}

/// Random connected network with nonnegative series impedance,
/// occasionally charging, shunts, taps, thermal limits, and angle
/// bounds; costs are convex with nonnegative linear terms.
fn random_network(seed: u64, nb: usize) -> Network {
    let mut rng = ChaCha8Rng::seed_from_u64(31_000 + seed);
    let mk_bus = |id: u32, kind: BusKind, pd: f64, qd: f64, bs: f64| Bus {
        id,
        kind,
        pd,
        qd,
        gs: 0.0,
        bs,
        v_min: 0.9,
        v_max: 1.1,
        base_kv: 0.0,
        v_init: 1.0,
        theta_init: 0.0,
    };
    let mut buses = vec![mk_bus(1, BusKind::Slack, 0.0, 0.0, 0.0)];
    for i in 2..=nb as u32 {
        let pd = rng.random_range(0.05..0.5);
        let qd = pd * rng.random_range(-0.2..0.4);
        let bs = if rng.random_bool(0.25) { rng.random_range(0.0..0.2) } else { 0.0 };
        buses.push(mk_bus(i, BusKind::Pq, pd, qd, bs));
    }
    let mut branches = Vec::new();
    let mut push_branch = |rng: &mut ChaCha8Rng, f: u32, t: u32| {
        let with_angle = rng.random_bool(0.3);
        branches.push(Branch {
            from_bus: f,
            to_bus: t,
            r: rng.random_range(0.0..0.04),
            x: rng.random_range(0.03..0.25),
            b_charge: if rng.random_bool(0.3) { rng.random_range(0.0..0.2) } else { 0.0 },
            tap: if rng.random_bool(0.2) { rng.random_range(0.95..1.05) } else { 1.0 },
            shift: 0.0,
            rate_a: if rng.random_bool(0.4) { Some(rng.random_range(1.0..3.0)) } else { None },
            angle_min: if with_angle { -0.52 } else { f64::NEG_INFINITY },
            angle_max: if with_angle { 0.52 } else { f64::INFINITY },
            status: true,
        });
    };
    for i in 2..=nb as u32 {
        let to = rng.random_range(1..i);
        push_branch(&mut rng, i, to);
    }
    if nb >= 3 {
        push_branch(&mut rng, 1, nb as u32);
    }
    let total_pd: f64 = buses.iter().map(|b| b.pd).sum();
    let ngen = 1 + rng.random_range(0..2usize);
    let mut generators = Vec::new();
    for k in 0..ngen {
        let at = if k == 0 { 1 } else { rng.random_range(1..=nb as u32) };
        generators.push(Generator {
            bus: at,
            pg: total_pd / ngen as f64,
            qg: 0.0,
            p_min: 0.0,
            p_max: total_pd * rng.random_range(1.5..3.0),
            q_min: -2.0,
            q_max: 2.0,
            v_set: 1.0,
            status: true,
            cost: CostPoly {
                c2: if rng.random_bool(0.5) { rng.random_range(0.0..0.05) } else { 0.0 },
                c1: rng.random_range(1.0..30.0),
                c0: rng.random_range(0.0..10.0),
            },
            fuel: None,
        });
    }
    Network { name: format!("rnd{seed}"), base_mva: 100.0, buses, branches, generators }
}
