//! Apply the fitted statistical models to a network: fuel
//! classification, active/reactive capacities, costs, thermal limits,
//! and angle bounds.
//!
//! `apply_plan` is a pure function of `(network, plan)`: every draw
//! comes from a per-element stream keyed by the plan seed, so output is
//! identical across runs regardless of evaluation order.

use crate::fleet::{AugmentModels, CapacityBins};
use crate::rng::{stream, StreamTag};
use gridcase_core::{Branch, Bus, BusKind, CostPoly, FuelCategory, Generator, Network};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Cap on rejection-sampling attempts in the capacity model.
pub const MAX_CAPACITY_DRAWS: u32 = 100;

/// Default angle assumption for the thermal-limit upper bound (degrees).
pub const DEFAULT_TL_UB_ANGLE_DEG: f64 = 15.0;

#[derive(Debug, Error, PartialEq)]
pub enum AugmentError {
    #[error("fuel classification requires fitted capacity bins")]
    BinsNotFitted,
    #[error("gen[{0}]: no fuel category; enable fuel classification or provide one")]
    MissingFuel(usize),
    #[error("no {model} parameters for fuel {fuel}")]
    MissingFuelModel { model: &'static str, fuel: FuelCategory },
    #[error("angle bound must be in (0, 90] degrees, got {0}")]
    BadAngleBound(f64),
    #[error("gen[{index}]: {msg}")]
    BadGenerator { index: usize, msg: String },
}

/// Which reactive-bound model to apply.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReactiveModel {
    /// Clamp bounds to at most +-50% of nameplate (pessimistic).
    Am50,
    /// Expand bounds to at least +-50% of nameplate (optimistic).
    Al50,
}

/// How the thermal-limit regression interprets nominal voltage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum TlVoltageUnit {
    /// `base_kv` in kilovolts (the fitting datasets' convention).
    #[default]
    Kilovolts,
    /// Treat nominal voltage as 1 p.u. for every line.
    PerUnit,
}

/// Model selection and seed for one augmentation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentPlan {
    /// Classify generator fuels from the capacity bins.
    #[serde(default)]
    pub gf_stat: bool,
    /// Redraw maximum active generation from the fuel distributions.
    #[serde(default)]
    pub ag_stat: bool,
    /// Reactive-bound model, at most one.
    #[serde(default)]
    pub reactive: Option<ReactiveModel>,
    /// Redraw linear generation costs from the fuel price distributions.
    #[serde(default)]
    pub ac_stat: bool,
    /// Thermal limits from the log-log regression.
    #[serde(default)]
    pub tl_stat: bool,
    /// Thermal limits from the voltage-bound upper bound.
    #[serde(default)]
    pub tl_ub: bool,
    /// Angle assumption used by the upper-bound model (degrees).
    #[serde(default = "default_tl_ub_angle")]
    pub tl_ub_angle_deg: f64,
    /// Voltage interpretation for the regression model.
    #[serde(default)]
    pub tl_voltage_unit: TlVoltageUnit,
    /// Set every branch's angle-difference bound to +- this (degrees).
    #[serde(default)]
    pub angle_bound_deg: Option<f64>,
    /// Run seed; all draws derive from it.
    pub seed: u64,
}

fn default_tl_ub_angle() -> f64 {
    DEFAULT_TL_UB_ANGLE_DEG
}

impl Default for AugmentPlan {
    fn default() -> Self {
        AugmentPlan {
            gf_stat: false,
            ag_stat: false,
            reactive: None,
            ac_stat: false,
            tl_stat: false,
            tl_ub: false,
            tl_ub_angle_deg: DEFAULT_TL_UB_ANGLE_DEG,
            tl_voltage_unit: TlVoltageUnit::Kilovolts,
            angle_bound_deg: None,
            seed: 0,
        }
    }
}

impl AugmentPlan {
    /// The standard completion recipe: classify fuels, redraw active
    /// capacities and costs, clamp reactive bounds, assign thermal
    /// limits from both models, and bound angles at 30 degrees.
    pub fn standard(seed: u64) -> Self {
        AugmentPlan {
            gf_stat: true,
            ag_stat: true,
            reactive: Some(ReactiveModel::Am50),
            ac_stat: true,
            tl_stat: true,
            tl_ub: true,
            angle_bound_deg: Some(30.0),
            seed,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), AugmentError> {
        if let Some(deg) = self.angle_bound_deg {
            if !(deg > 0.0 && deg <= 90.0) {
                return Err(AugmentError::BadAngleBound(deg));
            }
        }
        Ok(())
    }

    fn is_stochastic(&self) -> bool {
        self.gf_stat || self.ag_stat || self.ac_stat
    }
}

/// One logged model application.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    /// `gen[i]` or `branch[i]`.
    pub element: String,
    pub model: String,
    /// Human-readable sampled or assigned value.
    pub value: String,
    /// Number of distribution draws consumed.
    pub draws: u32,
}

/// Audit log of every field an augmentation run modified.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct AugmentLog {
    pub schema_version: u32,
    pub seed: u64,
    pub records: Vec<LogRecord>,
    pub warnings: Vec<String>,
}

impl AugmentLog {
    fn push(&mut self, element: String, model: &str, value: String, draws: u32) {
        self.records.push(LogRecord { element, model: model.to_string(), value, draws });
    }
}

/// Classify one generator's fuel category.
///
/// A zero active upper bound marks a synchronous condenser. A slack-bus
/// generator with no specified output (zero `pg` and no finite `p_max`)
/// is assumed to be a very large, cheap plant and classed NUC. Otherwise
/// a weighted die is rolled over the capacity bin containing the
/// classification key: `p_max` when finite, else `pg` (key clamped to
/// the edge bins).
pub fn classify_fuel(
    gen: &Generator,
    at_slack: bool,
    bins: &CapacityBins,
    base_mva: f64,
    rng: &mut ChaCha8Rng,
) -> Result<FuelCategory, AugmentError> {
    if gen.p_max == 0.0 {
        return Ok(FuelCategory::Sync);
    }
    let has_pmax = gen.p_max.is_finite() && gen.p_max > 0.0;
    if at_slack && !has_pmax && gen.pg == 0.0 {
        return Ok(FuelCategory::Nuc);
    }
    if bins.is_empty() {
        return Err(AugmentError::BinsNotFitted);
    }
    let key_mw = if has_pmax { gen.p_max } else { gen.pg } * base_mva;
    let weights = &bins.weights[bins.bin_for(key_mw)];
    let roll: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = FuelCategory::Ng;
    for (fuel, w) in weights {
        acc += w;
        last = *fuel;
        if roll < acc {
            return Ok(*fuel);
        }
    }
    Ok(last) // guard against cumulative rounding at roll ~ 1
}

/// Draw a maximum active generation (MW) for a generator whose
/// reference output is `reference_mw`.
///
/// Exponential fuels (PEL, NG, COW) and the normal NUC distribution are
/// rejection-sampled until the draw exceeds the reference; after
/// [`MAX_CAPACITY_DRAWS`] failed attempts the linear summer-peak rule
/// `reference / (1 - reduction)` applies. SYNC is always 0. Returns the
/// value and the number of draws used (0 means the fallback or SYNC).
pub fn ag_stat(
    reference_mw: f64,
    fuel: FuelCategory,
    models: &AugmentModels,
    rng: &mut ChaCha8Rng,
) -> Result<(f64, u32), AugmentError> {
    if fuel == FuelCategory::Sync {
        return Ok((0.0, 0));
    }
    enum Dist {
        Exp(Exp<f64>),
        Norm(Normal<f64>),
    }
    let dist = match fuel {
        FuelCategory::Pel | FuelCategory::Ng | FuelCategory::Cow => {
            let lambda = models
                .capacity_exp_per_mw
                .get(&fuel)
                .ok_or(AugmentError::MissingFuelModel { model: "capacity", fuel })?;
            Dist::Exp(Exp::new(*lambda).expect("positive rate"))
        }
        FuelCategory::Nuc => {
            let (mu, sigma) = models
                .capacity_norm_mw
                .get(&fuel)
                .ok_or(AugmentError::MissingFuelModel { model: "capacity", fuel })?;
            Dist::Norm(Normal::new(*mu, *sigma).expect("finite parameters"))
        }
        other => return Err(AugmentError::MissingFuelModel { model: "capacity", fuel: other }),
    };
    for attempt in 1..=MAX_CAPACITY_DRAWS {
        let draw = match &dist {
            Dist::Exp(d) => d.sample(rng),
            Dist::Norm(d) => d.sample(rng),
        };
        // a draw <= 0 also fails this test, which truncates the normal at 0
        if draw > reference_mw {
            return Ok((draw, attempt));
        }
    }
    let reduction = models
        .summer_reduction
        .get(&fuel)
        .ok_or(AugmentError::MissingFuelModel { model: "summer reduction", fuel })?;
    Ok((reference_mw / (1.0 - reduction), 0))
}

/// Clamp reactive bounds to at most +-50% of nameplate capacity.
/// Units are the caller's, as long as they are consistent.
pub fn rg_am50(q_min: f64, q_max: f64, nameplate: f64) -> (f64, f64) {
    let half = 0.5 * nameplate;
    (q_min.max(-half), q_max.min(half))
}

/// Expand reactive bounds to at least +-50% of nameplate capacity.
pub fn rg_al50(q_min: f64, q_max: f64, nameplate: f64) -> (f64, f64) {
    let half = 0.5 * nameplate;
    (q_min.min(-half), q_max.max(half))
}

/// Draw a linear marginal cost for the fuel: `c1 = max(0, N(mu, sigma))`
/// in $/MWh. SYNC gets a zero cost polynomial.
pub fn ac_stat(
    fuel: FuelCategory,
    models: &AugmentModels,
    rng: &mut ChaCha8Rng,
) -> Result<CostPoly, AugmentError> {
    if fuel == FuelCategory::Sync {
        return Ok(CostPoly::ZERO);
    }
    let (mu, sigma) = models
        .cost_norm_usd_per_mwh
        .get(&fuel)
        .ok_or(AugmentError::MissingFuelModel { model: "cost", fuel })?;
    let draw = Normal::new(*mu, *sigma).expect("finite parameters").sample(rng);
    Ok(CostPoly { c2: 0.0, c1: draw.max(0.0), c0: 0.0 })
}

/// Thermal limit from the log-log regression, in p.u. on a 100 MVA
/// base: `t = v_nominal * e^a * (x/r)^k`.
///
/// Not applicable (returns `None`) for transformers (tap or phase shift,
/// or differing nominal voltages), ideal lines (r = 0), or lines with
/// unknown nominal voltage.
pub fn tl_stat(
    branch: &Branch,
    from_bus: &Bus,
    to_bus: &Bus,
    models: &AugmentModels,
    voltage_unit: TlVoltageUnit,
) -> Option<f64> {
    if branch.r <= 0.0 || branch.x <= 0.0 {
        return None;
    }
    if branch.tap != 1.0 || branch.shift != 0.0 {
        return None;
    }
    let v_nominal = match voltage_unit {
        TlVoltageUnit::Kilovolts => {
            if from_bus.base_kv <= 0.0 || from_bus.base_kv != to_bus.base_kv {
                return None;
            }
            from_bus.base_kv
        }
        TlVoltageUnit::PerUnit => 1.0,
    };
    let (a, k) = models.tl_loglog;
    Some(v_nominal * a.exp() * (branch.x / branch.r).powf(k))
}

/// Thermal limit upper bound from voltage bounds and an assumed
/// worst-case angle difference, in the same per-unit system as the
/// branch impedance:
/// `t^2 = vu_f^2 y^2 (vu_f^2 + vu_t^2 - 2 vu_f vu_t cos(theta))`.
///
/// Returns `(t, assumption_holds)`. The corner-point formula assumes
/// `2 y sin(theta/2)` is large compared to the voltage ranges; the flag
/// is false when that fails and the value is only approximate. `None`
/// when the branch has no impedance.
pub fn tl_ub(branch: &Branch, from_bus: &Bus, to_bus: &Bus, theta_delta: f64) -> Option<(f64, bool)> {
    if branch.r == 0.0 && branch.x == 0.0 {
        return None;
    }
    let y = branch.admittance_magnitude();
    let (vuf, vut) = (from_bus.v_max, to_bus.v_max);
    let t2 = vuf * vuf * y * y * (vuf * vuf + vut * vut - 2.0 * vuf * vut * theta_delta.cos());
    let spread = (from_bus.v_max - from_bus.v_min).max(to_bus.v_max - to_bus.v_min);
    let holds = 2.0 * y * (theta_delta / 2.0).sin() >= spread;
    Some((t2.max(0.0).sqrt(), holds))
}

/// Combine the regression estimate and the upper bound: take the
/// minimum of whichever apply, and replace an existing limit only when
/// the computed one is tighter.
pub fn tl_combined(stat: Option<f64>, ub: Option<f64>, existing: Option<f64>) -> Option<f64> {
    let computed = match (stat, ub) {
        (Some(s), Some(u)) => Some(s.min(u)),
        (Some(s), None) => Some(s),
        (None, Some(u)) => Some(u),
        (None, None) => None,
    };
    match (computed, existing) {
        (Some(c), Some(e)) => Some(if c < e { c } else { e }),
        (Some(c), None) => Some(c),
        (None, e) => e,
    }
}

/// Apply a plan to a network, producing the augmented network and an
/// audit log. Models apply in the order: fuel classification, active
/// capacity, reactive bounds, costs, thermal limits, angle bound.
pub fn apply_plan(
    net: &Network,
    plan: &AugmentPlan,
    models: &AugmentModels,
) -> Result<(Network, AugmentLog), AugmentError> {
    plan.validate()?;
    if plan.gf_stat && models.bins.is_empty() {
        return Err(AugmentError::BinsNotFitted);
    }

    let mut out = net.clone();
    let mut log = AugmentLog { schema_version: 1, seed: plan.seed, ..Default::default() };
    let bus_index = net.bus_index();
    let base = net.base_mva;

    for (gi, gen) in out.generators.iter_mut().enumerate() {
        let el = format!("gen[{gi}]");
        let at_slack = bus_index
            .get(&gen.bus)
            .is_some_and(|&b| net.buses[b].kind == BusKind::Slack);

        let mut fuel = gen.fuel;
        if plan.gf_stat {
            let mut rng = stream(plan.seed, StreamTag::FuelClass, gi as u64);
            let f = classify_fuel(gen, at_slack, &models.bins, base, &mut rng)?;
            gen.fuel = Some(f);
            fuel = Some(f);
            log.push(el.clone(), "GF-Stat", f.to_string(), 1);
        }

        if plan.ag_stat {
            let fuel = fuel.ok_or(AugmentError::MissingFuel(gi))?;
            let reference_mw = if gen.p_max.is_finite() && gen.p_max > 0.0 {
                gen.p_max
            } else if gen.p_max == 0.0 {
                0.0
            } else {
                gen.pg
            } * base;
            if reference_mw < 0.0 {
                return Err(AugmentError::BadGenerator {
                    index: gi,
                    msg: format!("negative reference output {reference_mw} MW"),
                });
            }
            let mut rng = stream(plan.seed, StreamTag::ActiveCapacity, gi as u64);
            let (p_max_mw, draws) = ag_stat(reference_mw, fuel, models, &mut rng)?;
            gen.p_max = p_max_mw / base;
            log.push(el.clone(), "AG-Stat", format!("p_max = {p_max_mw} MW"), draws);
        }

        // Condensers keep their stated reactive range: their active
        // nameplate is zero by definition, which says nothing about the
        // machine's MVA rating.
        let is_condenser = fuel == Some(FuelCategory::Sync) || gen.p_max == 0.0;
        if let (Some(model), false) = (plan.reactive, is_condenser) {
            let nameplate = gen.p_max;
            let (q_min, q_max) = match model {
                ReactiveModel::Am50 => rg_am50(gen.q_min, gen.q_max, nameplate),
                ReactiveModel::Al50 => rg_al50(gen.q_min, gen.q_max, nameplate),
            };
            if (q_min, q_max) != (gen.q_min, gen.q_max) {
                gen.q_min = q_min;
                gen.q_max = q_max;
                let name = match model {
                    ReactiveModel::Am50 => "RG-AM50",
                    ReactiveModel::Al50 => "RG-AL50",
                };
                log.push(
                    el.clone(),
                    name,
                    format!("q bounds = [{}, {}] MVAr", q_min * base, q_max * base),
                    0,
                );
            }
        }

        if plan.ac_stat {
            let fuel = fuel.ok_or(AugmentError::MissingFuel(gi))?;
            let mut rng = stream(plan.seed, StreamTag::Cost, gi as u64);
            let cost = ac_stat(fuel, models, &mut rng)?;
            gen.cost = cost;
            log.push(el.clone(), "AC-Stat", format!("c1 = {} $/MWh", cost.c1), 1);
        }
    }

    if plan.tl_stat || plan.tl_ub {
        let theta = plan.tl_ub_angle_deg.to_radians();
        for (bi, br) in out.branches.iter_mut().enumerate() {
            let (Some(&f), Some(&t)) = (bus_index.get(&br.from_bus), bus_index.get(&br.to_bus))
            else {
                continue;
            };
            let (from_bus, to_bus) = (&net.buses[f], &net.buses[t]);
            let stat = if plan.tl_stat {
                // regression output is p.u. on a 100 MVA base
                tl_stat(br, from_bus, to_bus, models, plan.tl_voltage_unit)
                    .map(|t100| t100 * 100.0 / base)
            } else {
                None
            };
            let ub = if plan.tl_ub {
                let res = tl_ub(br, from_bus, to_bus, theta);
                if let Some((_, false)) = res {
                    log.warnings.push(format!(
                        "branch[{bi}]: corner-point assumption weak (2 y sin(theta/2) \
                         below the voltage range); upper bound is approximate"
                    ));
                }
                res.map(|(v, _)| v)
            } else {
                None
            };
            let combined = tl_combined(stat, ub, br.rate_a);
            if combined != br.rate_a {
                br.rate_a = combined;
                let model = match (stat, ub) {
                    (Some(s), Some(u)) if s <= u => "TL-Stat",
                    (Some(_), Some(_)) | (None, Some(_)) => "TL-UB",
                    (Some(_), None) => "TL-Stat",
                    (None, None) => unreachable!("combined changed without a model"),
                };
                log.push(
                    format!("branch[{bi}]"),
                    model,
                    format!("rate_a = {} MVA", combined.unwrap() * base),
                    0,
                );
            }
        }
    }

    if let Some(deg) = plan.angle_bound_deg {
        let rad = deg.to_radians();
        for br in out.branches.iter_mut() {
            br.angle_min = -rad;
            br.angle_max = rad;
        }
        log.push("branch[*]".into(), "angle-bound", format!("+-{deg} deg"), 0);
    }

    let _ = plan.is_stochastic(); // seed is part of the log either way
    Ok((out, log))
}
