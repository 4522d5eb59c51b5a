//! Fleet and fuel-price ingestion and model fitting.
//!
//! Inputs are two minimal named-column CSV files: a generator fleet
//! table (`status, energy_source, nameplate_mw, summer_mw`) and a state
//! fuel-price table (`state, seds_label, price_per_mmbtu`). The fitted
//! parameters land in [`AugmentModels`], which also ships with built-in
//! defaults for use without any input data.

use gridcase_core::{FuelCategory, Network};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Read;
use thiserror::Error;

/// 1 million Btu expressed in MWh.
pub const MMBTU_PER_MWH: f64 = 0.29307107;

/// Capacity floor (MW) applied before fitting the capacity models.
pub const DEFAULT_MIN_MW: f64 = 5.0;

/// Minimum number of samples per classification bin.
pub const MIN_BIN_SAMPLES: usize = 100;

/// One generator row of the fleet CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FleetRecord {
    /// Operational status code; `OP` means in service.
    pub status: String,
    /// Detailed fuel code (e.g. `ANT`, `DFO`, `NG`).
    pub energy_source: String,
    pub nameplate_mw: f64,
    pub summer_mw: f64,
}

/// One state fuel-price row of the price CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceRecord {
    pub state: String,
    pub seds_label: String,
    pub price_per_mmbtu: f64,
}

#[derive(Debug, Error, PartialEq)]
pub enum FitError {
    #[error("unknown fuel code `{0}`")]
    UnknownFuelCode(String),
    #[error("need at least {need} samples, got {got}")]
    TooFewSamples { need: usize, got: usize },
    #[error("sample {index} is not positive: {value}")]
    NonPositiveSample { index: usize, value: f64 },
    #[error("negative price: {0}")]
    NegativePrice(f64),
    #[error("all abscissae are equal; the log-log fit is degenerate")]
    DegenerateFit,
    #[error("no price rows for SEDS label `{0}`")]
    MissingPriceLabel(String),
    #[error("csv: {0}")]
    Csv(String),
}

/// Map a detailed fuel code to its broad category.
pub fn map_fuel(code: &str) -> Result<FuelCategory, FitError> {
    use FuelCategory::*;
    Ok(match code.trim().to_ascii_uppercase().as_str() {
        "ANT" | "BIT" | "LIG" | "SUB" | "WC" => Cow,
        "RC" | "DFO" | "JF" | "KER" | "PC" | "RFO" | "WO" => Pel,
        "BFG" | "NG" | "OG" | "PG" | "SG" | "SGC" => Ng,
        "NUC" => Nuc,
        "AB" | "MSW" | "OBS" | "WDS" | "OBL" | "SLW" | "BLQ" | "WDL" => Bio,
        "WAT" | "GEO" => Drn,
        "SUN" | "WND" => Rn,
        other => return Err(FitError::UnknownFuelCode(other.to_string())),
    })
}

/// Keep only in-service records in the four modeled categories
/// (COW, PEL, NG, NUC) with nameplate capacity of at least `min_mw`.
/// Records with unknown fuel codes are simply dropped.
pub fn filter_fleet(records: &[FleetRecord], min_mw: f64) -> Vec<(FleetRecord, FuelCategory)> {
    records
        .iter()
        .filter(|r| r.status.trim().eq_ignore_ascii_case("OP"))
        .filter(|r| r.nameplate_mw >= min_mw)
        .filter_map(|r| {
            let fuel = map_fuel(&r.energy_source).ok()?;
            matches!(
                fuel,
                FuelCategory::Cow | FuelCategory::Pel | FuelCategory::Ng | FuelCategory::Nuc
            )
            .then(|| (r.clone(), fuel))
        })
        .collect()
}

/// Empirical fuel-category distribution over nameplate-capacity bins.
///
/// Bins are formed greedily over the sorted capacities: a bin closes as
/// soon as it holds [`MIN_BIN_SAMPLES`] samples and the next capacity
/// value differs (ties are never split across bins); a final short bin
/// is merged into its predecessor. `boundaries` holds the interior bin
/// edges (midpoints between the adjacent samples of neighbouring bins),
/// so a lookup key outside the sampled range clamps to an edge bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct CapacityBins {
    /// Interior bin edges (MW), strictly increasing; `len = bins - 1`.
    pub boundaries_mw: Vec<f64>,
    /// Per-bin category weights; each map sums to 1.
    pub weights: Vec<BTreeMap<FuelCategory, f64>>,
    /// Number of samples each bin was formed from.
    pub bin_samples: Vec<usize>,
    /// Smallest and largest capacity seen (MW).
    pub sample_range_mw: (f64, f64),
}

impl CapacityBins {
    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Bin index for a capacity key, clamped to the edge bins.
    pub fn bin_for(&self, key_mw: f64) -> usize {
        self.boundaries_mw.partition_point(|&b| b <= key_mw)
    }
}

/// Fit the capacity-binned fuel classifier.
pub fn fit_bins(records: &[(f64, FuelCategory)]) -> Result<CapacityBins, FitError> {
    if records.len() < MIN_BIN_SAMPLES {
        return Err(FitError::TooFewSamples { need: MIN_BIN_SAMPLES, got: records.len() });
    }
    let mut sorted: Vec<(f64, FuelCategory)> = records.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));

    let n = sorted.len();
    let mut ranges: Vec<(usize, usize)> = Vec::new();
    let mut start = 0;
    for i in 0..n - 1 {
        let count = i + 1 - start;
        if count >= MIN_BIN_SAMPLES && sorted[i + 1].0 != sorted[i].0 {
            ranges.push((start, i + 1));
            start = i + 1;
        }
    }
    // Final segment: keep if full, otherwise merge into its predecessor.
    if n - start >= MIN_BIN_SAMPLES || ranges.is_empty() {
        ranges.push((start, n));
    } else {
        ranges.last_mut().unwrap().1 = n;
    }

    let boundaries_mw = ranges
        .windows(2)
        .map(|w| (sorted[w[0].1 - 1].0 + sorted[w[1].0].0) / 2.0)
        .collect();
    let mut weights = Vec::with_capacity(ranges.len());
    let mut bin_samples = Vec::with_capacity(ranges.len());
    for &(lo, hi) in &ranges {
        let mut counts: BTreeMap<FuelCategory, usize> = BTreeMap::new();
        for (_, fuel) in &sorted[lo..hi] {
            *counts.entry(*fuel).or_insert(0) += 1;
        }
        let total = (hi - lo) as f64;
        weights.push(counts.into_iter().map(|(f, c)| (f, c as f64 / total)).collect());
        bin_samples.push(hi - lo);
    }

    Ok(CapacityBins {
        boundaries_mw,
        weights,
        bin_samples,
        sample_range_mw: (sorted[0].0, sorted[n - 1].0),
    })
}

/// Maximum-likelihood exponential rate: `lambda = 1 / mean`.
pub fn fit_exponential(samples: &[f64]) -> Result<f64, FitError> {
    if samples.len() < 2 {
        return Err(FitError::TooFewSamples { need: 2, got: samples.len() });
    }
    for (i, &s) in samples.iter().enumerate() {
        if !(s > 0.0) {
            return Err(FitError::NonPositiveSample { index: i, value: s });
        }
    }
    let mean = samples.iter().sum::<f64>() / samples.len() as f64;
    Ok(1.0 / mean)
}

/// Maximum-likelihood normal parameters: sample mean and population
/// (divide-by-n) standard deviation.
pub fn fit_normal(samples: &[f64]) -> Result<(f64, f64), FitError> {
    if samples.len() < 2 {
        return Err(FitError::TooFewSamples { need: 2, got: samples.len() });
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / n;
    Ok((mean, var.sqrt()))
}

/// Ordinary least squares of `ln y` on `ln x`, for the power-law model
/// `y = e^a * x^k`. Returns `(a, k)`. The caller is responsible for
/// balancing multiple source datasets before fitting (see
/// [`equal_proportions`]).
pub fn fit_loglog(points: &[(f64, f64)]) -> Result<(f64, f64), FitError> {
    if points.len() < 2 {
        return Err(FitError::TooFewSamples { need: 2, got: points.len() });
    }
    for (i, &(x, y)) in points.iter().enumerate() {
        if !(x > 0.0) {
            return Err(FitError::NonPositiveSample { index: i, value: x });
        }
        if !(y > 0.0) {
            return Err(FitError::NonPositiveSample { index: i, value: y });
        }
    }
    let n = points.len() as f64;
    let lx: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(FitError::DegenerateFit);
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let k = sxy / sxx;
    let a = my - k * mx;
    Ok((a, k))
}

/// Convert a fuel price from $/MMBtu to $/MWh.
pub fn convert_price(price_per_mmbtu: f64) -> Result<f64, FitError> {
    if price_per_mmbtu < 0.0 {
        return Err(FitError::NegativePrice(price_per_mmbtu));
    }
    Ok(price_per_mmbtu / MMBTU_PER_MWH)
}

/// Combine two datasets in equal proportions by resampling the smaller
/// one with replacement.
pub fn equal_proportions<T: Clone>(a: &[T], b: &[T], rng: &mut ChaCha8Rng) -> Vec<T> {
    let (small, large) = if a.len() < b.len() { (a, b) } else { (b, a) };
    let mut out = Vec::with_capacity(2 * large.len());
    out.extend_from_slice(large);
    if small.is_empty() {
        return out;
    }
    for _ in 0..large.len() {
        out.push(small[rng.random_range(0..small.len())].clone());
    }
    out
}

/// Fitted model parameters for every augmentation model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentModels {
    pub schema_version: u32,
    /// Capacity-binned fuel classifier; empty when not fitted.
    pub bins: CapacityBins,
    /// Exponential nameplate-capacity rate per fuel (1/MW).
    pub capacity_exp_per_mw: BTreeMap<FuelCategory, f64>,
    /// Normal nameplate capacity per fuel: (mean MW, std MW).
    pub capacity_norm_mw: BTreeMap<FuelCategory, (f64, f64)>,
    /// Mean summer peak capacity reduction per fuel, as a fraction.
    pub summer_reduction: BTreeMap<FuelCategory, f64>,
    /// Normal marginal cost per fuel: (mean $/MWh, std $/MWh).
    pub cost_norm_usd_per_mwh: BTreeMap<FuelCategory, (f64, f64)>,
    /// Thermal-limit power law `y = e^a (x/r)^k`: (a, k).
    pub tl_loglog: (f64, f64),
}

impl AugmentModels {
    /// Built-in default parameters. The classifier bins are empty: fuel
    /// classification needs a fitted fleet dataset.
    pub fn paper_defaults() -> Self {
        use FuelCategory::*;
        AugmentModels {
            schema_version: 1,
            bins: CapacityBins::default(),
            capacity_exp_per_mw: BTreeMap::from([
                (Pel, 0.023254),
                (Ng, 0.009188),
                (Cow, 0.003201),
            ]),
            capacity_norm_mw: BTreeMap::from([(Nuc, (1044.56, 219.27))]),
            summer_reduction: BTreeMap::from([
                (Pel, 0.1611),
                (Ng, 0.1298),
                (Cow, 0.0848),
                (Nuc, 0.0580),
            ]),
            cost_norm_usd_per_mwh: BTreeMap::from([
                (Pel, (6.8828, 0.3334)),
                (Ng, (1.0606, 0.2006)),
                (Cow, (0.7683, 0.2452)),
                (Nuc, (0.2101, 0.0199)),
            ]),
            tl_loglog: (-5.0886, 0.4772),
        }
    }
}

/// SEDS price-table labels for the four modeled fuels.
pub const SEDS_LABELS: &[(&str, FuelCategory)] = &[
    ("Distillate Fuel Oil", FuelCategory::Pel),
    ("Natural Gas", FuelCategory::Ng),
    ("Coal", FuelCategory::Cow),
    ("Nuclear Fuel", FuelCategory::Nuc),
];

/// Fit every fleet-derived model: the fuel classifier over all filtered
/// records, capacity distributions over records of at least `min_mw`,
/// summer reductions, and cost distributions from the price table.
/// The thermal-limit fit is separate (see [`fit_tl_from_networks`]);
/// until then `tl_loglog` keeps its built-in default.
pub fn fit_models(
    fleet: &[FleetRecord],
    prices: &[PriceRecord],
    min_mw: f64,
) -> Result<AugmentModels, FitError> {
    let mut models = AugmentModels::paper_defaults();

    let all = filter_fleet(fleet, 0.0);
    let classed: Vec<(f64, FuelCategory)> =
        all.iter().map(|(r, f)| (r.nameplate_mw, *f)).collect();
    models.bins = fit_bins(&classed)?;

    let capped = filter_fleet(fleet, min_mw);
    models.capacity_exp_per_mw.clear();
    models.capacity_norm_mw.clear();
    models.summer_reduction.clear();
    for fuel in [FuelCategory::Pel, FuelCategory::Ng, FuelCategory::Cow, FuelCategory::Nuc] {
        let caps: Vec<f64> = capped
            .iter()
            .filter(|(_, f)| *f == fuel)
            .map(|(r, _)| r.nameplate_mw)
            .collect();
        if caps.len() < 2 {
            continue; // fuel absent from this dataset; keep it unmodeled
        }
        if fuel == FuelCategory::Nuc {
            models.capacity_norm_mw.insert(fuel, fit_normal(&caps)?);
        } else {
            models.capacity_exp_per_mw.insert(fuel, fit_exponential(&caps)?);
        }
        let reductions: Vec<f64> = capped
            .iter()
            .filter(|(r, f)| *f == fuel && r.nameplate_mw > 0.0)
            .map(|(r, _)| ((r.nameplate_mw - r.summer_mw) / r.nameplate_mw).max(0.0))
            .collect();
        let mean = reductions.iter().sum::<f64>() / reductions.len() as f64;
        models.summer_reduction.insert(fuel, mean);
    }

    models.cost_norm_usd_per_mwh.clear();
    for &(label, fuel) in SEDS_LABELS {
        let usd_per_mwh: Vec<f64> = prices
            .iter()
            .filter(|p| p.seds_label.trim() == label)
            .map(|p| convert_price(p.price_per_mmbtu))
            .collect::<Result<_, _>>()?;
        if usd_per_mwh.is_empty() {
            return Err(FitError::MissingPriceLabel(label.to_string()));
        }
        if usd_per_mwh.len() < 2 {
            models.cost_norm_usd_per_mwh.insert(fuel, (usd_per_mwh[0], 0.0));
        } else {
            models.cost_norm_usd_per_mwh.insert(fuel, fit_normal(&usd_per_mwh)?);
        }
    }

    Ok(models)
}

/// Extract thermal-limit regression points `(x/r, t/kv)` from a network
/// with known limits: non-transformer branches with a limit below
/// 9.8 p.u. (on a 100 MVA base) and nominal voltage below 250 kV.
pub fn extract_tl_points(net: &Network) -> Vec<(f64, f64)> {
    let idx = net.bus_index();
    let mut out = Vec::new();
    for br in &net.branches {
        let (Some(&f), Some(&t)) = (idx.get(&br.from_bus), idx.get(&br.to_bus)) else {
            continue;
        };
        let kv_f = net.buses[f].base_kv;
        let kv_t = net.buses[t].base_kv;
        let Some(rate) = br.rate_a else { continue };
        let rate100 = rate * net.base_mva / 100.0;
        let is_line = br.tap == 1.0 && br.shift == 0.0 && kv_f == kv_t && kv_f > 0.0;
        if is_line && br.r > 0.0 && br.x > 0.0 && rate100 < 9.8 && kv_f < 250.0 {
            out.push((br.x / br.r, rate100 / kv_f));
        }
    }
    out
}

/// Fit the thermal-limit power law from two source networks combined in
/// equal proportions.
pub fn fit_tl_from_networks(
    a: &Network,
    b: &Network,
    rng: &mut ChaCha8Rng,
) -> Result<(f64, f64), FitError> {
    let pa = extract_tl_points(a);
    let pb = extract_tl_points(b);
    let combined = equal_proportions(&pa, &pb, rng);
    fit_loglog(&combined)
}

/// Read the fleet CSV (`status, energy_source, nameplate_mw, summer_mw`).
pub fn read_fleet_csv<R: Read>(reader: R) -> Result<Vec<FleetRecord>, FitError> {
    let mut rd = csv::Reader::from_reader(reader);
    rd.deserialize().collect::<Result<_, _>>().map_err(|e| FitError::Csv(e.to_string()))
}

/// Read the price CSV (`state, seds_label, price_per_mmbtu`).
pub fn read_prices_csv<R: Read>(reader: R) -> Result<Vec<PriceRecord>, FitError> {
    let mut rd = csv::Reader::from_reader(reader);
    rd.deserialize().collect::<Result<_, _>>().map_err(|e| FitError::Csv(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, StreamTag};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand_distr::{Distribution, Exp, Normal};

    #[test]
    fn fuel_mapping_matches_the_published_table() {
        use FuelCategory::*;
        for (code, want) in [
            ("ANT", Cow),
            ("BIT", Cow),
            ("WC", Cow),
            ("DFO", Pel),
            ("RFO", Pel),
            ("NG", Ng),
            ("SGC", Ng),
            ("NUC", Nuc),
            ("BLQ", Bio),
            ("WDL", Bio),
            ("WAT", Drn),
            ("GEO", Drn),
            ("SUN", Rn),
            ("WND", Rn),
        ] {
            assert_eq!(map_fuel(code).unwrap(), want, "{code}");
        }
        assert_eq!(map_fuel("XYZ"), Err(FitError::UnknownFuelCode("XYZ".into())));
    }

    fn rec(status: &str, src: &str, mw: f64) -> FleetRecord {
        FleetRecord {
            status: status.into(),
            energy_source: src.into(),
            nameplate_mw: mw,
            summer_mw: mw * 0.9,
        }
    }

    #[test]
    fn filter_drops_renewables_and_respects_the_floor() {
        let records = vec![
            rec("OP", "WND", 100.0), // renewable: dropped
            rec("OP", "NG", 4.9),    // below floor: dropped
            rec("OP", "NG", 5.0),    // inclusive floor: kept
            rec("SB", "NG", 50.0),   // not in service: dropped
            rec("OP", "NUC", 1000.0),
        ];
        let kept = filter_fleet(&records, 5.0);
        assert_eq!(kept.len(), 2);
        assert_eq!(kept[0].0.nameplate_mw, 5.0);
        assert_eq!(kept[1].1, FuelCategory::Nuc);
    }

    #[test]
    fn identical_capacities_form_a_single_bin() {
        let records: Vec<(f64, FuelCategory)> = (0..200)
            .map(|i| (50.0, if i % 2 == 0 { FuelCategory::Ng } else { FuelCategory::Cow }))
            .collect();
        let bins = fit_bins(&records).unwrap();
        assert_eq!(bins.weights.len(), 1);
        assert!(bins.boundaries_mw.is_empty());
        assert_relative_eq!(bins.weights[0][&FuelCategory::Ng], 0.5);
        assert_relative_eq!(bins.weights[0][&FuelCategory::Cow], 0.5);
    }

    #[test]
    fn greedy_binning_merges_the_short_tail() {
        // 250 distinct capacities: bins of 100 and 100, then the final 50
        // merge into the second bin -> sizes 100 and 150.
        let records: Vec<(f64, FuelCategory)> =
            (0..250).map(|i| (i as f64 + 1.0, FuelCategory::Ng)).collect();
        let bins = fit_bins(&records).unwrap();
        assert_eq!(bins.bin_samples, vec![100, 150]);
        assert_eq!(bins.boundaries_mw, vec![100.5]);
    }

    #[test]
    fn bin_lookup_clamps_to_edge_bins() {
        let records: Vec<(f64, FuelCategory)> =
            (0..250).map(|i| (i as f64 + 1.0, FuelCategory::Ng)).collect();
        let bins = fit_bins(&records).unwrap();
        assert_eq!(bins.bin_for(-5.0), 0);
        assert_eq!(bins.bin_for(50.0), 0);
        assert_eq!(bins.bin_for(200.0), 1);
        assert_eq!(bins.bin_for(1e9), 1);
    }

    #[test]
    fn too_few_records_is_an_error() {
        let records = vec![(1.0, FuelCategory::Ng); 99];
        assert!(matches!(fit_bins(&records), Err(FitError::TooFewSamples { .. })));
    }

    #[test]
    fn exponential_mle_is_one_over_mean() {
        assert_relative_eq!(fit_exponential(&[1.0, 2.0, 3.0]).unwrap(), 0.5);
        assert_relative_eq!(fit_exponential(&[7.0, 7.0, 7.0]).unwrap(), 1.0 / 7.0);
        assert!(fit_exponential(&[]).is_err());
        assert!(fit_exponential(&[1.0, -2.0]).is_err());
    }

    #[test]
    fn exponential_recovers_coal_rate_from_samples() {
        // Sampling oracle: 1e5 draws from Exp(0.003201) must fit back to
        // within 2% of the true rate.
        let mut rng = stream(7, StreamTag::ActiveCapacity, 0);
        let exp = Exp::new(0.003201).unwrap();
        let samples: Vec<f64> = (0..100_000).map(|_| exp.sample(&mut rng)).collect();
        let lambda = fit_exponential(&samples).unwrap();
        assert!((lambda - 0.003201).abs() / 0.003201 < 0.02, "lambda = {lambda}");
    }

    #[test]
    fn normal_mle_uses_population_variance() {
        assert_eq!(fit_normal(&[1.0, 1.0, 1.0]).unwrap(), (1.0, 0.0));
        assert_eq!(fit_normal(&[0.0, 2.0]).unwrap(), (1.0, 1.0));
        assert!(fit_normal(&[1.0]).is_err());
    }

    #[test]
    fn normal_recovers_nuclear_parameters_from_samples() {
        let mut rng = stream(11, StreamTag::ActiveCapacity, 1);
        let normal = Normal::new(1044.56, 219.27).unwrap();
        let samples: Vec<f64> = (0..100_000).map(|_| normal.sample(&mut rng)).collect();
        let (mu, sigma) = fit_normal(&samples).unwrap();
        assert!((mu - 1044.56).abs() / 1044.56 < 0.02, "mu = {mu}");
        assert!((sigma - 219.27).abs() / 219.27 < 0.02, "sigma = {sigma}");
    }

    #[test]
    fn loglog_recovers_exact_power_law() {
        let (a, k): (f64, f64) = (-5.0886, 0.4772);
        let points: Vec<(f64, f64)> =
            (1..60).map(|i| i as f64 * 0.5).map(|x| (x, a.exp() * x.powf(k))).collect();
        let (ahat, khat) = fit_loglog(&points).unwrap();
        assert_relative_eq!(ahat, a, max_relative = 1e-9);
        assert_relative_eq!(khat, k, max_relative = 1e-9);
    }

    #[test]
    fn loglog_identity_and_two_point_cases() {
        let points: Vec<(f64, f64)> = (1..20).map(|i| (i as f64, i as f64)).collect();
        let (a, k) = fit_loglog(&points).unwrap();
        assert_relative_eq!(a, 0.0, epsilon = 1e-12);
        assert_relative_eq!(k, 1.0, max_relative = 1e-12);

        // two points: exact interpolation
        let (a, k) = fit_loglog(&[(1.0, 2.0), (4.0, 6.0)]).unwrap();
        assert_relative_eq!(2.0f64.ln(), a, max_relative = 1e-12);
        assert_relative_eq!(k, (6.0f64 / 2.0).ln() / 4.0f64.ln(), max_relative = 1e-12);
    }

    #[test]
    fn loglog_rejects_degenerate_input() {
        assert_eq!(fit_loglog(&[(2.0, 1.0), (2.0, 3.0)]), Err(FitError::DegenerateFit));
        assert!(matches!(
            fit_loglog(&[(0.0, 1.0), (2.0, 3.0)]),
            Err(FitError::NonPositiveSample { .. })
        ));
    }

    #[test]
    fn price_conversion_is_division_by_the_unit_factor() {
        assert_eq!(convert_price(0.0).unwrap(), 0.0);
        assert_relative_eq!(convert_price(MMBTU_PER_MWH).unwrap(), 1.0);
        assert_relative_eq!(convert_price(1.0).unwrap(), 3.412141633, max_relative = 1e-9);
        assert!(convert_price(-1.0).is_err());
    }

    #[test]
    fn paper_defaults_carry_the_published_parameters() {
        use FuelCategory::*;
        let m = AugmentModels::paper_defaults();
        assert_eq!(m.capacity_exp_per_mw[&Pel], 0.023254);
        assert_eq!(m.capacity_exp_per_mw[&Ng], 0.009188);
        assert_eq!(m.capacity_exp_per_mw[&Cow], 0.003201);
        assert_eq!(m.capacity_norm_mw[&Nuc], (1044.56, 219.27));
        assert_eq!(m.summer_reduction[&Pel], 0.1611);
        assert_eq!(m.summer_reduction[&Nuc], 0.0580);
        assert_eq!(m.cost_norm_usd_per_mwh[&Pel], (6.8828, 0.3334));
        assert_eq!(m.cost_norm_usd_per_mwh[&Nuc], (0.2101, 0.0199));
        assert_eq!(m.tl_loglog, (-5.0886, 0.4772));
    }

    #[test]
    fn models_serialize_to_json_and_back() {
        let m = AugmentModels::paper_defaults();
        let json = serde_json::to_string_pretty(&m).unwrap();
        assert!(json.contains("capacity_exp_per_mw"));
        assert!(json.contains("PEL"));
        let back: AugmentModels = serde_json::from_str(&json).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn csv_readers_accept_the_documented_schemas() {
        let fleet = "status,energy_source,nameplate_mw,summer_mw\nOP,NG,100.5,90.0\nSB,ANT,20,18\n";
        let recs = read_fleet_csv(fleet.as_bytes()).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[0].energy_source, "NG");

        let prices = "state,seds_label,price_per_mmbtu\nCA,Natural Gas,3.5\n";
        let recs = read_prices_csv(prices.as_bytes()).unwrap();
        assert_eq!(recs[0].price_per_mmbtu, 3.5);
    }

    proptest! {
        // scale equivariance: scaling samples by s scales lambda by 1/s
        // and (mu, sigma) by s
        #[test]
        fn fits_are_scale_equivariant(
            samples in proptest::collection::vec(0.1f64..1e4, 2..40),
            scale in 0.01f64..100.0,
        ) {
            let scaled: Vec<f64> = samples.iter().map(|s| s * scale).collect();
            let l0 = fit_exponential(&samples).unwrap();
            let l1 = fit_exponential(&scaled).unwrap();
            prop_assert!((l1 * scale - l0).abs() <= 1e-9 * l0.abs());
            let (m0, s0) = fit_normal(&samples).unwrap();
            let (m1, s1) = fit_normal(&scaled).unwrap();
            prop_assert!((m1 - m0 * scale).abs() <= 1e-9 * m0.abs() * scale);
            prop_assert!((s1 - s0 * scale).abs() <= 1e-7 * (s0.abs() + 1.0) * scale);
        }

        // duplicating the whole point set leaves the log-log fit unchanged
        #[test]
        fn loglog_is_invariant_to_duplication(
            points in proptest::collection::vec((0.1f64..100.0, 0.1f64..100.0), 3..30),
        ) {
            prop_assume!(points.iter().any(|p| p.0 != points[0].0));
            let doubled: Vec<(f64, f64)> =
                points.iter().chain(points.iter()).cloned().collect();
            let (a0, k0) = fit_loglog(&points).unwrap();
            let (a1, k1) = fit_loglog(&doubled).unwrap();
            prop_assert!((a0 - a1).abs() < 1e-9 && (k0 - k1).abs() < 1e-9);
        }

        // bin weights always sum to 1 and samples fall inside the bins
        #[test]
        fn bin_weights_are_normalized(
            caps in proptest::collection::vec(1.0f64..2000.0, 150..400),
        ) {
            let records: Vec<(f64, FuelCategory)> = caps
                .iter()
                .enumerate()
                .map(|(i, &c)| {
                    let fuel = match i % 3 {
                        0 => FuelCategory::Ng,
                        1 => FuelCategory::Cow,
                        _ => FuelCategory::Pel,
                    };
                    (c, fuel)
                })
                .collect();
            let bins = fit_bins(&records).unwrap();
            for w in &bins.weights {
                let total: f64 = w.values().sum();
                prop_assert!((total - 1.0).abs() < 1e-9);
            }
            for n in &bins.bin_samples {
                prop_assert!(*n >= MIN_BIN_SAMPLES);
            }
            // sample range falls inside the edge bins
            let (lo, hi) = bins.sample_range_mw;
            prop_assert_eq!(bins.bin_for(lo), 0);
            prop_assert_eq!(bins.bin_for(hi), bins.weights.len() - 1);
            for win in bins.boundaries_mw.windows(2) {
                prop_assert!(win[0] < win[1]);
            }
        }
    }
}
