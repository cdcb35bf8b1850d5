//! Differential-privacy machinery: adjacency-based sensitivity calibration
//! (a global worst-case bound and a per-iteration local computation), the
//! Laplace mechanism, deterministic per-zone noise streams, and an
//! empirical likelihood-ratio check of the calibrated mechanism.

use crate::admm::{assemble_subproblem_with_loads, AdmmError};
use crate::case::{NetworkCase, ZoneView};
use crate::qp::{self, QpStatus, QpTolerances};
use nalgebra::DVector;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PrivacyError {
    #[error(transparent)]
    Qp(#[from] qp::QpError),
    #[error("epsilon must be positive, got {0}")]
    NonPositiveEpsilon(f64),
    #[error("adjacency bound must be non-negative, got {0}")]
    NegativeAlpha(f64),
    #[error("sensitivity query infeasible for the unperturbed loads of zone {zone}")]
    BaseInfeasible { zone: String },
    #[error("zone {zone} sub-problem could not be assembled: {source}")]
    Assembly {
        zone: String,
        source: Box<AdmmError>,
    },
}

/// How the Laplace scale is calibrated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SensitivityMode {
    /// Network-wide worst-case bound: the largest installed load.
    GlobalBound,
    /// Recomputed from the current coordination signals every iteration.
    LocalPerIteration,
    /// The per-iteration local value, maximized over a reference run.
    LocalMaxOverRun,
}

#[derive(Debug, Clone)]
pub struct PrivacyParams {
    pub epsilon: f64,
    /// Adjacency radius as a fraction of each load (alpha_i = frac * d_i).
    pub alpha_frac: f64,
    /// Fixed adjacency radius in p.u.; overrides `alpha_frac` when set.
    pub alpha_absolute: Option<f64>,
    /// Number of observed iterations the adversary is assumed to collect.
    pub attack_budget: usize,
    pub sensitivity_mode: SensitivityMode,
    /// Scale the noise for composition over `attack_budget` releases.
    pub scale_composition: bool,
    pub seed: u64,
}

impl Default for PrivacyParams {
    fn default() -> Self {
        Self {
            epsilon: 1.0,
            alpha_frac: 0.05,
            alpha_absolute: None,
            attack_budget: 1,
            sensitivity_mode: SensitivityMode::LocalPerIteration,
            scale_composition: false,
            seed: 0,
        }
    }
}

impl PrivacyParams {
    pub fn validate(&self) -> Result<(), PrivacyError> {
        if self.epsilon.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
            return Err(PrivacyError::NonPositiveEpsilon(self.epsilon));
        }
        if self.alpha_frac < 0.0 {
            return Err(PrivacyError::NegativeAlpha(self.alpha_frac));
        }
        if let Some(a) = self.alpha_absolute {
            if a < 0.0 {
                return Err(PrivacyError::NegativeAlpha(a));
            }
        }
        Ok(())
    }

    /// Adjacency radius for a load of magnitude `d` (p.u.).
    pub fn alpha_for(&self, d: f64) -> f64 {
        self.alpha_absolute.unwrap_or(self.alpha_frac * d)
    }
}

/// Outcome of one local-sensitivity computation.
#[derive(Debug, Clone)]
pub struct SensitivityReport {
    pub zone_id: String,
    /// L1 sensitivity of the released boundary angles (p.u. rad).
    pub value: f64,
    /// Bus whose perturbation attains the maximum, if any candidate moved.
    pub argmax_bus: Option<usize>,
    /// +1 for an increased load, -1 for a decreased one.
    pub sign: f64,
    pub mode: SensitivityMode,
}

/// Noise strategy threaded through the ADMM loop.
#[derive(Debug, Clone)]
pub enum NoisePlan {
    /// Baseline: release exact boundary angles.
    None,
    /// One Laplace draw per zone, added unchanged at every iteration.
    Static {
        vectors: BTreeMap<String, DVector<f64>>,
        scales: BTreeMap<String, f64>,
        seed: u64,
    },
    /// Fresh draws each iteration, scaled by the local sensitivity.
    Dynamic { params: PrivacyParams },
}

/// Deterministic per-(seed, zone, iteration) stream so results do not
/// depend on zone scheduling or thread interleaving.
pub fn derive_rng(seed: u64, zone_id: &str, iter: u64) -> ChaCha8Rng {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in zone_id.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x100000001b3);
    }
    let mut key = [0u8; 32];
    key[0..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&h.to_le_bytes());
    key[16..24].copy_from_slice(&splitmix(seed ^ h).to_le_bytes());
    key[24..32].copy_from_slice(&iter.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

/// n iid Laplace(0, scale) draws via the inverse CDF. A zero scale yields
/// the zero vector.
pub fn sample_laplace(scale: f64, n: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
    DVector::from_fn(n, |_, _| laplace_draw(scale, rng))
}

fn laplace_draw(scale: f64, rng: &mut ChaCha8Rng) -> f64 {
    if scale == 0.0 {
        return 0.0;
    }
    let u: f64 = rng.gen_range(-0.5..0.5);
    -scale * u.signum() * (1.0 - 2.0 * u.abs()).ln()
}

/// Worst-case sensitivity bound: no load change can shift any released
/// angle aggregate by more than the largest load the system can host.
pub fn global_sensitivity_bound(case: &NetworkCase) -> f64 {
    case.max_load().1
}

/// L1 sensitivity of the zone's released boundary angles at the current
/// coordination signals, by direct perturbation: every domestic load is
/// moved up and down by its adjacency radius (clamped at zero) and the
/// worst released-angle displacement is kept. Infeasible perturbed
/// sub-problems cannot be released and are skipped.
pub fn local_sensitivity(
    zone: &ZoneView,
    consensus: &DVector<f64>,
    dual: &DVector<f64>,
    rho: f64,
    params: &PrivacyParams,
    tol: &QpTolerances,
) -> Result<SensitivityReport, PrivacyError> {
    params.validate()?;
    let assemble = |loads: &BTreeMap<usize, f64>| {
        assemble_subproblem_with_loads(zone, loads, consensus, dual, rho).map_err(|e| {
            PrivacyError::Assembly {
                zone: zone.zone_id.clone(),
                source: Box::new(e),
            }
        })
    };

    let base = assemble(&zone.loads)?;
    let mut problems = vec![base.qp.clone()];
    let mut candidates: Vec<(usize, f64)> = Vec::new();
    for (&bus, &d) in &zone.loads {
        let alpha = params.alpha_for(d);
        if alpha <= 0.0 {
            continue;
        }
        for sign in [1.0, -1.0] {
            let perturbed = (d + sign * alpha).max(0.0);
            if perturbed == d {
                continue;
            }
            let mut loads = zone.loads.clone();
            loads.insert(bus, perturbed);
            problems.push(assemble(&loads)?.qp);
            candidates.push((bus, sign));
        }
    }

    let solutions = qp::solve_qp_batch(&problems, tol);
    let base_sol = solutions[0].as_ref().map_err(|e| PrivacyError::Qp(e.clone()))?;
    if base_sol.status == QpStatus::Infeasible {
        return Err(PrivacyError::BaseInfeasible {
            zone: zone.zone_id.clone(),
        });
    }
    let base_release = base.boundary_angles(&base_sol.x);

    let mut value = 0.0;
    let mut argmax_bus = None;
    let mut sign = 1.0;
    for (c, (bus, s)) in candidates.iter().enumerate() {
        let sol = match &solutions[c + 1] {
            Ok(sol) if sol.status != QpStatus::Infeasible => sol,
            _ => continue,
        };
        let release = base.boundary_angles(&sol.x);
        let l1 = (release - &base_release).abs().sum();
        if l1 > value {
            value = l1;
            argmax_bus = Some(*bus);
            sign = *s;
        }
    }

    Ok(SensitivityReport {
        zone_id: zone.zone_id.clone(),
        value,
        argmax_bus,
        sign,
        mode: params.sensitivity_mode,
    })
}

/// Laplace scale for a per-iteration release of sensitivity `delta`,
/// optionally scaled for sequential composition over the attack budget.
pub fn make_dynamic_scale(delta: f64, params: &PrivacyParams) -> f64 {
    if params.scale_composition {
        params.attack_budget as f64 * delta / params.epsilon
    } else {
        delta / params.epsilon
    }
}

/// Build the static plan: one Laplace vector per zone, calibrated either
/// to the global bound or to supplied per-zone local bounds (the maxima of
/// a reference run).
pub fn make_static_plan(
    case: &NetworkCase,
    zones: &[ZoneView],
    params: &PrivacyParams,
    local_bounds: Option<&BTreeMap<String, f64>>,
) -> Result<NoisePlan, PrivacyError> {
    params.validate()?;
    let global = global_sensitivity_bound(case);
    let mut vectors = BTreeMap::new();
    let mut scales = BTreeMap::new();
    for zone in zones {
        let delta = match (params.sensitivity_mode, local_bounds) {
            (SensitivityMode::GlobalBound, _) | (_, None) => global,
            (_, Some(map)) => map.get(&zone.zone_id).copied().unwrap_or(global),
        };
        let scale = make_dynamic_scale(delta, params);
        let mut rng = derive_rng(params.seed, &zone.zone_id, 0);
        vectors.insert(
            zone.zone_id.clone(),
            sample_laplace(scale, zone.boundary.len(), &mut rng),
        );
        scales.insert(zone.zone_id.clone(), scale);
    }
    Ok(NoisePlan::Static {
        vectors,
        scales,
        seed: params.seed,
    })
}

#[derive(Debug, Clone)]
pub struct DpCheckReport {
    /// Largest |log-likelihood ratio| over well-populated histogram bins.
    pub max_log_ratio: f64,
    pub bins_used: usize,
    /// True when too few bins had mass under both datasets to compare.
    pub degenerate: bool,
}

/// Empirical check of the Laplace mechanism on a scalar query: draw the
/// mechanism output `trials` times under the query values of two adjacent
/// datasets, histogram both samples over a shared grid and report the
/// worst per-bin log-likelihood ratio. For a correctly calibrated
/// mechanism this stays at or below epsilon up to sampling error.
pub fn empirical_dp_check(
    value: f64,
    value_adj: f64,
    scale: f64,
    trials: usize,
    bins: usize,
    seed: u64,
) -> DpCheckReport {
    let mut rng = derive_rng(seed, "dp-check", 0);
    let a: Vec<f64> = (0..trials).map(|_| value + laplace_draw(scale, &mut rng)).collect();
    let b: Vec<f64> = (0..trials)
        .map(|_| value_adj + laplace_draw(scale, &mut rng))
        .collect();
    let lo = a.iter().chain(b.iter()).cloned().fold(f64::INFINITY, f64::min);
    let hi = a
        .iter()
        .chain(b.iter())
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    if hi.partial_cmp(&lo) != Some(std::cmp::Ordering::Greater) || bins == 0 {
        return DpCheckReport {
            max_log_ratio: 0.0,
            bins_used: 0,
            degenerate: true,
        };
    }
    let width = (hi - lo) / bins as f64;
    let mut count_a = vec![0usize; bins];
    let mut count_b = vec![0usize; bins];
    for &x in &a {
        let i = (((x - lo) / width) as usize).min(bins - 1);
        count_a[i] += 1;
    }
    for &x in &b {
        let i = (((x - lo) / width) as usize).min(bins - 1);
        count_b[i] += 1;
    }
    // Only bins with solid mass under both laws: the ratio of two tiny
    // counts is sampling noise, not evidence.
    let min_count = (trials / 400).max(10);
    let mut max_log_ratio = 0.0f64;
    let mut bins_used = 0;
    for i in 0..bins {
        if count_a[i] >= min_count && count_b[i] >= min_count {
            let r = ((count_a[i] as f64) / (count_b[i] as f64)).ln().abs();
            max_log_ratio = max_log_ratio.max(r);
            bins_used += 1;
        }
    }
    DpCheckReport {
        max_log_ratio,
        bins_used,
        degenerate: bins_used == 0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::case::{build_zone_views, parse_case_json, parse_partition_json};

    fn two_bus() -> NetworkCase {
        parse_case_json(crate::case::tests_support::TWO_BUS_JSON).unwrap()
    }

    #[test]
    fn global_bound_is_largest_load() {
        let case = two_bus();
        assert!((global_sensitivity_bound(&case) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn rng_streams_distinct_and_reproducible() {
        let mut a1 = derive_rng(7, "z1", 3);
        let mut a2 = derive_rng(7, "z1", 3);
        let mut b = derive_rng(7, "z2", 3);
        let mut c = derive_rng(7, "z1", 4);
        let x1: f64 = a1.gen();
        let x2: f64 = a2.gen();
        assert_eq!(x1.to_bits(), x2.to_bits());
        let y: f64 = b.gen();
        let z: f64 = c.gen();
        assert_ne!(x1.to_bits(), y.to_bits());
        assert_ne!(x1.to_bits(), z.to_bits());
    }

    #[test]
    fn laplace_moments_match() {
        let mut rng = derive_rng(11, "lap", 0);
        let b = 0.3;
        let n = 200_000;
        let draws = sample_laplace(b, n, &mut rng);
        let mean = draws.sum() / n as f64;
        let mad = draws.abs().sum() / n as f64;
        assert!(mean.abs() < 5e-3, "mean={mean}");
        assert!((mad - b).abs() < 5e-3, "mean |x|={mad}, expected {b}");
        let zero = sample_laplace(0.0, 4, &mut rng);
        assert_eq!(zero.abs().max(), 0.0);
    }

    #[test]
    fn dynamic_scale_composition() {
        let mut params = PrivacyParams {
            epsilon: 2.0,
            attack_budget: 10,
            ..PrivacyParams::default()
        };
        assert!((make_dynamic_scale(0.004, &params) - 0.002).abs() < 1e-15);
        params.scale_composition = true;
        assert!((make_dynamic_scale(0.004, &params) - 0.02).abs() < 1e-15);
    }

    #[test]
    fn local_sensitivity_two_bus_analytic() {
        // Zone {2} of the 2-bus case with a pinned boundary: the released
        // angle theta_2 responds to the local load only through the balance
        // row beta(theta_2 - theta_1) = -d_2, so a load shift of alpha
        // moves it by alpha / beta.
        let case = two_bus();
        let partition = parse_partition_json(r#"{"zones": {"z1": [1], "z2": [2]}}"#).unwrap();
        let zones = build_zone_views(&case, &partition).unwrap();
        let z2 = zones.iter().find(|z| z.zone_id == "z2").unwrap();
        let params = PrivacyParams {
            alpha_frac: 0.10,
            ..PrivacyParams::default()
        };
        let nb = z2.boundary.len();
        let report = local_sensitivity(
            z2,
            &DVector::zeros(nb),
            &DVector::zeros(nb),
            1e7,
            &params,
            &QpTolerances::default(),
        )
        .unwrap();
        // alpha = 0.1 * 0.5 = 0.05 p.u., beta = 10: delta = 0.005.
        assert!(
            (report.value - 0.005).abs() < 1e-4,
            "delta = {}",
            report.value
        );
        assert_eq!(report.argmax_bus, Some(2));
    }

    #[test]
    fn local_sensitivity_zero_alpha_is_zero() {
        let case = two_bus();
        let partition = parse_partition_json(r#"{"zones": {"z1": [1], "z2": [2]}}"#).unwrap();
        let zones = build_zone_views(&case, &partition).unwrap();
        let z2 = zones.iter().find(|z| z.zone_id == "z2").unwrap();
        let params = PrivacyParams {
            alpha_frac: 0.0,
            ..PrivacyParams::default()
        };
        let nb = z2.boundary.len();
        let report = local_sensitivity(
            z2,
            &DVector::zeros(nb),
            &DVector::zeros(nb),
            100.0,
            &params,
            &QpTolerances::default(),
        )
        .unwrap();
        assert_eq!(report.value, 0.0);
        assert_eq!(report.argmax_bus, None);
    }

    #[test]
    fn static_plan_uses_global_bound() {
        let case = two_bus();
        let partition = parse_partition_json(r#"{"zones": {"z1": [1], "z2": [2]}}"#).unwrap();
        let zones = build_zone_views(&case, &partition).unwrap();
        let params = PrivacyParams {
            epsilon: 1.0,
            sensitivity_mode: SensitivityMode::GlobalBound,
            seed: 3,
            ..PrivacyParams::default()
        };
        let plan = make_static_plan(&case, &zones, &params, None).unwrap();
        match plan {
            NoisePlan::Static { scales, vectors, .. } => {
                for z in &zones {
                    assert!((scales[&z.zone_id] - 0.5).abs() < 1e-15);
                    assert_eq!(vectors[&z.zone_id].len(), z.boundary.len());
                }
            }
            _ => panic!("expected static plan"),
        }
    }

    #[test]
    fn empirical_check_bounds_correct_scale() {
        // Query gap 0.5, epsilon 1 => scale 0.5: ratios stay near epsilon.
        let report = empirical_dp_check(0.0, 0.5, 0.5, 200_000, 60, 42);
        assert!(!report.degenerate);
        assert!(
            report.max_log_ratio <= 1.0 + 0.3,
            "ratio {}",
            report.max_log_ratio
        );
        // Halving the scale doubles the effective epsilon and must blow
        // past the same threshold.
        let under = empirical_dp_check(0.0, 0.5, 0.25, 200_000, 60, 42);
        assert!(
            under.max_log_ratio > 1.3,
            "undersized noise looked private: {}",
            under.max_log_ratio
        );
    }

    #[test]
    fn params_validation() {
        let bad = PrivacyParams {
            epsilon: 0.0,
            ..PrivacyParams::default()
        };
        assert!(bad.validate().is_err());
        let neg = PrivacyParams {
            alpha_frac: -0.1,
            ..PrivacyParams::default()
        };
        assert!(neg.validate().is_err());
    }
}
