//! Consensus-ADMM machinery: zone sub-problem assembly, consensus and dual
//! updates, residual tracking and the iteration loop shared by the
//! non-private baseline and both perturbed variants.
//!
//! Noise, when requested, is added only to the released boundary angles
//! after the constrained zone solve; the constrained step itself is never
//! perturbed, so every iterate stays feasible for its zone constraint set.

use crate::case::ZoneView;
use crate::privacy::{self, NoisePlan};
use crate::qp::{self, QpProblem, QpStatus, QpTolerances};
use nalgebra::{DMatrix, DVector};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AdmmError {
    #[error(transparent)]
    Qp(#[from] qp::QpError),
    #[error("zone {zone} has no boundary node and no slack bus; its angle space is ungrounded")]
    UngroundedZone { zone: String },
    #[error("zone {zone} sub-problem infeasible at iteration {iter}")]
    ZoneInfeasible { zone: String, iter: usize },
    #[error(transparent)]
    Privacy(#[from] crate::privacy::PrivacyError),
    #[error("consensus/dual vector for zone {zone} has length {got}, expected {expected}")]
    BadSignalLength {
        zone: String,
        got: usize,
        expected: usize,
    },
}

/// Algorithm parameters: penalty factor, iteration cap and primal-residual
/// stopping tolerance, plus optional warm starts for the consensus and dual
/// variables (all-zero by default).
#[derive(Debug, Clone)]
pub struct AdmmConfig {
    pub rho: f64,
    pub max_iters: usize,
    pub tol: f64,
    pub consensus_init: Option<DVector<f64>>,
    pub dual_init: Option<BTreeMap<String, DVector<f64>>>,
    pub qp_tol: QpTolerances,
}

impl Default for AdmmConfig {
    fn default() -> Self {
        Self {
            rho: 100.0,
            max_iters: 300,
            tol: 0.5,
            consensus_init: None,
            dual_init: None,
            qp_tol: QpTolerances::default(),
        }
    }
}

/// A zone sub-problem as a QP, with the index maps needed to route the
/// solution back to buses and generators.
#[derive(Debug, Clone)]
pub struct ZoneSubproblem {
    pub qp: QpProblem,
    pub zone_id: String,
    /// Global generator indices, in the order of the p-variable block.
    pub gen_indices: Vec<usize>,
    /// Bus ids of the theta-variable block (the extended set, sorted).
    pub theta_buses: Vec<usize>,
    /// Positions of the boundary buses within the theta block.
    pub boundary_positions: Vec<usize>,
}

impl ZoneSubproblem {
    pub fn num_gens(&self) -> usize {
        self.gen_indices.len()
    }

    /// Released boundary angles of a solution vector, in boundary order.
    pub fn boundary_angles(&self, x: &DVector<f64>) -> DVector<f64> {
        let ng = self.num_gens();
        DVector::from_iterator(
            self.boundary_positions.len(),
            self.boundary_positions.iter().map(|&p| x[ng + p]),
        )
    }
}

/// Assemble the ADMM sub-problem of one zone.
///
/// Variables are the zone's generator outputs followed by the angles over
/// the extended bus set. The dual and penalty terms act on the boundary
/// angle entries only; `consensus` and `dual` are indexed by the zone's
/// boundary set.
pub fn assemble_subproblem(
    zone: &ZoneView,
    consensus: &DVector<f64>,
    dual: &DVector<f64>,
    rho: f64,
) -> Result<ZoneSubproblem, AdmmError> {
    assemble_subproblem_with_loads(zone, &zone.loads, consensus, dual, rho)
}

/// Same as [`assemble_subproblem`] but with the private load dataset
/// replaced; this is the query the sensitivity computation perturbs.
pub fn assemble_subproblem_with_loads(
    zone: &ZoneView,
    loads: &BTreeMap<usize, f64>,
    consensus: &DVector<f64>,
    dual: &DVector<f64>,
    rho: f64,
) -> Result<ZoneSubproblem, AdmmError> {
    if zone.boundary.is_empty() && zone.slack.is_none() {
        return Err(AdmmError::UngroundedZone {
            zone: zone.zone_id.clone(),
        });
    }
    let nb = zone.boundary.len();
    if consensus.len() != nb || dual.len() != nb {
        return Err(AdmmError::BadSignalLength {
            zone: zone.zone_id.clone(),
            got: consensus.len().max(dual.len()),
            expected: nb,
        });
    }

    let ng = zone.gens.len();
    let nv = zone.extended.len();
    let n = ng + nv;
    let theta_pos =
        |bus: usize| -> usize { zone.extended.binary_search(&bus).expect("bus in V_z") };

    let mut quadratic = DMatrix::zeros(n, n);
    let mut linear = DVector::zeros(n);
    for (g, (_, gen)) in zone.gens.iter().enumerate() {
        quadratic[(g, g)] = 2.0 * gen.c2;
        linear[g] = gen.c1;
    }
    // -mu' theta + (rho/2)||consensus - theta||^2 on boundary entries.
    let mut boundary_positions = Vec::with_capacity(nb);
    for (k, &bus) in zone.boundary.iter().enumerate() {
        let p = theta_pos(bus);
        boundary_positions.push(p);
        quadratic[(ng + p, ng + p)] += rho;
        linear[ng + p] += -dual[k] - rho * consensus[k];
    }

    // Balance rows for domestic buses, slack pin when present.
    let me = zone.domestic.len() + usize::from(zone.slack.is_some());
    let mut eq_mat = DMatrix::zeros(me, n);
    let mut eq_rhs = DVector::zeros(me);
    for (r, &bus) in zone.domestic.iter().enumerate() {
        for (_, line) in &zone.lines {
            if line.from == bus || line.to == bus {
                let other = if line.from == bus { line.to } else { line.from };
                eq_mat[(r, ng + theta_pos(bus))] += line.susceptance;
                eq_mat[(r, ng + theta_pos(other))] -= line.susceptance;
            }
        }
        for (g, (_, gen)) in zone.gens.iter().enumerate() {
            if gen.bus == bus {
                eq_mat[(r, g)] = -1.0;
            }
        }
        eq_rhs[r] = -loads[&bus];
    }
    if let Some(slack) = zone.slack {
        eq_mat[(me - 1, ng + theta_pos(slack))] = 1.0;
    }

    // Generator boxes plus two one-sided flow limits per local line
    // (zone-internal and tie lines alike).
    let nl = zone.lines.len();
    let mi = 2 * ng + 2 * nl;
    let mut ineq_mat = DMatrix::zeros(mi, n);
    let mut ineq_rhs = DVector::zeros(mi);
    for (g, (_, gen)) in zone.gens.iter().enumerate() {
        ineq_mat[(2 * g, g)] = 1.0;
        ineq_rhs[2 * g] = gen.p_max;
        ineq_mat[(2 * g + 1, g)] = -1.0;
        ineq_rhs[2 * g + 1] = -gen.p_min;
    }
    for (l, (_, line)) in zone.lines.iter().enumerate() {
        let s = ng + theta_pos(line.from);
        let r = ng + theta_pos(line.to);
        let row = 2 * ng + 2 * l;
        ineq_mat[(row, s)] = line.susceptance;
        ineq_mat[(row, r)] = -line.susceptance;
        ineq_rhs[row] = line.capacity;
        ineq_mat[(row + 1, s)] = -line.susceptance;
        ineq_mat[(row + 1, r)] = line.susceptance;
        ineq_rhs[row + 1] = line.capacity;
    }

    Ok(ZoneSubproblem {
        qp: QpProblem {
            quadratic,
            linear,
            eq_mat,
            eq_rhs,
            ineq_mat,
            ineq_rhs,
        },
        zone_id: zone.zone_id.clone(),
        gen_indices: zone.gens.iter().map(|&(i, _)| i).collect(),
        theta_buses: zone.extended.clone(),
        boundary_positions,
    })
}

/// Maps every zone's boundary set into the global boundary vector.
#[derive(Debug, Clone)]
pub struct ConsensusIndex {
    /// Union of all zone boundary sets, sorted.
    pub boundary_buses: Vec<usize>,
    /// Per zone: positions of its boundary buses within `boundary_buses`.
    pub zone_positions: Vec<Vec<usize>>,
}

impl ConsensusIndex {
    pub fn new(zones: &[ZoneView]) -> Self {
        let mut buses: Vec<usize> = zones.iter().flat_map(|z| z.boundary.clone()).collect();
        buses.sort_unstable();
        buses.dedup();
        let zone_positions = zones
            .iter()
            .map(|z| {
                z.boundary
                    .iter()
                    .map(|b| buses.binary_search(b).expect("boundary bus"))
                    .collect()
            })
            .collect();
        Self {
            boundary_buses: buses,
            zone_positions,
        }
    }

    /// Restrict a global consensus vector to one zone's boundary set.
    pub fn restrict(&self, consensus: &DVector<f64>, zone: usize) -> DVector<f64> {
        DVector::from_iterator(
            self.zone_positions[zone].len(),
            self.zone_positions[zone].iter().map(|&p| consensus[p]),
        )
    }

    /// Closed-form consensus update: per boundary bus, the average of the
    /// released angles minus the scaled dual average over covering zones.
    pub fn consensus_update(
        &self,
        released: &[DVector<f64>],
        duals: &[DVector<f64>],
        rho: f64,
    ) -> DVector<f64> {
        let n = self.boundary_buses.len();
        let mut sum: DVector<f64> = DVector::zeros(n);
        let mut count = vec![0usize; n];
        for (z, positions) in self.zone_positions.iter().enumerate() {
            for (k, &p) in positions.iter().enumerate() {
                sum[p] += released[z][k] - duals[z][k] / rho;
                count[p] += 1;
            }
        }
        DVector::from_fn(n, |i, _| {
            if count[i] > 0 {
                sum[i] / count[i] as f64
            } else {
                0.0
            }
        })
    }
}

/// Elementwise dual ascent on the consensus gap, using the released
/// (possibly perturbed) boundary angles.
pub fn dual_update(
    dual: &DVector<f64>,
    consensus_z: &DVector<f64>,
    released: &DVector<f64>,
    rho: f64,
) -> DVector<f64> {
    dual + rho * (consensus_z - released)
}

/// Everything recorded about one zone in one iteration; together these form
/// the coordination-signal trace the adversary model consumes.
#[derive(Debug, Clone)]
pub struct ZoneIterationRecord {
    pub zone_id: String,
    /// Dual signal the zone received this iteration (over M_z).
    pub dual_in: DVector<f64>,
    /// Consensus signal the zone received this iteration (over M_z).
    pub consensus_in: DVector<f64>,
    /// Unperturbed local angles over the extended set.
    pub theta: DVector<f64>,
    /// Zone dispatch over its generators.
    pub dispatch: DVector<f64>,
    /// Released (possibly perturbed) boundary angles.
    pub released: DVector<f64>,
    pub status: QpStatus,
    /// Local sensitivity report when the dynamic noise plan is active.
    pub sensitivity: Option<privacy::SensitivityReport>,
    /// Noise scale applied to this release (0 for the baseline).
    pub noise_scale: f64,
}

#[derive(Debug, Clone)]
pub struct IterationRecord {
    pub iter: usize,
    /// Primal residual: sum over zones of the consensus gap norm.
    pub residual: f64,
    /// Aggregated generation cost of the zone dispatches.
    pub cost: f64,
    pub zones: Vec<ZoneIterationRecord>,
}

#[derive(Debug, Clone)]
pub struct AdmmRun {
    pub iterations: Vec<IterationRecord>,
    pub converged: bool,
    pub final_cost: f64,
    /// Final consensus vector over `boundary_buses`.
    pub consensus: DVector<f64>,
    pub boundary_buses: Vec<usize>,
}

impl AdmmRun {
    pub fn residuals(&self) -> Vec<f64> {
        self.iterations.iter().map(|r| r.residual).collect()
    }

    pub fn iterations_run(&self) -> usize {
        self.iterations.len()
    }
}

/// Run consensus ADMM over the given zone views.
///
/// The `noise` plan selects the baseline (no perturbation), the static
/// variant (one Laplace draw per zone reused every iteration) or the
/// dynamic variant (per-iteration draws scaled by the local sensitivity).
/// The loop stops at the iteration cap or when the primal residual drops
/// to the configured tolerance.
pub fn run_admm(
    zones: &[ZoneView],
    config: &AdmmConfig,
    noise: &NoisePlan,
) -> Result<AdmmRun, AdmmError> {
    let index = ConsensusIndex::new(zones);
    let nbound = index.boundary_buses.len();
    let mut consensus = match &config.consensus_init {
        Some(v) => v.clone(),
        None => DVector::zeros(nbound),
    };
    let mut duals: Vec<DVector<f64>> = zones
        .iter()
        .map(|z| match &config.dual_init {
            Some(map) => map
                .get(&z.zone_id)
                .cloned()
                .unwrap_or_else(|| DVector::zeros(z.boundary.len())),
            None => DVector::zeros(z.boundary.len()),
        })
        .collect();

    let static_vectors: Option<&BTreeMap<String, DVector<f64>>> = match noise {
        NoisePlan::Static { vectors, .. } => Some(vectors),
        _ => None,
    };

    let mut iterations: Vec<IterationRecord> = Vec::new();
    let mut converged = false;

    for k in 1..=config.max_iters {
        // Zone solves are independent; assemble then batch-solve.
        let mut subproblems = Vec::with_capacity(zones.len());
        for (zi, zone) in zones.iter().enumerate() {
            let cons_z = index.restrict(&consensus, zi);
            subproblems.push(assemble_subproblem(zone, &cons_z, &duals[zi], config.rho)?);
        }
        let qps: Vec<QpProblem> = subproblems.iter().map(|s| s.qp.clone()).collect();
        let solutions = qp::solve_qp_batch(&qps, &config.qp_tol);

        let mut records = Vec::with_capacity(zones.len());
        let mut released_all = Vec::with_capacity(zones.len());
        let mut cost = 0.0;
        for (zi, zone) in zones.iter().enumerate() {
            let sol = solutions[zi].as_ref().map_err(|e| AdmmError::Qp(e.clone()))?;
            if sol.status == QpStatus::Infeasible {
                return Err(AdmmError::ZoneInfeasible {
                    zone: zone.zone_id.clone(),
                    iter: k,
                });
            }
            let sub = &subproblems[zi];
            let ng = sub.num_gens();
            let dispatch = sol.x.rows(0, ng).into_owned();
            let theta = sol.x.rows(ng, sub.theta_buses.len()).into_owned();
            for (g, (_, gen)) in zone.gens.iter().enumerate() {
                cost += gen.c2 * dispatch[g] * dispatch[g] + gen.c1 * dispatch[g];
            }
            let exact = sub.boundary_angles(&sol.x);
            let cons_z = index.restrict(&consensus, zi);

            let (xi, scale, sensitivity) = match noise {
                NoisePlan::None => (DVector::zeros(zone.boundary.len()), 0.0, None),
                NoisePlan::Static { scales, .. } => {
                    let vec = static_vectors
                        .and_then(|m| m.get(&zone.zone_id))
                        .cloned()
                        .unwrap_or_else(|| DVector::zeros(zone.boundary.len()));
                    (vec, scales.get(&zone.zone_id).copied().unwrap_or(0.0), None)
                }
                NoisePlan::Dynamic { params } => {
                    let report = privacy::local_sensitivity(
                        zone,
                        &cons_z,
                        &duals[zi],
                        config.rho,
                        params,
                        &config.qp_tol,
                    )?;
                    let scale = privacy::make_dynamic_scale(report.value, params);
                    let mut rng = privacy::derive_rng(params.seed, &zone.zone_id, k as u64);
                    let xi = privacy::sample_laplace(scale, zone.boundary.len(), &mut rng);
                    (xi, scale, Some(report))
                }
            };
            let released = &exact + &xi;
            released_all.push(released.clone());
            records.push(ZoneIterationRecord {
                zone_id: zone.zone_id.clone(),
                dual_in: duals[zi].clone(),
                consensus_in: cons_z,
                theta,
                dispatch,
                released,
                status: sol.status,
                sensitivity,
                noise_scale: scale,
            });
        }

        consensus = index.consensus_update(&released_all, &duals, config.rho);

        let mut residual = 0.0;
        for (zi, rec) in records.iter().enumerate() {
            let cons_z = index.restrict(&consensus, zi);
            residual += (&rec.released - &cons_z).norm();
        }
        for (zi, rec) in records.iter().enumerate() {
            let cons_z = index.restrict(&consensus, zi);
            duals[zi] = dual_update(&duals[zi], &cons_z, &rec.released, config.rho);
        }

        iterations.push(IterationRecord {
            iter: k,
            residual,
            cost,
            zones: records,
        });
        if residual <= config.tol {
            converged = true;
            break;
        }
    }

    let final_cost = iterations.last().map(|r| r.cost).unwrap_or(0.0);
    Ok(AdmmRun {
        iterations,
        converged,
        final_cost,
        consensus,
        boundary_buses: index.boundary_buses,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::case::{build_zone_views, parse_case_json, parse_partition_json, ZonePartition};
    use crate::opf::solve_centralized;
    use nalgebra::dvector;

    fn two_bus() -> crate::case::NetworkCase {
        parse_case_json(crate::case::tests_support::TWO_BUS_JSON).unwrap()
    }

    #[test]
    fn consensus_update_single_zone_passthrough() {
        let case = two_bus();
        let partition = parse_partition_json(r#"{"zones": {"z1": [1], "z2": [2]}}"#).unwrap();
        let zones = build_zone_views(&case, &partition).unwrap();
        let index = ConsensusIndex::new(&zones);
        // Two zones, both with boundary {1,2}: zero duals average the
        // released angles.
        let released = vec![dvector![0.1, 0.3], dvector![0.1, 0.3]];
        let duals = vec![dvector![0.0, 0.0], dvector![0.0, 0.0]];
        let cons = index.consensus_update(&released, &duals, 50.0);
        assert!((cons - dvector![0.1, 0.3]).abs().max() < 1e-15);
    }

    #[test]
    fn consensus_update_averages_two_zones() {
        let index = ConsensusIndex {
            boundary_buses: vec![7],
            zone_positions: vec![vec![0], vec![0]],
        };
        let released = vec![dvector![0.1], dvector![0.3]];
        let duals = vec![dvector![0.0], dvector![0.0]];
        let cons = index.consensus_update(&released, &duals, 123.0);
        assert!((cons[0] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn consensus_update_dual_shift() {
        // Released angles zero, mu1 = rho * 0.1: theta_bar = -0.05.
        let rho = 40.0;
        let index = ConsensusIndex {
            boundary_buses: vec![7],
            zone_positions: vec![vec![0], vec![0]],
        };
        let released = vec![dvector![0.0], dvector![0.0]];
        let duals = vec![dvector![rho * 0.1], dvector![0.0]];
        let cons = index.consensus_update(&released, &duals, rho);
        assert!((cons[0] + 0.05).abs() < 1e-15, "cons={}", cons[0]);
    }

    #[test]
    fn consensus_closed_form_matches_numeric_minimum() {
        // Minimize sum_z mu_z(theta - t_z) + rho/2 (theta - t_z)^2 by grid
        // refinement and compare against the closed form.
        let rho = 17.0;
        let released = [0.12, -0.04, 0.3];
        let duals = [1.0, -2.0, 0.5];
        let objective = |theta: f64| -> f64 {
            released
                .iter()
                .zip(duals.iter())
                .map(|(&t, &m)| m * (theta - t) + 0.5 * rho * (theta - t) * (theta - t))
                .sum()
        };
        let mut lo = -1.0;
        let mut hi = 1.0;
        for _ in 0..200 {
            let third = (hi - lo) / 3.0;
            if objective(lo + third) < objective(hi - third) {
                hi -= third;
            } else {
                lo += third;
            }
        }
        let numeric = 0.5 * (lo + hi);
        let index = ConsensusIndex {
            boundary_buses: vec![1],
            zone_positions: vec![vec![0], vec![0], vec![0]],
        };
        let cons = index.consensus_update(
            &released.iter().map(|&t| dvector![t]).collect::<Vec<_>>(),
            &duals.iter().map(|&m| dvector![m]).collect::<Vec<_>>(),
            rho,
        );
        assert!((cons[0] - numeric).abs() < 1e-9, "closed form {} vs numeric {}", cons[0], numeric);
    }

    #[test]
    fn dual_update_fixed_point_and_arithmetic() {
        let mu = dvector![0.5, -0.2];
        let same = dvector![0.1, 0.2];
        assert_eq!(dual_update(&mu, &same, &same, 100.0), mu);
        let updated = dual_update(&dvector![0.0], &dvector![0.01], &dvector![0.0], 100.0);
        assert!((updated[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn single_zone_converges_immediately() {
        let case = two_bus();
        let partition = ZonePartition::single_zone(&case, "all");
        let zones = build_zone_views(&case, &partition).unwrap();
        let run = run_admm(&zones, &AdmmConfig::default(), &NoisePlan::None).unwrap();
        assert!(run.converged);
        assert_eq!(run.iterations_run(), 1);
        assert!(run.iterations[0].residual.abs() < 1e-12);
        let central = solve_centralized(&case, &QpTolerances::default()).unwrap();
        assert!((run.final_cost - central.cost).abs() / central.cost < 1e-6);
    }

    #[test]
    fn single_zone_subproblem_equals_centralized_qp() {
        // With mu = 0 and rho = 0 the sub-problem of a single all-covering
        // zone is the centralized OPF term by term.
        let case = two_bus();
        let partition = ZonePartition::single_zone(&case, "all");
        let zones = build_zone_views(&case, &partition).unwrap();
        let sub = assemble_subproblem(
            &zones[0],
            &DVector::zeros(0),
            &DVector::zeros(0),
            0.0,
        )
        .unwrap();
        let (central, _) = crate::opf::assemble_centralized_qp(&case);
        assert_eq!(sub.qp.quadratic, central.quadratic);
        assert_eq!(sub.qp.linear, central.linear);
        assert_eq!(sub.qp.eq_mat, central.eq_mat);
        assert_eq!(sub.qp.eq_rhs, central.eq_rhs);
        assert_eq!(sub.qp.ineq_mat, central.ineq_mat);
        assert_eq!(sub.qp.ineq_rhs, central.ineq_rhs);
    }

    #[test]
    fn large_rho_pins_boundary_to_consensus() {
        // Zone z1 keeps a free generator, so a dominant penalty drives its
        // released angles to the (zero) consensus; z2 would not do, its
        // angles are fully determined by equalities.
        let case = two_bus();
        let partition = parse_partition_json(r#"{"zones": {"z1": [1], "z2": [2]}}"#).unwrap();
        let zones = build_zone_views(&case, &partition).unwrap();
        let z1 = zones.iter().find(|z| z.zone_id == "z1").unwrap();
        let nb = z1.boundary.len();
        let sub = assemble_subproblem(
            z1,
            &DVector::zeros(nb),
            &DVector::zeros(nb),
            1e8,
        )
        .unwrap();
        let sol = qp::solve_qp(&sub.qp, &QpTolerances::default()).unwrap();
        assert!(sol.is_optimal());
        let released = sub.boundary_angles(&sol.x);
        assert!(released.abs().max() < 1e-4, "penalty should dominate: {released}");
    }

    #[test]
    fn two_zone_first_iteration_matches_hand_assembly() {
        // Zone z1 = {1} of the 2-bus case at the zero initialization:
        // min c(p) + (rho/2)(theta_1^2 + theta_2^2) s.t. 10 theta_1 - 10
        // theta_2 = p (balance at bus 1), theta_1 = 0 (slack), 0 <= p <= 2.
        // Eliminating: theta_2 = -p/10, objective c2 p^2 + c1 p + rho p^2 /
        // 200; with c2 = 100, c1 = 500, rho = 100 the minimum over p >= 0
        // sits at p = 0 (c1 > 0 dominates).
        let case = two_bus();
        let partition = parse_partition_json(r#"{"zones": {"z1": [1], "z2": [2]}}"#).unwrap();
        let zones = build_zone_views(&case, &partition).unwrap();
        let z1 = zones.iter().find(|z| z.zone_id == "z1").unwrap();
        let sub = assemble_subproblem(z1, &dvector![0.0, 0.0], &dvector![0.0, 0.0], 100.0).unwrap();
        let sol = qp::solve_qp(&sub.qp, &QpTolerances::default()).unwrap();
        assert!(sol.is_optimal());
        assert!(sol.x[0].abs() < 1e-6, "p = {}", sol.x[0]);
    }

    #[test]
    fn two_zone_baseline_matches_centralized() {
        let case = two_bus();
        let partition = parse_partition_json(r#"{"zones": {"z1": [1], "z2": [2]}}"#).unwrap();
        let zones = build_zone_views(&case, &partition).unwrap();
        // Duals must climb to the marginal-cost scale (~600 p.u. here), so
        // the penalty factor is picked accordingly.
        let config = AdmmConfig {
            rho: 5000.0,
            max_iters: 2000,
            tol: 1e-5,
            ..AdmmConfig::default()
        };
        let run = run_admm(&zones, &config, &NoisePlan::None).unwrap();
        assert!(run.converged, "residuals: {:?}", &run.residuals()[..10.min(run.iterations_run())]);
        let central = solve_centralized(&case, &QpTolerances::default()).unwrap();
        let gap = (run.final_cost - central.cost).abs() / central.cost;
        assert!(gap < 1e-3, "cost {} vs centralized {}", run.final_cost, central.cost);
    }

    #[test]
    fn determinism_bitwise() {
        let case = two_bus();
        let partition = parse_partition_json(r#"{"zones": {"z1": [1], "z2": [2]}}"#).unwrap();
        let zones = build_zone_views(&case, &partition).unwrap();
        let config = AdmmConfig {
            tol: 1e-4,
            ..AdmmConfig::default()
        };
        let a = run_admm(&zones, &config, &NoisePlan::None).unwrap();
        let b = run_admm(&zones, &config, &NoisePlan::None).unwrap();
        assert_eq!(a.iterations_run(), b.iterations_run());
        for (ra, rb) in a.iterations.iter().zip(b.iterations.iter()) {
            assert_eq!(ra.residual.to_bits(), rb.residual.to_bits());
            assert_eq!(ra.cost.to_bits(), rb.cost.to_bits());
        }
    }
}
