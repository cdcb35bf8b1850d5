//! Worst-case load-inference attack: an adversary that knows the zone
//! model and observes the coordination signals fits the private load by
//! empirical risk minimization over the observed iterations, solved as a
//! single QP.

use crate::admm::AdmmRun;
use crate::case::ZoneView;
use crate::qp::{self, QpProblem, QpStatus, QpTolerances};
use nalgebra::{DMatrix, DVector};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AttackError {
    #[error(transparent)]
    Qp(#[from] qp::QpError),
    #[error("no observed iterations to attack")]
    NoSamples,
    #[error("target bus {0} is not a domestic bus of the attacked zone")]
    TargetNotDomestic(usize),
    #[error("signal length mismatch at sample {sample}: got {got}, expected {expected}")]
    BadSample {
        sample: usize,
        got: usize,
        expected: usize,
    },
    #[error("zone {0} not present in the run")]
    ZoneNotInRun(String),
    #[error("reconstruction QP is infeasible")]
    Infeasible,
}

/// One observed iteration: the dual and consensus signals the zone
/// received and the boundary angles it released in response.
#[derive(Debug, Clone)]
pub struct AttackSample {
    pub dual: DVector<f64>,
    pub consensus: DVector<f64>,
    pub released: DVector<f64>,
}

/// Everything the adversary is assumed to know: the zone's topology, cost
/// curves and limits, the penalty factor, all loads except the target bus,
/// and a window of observed coordination signals.
#[derive(Debug, Clone)]
pub struct AttackObservation {
    pub zone: ZoneView,
    pub target_bus: usize,
    pub rho: f64,
    /// Weight of the release-consistency penalty.
    pub upsilon: f64,
    pub samples: Vec<AttackSample>,
    /// Loads at the non-target domestic buses.
    pub known_loads: BTreeMap<usize, f64>,
}

#[derive(Debug, Clone)]
pub struct AttackResult {
    pub inferred_load: f64,
    pub objective: f64,
    pub status: QpStatus,
}

/// Assemble the reconstruction QP.
///
/// Variables are T blocks of (zone dispatch, zone angles) followed by the
/// single unknown load. Each block replays the zone sub-problem under the
/// observed signals of that iteration, with the released angles enforced
/// softly through the upsilon penalty; the unknown load couples the blocks
/// through the target bus balance row.
pub fn build_attack_problem(obs: &AttackObservation) -> Result<QpProblem, AttackError> {
    let zone = &obs.zone;
    if obs.samples.is_empty() {
        return Err(AttackError::NoSamples);
    }
    if zone.domestic.binary_search(&obs.target_bus).is_err() {
        return Err(AttackError::TargetNotDomestic(obs.target_bus));
    }
    let nb = zone.boundary.len();
    for (s, sample) in obs.samples.iter().enumerate() {
        for len in [sample.dual.len(), sample.consensus.len(), sample.released.len()] {
            if len != nb {
                return Err(AttackError::BadSample {
                    sample: s,
                    got: len,
                    expected: nb,
                });
            }
        }
    }

    let t_count = obs.samples.len();
    let ng = zone.gens.len();
    let nv = zone.extended.len();
    let block = ng + nv;
    let n = t_count * block + 1;
    let d_col = n - 1;
    let theta_pos =
        |bus: usize| -> usize { zone.extended.binary_search(&bus).expect("bus in V_z") };

    let mut quadratic = DMatrix::zeros(n, n);
    let mut linear = DVector::zeros(n);
    let me = t_count * (zone.domestic.len() + usize::from(zone.slack.is_some()));
    let mut eq_mat = DMatrix::zeros(me, n);
    let mut eq_rhs = DVector::zeros(me);
    let nl = zone.lines.len();
    let mi = t_count * (2 * ng + 2 * nl) + 1;
    let mut ineq_mat = DMatrix::zeros(mi, n);
    let mut ineq_rhs = DVector::zeros(mi);

    let mut eq_row = 0;
    let mut ineq_row = 0;
    for (t, sample) in obs.samples.iter().enumerate() {
        let base = t * block;
        for (g, (_, gen)) in zone.gens.iter().enumerate() {
            quadratic[(base + g, base + g)] = 2.0 * gen.c2;
            linear[base + g] = gen.c1;
        }
        for (k, &bus) in zone.boundary.iter().enumerate() {
            let col = base + ng + theta_pos(bus);
            quadratic[(col, col)] += obs.rho + 2.0 * obs.upsilon;
            linear[col] +=
                -sample.dual[k] - obs.rho * sample.consensus[k] - 2.0 * obs.upsilon * sample.released[k];
        }

        for &bus in &zone.domestic {
            for (_, line) in &zone.lines {
                if line.from == bus || line.to == bus {
                    let other = if line.from == bus { line.to } else { line.from };
                    eq_mat[(eq_row, base + ng + theta_pos(bus))] += line.susceptance;
                    eq_mat[(eq_row, base + ng + theta_pos(other))] -= line.susceptance;
                }
            }
            for (g, (_, gen)) in zone.gens.iter().enumerate() {
                if gen.bus == bus {
                    eq_mat[(eq_row, base + g)] = -1.0;
                }
            }
            if bus == obs.target_bus {
                eq_mat[(eq_row, d_col)] = 1.0;
            } else {
                eq_rhs[eq_row] = -obs.known_loads.get(&bus).copied().unwrap_or(0.0);
            }
            eq_row += 1;
        }
        if let Some(slack) = zone.slack {
            eq_mat[(eq_row, base + ng + theta_pos(slack))] = 1.0;
            eq_row += 1;
        }

        for (g, (_, gen)) in zone.gens.iter().enumerate() {
            ineq_mat[(ineq_row, base + g)] = 1.0;
            ineq_rhs[ineq_row] = gen.p_max;
            ineq_mat[(ineq_row + 1, base + g)] = -1.0;
            ineq_rhs[ineq_row + 1] = -gen.p_min;
            ineq_row += 2;
        }
        for (_, line) in &zone.lines {
            let s = base + ng + theta_pos(line.from);
            let r = base + ng + theta_pos(line.to);
            ineq_mat[(ineq_row, s)] = line.susceptance;
            ineq_mat[(ineq_row, r)] = -line.susceptance;
            ineq_rhs[ineq_row] = line.capacity;
            ineq_mat[(ineq_row + 1, s)] = -line.susceptance;
            ineq_mat[(ineq_row + 1, r)] = line.susceptance;
            ineq_rhs[ineq_row + 1] = line.capacity;
        }
        ineq_row += 2 * nl;
    }
    // Loads are consumption: d >= 0.
    ineq_mat[(ineq_row, d_col)] = -1.0;

    Ok(QpProblem {
        quadratic,
        linear,
        eq_mat,
        eq_rhs,
        ineq_mat,
        ineq_rhs,
    })
}

pub fn infer_load(obs: &AttackObservation, tol: &QpTolerances) -> Result<AttackResult, AttackError> {
    let problem = build_attack_problem(obs)?;
    let sol = qp::solve_qp(&problem, tol)?;
    if sol.status == QpStatus::Infeasible {
        return Err(AttackError::Infeasible);
    }
    Ok(AttackResult {
        inferred_load: sol.x[sol.x.len() - 1],
        objective: sol.objective,
        status: sol.status,
    })
}

/// Build the observation from the last `budget` iterations of a run. The
/// attacked zone's own load at the target bus is withheld; every other
/// domestic load is handed to the adversary.
pub fn observation_from_run(
    run: &AdmmRun,
    zone: &ZoneView,
    target_bus: usize,
    rho: f64,
    upsilon: f64,
    budget: usize,
) -> Result<AttackObservation, AttackError> {
    let mut samples = Vec::new();
    let start = run.iterations.len().saturating_sub(budget);
    for record in &run.iterations[start..] {
        let zr = record
            .zones
            .iter()
            .find(|z| z.zone_id == zone.zone_id)
            .ok_or_else(|| AttackError::ZoneNotInRun(zone.zone_id.clone()))?;
        samples.push(AttackSample {
            dual: zr.dual_in.clone(),
            consensus: zr.consensus_in.clone(),
            released: zr.released.clone(),
        });
    }
    if samples.is_empty() {
        return Err(AttackError::NoSamples);
    }
    let known_loads = zone
        .loads
        .iter()
        .filter(|&(&b, _)| b != target_bus)
        .map(|(&b, &d)| (b, d))
        .collect();
    Ok(AttackObservation {
        zone: zone.clone(),
        target_bus,
        rho,
        upsilon,
        samples,
        known_loads,
    })
}
