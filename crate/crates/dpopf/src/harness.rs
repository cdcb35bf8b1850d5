//! Experiment orchestration: algorithm selection, Monte Carlo repetition
//! over seeds, the privacy/accuracy attack sweep, and CSV emission of
//! traces and summaries.

use crate::admm::{run_admm, AdmmConfig, AdmmError, AdmmRun};
use crate::adversary::{self, AttackError};
use crate::case::{NetworkCase, ZoneView};
use crate::opf::{solve_centralized, OpfError};
use crate::privacy::{
    make_static_plan, NoisePlan, PrivacyError, PrivacyParams, SensitivityMode,
};
use rayon::prelude::*;
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Admm(#[from] AdmmError),
    #[error(transparent)]
    Privacy(#[from] PrivacyError),
    #[error(transparent)]
    Attack(#[from] AttackError),
    #[error(transparent)]
    Opf(#[from] OpfError),
    #[error("zone {0} not found in the partition")]
    UnknownZone(String),
    #[error("malformed csv at line {line}: {reason}")]
    Csv { line: usize, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    /// Non-private consensus ADMM.
    Admm,
    /// Static perturbation: one noise draw per zone, reused every iteration.
    SpAdmm,
    /// Dynamic perturbation: fresh draws scaled by local sensitivity.
    DpAdmm,
}

impl Algorithm {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "admm" => Some(Self::Admm),
            "sp-admm" | "sp" => Some(Self::SpAdmm),
            "dp-admm" | "dp" => Some(Self::DpAdmm),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Admm => "admm",
            Self::SpAdmm => "sp-admm",
            Self::DpAdmm => "dp-admm",
        }
    }
}

/// Largest per-iteration local sensitivity seen per zone in a run with the
/// dynamic plan active.
pub fn local_bounds_from_run(run: &AdmmRun) -> BTreeMap<String, f64> {
    let mut bounds = BTreeMap::new();
    for record in &run.iterations {
        for zr in &record.zones {
            if let Some(report) = &zr.sensitivity {
                let entry = bounds.entry(zr.zone_id.clone()).or_insert(0.0f64);
                *entry = entry.max(report.value);
            }
        }
    }
    bounds
}

/// Run one algorithm variant with a specific seed.
///
/// For the static variant with a run-local sensitivity mode, a dynamic
/// reference run is executed first to obtain the per-zone sensitivity
/// maxima the static draw is calibrated against.
pub fn run_algorithm(
    case: &NetworkCase,
    zones: &[ZoneView],
    algorithm: Algorithm,
    admm_cfg: &AdmmConfig,
    privacy: &PrivacyParams,
    seed: u64,
) -> Result<AdmmRun, HarnessError> {
    let params = PrivacyParams {
        seed,
        ..privacy.clone()
    };
    let plan = match algorithm {
        Algorithm::Admm => NoisePlan::None,
        Algorithm::DpAdmm => NoisePlan::Dynamic { params },
        Algorithm::SpAdmm => {
            let local_bounds = if params.sensitivity_mode == SensitivityMode::LocalMaxOverRun {
                let reference = run_admm(
                    zones,
                    admm_cfg,
                    &NoisePlan::Dynamic {
                        params: params.clone(),
                    },
                )?;
                Some(local_bounds_from_run(&reference))
            } else {
                None
            };
            make_static_plan(case, zones, &params, local_bounds.as_ref())?
        }
    };
    Ok(run_admm(zones, admm_cfg, &plan)?)
}

#[derive(Debug, Clone)]
pub struct RunMetrics {
    pub seed: u64,
    pub final_cost: f64,
    pub centralized_cost: f64,
    /// Relative cost gap against the centralized solve, in percent.
    pub optimality_loss_pct: f64,
    pub iterations: usize,
    pub converged: bool,
    pub residuals: Vec<f64>,
}

pub fn metrics_from_run(run: &AdmmRun, centralized_cost: f64, seed: u64) -> RunMetrics {
    RunMetrics {
        seed,
        final_cost: run.final_cost,
        centralized_cost,
        optimality_loss_pct: 100.0 * (run.final_cost - centralized_cost).abs() / centralized_cost,
        iterations: run.iterations_run(),
        converged: run.converged,
        residuals: run.residuals(),
    }
}

/// Monte Carlo over consecutive seeds; runs execute in parallel but the
/// result order is fixed by the seed list.
pub fn monte_carlo(
    case: &NetworkCase,
    zones: &[ZoneView],
    algorithm: Algorithm,
    admm_cfg: &AdmmConfig,
    privacy: &PrivacyParams,
    base_seed: u64,
    runs: usize,
) -> Result<Vec<RunMetrics>, HarnessError> {
    let centralized = solve_centralized(case, &admm_cfg.qp_tol)?;
    (0..runs as u64)
        .into_par_iter()
        .map(|i| {
            let seed = base_seed.wrapping_add(i);
            let run = run_algorithm(case, zones, algorithm, admm_cfg, privacy, seed)?;
            Ok(metrics_from_run(&run, centralized.cost, seed))
        })
        .collect()
}

/// Attack error grid: rows follow `alphas`, columns follow `budgets`.
/// Entries are the mean absolute load-inference error in percent of the
/// true load, averaged over the Monte Carlo seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackMatrix {
    pub alphas: Vec<f64>,
    pub budgets: Vec<usize>,
    pub errors: Vec<Vec<f64>>,
}

/// Sweep adjacency radii and observation budgets: for each alpha, run the
/// chosen algorithm `runs` times and attack the target zone's load from
/// the last T observed iterations.
#[allow(clippy::too_many_arguments)]
pub fn attack_sweep(
    case: &NetworkCase,
    zones: &[ZoneView],
    algorithm: Algorithm,
    admm_cfg: &AdmmConfig,
    privacy: &PrivacyParams,
    target_zone: &str,
    target_bus: usize,
    alphas: &[f64],
    budgets: &[usize],
    upsilon: f64,
    base_seed: u64,
    runs: usize,
) -> Result<AttackMatrix, HarnessError> {
    let zone = zones
        .iter()
        .find(|z| z.zone_id == target_zone)
        .ok_or_else(|| HarnessError::UnknownZone(target_zone.to_string()))?;
    let true_load = zone.loads.get(&target_bus).copied().unwrap_or(0.0);

    let mut errors = Vec::with_capacity(alphas.len());
    for &alpha in alphas {
        let params = PrivacyParams {
            alpha_frac: alpha,
            ..privacy.clone()
        };
        let per_seed: Result<Vec<Vec<f64>>, HarnessError> = (0..runs as u64)
            .into_par_iter()
            .map(|i| {
                let seed = base_seed.wrapping_add(i);
                let run = run_algorithm(case, zones, algorithm, admm_cfg, &params, seed)?;
                budgets
                    .iter()
                    .map(|&budget| {
                        let obs = adversary::observation_from_run(
                            &run, zone, target_bus, admm_cfg.rho, upsilon, budget,
                        )?;
                        let result = adversary::infer_load(&obs, &admm_cfg.qp_tol)?;
                        let err = if true_load.abs() > 0.0 {
                            100.0 * (result.inferred_load - true_load).abs() / true_load
                        } else {
                            (result.inferred_load - true_load).abs()
                        };
                        Ok(err)
                    })
                    .collect()
            })
            .collect();
        let per_seed = per_seed?;
        let mut row = vec![0.0; budgets.len()];
        for sample in &per_seed {
            for (j, e) in sample.iter().enumerate() {
                row[j] += e / per_seed.len() as f64;
            }
        }
        errors.push(row);
    }
    Ok(AttackMatrix {
        alphas: alphas.to_vec(),
        budgets: budgets.to_vec(),
        errors,
    })
}

fn fmt(v: f64) -> String {
    format!("{v:.12e}")
}

/// Per-iteration residual/cost trace of a single run.
pub fn trace_csv(run: &AdmmRun) -> String {
    let mut out = String::from("iter,residual,cost\n");
    for record in &run.iterations {
        out.push_str(&format!(
            "{},{},{}\n",
            record.iter,
            fmt(record.residual),
            fmt(record.cost)
        ));
    }
    out
}

/// Min/mean/max residual envelope over a set of runs, per iteration.
pub fn envelope_csv(metrics: &[RunMetrics]) -> String {
    let mut out = String::from("iter,min,mean,max\n");
    let longest = metrics.iter().map(|m| m.residuals.len()).max().unwrap_or(0);
    for k in 0..longest {
        let values: Vec<f64> = metrics
            .iter()
            .filter_map(|m| m.residuals.get(k).copied())
            .collect();
        let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        out.push_str(&format!("{},{},{},{}\n", k + 1, fmt(min), fmt(mean), fmt(max)));
    }
    out
}

pub fn metrics_csv(metrics: &[RunMetrics]) -> String {
    let mut out =
        String::from("seed,final_cost,centralized_cost,optimality_loss_pct,iterations,converged\n");
    for m in metrics {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            m.seed,
            fmt(m.final_cost),
            fmt(m.centralized_cost),
            fmt(m.optimality_loss_pct),
            m.iterations,
            m.converged
        ));
    }
    out
}

/// Per-iteration local sensitivity reports of a dynamic run.
pub fn sensitivity_csv(run: &AdmmRun) -> String {
    let mut out = String::from("iter,zone,delta,argmax_bus,sign,noise_scale\n");
    for record in &run.iterations {
        for zr in &record.zones {
            if let Some(report) = &zr.sensitivity {
                out.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    record.iter,
                    zr.zone_id,
                    fmt(report.value),
                    report.argmax_bus.map_or(String::from("-"), |b| b.to_string()),
                    report.sign,
                    fmt(zr.noise_scale)
                ));
            }
        }
    }
    out
}

pub fn attack_matrix_csv(matrix: &AttackMatrix) -> String {
    let mut out = String::from("alpha");
    for b in &matrix.budgets {
        out.push_str(&format!(",T{b}"));
    }
    out.push('\n');
    for (row, &alpha) in matrix.errors.iter().zip(matrix.alphas.iter()) {
        out.push_str(&fmt(alpha));
        for e in row {
            out.push(',');
            out.push_str(&fmt(*e));
        }
        out.push('\n');
    }
    out
}

pub fn parse_attack_matrix_csv(text: &str) -> Result<AttackMatrix, HarnessError> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(HarnessError::Csv {
        line: 1,
        reason: "empty file".into(),
    })?;
    let budgets: Vec<usize> = header
        .split(',')
        .skip(1)
        .map(|c| {
            c.trim_start_matches('T').parse().map_err(|_| HarnessError::Csv {
                line: 1,
                reason: format!("bad budget column {c}"),
            })
        })
        .collect::<Result<_, _>>()?;
    let mut alphas = Vec::new();
    let mut errors = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let mut cells = line.split(',');
        let alpha: f64 = cells
            .next()
            .and_then(|c| c.parse().ok())
            .ok_or(HarnessError::Csv {
                line: idx + 1,
                reason: "missing alpha".into(),
            })?;
        let row: Vec<f64> = cells
            .map(|c| {
                c.parse().map_err(|_| HarnessError::Csv {
                    line: idx + 1,
                    reason: format!("bad value {c}"),
                })
            })
            .collect::<Result<_, _>>()?;
        if row.len() != budgets.len() {
            return Err(HarnessError::Csv {
                line: idx + 1,
                reason: format!("expected {} values, got {}", budgets.len(), row.len()),
            });
        }
        alphas.push(alpha);
        errors.push(row);
    }
    Ok(AttackMatrix {
        alphas,
        budgets,
        errors,
    })
}
