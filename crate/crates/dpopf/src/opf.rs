//! Centralized DC optimal power flow: the fidelity reference every
//! distributed run is measured against.

use crate::case::{build_laplacian, NetworkCase};
use crate::qp::{solve_qp, QpProblem, QpSolution, QpStatus, QpTolerances};
use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OpfError {
    #[error(transparent)]
    Qp(#[from] crate::qp::QpError),
    #[error("centralized OPF is infeasible")]
    Infeasible,
    #[error("QP solver hit the iteration cap")]
    MaxIterations,
}

/// Centralized dispatch: generation per generator, angles per bus (sorted
/// bus order, slack pinned to zero), flows per line, all in p.u.
#[derive(Debug, Clone)]
pub struct OpfSolution {
    pub p: Vec<f64>,
    pub theta: Vec<f64>,
    pub flows: Vec<f64>,
    pub cost: f64,
    /// Lagrangian value at the KKT point; matches `cost` at the optimum.
    pub dual_objective: f64,
}

/// Variable layout of the centralized QP: generators first, then bus angles.
pub struct CentralLayout {
    pub num_gens: usize,
    pub num_buses: usize,
}

/// Assemble the centralized OPF as a QP.
///
/// Equalities: one nodal balance row per bus plus the slack-angle pin.
/// Inequalities: generator box limits and two one-sided flow limits per
/// line.
pub fn assemble_centralized_qp(case: &NetworkCase) -> (QpProblem, CentralLayout) {
    let ng = case.gens.len();
    let nb = case.num_buses();
    let nl = case.lines.len();
    let n = ng + nb;

    let mut quadratic = DMatrix::zeros(n, n);
    let mut linear = DVector::zeros(n);
    for (g, gen) in case.gens.iter().enumerate() {
        quadratic[(g, g)] = 2.0 * gen.c2;
        linear[g] = gen.c1;
    }

    let me = nb + 1;
    let mut eq_mat = DMatrix::zeros(me, n);
    let mut eq_rhs = DVector::zeros(me);
    let lap = build_laplacian(case);
    for i in 0..nb {
        for j in 0..nb {
            eq_mat[(i, ng + j)] = lap[(i, j)];
        }
        for (g, gen) in case.gens.iter().enumerate() {
            if case.bus_index(gen.bus) == Some(i) {
                eq_mat[(i, g)] = -1.0;
            }
        }
        eq_rhs[i] = -case.loads[i];
    }
    let slack_idx = case.bus_index(case.slack_bus).expect("validated");
    eq_mat[(nb, ng + slack_idx)] = 1.0;

    let mi = 2 * ng + 2 * nl;
    let mut ineq_mat = DMatrix::zeros(mi, n);
    let mut ineq_rhs = DVector::zeros(mi);
    for (g, gen) in case.gens.iter().enumerate() {
        ineq_mat[(2 * g, g)] = 1.0;
        ineq_rhs[2 * g] = gen.p_max;
        ineq_mat[(2 * g + 1, g)] = -1.0;
        ineq_rhs[2 * g + 1] = -gen.p_min;
    }
    for (l, line) in case.lines.iter().enumerate() {
        let s = case.bus_index(line.from).expect("validated");
        let r = case.bus_index(line.to).expect("validated");
        let row = 2 * ng + 2 * l;
        ineq_mat[(row, ng + s)] = line.susceptance;
        ineq_mat[(row, ng + r)] = -line.susceptance;
        ineq_rhs[row] = line.capacity;
        ineq_mat[(row + 1, ng + s)] = -line.susceptance;
        ineq_mat[(row + 1, ng + r)] = line.susceptance;
        ineq_rhs[row + 1] = line.capacity;
    }

    (
        QpProblem {
            quadratic,
            linear,
            eq_mat,
            eq_rhs,
            ineq_mat,
            ineq_rhs,
        },
        CentralLayout {
            num_gens: ng,
            num_buses: nb,
        },
    )
}

pub fn solve_centralized(case: &NetworkCase, tol: &QpTolerances) -> Result<OpfSolution, OpfError> {
    let (problem, layout) = assemble_centralized_qp(case);
    let sol = solve_qp(&problem, tol)?;
    match sol.status {
        QpStatus::Optimal => {}
        QpStatus::Infeasible => return Err(OpfError::Infeasible),
        QpStatus::MaxIterations => return Err(OpfError::MaxIterations),
    }
    Ok(extract_solution(case, &problem, &layout, &sol))
}

fn extract_solution(
    case: &NetworkCase,
    problem: &QpProblem,
    layout: &CentralLayout,
    sol: &QpSolution,
) -> OpfSolution {
    let ng = layout.num_gens;
    let nb = layout.num_buses;
    let p: Vec<f64> = (0..ng).map(|g| sol.x[g]).collect();
    let theta: Vec<f64> = (0..nb).map(|i| sol.x[ng + i]).collect();
    let flows: Vec<f64> = case
        .lines
        .iter()
        .map(|line| {
            let s = case.bus_index(line.from).expect("validated");
            let r = case.bus_index(line.to).expect("validated");
            line.susceptance * (theta[s] - theta[r])
        })
        .collect();
    let cost = case
        .gens
        .iter()
        .zip(p.iter())
        .map(|(gen, &pg)| gen.c2 * pg * pg + gen.c1 * pg)
        .sum();
    // g(lambda, mu) = f(x*) + lambda'(Ax-b) + mu'(Gx-h) at the KKT point.
    let dual_objective = sol.objective
        + sol
            .lambda_eq
            .dot(&(&problem.eq_mat * &sol.x - &problem.eq_rhs))
        + sol
            .mu_ineq
            .dot(&(&problem.ineq_mat * &sol.x - &problem.ineq_rhs));
    OpfSolution {
        p,
        theta,
        flows,
        cost,
        dual_objective,
    }
}
