//! Dense convex quadratic programming.
//!
//! Solves
//!
//! ```text
//! minimize   (1/2) xᵀQx + qᵀx
//! subject to Ax = b,  Gx ≤ h
//! ```
//!
//! with a primal-dual interior-point method (Mehrotra predictor-corrector).
//! Every sub-problem, the centralized dispatch, the sensitivity probes and
//! the inference attack are instances of this problem.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use thiserror::Error;

/// Maximum tolerated asymmetry of the cost matrix.
const SYMMETRY_TOL: f64 = 1e-9;
/// Static regularization applied to the KKT system; keeps degenerate
/// (PSD but not PD) cost matrices factorizable.
const KKT_REG: f64 = 1e-10;

#[derive(Debug, Clone, Error)]
pub enum QpError {
    #[error("cost matrix is not square: {rows}x{cols}")]
    CostNotSquare { rows: usize, cols: usize },
    #[error("cost matrix asymmetry {0:.3e} exceeds tolerance")]
    CostNotSymmetric(f64),
    #[error("{name} has {got} columns, expected {expected}")]
    BadColumnCount {
        name: &'static str,
        got: usize,
        expected: usize,
    },
    #[error("{name} length {got} does not match {expected} rows")]
    BadRhsLength {
        name: &'static str,
        got: usize,
        expected: usize,
    },
    #[error("linear term has length {got}, expected {expected}")]
    BadLinearLength { got: usize, expected: usize },
}

/// A convex QP in standard form. `eq_mat`/`ineq_mat` may have zero rows.
#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    pub quadratic: DMatrix<f64>,
    pub linear: DVector<f64>,
    pub eq_mat: DMatrix<f64>,
    pub eq_rhs: DVector<f64>,
    pub ineq_mat: DMatrix<f64>,
    pub ineq_rhs: DVector<f64>,
}

impl QpProblem {
    /// Problem with no constraints.
    pub fn unconstrained(quadratic: DMatrix<f64>, linear: DVector<f64>) -> Self {
        let n = linear.len();
        Self {
            quadratic,
            linear,
            eq_mat: DMatrix::zeros(0, n),
            eq_rhs: DVector::zeros(0),
            ineq_mat: DMatrix::zeros(0, n),
            ineq_rhs: DVector::zeros(0),
        }
    }

    pub fn num_vars(&self) -> usize {
        self.linear.len()
    }

    pub fn validate(&self) -> Result<(), QpError> {
        let n = self.num_vars();
        if self.quadratic.nrows() != self.quadratic.ncols() {
            return Err(QpError::CostNotSquare {
                rows: self.quadratic.nrows(),
                cols: self.quadratic.ncols(),
            });
        }
        if self.quadratic.nrows() != n {
            return Err(QpError::BadLinearLength {
                got: n,
                expected: self.quadratic.nrows(),
            });
        }
        let asym = (&self.quadratic - self.quadratic.transpose()).abs().max();
        if asym > SYMMETRY_TOL {
            return Err(QpError::CostNotSymmetric(asym));
        }
        if self.eq_mat.ncols() != n && self.eq_mat.nrows() > 0 {
            return Err(QpError::BadColumnCount {
                name: "equality matrix",
                got: self.eq_mat.ncols(),
                expected: n,
            });
        }
        if self.eq_rhs.len() != self.eq_mat.nrows() {
            return Err(QpError::BadRhsLength {
                name: "equality rhs",
                got: self.eq_rhs.len(),
                expected: self.eq_mat.nrows(),
            });
        }
        if self.ineq_mat.ncols() != n && self.ineq_mat.nrows() > 0 {
            return Err(QpError::BadColumnCount {
                name: "inequality matrix",
                got: self.ineq_mat.ncols(),
                expected: n,
            });
        }
        if self.ineq_rhs.len() != self.ineq_mat.nrows() {
            return Err(QpError::BadRhsLength {
                name: "inequality rhs",
                got: self.ineq_rhs.len(),
                expected: self.ineq_mat.nrows(),
            });
        }
        Ok(())
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * (x.transpose() * &self.quadratic * x)[(0, 0)] + self.linear.dot(x)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct QpTolerances {
    pub feasibility: f64,
    pub stationarity: f64,
    pub complementarity: f64,
    pub max_iters: usize,
}

impl Default for QpTolerances {
    fn default() -> Self {
        Self {
            feasibility: 1e-8,
            stationarity: 1e-8,
            complementarity: 1e-8,
            max_iters: 100,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpStatus {
    Optimal,
    Infeasible,
    MaxIterations,
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub x: DVector<f64>,
    pub lambda_eq: DVector<f64>,
    pub mu_ineq: DVector<f64>,
    pub objective: f64,
    pub status: QpStatus,
}

impl QpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == QpStatus::Optimal
    }
}

/// KKT residuals of a candidate solution; used both for the solver's own
/// stopping test and by callers that want to audit a solution.
#[derive(Debug, Clone, Copy)]
pub struct KktResiduals {
    pub primal_eq: f64,
    pub primal_ineq: f64,
    pub dual: f64,
    pub stationarity: f64,
    pub complementarity: f64,
}

pub fn kkt_residuals(
    problem: &QpProblem,
    x: &DVector<f64>,
    lambda_eq: &DVector<f64>,
    mu_ineq: &DVector<f64>,
) -> KktResiduals {
    let primal_eq = if problem.eq_mat.nrows() > 0 {
        (&problem.eq_mat * x - &problem.eq_rhs).abs().max()
    } else {
        0.0
    };
    let (primal_ineq, complementarity) = if problem.ineq_mat.nrows() > 0 {
        let slack = &problem.ineq_mat * x - &problem.ineq_rhs;
        let viol = slack.iter().cloned().fold(0.0f64, f64::max);
        let comp = slack
            .iter()
            .zip(mu_ineq.iter())
            .map(|(s, m)| (s * m).abs())
            .fold(0.0f64, f64::max);
        (viol, comp)
    } else {
        (0.0, 0.0)
    };
    let dual = mu_ineq.iter().cloned().fold(0.0f64, |a, m| a.max(-m));
    let mut grad = &problem.quadratic * x + &problem.linear;
    if problem.eq_mat.nrows() > 0 {
        grad += problem.eq_mat.transpose() * lambda_eq;
    }
    if problem.ineq_mat.nrows() > 0 {
        grad += problem.ineq_mat.transpose() * mu_ineq;
    }
    KktResiduals {
        primal_eq,
        primal_ineq,
        dual,
        stationarity: grad.abs().max(),
        complementarity,
    }
}

/// Solve a convex QP. Infeasibility and iteration exhaustion are reported
/// through [`QpStatus`], not as errors; `Err` means the problem data itself
/// is malformed.
pub fn solve_qp(problem: &QpProblem, tol: &QpTolerances) -> Result<QpSolution, QpError> {
    problem.validate()?;
    if problem.ineq_mat.nrows() == 0 {
        return Ok(solve_equality_qp(problem, tol));
    }
    Ok(predictor_corrector(problem, tol))
}

/// Solve each problem independently; order is preserved and results are
/// identical to sequential [`solve_qp`] calls regardless of schedule.
pub fn solve_qp_batch(
    problems: &[QpProblem],
    tol: &QpTolerances,
) -> Vec<Result<QpSolution, QpError>> {
    problems.par_iter().map(|p| solve_qp(p, tol)).collect()
}

/// Equality-constrained (or unconstrained) case: one regularized KKT solve.
fn solve_equality_qp(problem: &QpProblem, tol: &QpTolerances) -> QpSolution {
    let n = problem.num_vars();
    let me = problem.eq_mat.nrows();
    let dim = n + me;
    let mut kkt = DMatrix::zeros(dim, dim);
    kkt.view_mut((0, 0), (n, n)).copy_from(&problem.quadratic);
    for i in 0..n {
        kkt[(i, i)] += KKT_REG;
    }
    if me > 0 {
        kkt.view_mut((0, n), (n, me))
            .copy_from(&problem.eq_mat.transpose());
        kkt.view_mut((n, 0), (me, n)).copy_from(&problem.eq_mat);
        for i in 0..me {
            kkt[(n + i, n + i)] = -KKT_REG;
        }
    }
    let mut rhs = DVector::zeros(dim);
    rhs.rows_mut(0, n).copy_from(&(-&problem.linear));
    if me > 0 {
        rhs.rows_mut(n, me).copy_from(&problem.eq_rhs);
    }
    let lu = kkt.lu();
    let sol = match lu.solve(&rhs) {
        Some(s) => s,
        None => {
            return QpSolution {
                x: DVector::zeros(n),
                lambda_eq: DVector::zeros(me),
                mu_ineq: DVector::zeros(0),
                objective: f64::INFINITY,
                status: QpStatus::Infeasible,
            }
        }
    };
    let x = sol.rows(0, n).into_owned();
    let lambda_eq = sol.rows(n, me).into_owned();
    let mu_ineq = DVector::zeros(0);
    let res = kkt_residuals(problem, &x, &lambda_eq, &mu_ineq);
    let status = if res.primal_eq <= tol.feasibility && res.stationarity <= stat_bound(problem, tol)
    {
        QpStatus::Optimal
    } else {
        QpStatus::Infeasible
    };
    QpSolution {
        objective: problem.objective(&x),
        x,
        lambda_eq,
        mu_ineq,
        status,
    }
}

/// Stationarity is checked in absolute terms but allowed to scale mildly
/// with the problem data (penalty weights reach 1e6 in the attack QP).
fn stat_bound(problem: &QpProblem, tol: &QpTolerances) -> f64 {
    let scale = 1.0 + problem.quadratic.abs().max() + problem.linear.abs().max();
    tol.stationarity * scale
}

struct Step {
    dx: DVector<f64>,
    dy: DVector<f64>,
    dz: DVector<f64>,
    ds: DVector<f64>,
}

fn predictor_corrector(problem: &QpProblem, tol: &QpTolerances) -> QpSolution {
    let n = problem.num_vars();
    let me = problem.eq_mat.nrows();
    let mi = problem.ineq_mat.nrows();
    let a = &problem.eq_mat;
    let g = &problem.ineq_mat;

    // Starting point: equality-regularized solve for x, unit slacks/duals
    // shifted away from the boundary.
    let mut x = initial_primal(problem);
    let mut y = DVector::zeros(me);
    let gx = g * &x;
    let mut s = DVector::from_fn(mi, |i, _| (problem.ineq_rhs[i] - gx[i]).abs().max(1.0));
    let mut z = DVector::from_element(mi, 1.0);

    // Aim two orders of magnitude inside the contract tolerances so that
    // downstream identities (e.g. scaling invariance) hold with margin; fall
    // back to the contract tolerances when progress stalls.
    let satisfied = |res: &KktResiduals, factor: f64| {
        res.primal_eq <= factor * tol.feasibility
            && res.primal_ineq <= factor * tol.feasibility
            && res.dual <= factor * tol.feasibility
            && res.stationarity <= factor * stat_bound(problem, tol)
            && res.complementarity <= factor * comp_bound(problem, tol)
    };

    for _ in 0..tol.max_iters {
        let rd = &problem.quadratic * &x + &problem.linear + a.transpose() * &y + g.transpose() * &z;
        let rp = if me > 0 { a * &x - &problem.eq_rhs } else { DVector::zeros(0) };
        let rg = g * &x + &s - &problem.ineq_rhs;
        let mu = s.dot(&z) / mi as f64;

        let res = kkt_residuals(problem, &x, &y, &z);
        if satisfied(&res, 1e-2) || (satisfied(&res, 1.0) && mu < 1e-13) {
            return QpSolution {
                objective: problem.objective(&x),
                x,
                lambda_eq: y,
                mu_ineq: z,
                status: QpStatus::Optimal,
            };
        }

        // Divergent duals with persistent primal infeasibility certify an
        // empty feasible set for all practical purposes here. Multipliers
        // legitimately grow with the objective scale, so the divergence
        // threshold does too.
        let obj_scale = 1.0 + problem.quadratic.abs().max() + problem.linear.abs().max();
        let dual_norm = y.abs().max().max(z.abs().max());
        let primal_infeas = res.primal_eq.max(res.primal_ineq);
        if dual_norm > 1e9 * obj_scale && primal_infeas > 1e-7 {
            return infeasible_solution(problem, x, y, z);
        }

        // Factor the condensed KKT matrix once per iteration.
        let dim = n + me;
        let mut kkt = DMatrix::zeros(dim, dim);
        let mut block = problem.quadratic.clone();
        // Q + Gᵀ diag(z/s) G
        for r in 0..mi {
            let w = z[r] / s[r];
            for i in 0..n {
                let gi = g[(r, i)];
                if gi == 0.0 {
                    continue;
                }
                for j in 0..n {
                    block[(i, j)] += w * gi * g[(r, j)];
                }
            }
        }
        for i in 0..n {
            block[(i, i)] += KKT_REG;
        }
        kkt.view_mut((0, 0), (n, n)).copy_from(&block);
        if me > 0 {
            kkt.view_mut((0, n), (n, me)).copy_from(&a.transpose());
            kkt.view_mut((n, 0), (me, n)).copy_from(a);
            for i in 0..me {
                kkt[(n + i, n + i)] = -KKT_REG;
            }
        }
        let lu = kkt.lu();

        let solve_newton = |rc: &DVector<f64>| -> Option<Step> {
            // dz = (z∘rg − rc)/s + diag(z/s) G dx ; ds = −rg − G dx
            let mut rhs = DVector::zeros(dim);
            let mut top = -&rd;
            let mut coupling = DVector::zeros(mi);
            for i in 0..mi {
                coupling[i] = (z[i] * rg[i] - rc[i]) / s[i];
            }
            top -= g.transpose() * &coupling;
            rhs.rows_mut(0, n).copy_from(&top);
            if me > 0 {
                rhs.rows_mut(n, me).copy_from(&(-&rp));
            }
            let sol = lu.solve(&rhs)?;
            let dx = sol.rows(0, n).into_owned();
            let dy = sol.rows(n, me).into_owned();
            let gdx = g * &dx;
            let mut dz = DVector::zeros(mi);
            let mut ds = DVector::zeros(mi);
            for i in 0..mi {
                ds[i] = -rg[i] - gdx[i];
                dz[i] = (-rc[i] - z[i] * ds[i]) / s[i];
            }
            Some(Step { dx, dy, dz, ds })
        };

        // Predictor (affine scaling) direction.
        let rc_aff = DVector::from_fn(mi, |i, _| z[i] * s[i]);
        let aff = match solve_newton(&rc_aff) {
            Some(st) => st,
            None => return infeasible_solution(problem, x, y, z),
        };
        let alpha_p_aff = max_step(&s, &aff.ds);
        let alpha_d_aff = max_step(&z, &aff.dz);
        let mu_aff = {
            let mut acc = 0.0;
            for i in 0..mi {
                acc += (s[i] + alpha_p_aff * aff.ds[i]) * (z[i] + alpha_d_aff * aff.dz[i]);
            }
            acc / mi as f64
        };
        let sigma = (mu_aff / mu).max(0.0).powi(3).min(1.0);

        // Corrector direction with centering.
        let rc_cor =
            DVector::from_fn(mi, |i, _| z[i] * s[i] + aff.ds[i] * aff.dz[i] - sigma * mu);
        let step = match solve_newton(&rc_cor) {
            Some(st) => st,
            None => return infeasible_solution(problem, x, y, z),
        };
        let tau = 0.995;
        let alpha_p = (tau * max_step(&s, &step.ds)).min(1.0);
        let alpha_d = (tau * max_step(&z, &step.dz)).min(1.0);

        x += alpha_p * &step.dx;
        s += alpha_p * &step.ds;
        y += alpha_d * &step.dy;
        z += alpha_d * &step.dz;
        if alpha_p.max(alpha_d) < 1e-12 {
            break;
        }
    }

    // Iteration budget exhausted or step sizes collapsed: classify.
    let res = kkt_residuals(problem, &x, &y, &z);
    if satisfied(&res, 1.0) {
        return QpSolution {
            objective: problem.objective(&x),
            x,
            lambda_eq: y,
            mu_ineq: z,
            status: QpStatus::Optimal,
        };
    }
    let obj_scale = 1.0 + problem.quadratic.abs().max() + problem.linear.abs().max();
    let dual_norm = y.abs().max().max(z.abs().max());
    let status = if res.primal_eq.max(res.primal_ineq) > 1e-6 && dual_norm > 1e6 * obj_scale {
        QpStatus::Infeasible
    } else {
        QpStatus::MaxIterations
    };
    QpSolution {
        objective: problem.objective(&x),
        x,
        lambda_eq: y,
        mu_ineq: z,
        status,
    }
}

fn infeasible_solution(
    problem: &QpProblem,
    x: DVector<f64>,
    y: DVector<f64>,
    z: DVector<f64>,
) -> QpSolution {
    QpSolution {
        objective: problem.objective(&x),
        x,
        lambda_eq: y,
        mu_ineq: z,
        status: QpStatus::Infeasible,
    }
}

fn initial_primal(problem: &QpProblem) -> DVector<f64> {
    let n = problem.num_vars();
    let me = problem.eq_mat.nrows();
    let dim = n + me;
    let mut kkt = DMatrix::zeros(dim, dim);
    kkt.view_mut((0, 0), (n, n)).copy_from(&problem.quadratic);
    for i in 0..n {
        kkt[(i, i)] += 1.0;
    }
    if me > 0 {
        kkt.view_mut((0, n), (n, me))
            .copy_from(&problem.eq_mat.transpose());
        kkt.view_mut((n, 0), (me, n)).copy_from(&problem.eq_mat);
        for i in 0..me {
            kkt[(n + i, n + i)] = -1e-8;
        }
    }
    let mut rhs = DVector::zeros(dim);
    rhs.rows_mut(0, n).copy_from(&(-&problem.linear));
    if me > 0 {
        rhs.rows_mut(n, me).copy_from(&problem.eq_rhs);
    }
    match kkt.lu().solve(&rhs) {
        Some(sol) => sol.rows(0, n).into_owned(),
        None => DVector::zeros(n),
    }
}

fn comp_bound(problem: &QpProblem, tol: &QpTolerances) -> f64 {
    let scale = 1.0 + problem.quadratic.abs().max() + problem.linear.abs().max();
    tol.complementarity * scale
}

/// Largest alpha in (0, 1] with v + alpha*dv >= 0.
fn max_step(v: &DVector<f64>, dv: &DVector<f64>) -> f64 {
    let mut alpha = 1.0f64;
    for i in 0..v.len() {
        if dv[i] < 0.0 {
            alpha = alpha.min(-v[i] / dv[i]);
        }
    }
    alpha
}
