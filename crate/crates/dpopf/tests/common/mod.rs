//! Shared test helpers: an exhaustive active-set QP oracle and bundled
//! case loading. Not every integration target uses every helper.
#![allow(dead_code)]

use dpopf::case::{
    build_zone_views, parse_case_json, parse_partition_json, NetworkCase, ZoneView,
};
use dpopf::qp::QpProblem;
use nalgebra::{DMatrix, DVector};
use std::path::PathBuf;

pub const FEAS_TOL: f64 = 1e-8;

/// Independent QP reference: enumerate every subset of inequality rows as
/// active, solve the resulting equality-constrained KKT system directly,
/// and keep the best candidate that satisfies all constraints. Valid for
/// strictly convex objectives, where the optimal active set's candidate is
/// the unique global minimizer and every other feasible candidate can only
/// do worse.
pub fn active_set_oracle(problem: &QpProblem) -> Option<(DVector<f64>, f64)> {
    let n = problem.num_vars();
    let mi = problem.ineq_mat.nrows();
    assert!(mi <= 20, "oracle is exponential in the inequality count");
    let mut best: Option<(DVector<f64>, f64)> = None;
    for mask in 0u32..(1 << mi) {
        let active: Vec<usize> = (0..mi).filter(|i| mask & (1 << i) != 0).collect();
        let me = problem.eq_mat.nrows() + active.len();
        if me > n {
            continue;
        }
        let mut a = DMatrix::zeros(me, n);
        let mut b = DVector::zeros(me);
        for r in 0..problem.eq_mat.nrows() {
            a.row_mut(r).copy_from(&problem.eq_mat.row(r));
            b[r] = problem.eq_rhs[r];
        }
        for (k, &row) in active.iter().enumerate() {
            let r = problem.eq_mat.nrows() + k;
            a.row_mut(r).copy_from(&problem.ineq_mat.row(row));
            b[r] = problem.ineq_rhs[row];
        }
        // KKT system of the equality-restricted problem.
        let dim = n + me;
        let mut kkt = DMatrix::zeros(dim, dim);
        kkt.view_mut((0, 0), (n, n)).copy_from(&problem.quadratic);
        kkt.view_mut((0, n), (n, me)).copy_from(&a.transpose());
        kkt.view_mut((n, 0), (me, n)).copy_from(&a);
        let mut rhs = DVector::zeros(dim);
        for i in 0..n {
            rhs[i] = -problem.linear[i];
        }
        for r in 0..me {
            rhs[n + r] = b[r];
        }
        let Some(sol) = kkt.lu().solve(&rhs) else {
            continue;
        };
        let x = sol.rows(0, n).into_owned();
        if !x.iter().all(|v| v.is_finite()) {
            continue;
        }
        let eq_res = (&problem.eq_mat * &x - &problem.eq_rhs).abs().max();
        if problem.eq_mat.nrows() > 0 && eq_res > FEAS_TOL {
            continue;
        }
        let slack = &problem.ineq_rhs - &problem.ineq_mat * &x;
        if mi > 0 && slack.min() < -FEAS_TOL {
            continue;
        }
        let obj = problem.objective(&x);
        if best.as_ref().is_none_or(|(_, f)| obj < *f) {
            best = Some((x, obj));
        }
    }
    best
}

pub fn case_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("cases").join(name)
}

pub fn load_bundled(case: &str, zones: &str) -> (NetworkCase, Vec<ZoneView>) {
    let case_text = std::fs::read_to_string(case_path(case)).unwrap();
    let zone_text = std::fs::read_to_string(case_path(zones)).unwrap();
    let case = parse_case_json(&case_text).unwrap();
    let partition = parse_partition_json(&zone_text).unwrap();
    let views = build_zone_views(&case, &partition).unwrap();
    (case, views)
}

/// Deterministic pseudo-random stream for test data generation.
pub struct TestRng(u64);

impl TestRng {
    pub fn new(seed: u64) -> Self {
        Self(seed.wrapping_mul(0x9e3779b97f4a7c15).wrapping_add(1))
    }

    pub fn next_u64(&mut self) -> u64 {
        let mut x = self.0;
        x ^= x << 13;
        x ^= x >> 7;
        x ^= x << 17;
        self.0 = x;
        x
    }

    /// Uniform in [-1, 1).
    pub fn unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 52) as f64 * 2.0 - 1.0
    }
}

/// Random strictly convex QP with a guaranteed feasible point.
pub fn random_feasible_qp(rng: &mut TestRng, n: usize, me: usize, mi: usize) -> QpProblem {
    let m = DMatrix::from_fn(n, n, |_, _| rng.unit());
    let quadratic = &m * m.transpose() + DMatrix::identity(n, n) * 0.1;
    let linear = DVector::from_fn(n, |_, _| rng.unit());
    let x0 = DVector::from_fn(n, |_, _| rng.unit());
    let eq_mat = DMatrix::from_fn(me, n, |_, _| rng.unit());
    let eq_rhs = &eq_mat * &x0;
    let ineq_mat = DMatrix::from_fn(mi, n, |_, _| rng.unit());
    let ineq_rhs = &ineq_mat * &x0 + DVector::from_fn(mi, |_, _| rng.unit().abs() + 0.05);
    QpProblem {
        quadratic,
        linear,
        eq_mat,
        eq_rhs,
        ineq_mat,
        ineq_rhs,
    }
}
