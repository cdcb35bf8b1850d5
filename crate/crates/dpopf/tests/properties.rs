//! Randomized invariants over the model-building and consensus algebra.

mod common;

use dpopf::admm::ConsensusIndex;
use dpopf::case::{build_laplacian, parse_case_json, serialize_case_json};
use nalgebra::DVector;
use proptest::prelude::*;

fn ring_case_json(loads: &[u32], beta: u32) -> String {
    let n = loads.len();
    let buses: Vec<String> = loads
        .iter()
        .enumerate()
        .map(|(i, &d)| format!(r#"{{"id":{},"load_mw":{}}}"#, i + 1, d))
        .collect();
    let lines: Vec<String> = (0..n)
        .map(|i| {
            format!(
                r#"{{"from":{},"to":{},"susceptance_pu":{},"capacity_mw":10000}}"#,
                i + 1,
                (i + 1) % n + 1,
                beta
            )
        })
        .collect();
    format!(
        r#"{{"base_mva":64.0,"slack_bus":1,"buses":[{}],"lines":[{}],
            "gens":[{{"bus":1,"pmin_mw":0,"pmax_mw":10000,"c2_per_mw2":0.01,"c1_per_mw":1}}]}}"#,
        buses.join(","),
        lines.join(",")
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn laplacian_rows_sum_to_zero(
        loads in prop::collection::vec(0u32..500, 3..8),
        beta in 1u32..40,
    ) {
        let case = parse_case_json(&ring_case_json(&loads, beta)).unwrap();
        let lap = build_laplacian(&case);
        for i in 0..case.num_buses() {
            let row_sum: f64 = (0..case.num_buses()).map(|j| lap[(i, j)]).sum();
            prop_assert!(row_sum.abs() < 1e-9);
            prop_assert!(lap[(i, i)] > 0.0);
        }
        // Symmetry.
        for i in 0..case.num_buses() {
            for j in 0..case.num_buses() {
                prop_assert_eq!(lap[(i, j)].to_bits(), lap[(j, i)].to_bits());
            }
        }
    }

    #[test]
    fn case_json_round_trip_is_lossless(
        loads in prop::collection::vec(0u32..500, 3..8),
        beta in 1u32..40,
    ) {
        // Integer MW over a dyadic base survive the p.u. conversion exactly.
        let case = parse_case_json(&ring_case_json(&loads, beta)).unwrap();
        let round = parse_case_json(&serialize_case_json(&case)).unwrap();
        prop_assert_eq!(&round.buses, &case.buses);
        for (a, b) in round.loads.iter().zip(case.loads.iter()) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
        for (a, b) in round.lines.iter().zip(case.lines.iter()) {
            prop_assert_eq!(a.capacity.to_bits(), b.capacity.to_bits());
            prop_assert_eq!(a.susceptance.to_bits(), b.susceptance.to_bits());
        }
        for (a, b) in round.gens.iter().zip(case.gens.iter()) {
            prop_assert_eq!(a.p_max.to_bits(), b.p_max.to_bits());
            prop_assert_eq!(a.c2.to_bits(), b.c2.to_bits());
        }
    }

    #[test]
    fn consensus_update_minimizes_quadratic(
        released in prop::collection::vec(-1.0f64..1.0, 2..5),
        duals in prop::collection::vec(-50.0f64..50.0, 2..5),
        rho in 1.0f64..500.0,
    ) {
        // One shared bus covered by k zones: the closed form must be a
        // stationary point of sum_z mu_z (theta - t_z) + rho/2 (theta - t_z)^2.
        let k = released.len().min(duals.len());
        let index = ConsensusIndex {
            boundary_buses: vec![1],
            zone_positions: vec![vec![0]; k],
        };
        let rel: Vec<DVector<f64>> = released[..k].iter().map(|&t| DVector::from_vec(vec![t])).collect();
        let mu: Vec<DVector<f64>> = duals[..k].iter().map(|&m| DVector::from_vec(vec![m])).collect();
        let theta = index.consensus_update(&rel, &mu, rho)[0];
        let grad: f64 = (0..k)
            .map(|z| mu[z][0] + rho * (theta - rel[z][0]))
            .sum();
        prop_assert!(grad.abs() < 1e-9 * (1.0 + rho) * k as f64, "gradient {grad}");
    }

    #[test]
    fn laplace_sample_is_seed_deterministic(seed in any::<u64>(), scale in 0.0f64..10.0) {
        let mut a = dpopf::privacy::derive_rng(seed, "prop", 1);
        let mut b = dpopf::privacy::derive_rng(seed, "prop", 1);
        let xa = dpopf::privacy::sample_laplace(scale, 6, &mut a);
        let xb = dpopf::privacy::sample_laplace(scale, 6, &mut b);
        for (u, v) in xa.iter().zip(xb.iter()) {
            prop_assert_eq!(u.to_bits(), v.to_bits());
        }
        if scale == 0.0 {
            prop_assert!(xa.abs().max() == 0.0);
        }
    }
}
