mod common;

use damsim_core::lp::{self, LinearProgram, LpStatus, Relation, INFINITE_BOUND};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn random_lps_match_vertex_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut optimal, mut infeasible) = (0, 0);
    for k in 0..500 {
        let program = common::random_lp(&mut rng);
        let sol = lp::solve(&program).unwrap();
        match common::vertex_enumeration(&program) {
            Some((best, _)) => {
                assert_eq!(sol.status, LpStatus::Optimal, "lp {k}: {program:?}");
                assert!((sol.objective_value - best).abs() <= 1e-7, "lp {k}: {} vs {best}", sol.objective_value);
                let kkt = lp::verify_kkt(&program, &sol);
                assert!(kkt.pass, "lp {k}: {kkt:?}");
                optimal += 1;
            }
            None => {
                assert_eq!(sol.status, LpStatus::Infeasible, "lp {k}: {program:?}");
                infeasible += 1;
            }
        }
    }
    // The generator should exercise both outcomes.
    assert!(optimal > 200 && infeasible > 10, "{optimal} optimal, {infeasible} infeasible");
}

#[test]
fn transportation_problem_duals() {
    // Two plants (supply 40, 20), two markets (demand 25, 25), minimize cost.
    // Costs: p1→m1 4, p1→m2 6, p2→m1 5, p2→m2 3.
    // Optimum ships p1→m1 25, p1→m2 5, p2→m2 20: cost 100 + 30 + 60 = 190,
    // with 10 MW of p1 spare, so the vertex is nondegenerate.
    let mut program = LinearProgram::new(vec![-4.0, -6.0, -5.0, -3.0], vec![(0.0, INFINITE_BOUND); 4]);
    program.add_row(vec![1.0, 1.0, 0.0, 0.0], Relation::Le, 40.0);
    program.add_row(vec![0.0, 0.0, 1.0, 1.0], Relation::Le, 20.0);
    program.add_row(vec![1.0, 0.0, 1.0, 0.0], Relation::Eq, 25.0);
    program.add_row(vec![0.0, 1.0, 0.0, 1.0], Relation::Eq, 25.0);
    let sol = lp::solve(&program).unwrap();
    assert!((sol.objective_value + 190.0).abs() < 1e-9);
    // Spare p1 capacity serves one more MW at m1 for 4 and at m2 for 6.
    assert!((sol.row_duals[3] + 6.0).abs() < 1e-9, "{:?}", sol.row_duals);
    assert!((sol.row_duals[2] + 4.0).abs() < 1e-9, "{:?}", sol.row_duals);
    // Extra p2 capacity displaces p1→m2 (6) with p2→m2 (3).
    assert!((sol.row_duals[1] - 3.0).abs() < 1e-9, "{:?}", sol.row_duals);
    assert!(sol.row_duals[0].abs() < 1e-9);
    assert!(lp::verify_kkt(&program, &sol).pass);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn optimum_is_feasible_and_dominates_vertices(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let program = common::random_lp(&mut rng);
        let sol = lp::solve(&program).unwrap();
        if sol.status == LpStatus::Optimal {
            prop_assert!(lp::is_feasible(&program, &sol.primal).unwrap().feasible);
            let kkt = lp::verify_kkt(&program, &sol);
            prop_assert!(kkt.pass, "{:?}", kkt);
            if let Some((best, x)) = common::vertex_enumeration(&program) {
                prop_assert!(sol.objective_value >= best - 1e-7);
                prop_assert!(lp::is_feasible(&program, &x).unwrap().feasible);
            }
        }
    }

}
