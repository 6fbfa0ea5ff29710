use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use projcons::experiment::recipe;
use projcons::graphs::{Digraph, GraphSchedule};
use projcons::linalg;
use projcons::sync_engine::{run_sync_from, AgentEquation, Problem, RunOptions};
use projcons::tracking::{
    delta_readout, feasibility_residual, run_tracking, tracking_error, tracking_step,
    tracking_step_with, true_solution, SinusoidalMatrix, SinusoidalVector, TimeVaryingProblem,
    DEFAULT_DET_FLOOR,
};

fn example() -> (TimeVaryingProblem, Vec<DVector<f64>>) {
    recipe("tracking-paper-example")
        .unwrap()
        .tracking
        .unwrap()
        .build()
        .unwrap()
}

fn complete(m: usize) -> GraphSchedule {
    GraphSchedule::fixed(Digraph::complete(m).unwrap()).unwrap()
}

#[test]
fn one_step_lands_on_the_new_rows() {
    let (tvp, x1) = example();
    assert!(tracking_error(&x1, &tvp, 1).unwrap() > 0.0);
    let g = Digraph::complete(3).unwrap();
    let x2 = tracking_step(&x1, &g, &tvp, 1).unwrap();
    assert!(feasibility_residual(&x2, &tvp, 2).unwrap() <= 1e-8);
}

#[test]
fn right_hand_side_from_a_fixed_point() {
    let (tvp, _) = example();
    let c = DVector::from_row_slice(&[1.0, -2.0, 0.5]);
    for t in [1, 7, 40] {
        let a = tvp.a_at(t);
        let fixed = TimeVaryingProblem::new(
            SinusoidalMatrix::constant(a.clone()),
            SinusoidalVector::constant(&a * &c),
            vec![1, 1, 1],
            DEFAULT_DET_FLOOR,
        )
        .unwrap();
        assert!((true_solution(&fixed, 1).unwrap() - &c).norm() < 1e-12);
    }
}

#[test]
fn static_data_matches_sync_engine() {
    let (tvp, x1) = example();
    let a = tvp.a_at(1);
    let b = tvp.b_at(1);
    let frozen = TimeVaryingProblem::new(
        SinusoidalMatrix::constant(a.clone()),
        SinusoidalVector::constant(b.clone()),
        vec![1, 1, 1],
        DEFAULT_DET_FLOOR,
    )
    .unwrap();
    let sched = complete(3);
    let tr = run_tracking(&frozen, &sched, x1.clone(), 200).unwrap();

    let eqs: Vec<_> = (0..3)
        .map(|i| AgentEquation::new(a.rows(i, 1).into_owned(), b.rows(i, 1).into_owned()))
        .collect();
    let p = Problem::new(eqs).unwrap();
    let opts = RunOptions { max_steps: 199, tol: 0.0, seed: 0 };
    let sy = run_sync_from(&p, &sched, x1, &opts).unwrap();
    assert_eq!(sy.steps.len(), tr.steps.len());
    for (u, v) in tr.steps.iter().zip(&sy.steps) {
        for (x, y) in u.states.iter().zip(&v.states) {
            assert!((x - y).norm() <= 1e-12 * (1.0 + y.norm()));
        }
    }
    let long = run_tracking(&frozen, &sched, example().1, 5000).unwrap();
    let e = long.last().unwrap().error_norm();
    assert!(e < 1e-8, "{e} after 200: {}", tr.last().unwrap().error_norm());
}

#[test]
fn whole_run_stays_feasible_and_bounded() {
    let (tvp, x1) = example();
    let tr = run_tracking(&tvp, &complete(3), x1, 300).unwrap();
    for rec in &tr.steps[1..] {
        assert!(feasibility_residual(&rec.states, &tvp, rec.t).unwrap() <= 1e-8);
    }
    assert!(tr.converged);
}

#[test]
fn smaller_wobble_smaller_band() {
    let (tvp, x1) = example();
    let band = |p: &TimeVaryingProblem| {
        let tr = run_tracking(p, &complete(3), x1.clone(), 300).unwrap();
        tr.steps[149..].iter().map(|s| s.error_norm()).fold(0.0, f64::max)
    };
    let full = band(&tvp);
    let small = band(&tvp.scaled(0.1));
    assert!(small < full, "{small} vs {full}");
}

#[test]
fn delta_matches_difference_of_solutions() {
    let (tvp, _) = example();
    for t in 1..50 {
        let d = delta_readout(&tvp, t).unwrap();
        let diff = true_solution(&tvp, t).unwrap() - true_solution(&tvp, t + 1).unwrap();
        assert!((d - diff).norm() < 1e-10, "t={t}");
    }
}

#[test]
fn one_agent_square_block_jumps_to_the_solution() {
    let (tvp, _) = example();
    let solo = TimeVaryingProblem::new(
        SinusoidalMatrix { base: tvp.a_at(1), perturbation: DMatrix::identity(3, 3) * 0.3, frequency: 0.2 },
        SinusoidalVector::constant(tvp.b_at(1)),
        vec![3],
        DEFAULT_DET_FLOOR,
    )
    .unwrap();
    let g = Digraph::self_loops(1).unwrap();
    let x = tracking_step(&[DVector::zeros(3)], &g, &solo, 4).unwrap();
    assert!((&x[0] - true_solution(&solo, 5).unwrap()).norm() < 1e-10);
}

#[test]
fn rows_below_the_floor_are_rejected() {
    let (tvp, x1) = example();
    let tiny = TimeVaryingProblem::new(
        SinusoidalMatrix::constant(tvp.a_at(1) * 1e-4),
        SinusoidalVector::constant(tvp.b_at(1)),
        vec![1, 1, 1],
        DEFAULT_DET_FLOOR,
    )
    .unwrap();
    assert!(tracking_step(&x1, &Digraph::complete(3).unwrap(), &tiny, 1).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn choice_of_particular_solution_is_irrelevant(t in 1u64..200, v in proptest::collection::vec(-10.0f64..10.0, 9)) {
        let (tvp, x1) = example();
        let g = Digraph::complete(3).unwrap();
        let base = tracking_step(&x1, &g, &tvp, t).unwrap();
        let a = tvp.a_at(t + 1);
        let b = tvp.b_at(t + 1);
        let z: Vec<_> = (0..3).map(|i| {
            let ai = a.rows(i, 1).into_owned();
            let zi = linalg::particular_solution(&ai, &b.rows(i, 1).into_owned()).unwrap();
            let k = linalg::kernel_basis(&ai);
            zi + &k * DVector::from_row_slice(&v[3 * i..3 * i + k.ncols()])
        }).collect();
        let other = tracking_step_with(&x1, &g, &tvp, t, &z).unwrap();
        for (x, y) in base.iter().zip(&other) {
            prop_assert!((x - y).norm() <= 1e-10 * (1.0 + x.norm()));
        }
    }
}
