use sketch_lstd::agents::{AgentConfig, Algorithm};
use sketch_lstd::envs::{benchmark, estimate_ground_truth, GroundTruthSettings};
use sketch_lstd::features::{build_feature_map, FeatureSpec};
use sketch_lstd::harness::{
    read_results, run_seeds, select_best_params, sensitivity_table, write_results, Assignment,
    Criterion, EvalPoint, Experiment, HarnessError, Params, RunRecord, RunStatus, SweepGrid,
    TestSet,
};

struct Setup {
    bench: sketch_lstd::envs::Benchmark,
    map: sketch_lstd::features::FeatureMap,
    test: TestSet,
}

fn setup() -> Setup {
    let bench = benchmark("mountain-car", None).unwrap();
    let spec = FeatureSpec::TileCoding {
        tilings: 8,
        tiles_per_dim: 8,
        memory_size: 512,
    };
    let map = build_feature_map(&spec, bench.mdp.bounds(), 0).unwrap();
    let settings = GroundTruthSettings {
        num_states: 30,
        rollouts_per_state: 4,
        horizon_cap: 100_000,
        trajectory_factor: 20,
    };
    let gt = estimate_ground_truth(&*bench.mdp, &*bench.policy, &settings, 11).unwrap();
    let test = TestSet::from_ground_truth(&map, &gt).unwrap();
    Setup { bench, map, test }
}

fn experiment(s: &Setup, steps: usize, eval_every: usize) -> Experiment<'_> {
    Experiment {
        mdp: &*s.bench.mdp,
        policy: &*s.bench.policy,
        features: &s.map,
        test: &s.test,
        env_name: "mountain-car".into(),
        features_label: "tile-coding".into(),
        total_steps: steps,
        eval_every,
        record_timing: false,
    }
}

fn td(alpha: f64, lambda: f64) -> AgentConfig {
    AgentConfig::Td { alpha, lambda }
}

#[test]
fn one_seed_short_run_has_two_points() {
    let s = setup();
    let records = experiment(&s, 100, 50)
        .run_seeds(&td(0.01, 0.9), &[7])
        .unwrap();
    assert_eq!(records.len(), 1);
    let r = &records[0];
    assert_eq!(r.status, RunStatus::Completed);
    assert_eq!(
        r.curve.iter().map(|p| p.step).collect::<Vec<_>>(),
        vec![50, 100]
    );
    assert!(r
        .curve
        .iter()
        .all(|p| p.rmse.is_finite() && p.step_time_us.is_none()));
}

#[test]
fn ragged_horizon_still_evaluates_the_last_step() {
    let s = setup();
    assert_eq!(experiment(&s, 120, 50).eval_steps(), vec![50, 100, 120]);
}

#[test]
fn timing_is_recorded_only_on_request() {
    let s = setup();
    let mut e = experiment(&s, 60, 30);
    e.record_timing = true;
    let r = e.run_seeds(&td(0.01, 0.0), &[1]).unwrap();
    assert!(r[0]
        .curve
        .iter()
        .all(|p| p.step_time_us.is_some_and(|t| t >= 0.0)));
}

#[test]
fn runs_are_reproducible_and_independent_of_thread_count() {
    let s = setup();
    let e = experiment(&s, 300, 100);
    let configs = [
        td(0.01, 0.5),
        AgentConfig::Lstd {
            xi: 1.0,
            lambda: 0.5,
        },
        AgentConfig::AtdSvd {
            eta: 0.001,
            lambda: 0.5,
            k: 10,
        },
    ];
    let assignments: Vec<Assignment> = configs
        .iter()
        .flat_map(|c| [3u64, 4].map(|seed| (c.clone(), seed)))
        .enumerate()
        .map(|(run_id, (config, seed))| Assignment {
            run_id,
            seed,
            config,
        })
        .collect();
    let serial = e.run_batch(&assignments, Some(1)).unwrap();
    let parallel = e.run_batch(&assignments, Some(4)).unwrap();
    assert_eq!(serial, parallel);
    assert_eq!(serial, e.run_batch(&assignments, None).unwrap());
    assert_eq!(
        serial.iter().map(|r| r.run_id).collect::<Vec<_>>(),
        (0..6).collect::<Vec<_>>()
    );
}

#[test]
fn exploding_step_size_marks_the_run_diverged() {
    let s = setup();
    let r = experiment(&s, 2000, 100)
        .run_seeds(&td(50.0, 0.9), &[0])
        .unwrap();
    assert_eq!(r[0].status, RunStatus::Diverged);
    let at = r[0].diverged_at.unwrap();
    assert!(at <= 2000);
    assert!(r[0].curve.iter().all(|p| p.step < at));
    assert_eq!(r[0].final_rmse(), None);
}

#[test]
fn seeds_derive_from_the_base() {
    assert_eq!(run_seeds(10, 3), vec![10, 11, 8]);
}

fn fixture(run_id: usize, alpha: f64, lambda: f64, rmses: &[f64], diverged: bool) -> RunRecord {
    let params = Params::of(&td(alpha, lambda));
    RunRecord {
        run_id,
        seed: run_id as u64,
        algorithm: Algorithm::Td,
        params,
        env: "e".into(),
        features: "f".into(),
        curve: rmses
            .iter()
            .enumerate()
            .map(|(i, &rmse)| EvalPoint {
                step: (i + 1) * 10,
                rmse,
                step_time_us: None,
            })
            .collect(),
        status: if diverged {
            RunStatus::Diverged
        } else {
            RunStatus::Completed
        },
        diverged_at: diverged.then_some(rmses.len() * 10 + 5),
    }
}

#[test]
fn selection_prefers_the_smaller_rmse_sum() {
    let records = [
        fixture(0, 0.1, 0.0, &[5.0, 5.0], false),
        fixture(1, 0.2, 0.0, &[6.0, 6.0], false),
    ];
    let best = select_best_params(&records, Criterion::Full).unwrap();
    assert_eq!(best.len(), 1);
    assert_eq!(best[0].params.alpha, Some(0.1));
    assert_eq!(best[0].score, 10.0);
}

#[test]
fn a_single_diverged_seed_disqualifies_an_assignment() {
    let records = [
        fixture(0, 0.1, 0.0, &[1.0], false),
        fixture(1, 0.1, 0.0, &[1.0], true),
        fixture(2, 0.2, 0.0, &[9.0], false),
        fixture(3, 0.2, 0.0, &[9.0], false),
    ];
    let best = select_best_params(&records, Criterion::Full).unwrap();
    assert_eq!(best[0].params.alpha, Some(0.2));
    assert_eq!(best[0].runs, 2);
}

#[test]
fn all_diverged_is_an_error() {
    let records = [fixture(0, 0.1, 0.0, &[1.0], true)];
    assert!(matches!(
        select_best_params(&records, Criterion::Full),
        Err(HarnessError::AllDiverged)
    ));
}

#[test]
fn second_half_criterion_ignores_early_transients() {
    // Fast early, poor late versus slow early, good late.
    let records = [
        fixture(0, 0.1, 0.0, &[1.0, 1.0, 4.0, 4.0], false),
        fixture(1, 0.2, 0.0, &[9.0, 9.0, 2.0, 2.0], false),
    ];
    let full = select_best_params(&records, Criterion::Full).unwrap();
    let late = select_best_params(&records, Criterion::SecondHalf).unwrap();
    assert_eq!(full[0].params.alpha, Some(0.1));
    assert_eq!(late[0].params.alpha, Some(0.2));
}

#[test]
fn ties_keep_the_first_assignment() {
    let records = [
        fixture(0, 0.3, 0.0, &[2.0], false),
        fixture(1, 0.1, 0.0, &[2.0], false),
    ];
    assert_eq!(
        select_best_params(&records, Criterion::Full).unwrap()[0]
            .params
            .alpha,
        Some(0.3)
    );
}

#[test]
fn sensitivity_takes_the_best_lambda_per_value() {
    let one = [fixture(0, 0.1, 0.0, &[2.0, 4.0], false)];
    let rows = sensitivity_table(&one, "alpha");
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].param_value, 0.1);
    assert_eq!(rows[0].best_lambda, 0.0);
    assert_eq!(rows[0].mean_rmse, 3.0);

    // A worse λ at the same α changes nothing.
    let more = [one[0].clone(), fixture(1, 0.1, 0.9, &[5.0, 7.0], false)];
    assert_eq!(sensitivity_table(&more, "alpha"), rows);

    // A better one wins.
    let better = [one[0].clone(), fixture(1, 0.1, 0.5, &[1.0, 1.0], false)];
    let rows = sensitivity_table(&better, "alpha");
    assert_eq!(rows[0].best_lambda, 0.5);
    assert_eq!(rows[0].mean_rmse, 1.0);
}

#[test]
fn sweep_grid_covers_every_combination() {
    let grid = SweepGrid::new(10.0);
    assert_eq!(grid.alpha.len(), 13);
    assert_eq!(grid.lambda.len(), 15);
    assert_eq!(grid.xi.len(), 13);
    assert!((grid.alpha[7] - 0.01).abs() < 1e-15);
    let tds = grid.expand(&td(1.0, 0.0));
    assert_eq!(tds.len(), 13 * 15);
    let atd = grid.expand(&AgentConfig::AtdSvd {
        eta: 1.0,
        lambda: 0.0,
        k: 50,
    });
    assert_eq!(atd.len(), grid.eta.len() * 15);
    assert!(atd.iter().all(|c| c.k() == Some(50)));
}

#[test]
fn results_round_trip_through_csv() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("results.csv");

    write_results(&[], &path).unwrap();
    assert_eq!(std::fs::read_to_string(&path).unwrap().lines().count(), 1);
    assert!(read_results(&path).unwrap().is_empty());

    let two = fixture(0, 0.1, 0.5, &[3.0, 2.5], false);
    write_results(std::slice::from_ref(&two), &path).unwrap();
    assert_eq!(std::fs::read_to_string(&path).unwrap().lines().count(), 3);

    let records = vec![two, fixture(1, 0.2, 0.0, &[1.25], true)];
    write_results(&records, &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.lines().last().unwrap().contains("diverged"));
    assert_eq!(read_results(&path).unwrap(), records);
}

#[test]
fn real_runs_round_trip_through_csv() {
    let s = setup();
    let mut e = experiment(&s, 100, 25);
    e.record_timing = true;
    let records = e.run_seeds(&td(0.02, 0.7), &[1, 2]).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.csv");
    write_results(&records, &path).unwrap();
    assert_eq!(read_results(&path).unwrap(), records);
}
