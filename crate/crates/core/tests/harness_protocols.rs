use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use uacer::config::RunConfig;
use uacer::game::{rollout, AdversarialGame, EnvKind};
use uacer::harness::{
    self, derive_seed, ensemble_variance_ratio, final_adversarial_eval, final_adversarial_eval_from_checkpoint,
    robustness_eval, stability_metric, validate_theorem1, HarnessError, OracleSpec,
};
use uacer::sac::{Role, SacAgent};
use uacer::tdu::{AggregationMode, TduSchedule};
use uacer::Exec;

fn tiny() -> RunConfig {
    RunConfig {
        horizon: 12,
        iterations: 4,
        episodes_per_iteration: 2,
        eval_interval: 2,
        eval_episodes: 2,
        final_adversary_iterations: 2,
        hidden: vec![8, 8],
        batch_size: 8,
        initial_replay: 16,
        warmup: 24,
        mass_grid: vec![0.5, 1.0],
        friction_grid: vec![1.0, 1.5],
        parallel: false,
        ..RunConfig::default()
    }
}

fn fresh_protagonist(cfg: &RunConfig, seed: u64) -> SacAgent {
    let env = cfg.environment().unwrap();
    let spec = env.spec();
    let ac = cfg.agent_config(spec.obs_dim, spec.protagonist_action_dim).unwrap();
    SacAgent::new(ac, Role::Protagonist, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

#[test]
fn zero_budget_worst_case_is_a_fresh_adversary() {
    let cfg = RunConfig {
        final_adversary_iterations: 0,
        ..tiny()
    };
    let p = fresh_protagonist(&cfg, 1);
    let report = final_adversarial_eval(&p, &cfg, 7).unwrap();
    assert_eq!(report.adversary_iterations, 0);

    let env = cfg.environment().unwrap();
    let spec = env.spec().clone();
    let mut ac = cfg.agent_config(spec.obs_dim, spec.adversary_action_dim).unwrap();
    ac.schedule.total_iterations = 1;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(7, u64::MAX));
    let adversary = SacAgent::new(ac, Role::Adversary, &mut rng).unwrap();
    let expected: Vec<f64> = (0..cfg.eval_episodes)
        .map(|i| {
            let mut e = env.clone();
            rollout(&mut e, &p, Some(&adversary), true, derive_seed(7, i as u64))
                .unwrap()
                .protagonist_return
        })
        .collect();
    let got: Vec<f64> = report.episodes.iter().map(|e| e.protagonist_return).collect();
    assert_eq!(got, expected);
}

#[test]
fn worst_case_eval_is_repeatable_and_zero_sum() {
    let cfg = tiny();
    let p = fresh_protagonist(&cfg, 2);
    let a = final_adversarial_eval(&p, &cfg, 3).unwrap();
    let b = final_adversarial_eval(&p, &cfg, 3).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.mean_return, -a.adversary_mean_return);
    for e in &a.episodes {
        assert_eq!(e.protagonist_return, -e.adversary_return);
        assert_eq!(e.length, cfg.horizon);
    }
}

#[test]
fn worst_case_rejects_mismatched_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("pendulum.json");
    let pend_cfg = RunConfig {
        env: EnvKind::Pendulum,
        ..tiny()
    };
    fresh_protagonist(&pend_cfg, 0).save(&path).unwrap();
    let err = final_adversarial_eval_from_checkpoint(&path, &tiny(), 0).unwrap_err();
    assert!(matches!(err, HarnessError::Incompatible(_)), "{err}");

    let cfg = tiny();
    let spec = cfg.environment().unwrap().spec().clone();
    let ac = cfg.agent_config(spec.obs_dim, spec.adversary_action_dim).unwrap();
    let adversary = SacAgent::new(ac, Role::Adversary, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let err = final_adversarial_eval(&adversary, &cfg, 0).unwrap_err();
    assert!(matches!(err, HarnessError::Incompatible(_)));
}

#[test]
fn robustness_grid_means_per_cell_rollouts() {
    let cfg = tiny();
    let p = fresh_protagonist(&cfg, 4);
    let env = cfg.environment().unwrap();
    let cells = env.spec().sweep_cells();
    let report = robustness_eval(p.policy(), &env, &cells, 3, 11, Exec::Sequential).unwrap();
    assert_eq!(report.cells.len(), 4);
    let mean_of_cells = report.cells.iter().map(|c| c.mean_return).sum::<f64>() / 4.0;
    assert!((report.score - mean_of_cells).abs() < 1e-12);
    let parallel = robustness_eval(p.policy(), &env, &cells, 3, 11, Exec::Parallel).unwrap();
    assert_eq!(report, parallel);
}

#[test]
fn training_keeps_contracts_and_records_every_iteration() {
    let cfg = tiny();
    let out = harness::train(&cfg, 5, None).unwrap();
    assert_eq!(out.records.len(), cfg.iterations as usize);
    let evaluated: Vec<u32> = out
        .records
        .iter()
        .filter(|r| r.robustness.is_some())
        .map(|r| r.iteration)
        .collect();
    assert_eq!(evaluated, vec![2, 4]);
    let iters = cfg.iterations as usize;
    assert_eq!(out.checks.zero_sum_episodes, 2 * iters * cfg.episodes_per_iteration);
    assert_eq!(out.checks.frozen_phases, 2 * iters);
    let series = out.robustness_series();
    assert_eq!(series.len(), 2);
    assert!(stability_metric(&series).is_ok() || series[0] == 0.0);
}

#[test]
fn theorem_oracle_matches_closed_forms() {
    let spec = OracleSpec {
        seed: 3,
        ..OracleSpec::new(1.0, 5, TduSchedule::exponential(200), 20_000)
    };
    let report = validate_theorem1(&spec, Exec::Parallel).unwrap();
    assert!((report.beta_final - 0.192_319_008_112_684_35).abs() < 1e-15);
    assert!(report.bound_holds);
    assert_eq!(report.per_trial_violations, 0);
    assert!(report.signed_error_matches(), "{:?}", report.signed_error);
    // E|mu - Q*| for the mean of K standard normals
    assert!(report
        .mean_abs_error
        .within((2.0 / (std::f64::consts::PI * 5.0)).sqrt(), 3.0));
}

#[test]
fn vanishing_weight_limit_is_the_folded_normal_mean() {
    let schedule = TduSchedule::new(1.0, 0.0, 3.0, 200, AggregationMode::TduExponential).unwrap();
    let spec = OracleSpec {
        seed: 9,
        ..OracleSpec::new(1.0, 5, schedule, 20_000)
    };
    let report = validate_theorem1(&spec, Exec::Parallel).unwrap();
    assert_eq!(report.beta_limit, 0.0);
    assert!((report.folded_normal - 0.356_824_823_230_554_3).abs() < 1e-12);
    assert!(report.limit_matches_folded_normal(), "{:?}", report.limit_abs_error);
}

#[test]
fn theorem_oracle_is_exact_without_noise() {
    let spec = OracleSpec::new(0.0, 5, TduSchedule::exponential(200), 1000);
    let report = validate_theorem1(&spec, Exec::Sequential).unwrap();
    assert_eq!(report.abs_error.mean, 0.0);
    assert_eq!(report.signed_error.mean, 0.0);
    assert_eq!(report.limit_abs_error.mean, 0.0);
}

#[test]
fn theorem_oracle_refuses_small_or_wrong_setups() {
    let few = OracleSpec::new(1.0, 5, TduSchedule::exponential(200), 999);
    assert!(matches!(
        validate_theorem1(&few, Exec::Sequential),
        Err(HarnessError::TooFewTrials { got: 999, min: 1000 })
    ));
    let min_mode = OracleSpec::new(
        1.0,
        5,
        TduSchedule::exponential(200).with_mode(AggregationMode::MinOfAll),
        1000,
    );
    assert!(validate_theorem1(&min_mode, Exec::Sequential).is_err());
}

#[test]
fn ensemble_mean_variance_shrinks_as_one_over_k() {
    for k in [2, 5, 10] {
        let spec = OracleSpec {
            seed: k as u64,
            ..OracleSpec::new(2.0, k, TduSchedule::exponential(200), 20_000)
        };
        let ratio = ensemble_variance_ratio(&spec, Exec::Sequential).unwrap();
        let expected = 1.0 / k as f64;
        // sampling error of a variance ratio is about sqrt(2 / n) relative
        assert!((ratio - expected).abs() < 0.05 * expected, "k = {k}: {ratio}");
    }
}
