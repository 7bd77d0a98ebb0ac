use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use uacer::game::{
    rollout, wrap_angle, AdversarialGame, AdversarialPendulum, AdversarialPointMass, ConstantActor, EnvKind,
    EnvOverrides, Environment, GameError,
};
use uacer::sac::GaussianPolicy;

fn point_mass(horizon: usize) -> AdversarialPointMass {
    let mut env = AdversarialPointMass::default();
    env.spec_mut().horizon = horizon;
    env
}

#[test]
fn idle_point_mass_return_is_horizon_times_start_reward() {
    let r0 = -2.0 * 2f64.sqrt();
    for h in [1, 7, 100] {
        let mut env = point_mass(h);
        let zero = ConstantActor(vec![0.0, 0.0]);
        let res = rollout(&mut env, &zero, None::<&ConstantActor>, true, 0).unwrap();
        assert_eq!(res.length, h);
        assert!((res.protagonist_return - h as f64 * r0).abs() < 1e-12 * h as f64);
        assert_eq!(res.adversary_return, -res.protagonist_return);
    }
}

#[test]
fn single_step_episode_returns_the_step_reward() {
    let p = ConstantActor(vec![1.0, -0.5]);
    let a = ConstantActor(vec![0.3, 0.7]);
    let mut env = point_mass(1);
    let res = rollout(&mut env, &p, Some(&a), true, 3).unwrap();

    let mut manual = point_mass(1);
    manual.reset(&mut ChaCha8Rng::seed_from_u64(3));
    let step = manual.step(&p.0, &a.0).unwrap();
    assert!(step.done);
    assert_eq!(res.protagonist_return, step.reward);
    assert_eq!(res.length, 1);
}

#[test]
fn rollout_matches_manual_stepping() {
    let p = ConstantActor(vec![0.4, 0.9]);
    let a = ConstantActor(vec![-1.0, 0.2]);
    let mut env = point_mass(25);
    let res = rollout(&mut env, &p, Some(&a), false, 1).unwrap();

    let mut manual = point_mass(25);
    manual.reset(&mut ChaCha8Rng::seed_from_u64(1));
    let mut total = 0.0;
    loop {
        let s = manual.step(&p.0, &a.0).unwrap();
        total += s.reward;
        if s.done {
            break;
        }
    }
    assert_eq!(res.protagonist_return, total);
    assert!(matches!(manual.step(&p.0, &a.0), Err(GameError::EpisodeOver)));
}

#[test]
fn stochastic_rollouts_repeat_under_a_seed() {
    let policy = GaussianPolicy::new(4, 2, &[16], &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let adversary = GaussianPolicy::new(4, 2, &[16], &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    let run = |seed| {
        let mut env = point_mass(40);
        rollout(&mut env, &policy, Some(&adversary), false, seed).unwrap()
    };
    assert_eq!(run(9), run(9));
    assert_ne!(run(9).protagonist_return, run(10).protagonist_return);
}

#[test]
fn returns_are_zero_sum() {
    let policy = GaussianPolicy::new(3, 1, &[8], &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
    let adversary = GaussianPolicy::new(3, 1, &[8], &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
    for seed in 0..5 {
        let mut env = Environment::new(
            EnvKind::Pendulum,
            &EnvOverrides {
                horizon: Some(60),
                ..Default::default()
            },
        )
        .unwrap();
        let res = rollout(&mut env, &policy, Some(&adversary), false, seed).unwrap();
        assert_eq!(res.protagonist_return, -res.adversary_return);
        assert!(res.protagonist_return <= 0.0);
    }
}

#[test]
fn pendulum_single_step_reward_follows_reset_state() {
    let zero = ConstantActor(vec![0.0]);
    for seed in 0..4 {
        let mut env = AdversarialPendulum::default();
        env.spec_mut().horizon = 1;
        let res = rollout(&mut env, &zero, None::<&ConstantActor>, true, seed).unwrap();

        let mut fresh = AdversarialPendulum::default();
        fresh.reset(&mut ChaCha8Rng::seed_from_u64(seed));
        let (theta, theta_dot) = fresh.state();
        let expected = -(wrap_angle(theta).powi(2) + 0.1 * theta_dot.powi(2));
        assert_eq!(res.protagonist_return, expected);
    }
}

#[test]
fn pendulum_return_is_bounded_by_worst_step_cost() {
    let full = ConstantActor(vec![1.0]);
    let mut env = AdversarialPendulum::default();
    env.spec_mut().horizon = 50;
    let res = rollout(&mut env, &full, Some(&ConstantActor(vec![-1.0])), true, 0).unwrap();
    let worst = std::f64::consts::PI.powi(2) + 0.1 * 64.0 + 0.001 * 4.0;
    assert!(res.protagonist_return >= -50.0 * worst);
}

#[test]
fn disabled_adversary_matches_absent_adversary() {
    let p = ConstantActor(vec![0.5, 0.5]);
    let a = ConstantActor(vec![-1.0, -1.0]);
    let mut with = point_mass(30);
    with.set_adversary_enabled(false);
    let r1 = rollout(&mut with, &p, Some(&a), true, 0).unwrap();
    let mut without = point_mass(30);
    let r2 = rollout(&mut without, &p, None::<&ConstantActor>, true, 0).unwrap();
    assert_eq!(r1, r2);
}

#[test]
fn parameter_scales_are_reported_and_validated() {
    let mut env = point_mass(5);
    env.set_params(1.5, 0.5).unwrap();
    let res = rollout(
        &mut env,
        &ConstantActor(vec![1.0, 1.0]),
        None::<&ConstantActor>,
        true,
        0,
    )
    .unwrap();
    assert_eq!((res.mass_scale, res.friction_scale), (1.5, 0.5));
    assert!(env.set_params(0.0, 1.0).is_err());
    assert!(env.set_params(1.0, -0.1).is_err());
}
