use srl_core::agent::AgentBundle;
use srl_core::config::TrainConfig;
use srl_core::envs::{make_env, Pendulum};
use srl_core::eval::{
    asl_sweep, evaluate_fixed, online_planning_eval, periodic_eval, random_policy_return, stochastic_timestep_eval,
    EvalMode, RandomController,
};
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn small(config: TrainConfig) -> TrainConfig {
    TrainConfig {
        hidden_size: 16,
        ..config
    }
}

#[test]
fn interval_histogram_is_uniform() {
    let mut env = Pendulum::new();
    let ctrl = RandomController { action_dim: 1 };
    let (lo, hi) = (1, 8);
    let out = stochastic_timestep_eval(&ctrl, &mut env, 240, (lo, hi), EvalMode::Sequence, 5).unwrap();
    let n = out.intervals.len();
    assert!(n >= 10_000, "{n} decisions");
    let bins = hi - lo + 1;
    let mut counts = vec![0usize; bins];
    for k in &out.intervals {
        counts[k - lo] += 1;
    }
    let expected = n as f64 / bins as f64;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    let bound = ChiSquared::new((bins - 1) as f64).unwrap().inverse_cdf(0.99);
    assert!(chi2 < bound, "chi2 {chi2:.2} >= {bound:.2}, counts {counts:?}");
}

#[test]
fn random_policy_return_falls_in_monte_carlo_band() {
    let mut env = Pendulum::new();
    let oracle = random_policy_return(&mut env, 1000, 1).unwrap();
    let sample = random_policy_return(&mut env, 20, 77).unwrap();
    let sd = oracle.std_dev();
    // Difference of two independent means; 4 sigma.
    let band = 4.0 * (sd * sd / 20.0 + oracle.std_error.powi(2)).sqrt();
    assert!(
        (sample.mean - oracle.mean).abs() < band,
        "{} vs {} +- {band}",
        sample.mean,
        oracle.mean
    );
    assert!(oracle.mean < -800.0 && oracle.mean > -1600.0, "{}", oracle.mean);
}

#[test]
fn unit_grid_sweep_of_sac_is_periodic_eval() {
    let mut env = make_env("pendulum").unwrap();
    let agent = AgentBundle::<f64>::new(&small(TrainConfig::sac()), env.spec()).unwrap();
    let curve = asl_sweep(&agent, env.as_mut(), &[1], 3, EvalMode::Repeat, 9).unwrap();
    let direct = periodic_eval(&agent, env.as_mut(), 1, 3, 9).unwrap();
    assert_eq!(curve.mean_returns, vec![direct.mean]);
    assert_eq!(curve.std_errors, vec![direct.std_error]);
}

#[test]
fn sequence_sweep_at_j_is_periodic_eval() {
    let mut env = make_env("pendulum").unwrap();
    let config = small(TrainConfig {
        j: 4,
        ..TrainConfig::default()
    });
    let agent = AgentBundle::<f64>::new(&config, env.spec()).unwrap();
    let curve = asl_sweep(&agent, env.as_mut(), &[1, 2, 4], 3, EvalMode::Sequence, 4).unwrap();
    let direct = periodic_eval(&agent, env.as_mut(), 4, 3, 4).unwrap();
    assert_eq!(curve.mean_returns[2], direct.mean);
}

#[test]
fn planning_at_interval_one_makes_no_model_calls() {
    let mut env = make_env("linear").unwrap();
    let config = small(TrainConfig {
        j: 4,
        env: "linear".into(),
        ..TrainConfig::default()
    });
    let agent = AgentBundle::<f64>::new(&config, env.spec()).unwrap();
    let model = agent.model.as_ref().unwrap();
    let plan = online_planning_eval(&agent, model, env.as_mut(), &[1], 4, 12).unwrap();
    assert_eq!(plan.model_calls, vec![0]);
    let direct = evaluate_fixed(&agent, env.as_mut(), 1, EvalMode::Sequence, 4, 12).unwrap();
    assert_eq!(plan.curve.mean_returns[0], direct.mean);
    assert_eq!(plan.decisions[0], 4 * env.spec().max_episode_steps as u64);
}
