//! Squashed-Gaussian density of the sequence policy and its one-step case.

use ndarray::Array2;
use srl_core::actor::{ActorObjective, SequencePolicy};
use srl_core::config::ActorQ;
use srl_core::critic::TwinCritic;
use srl_core::rng::seeded;
use statrs::distribution::{ContinuousCDF, Continuous, Normal};

const STATE: [f64; 2] = [0.4, -0.7];

fn policy() -> SequencePolicy<f64> {
    SequencePolicy::new(2, 1, 16, (-20.0, 2.0), &mut seeded(21))
}

fn row(v: &[f64]) -> Array2<f64> {
    Array2::from_shape_vec((1, v.len()), v.to_vec()).unwrap()
}

/// Pre-squash mean and standard deviation at `STATE`, read off two probes.
fn gaussian(p: &SequencePolicy<f64>) -> (f64, f64) {
    let s = row(&STATE);
    let (a0, _) = p.first_action_with_noise(&s, None, None).unwrap();
    let (a1, _) = p.first_action_with_noise(&s, None, Some(row(&[1.0]))).unwrap();
    let m = a0[[0, 0]].atanh();
    (m, a1[[0, 0]].atanh() - m)
}

#[test]
fn log_prob_is_the_change_of_variables_density() {
    let p = policy();
    let (m, sd) = gaussian(&p);
    assert!(sd > 0.0);
    let normal = Normal::new(m, sd).unwrap();
    for eps in [-2.5, -1.0, -0.3, 0.0, 0.8, 1.7] {
        let (a, lp) = p.first_action_with_noise(&row(&STATE), None, Some(row(&[eps]))).unwrap();
        let a = a[[0, 0]];
        let u = m + sd * eps;
        assert!((a - u.tanh()).abs() < 1e-12);
        let oracle = normal.ln_pdf(u) - (1.0 - a * a).ln();
        assert!((lp[[0, 0]] - oracle).abs() < 1e-9, "eps {eps}: {} vs {oracle}", lp[[0, 0]]);
    }
}

#[test]
fn density_integrates_to_one() {
    let p = policy();
    let (m, sd) = gaussian(&p);
    // Integrate in u = atanh(a): p(a) da = p(a(u)) (1 - tanh(u)^2) du.
    let n = 4000;
    let (lo, hi) = (m - 10.0 * sd, m + 10.0 * sd);
    let h = (hi - lo) / n as f64;
    let mut total = 0.0;
    for i in 0..=n {
        let u = lo + i as f64 * h;
        let (_, lp) = p.first_action_with_noise(&row(&STATE), None, Some(row(&[(u - m) / sd]))).unwrap();
        let w = if i == 0 || i == n { 0.5 } else { 1.0 };
        total += w * h * lp[[0, 0]].exp() * (1.0 - u.tanh().powi(2));
    }
    assert!((total - 1.0).abs() < 1e-6, "{total}");
}

#[test]
fn sampled_actions_pass_kolmogorov_smirnov() {
    let p = policy();
    let (m, sd) = gaussian(&p);
    let normal = Normal::new(m, sd).unwrap();
    let mut rng = seeded(8);
    let n = 10_000;
    let mut a: Vec<f64> = (0..n)
        .map(|_| p.sample_sequence(&STATE, 1, false, None, &mut rng).unwrap().actions[0][0])
        .collect();
    a.sort_by(f64::total_cmp);
    let d = a
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = normal.cdf(x.atanh());
            (f - i as f64 / n as f64).max((i + 1) as f64 / n as f64 - f)
        })
        .fold(0.0, f64::max);
    // 1% critical value of the one-sample statistic.
    assert!(d < 1.63 / (n as f64).sqrt(), "D = {d}");
}

#[test]
fn one_step_actor_loss_is_the_sac_objective() {
    let p = SequencePolicy::<f64>::new(3, 2, 8, (-20.0, 2.0), &mut seeded(1));
    let critic = TwinCritic::<f64>::new(3, 2, 8, 2, &mut seeded(2));
    let states = Array2::from_shape_fn((5, 3), |(i, j)| ((i * 3 + j) as f64 * 0.37).sin());
    let noise = p.noise(5, 1, &mut seeded(3));
    let alpha = 0.3;
    let objective = ActorObjective {
        critic: &critic,
        critic_params: &critic.params,
        transition: None,
        transition_params: None,
        actor_q: ActorQ::Min,
        alpha,
    };
    let step = p.actor_loss_and_grads(&p.params, &objective, &states, None, &noise).unwrap();

    let (a, lp) = p.first_action_with_noise(&states, None, Some(noise[0].clone())).unwrap();
    let (q1, q2) = critic.q_values_with(&critic.params, &states, &a).unwrap();
    let oracle = (0..5).map(|i| alpha * lp[[i, 0]] - q1[[i, 0]].min(q2[[i, 0]])).sum::<f64>() / 5.0;
    assert!((step.loss - oracle).abs() < 1e-12, "{} vs {oracle}", step.loss);
    assert_eq!(step.mean_log_probs.len(), 1);
}
