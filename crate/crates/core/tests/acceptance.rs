//! Acceptance suite. Each test prints one `PASS`/`FAIL` line.
//!
//! The frequency-robustness and correlation checks share one pool of
//! trained pendulum agents (desk scale: hidden 64, batch 128, 50k steps).

use std::io::Write;
use std::sync::OnceLock;
use std::time::Instant;

use ndarray::Array2;
use rand::Rng;

use srl_core::actor::{ActorObjective, SequencePolicy};
use srl_core::agent::AgentBundle;
use srl_core::config::{ActorQ, TrainConfig};
use srl_core::critic::{FirstActionSampler, TwinCritic};
use srl_core::dynamics::DynamicsModel;
use srl_core::envs::{make_env, Env, LinearSystem};
use srl_core::eval::{
    asl_sweep, evaluate_fixed, fas, online_planning_eval, pearson, random_policy_return, stochastic_timestep_eval,
    EvalMode, GroundTruthModel, ScoreCurve, DEFAULT_ASL_GRID,
};
use srl_core::latent::{temporal_consistency_loss, Encoder};
use srl_core::nets::{grad_check, Adam, Graph, Var};
use srl_core::rng::{seeded, SrlRng};
use srl_core::trainer::{sac_train, srl_train, Trainer};
use srl_core::transition::{Batch, Transition, WindowBatch};
use srl_core::Result;

/// Written straight to stderr so the line shows without `--nocapture`.
fn verdict(id: u32, name: &str, pass: bool, detail: &str) {
    let line = format!("{} [{id}] {name}: {detail}\n", if pass { "PASS" } else { "FAIL" });
    let _ = std::io::stderr().write_all(line.as_bytes());
}

// ---------------------------------------------------------------- 1

fn random_matrix(rng: &mut SrlRng, r: usize, c: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((r, c), || rng.random_range(-1.0..1.0))
}

#[test]
fn gradient_oracles() {
    let t0 = Instant::now();
    let (ds, da, hidden, j, h, n) = (3, 2, 8, 2, 2, 6);
    let mut rng = seeded(100);
    let tol = 1e-2;
    let eps = 1e-6;
    let mut results = Vec::new();

    // model MSE
    let model = DynamicsModel::<f64>::new(ds, da, hidden, 2, false, true, &mut seeded(1));
    let mut model = model;
    for _ in 0..5 {
        let s: Vec<f64> = (0..ds).map(|_| rng.random_range(-2.0..2.0)).collect();
        let s2: Vec<f64> = (0..ds).map(|_| rng.random_range(-2.0..2.0)).collect();
        model.observe(&s, &s2);
    }
    let batch = Batch {
        states: random_matrix(&mut rng, n, ds),
        actions: random_matrix(&mut rng, n, da),
        rewards: random_matrix(&mut rng, n, 1),
        next_states: random_matrix(&mut rng, n, ds),
        dones: Array2::zeros((n, 1)),
    };
    let r = grad_check(|p| model.loss_and_grads(p, &batch), &model.params, eps, None).unwrap();
    results.push(("model loss", r.max_relative_error));

    // twin critic loss against a fixed soft target
    let critic = TwinCritic::<f64>::new(ds, da, hidden, 2, &mut seeded(2));
    let q_hat = random_matrix(&mut rng, n, 1);
    let r = grad_check(
        |p| critic.loss_and_grads(p, &batch.states, &batch.actions, &q_hat),
        &critic.params,
        eps,
        None,
    )
    .unwrap();
    results.push(("critic loss", r.max_relative_error));

    // sequence actor loss through a frozen model rollout
    let policy = SequencePolicy::<f64>::new(ds, da, hidden, (-20.0, 2.0), &mut seeded(3));
    let noise = policy.noise(n, j, &mut seeded(4));
    let step = |g: &mut Graph<f64>, v: &[Var], s: Var, a: Var| model.forward(g, v, s, a);
    let objective = ActorObjective {
        critic: &critic,
        critic_params: &critic.params,
        transition: Some(&step),
        transition_params: Some(&model.target),
        actor_q: ActorQ::Min,
        alpha: 0.2,
    };
    let r = grad_check(
        |p| {
            policy
                .actor_loss_and_grads(p, &objective, &batch.states, None, &noise)
                .map(|s| (s.loss, s.grads))
        },
        &policy.params,
        eps,
        None,
    )
    .unwrap();
    results.push(("actor loss", r.max_relative_error));

    // temporal consistency loss, encoder and latent model separately
    let de = 4;
    let encoder = Encoder::<f64>::new(ds, de, hidden, &mut seeded(5));
    let latent_model = DynamicsModel::<f64>::new(de, da, hidden, 2, false, false, &mut seeded(6));
    let windows = WindowBatch {
        observations: (0..=h).map(|_| random_matrix(&mut rng, n, ds)).collect(),
        actions: (0..h).map(|_| random_matrix(&mut rng, n, da)).collect(),
    };
    let r = grad_check(
        |p| {
            temporal_consistency_loss(&encoder, p, &latent_model, &latent_model.params, &windows, 0.99)
                .map(|l| (l.loss, l.encoder_grads))
        },
        &encoder.params,
        eps,
        None,
    )
    .unwrap();
    results.push(("consistency loss (encoder)", r.max_relative_error));
    let r = grad_check(
        |p| {
            temporal_consistency_loss(&encoder, &encoder.params, &latent_model, p, &windows, 0.99)
                .map(|l| (l.loss, l.model_grads))
        },
        &latent_model.params,
        eps,
        None,
    )
    .unwrap();
    results.push(("consistency loss (model)", r.max_relative_error));

    let secs = t0.elapsed().as_secs_f64();
    let worst = results.iter().map(|r| r.1).fold(0.0, f64::max);
    let pass = worst <= tol && secs < 60.0;
    let detail = results
        .iter()
        .map(|(k, e)| format!("{k} {e:.1e}"))
        .collect::<Vec<_>>()
        .join(", ");
    verdict(1, "gradient oracles", pass, &format!("{detail}; {secs:.1}s (tol {tol:.0e})"));
    assert!(pass);
}

// ---------------------------------------------------------------- 2

const CHAIN: usize = 5;
const P_RIGHT: [f64; CHAIN] = [0.6, 0.7, 0.5, 0.8, 0.3];
const CHAIN_GAMMA: f64 = 0.9;
const CHAIN_ALPHA: f64 = 0.1;

fn chain_step(s: usize, right: bool) -> (usize, f64) {
    let s2 = if right { (s + 1).min(CHAIN - 1) } else { s.saturating_sub(1) };
    let r = if s2 == CHAIN - 1 { 1.0 } else { -0.1 };
    (s2, r)
}

fn one_hot(s: usize) -> Vec<f64> {
    (0..CHAIN).map(|i| if i == s { 1.0 } else { 0.0 }).collect()
}

/// Moves right (`a = +1`) with a fixed per-state probability.
struct ChainPolicy;

impl FirstActionSampler<f64> for ChainPolicy {
    fn sample_first(
        &self,
        states: &Array2<f64>,
        _: Option<&Array2<f64>>,
        rng: &mut SrlRng,
    ) -> Result<(Array2<f64>, Array2<f64>)> {
        let n = states.nrows();
        let mut a = Array2::zeros((n, 1));
        let mut lp = Array2::zeros((n, 1));
        for i in 0..n {
            let s = states.row(i).iter().position(|&v| v == 1.0).unwrap();
            let right = rng.random::<f64>() < P_RIGHT[s];
            a[[i, 0]] = if right { 1.0 } else { -1.0 };
            lp[[i, 0]] = if right { P_RIGHT[s].ln() } else { (1.0 - P_RIGHT[s]).ln() };
        }
        Ok((a, lp))
    }
}

/// Soft policy evaluation by fixed-point iteration.
fn chain_oracle() -> [[f64; 2]; CHAIN] {
    let mut q = [[0.0; 2]; CHAIN];
    for _ in 0..10_000 {
        let v: Vec<f64> = (0..CHAIN)
            .map(|s| {
                let p = P_RIGHT[s];
                p * (q[s][1] - CHAIN_ALPHA * p.ln()) + (1.0 - p) * (q[s][0] - CHAIN_ALPHA * (1.0 - p).ln())
            })
            .collect();
        let mut next = [[0.0; 2]; CHAIN];
        for (s, row) in next.iter_mut().enumerate() {
            for (k, slot) in row.iter_mut().enumerate() {
                let (s2, r) = chain_step(s, k == 1);
                *slot = r + CHAIN_GAMMA * v[s2];
            }
        }
        q = next;
    }
    q
}

#[test]
fn critic_matches_soft_policy_evaluation() {
    let t0 = Instant::now();
    let oracle = chain_oracle();
    let copies = 64;
    let mut ts = Vec::new();
    for _ in 0..copies {
        for s in 0..CHAIN {
            for right in [false, true] {
                let (s2, r) = chain_step(s, right);
                ts.push(Transition::new(one_hot(s), vec![if right { 1.0 } else { -1.0 }], r, one_hot(s2), false));
            }
        }
    }
    let batch = Batch::from_transitions(&ts);
    let mut critic = TwinCritic::<f64>::new(CHAIN, 1, 64, 2, &mut seeded(7));
    let mut opt = Adam::new(1e-3);
    let mut rng = seeded(8);
    let max_updates = 20_000;
    let mut worst = f64::INFINITY;
    let mut used = 0;
    for u in 1..=max_updates {
        opt.lr = if u > 8_000 { 1e-4 } else { 1e-3 };
        critic.update(&mut opt, &batch, &ChainPolicy, CHAIN_ALPHA, CHAIN_GAMMA, &mut rng).unwrap();
        critic.update_target(0.01).unwrap();
        if u % 1000 == 0 {
            worst = 0.0;
            for (s, row) in oracle.iter().enumerate() {
                for (k, &target) in row.iter().enumerate() {
                    let a = [if k == 1 { 1.0 } else { -1.0 }];
                    let sa = Array2::from_shape_vec((1, CHAIN), one_hot(s)).unwrap();
                    let aa = Array2::from_shape_vec((1, 1), a.to_vec()).unwrap();
                    let (q1, q2) = critic.q_values_with(&critic.params, &sa, &aa).unwrap();
                    worst = worst.max((q1[[0, 0]] - target).abs()).max((q2[[0, 0]] - target).abs());
                }
            }
            used = u;
            if worst < 0.05 && u >= 10_000 {
                break;
            }
        }
    }
    let pass = worst < 0.05;
    verdict(
        2,
        "critic vs soft policy evaluation",
        pass,
        &format!("max |Q - Q*| = {worst:.4} after {used} updates (tol 0.05); {:.1}s", t0.elapsed().as_secs_f64()),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- 3

fn collect(env: &mut LinearSystem, episodes: usize, seed: u64) -> Vec<Vec<Transition<f64>>> {
    let mut rng = seeded(seed);
    (0..episodes)
        .map(|_| {
            let mut s = env.reset(rng.random()).unwrap();
            let mut ep = Vec::new();
            loop {
                let a: Vec<f64> = (0..2).map(|_| rng.random_range(-1.0..=1.0)).collect();
                let step = env.step(&a).unwrap();
                let done = step.done();
                ep.push(Transition::new(s, a, step.reward, step.observation.clone(), step.terminated));
                s = step.observation;
                if done {
                    break ep;
                }
            }
        })
        .collect()
}

fn rms(xs: &[f64]) -> f64 {
    (xs.iter().map(|x| x * x).sum::<f64>() / xs.len() as f64).sqrt()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

#[test]
fn model_learns_linear_dynamics() {
    let t0 = Instant::now();
    let mut env = LinearSystem::default();
    let truth = env.closed_form().unwrap();
    let train: Vec<Transition<f64>> = collect(&mut env, 50, 1).into_iter().flatten().collect();
    assert_eq!(train.len(), 5000);
    let held_out = collect(&mut env, 10, 2);

    let mut model = DynamicsModel::<f64>::new(3, 2, 64, 2, false, true, &mut seeded(3));
    for t in &train {
        model.observe(&t.state, &t.next_state);
    }
    let mut opt = Adam::new(1e-3);
    let mut rng = seeded(4);
    for i in 0..6000 {
        if i == 4000 {
            opt.lr = 3e-4;
        }
        let idx: Vec<Transition<f64>> = (0..256).map(|_| train[rng.random_range(0..train.len())].clone()).collect();
        model.update(&mut opt, &Batch::from_transitions(&idx)).unwrap();
    }
    model.target = model.params.clone();

    let flat: Vec<Transition<f64>> = held_out.iter().flatten().cloned().collect();
    let b = Batch::from_transitions(&flat);
    let pred = model.predict_with(&model.params, &b.states, &b.actions).unwrap();
    let mse: f64 = (&pred - &b.next_states).mapv(|v| v * v).sum() / flat.len() as f64;
    let delta = &b.next_states - &b.states;
    let var: f64 = delta
        .columns()
        .into_iter()
        .map(|c| {
            let m = c.mean().unwrap();
            c.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / c.len() as f64
        })
        .sum();
    let ratio = mse / var;

    // J=4 rollouts from every held-out window
    let lip = env.dynamics().a.singular_values().max();
    let mut errs = vec![Vec::new(); 4];
    let mut local = vec![Vec::new(); 4];
    for ep in &held_out {
        for w in ep.windows(4).step_by(4) {
            let actions: Vec<Vec<f64>> = w.iter().map(|t| t.action.clone()).collect();
            let imagined = model.rollout(&w[0].state, &actions).unwrap();
            let mut prev = w[0].state.clone();
            for k in 0..4 {
                errs[k].push(dist(&imagined[k], &w[k].next_state));
                local[k].push(dist(&imagined[k], &truth.next_observation(&prev, &actions[k])));
                prev = imagined[k].clone();
            }
        }
    }
    let e: Vec<f64> = errs.iter().map(|v| rms(v)).collect();
    let d: Vec<f64> = local.iter().map(|v| rms(v)).collect();
    // e_k <= sum_{i<k} L^(k-1-i) d_i: triangle inequality through x -> Ax + Bu
    let mut bound = 0.0;
    let mut geometric = true;
    for k in 0..4 {
        bound = lip * bound + d[k];
        geometric &= e[k] <= bound * (1.0 + 1e-9);
    }
    let one_step = d.iter().cloned().fold(0.0, f64::max) <= 2.0 * e[0];
    let pass = ratio < 0.1 && geometric && one_step;
    verdict(
        3,
        "model correctness",
        pass,
        &format!(
            "one-step MSE / delta variance = {ratio:.4} (tol 0.1); rollout RMS {:?} vs one-step {:?}, L={lip:.3}; {:.1}s",
            e.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>(),
            d.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>(),
            t0.elapsed().as_secs_f64()
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- 4

fn trapezoid_oracle(x: &[f64], y: &[f64], lo: f64, hi: f64) -> f64 {
    let norm: Vec<f64> = y.iter().map(|v| ((v - lo) / (hi - lo)).clamp(0.0, 1.0)).collect();
    let mut area = 0.0;
    for i in 1..x.len() {
        area += (x[i] - x[i - 1]) * (norm[i] + norm[i - 1]) / 2.0;
    }
    area / (x[x.len() - 1] - x[0])
}

#[test]
fn fas_matches_trapezoid_oracle() {
    let mut rng = seeded(44);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let n = rng.random_range(2..12);
        let mut grid: Vec<usize> = Vec::new();
        let mut g = 0;
        for _ in 0..n {
            g += rng.random_range(1..6);
            grid.push(g);
        }
        let lo = rng.random_range(-2000.0..0.0);
        let hi = lo + rng.random_range(1.0..2000.0);
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(lo - 300.0..hi + 300.0)).collect();
        let curve = ScoreCurve::new(grid.clone(), y.clone(), vec![0.0; n], 10).unwrap();
        let got = fas(&curve, lo, hi).unwrap().fas;
        let x: Vec<f64> = grid.iter().map(|&v| v as f64).collect();
        worst = worst.max((got - trapezoid_oracle(&x, &y, lo, hi)).abs());
    }
    let grid: Vec<usize> = (1..=30).collect();
    let flat = |v: f64| ScoreCurve::new(grid.clone(), vec![v; 30], vec![0.0; 30], 1).unwrap();
    let at_max = fas(&flat(-100.0), -900.0, -100.0).unwrap().fas;
    let at_min = fas(&flat(-900.0), -900.0, -100.0).unwrap().fas;
    let line: Vec<f64> = (0..30).map(|i| -100.0 - 800.0 * i as f64 / 29.0).collect();
    let linear = fas(&ScoreCurve::new(grid.clone(), line, vec![0.0; 30], 1).unwrap(), -900.0, -100.0)
        .unwrap()
        .fas;
    let pass = worst <= 1e-9 && at_max == 1.0 && at_min == 0.0 && (linear - 0.5).abs() <= 1e-9;
    verdict(
        4,
        "FAS oracle equivalence",
        pass,
        &format!(
            "max deviation {worst:.1e} over 100 curves (tol 1e-9); anchors {at_max}, {at_min}, linear {linear:.12}"
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- 5, 6

const POOL_STEPS: usize = 50_000;
const SWEEP_GRID: [usize; 5] = [1, 2, 4, 8, 16];
const SWEEP_EPISODES: usize = 10;
const EVAL_SEED: u64 = 2024;

fn desk_config(seed: u64) -> TrainConfig {
    let mut c = TrainConfig::default();
    c.hidden_size = 64;
    c.batch_size = 128;
    c.max_steps = POOL_STEPS;
    c.eval_frequency = 10_000;
    c.eval_episodes = 5;
    c.seed = seed;
    c
}

struct Policy {
    label: String,
    agent: AgentBundle<f32>,
    mode: EvalMode,
    curve: ScoreCurve,
    stochastic: f64,
}

struct Pool {
    random: f64,
    random_se: f64,
    policies: Vec<Policy>,
    train_seconds: f64,
}

impl Pool {
    fn fas(&self, p: &Policy, max: f64) -> f64 {
        fas(&p.curve, self.random, max).unwrap().fas
    }
}

fn pendulum() -> Box<dyn Env> {
    make_env("pendulum").unwrap()
}

fn evaluate_policy(label: String, agent: AgentBundle<f32>, mode: EvalMode) -> Policy {
    let mut env = pendulum();
    let curve = asl_sweep(&agent, env.as_mut(), &SWEEP_GRID, SWEEP_EPISODES, mode, EVAL_SEED).unwrap();
    let stochastic = stochastic_timestep_eval(&agent, env.as_mut(), 10, (1, 16), mode, EVAL_SEED)
        .unwrap()
        .mean_return;
    Policy {
        label,
        agent,
        mode,
        curve,
        stochastic,
    }
}

fn pool() -> &'static Pool {
    static POOL: OnceLock<Pool> = OnceLock::new();
    POOL.get_or_init(|| {
        let t0 = Instant::now();
        let random = random_policy_return(pendulum().as_mut(), 1000, EVAL_SEED).unwrap();
        let mut policies = Vec::new();
        for seed in 0..3 {
            let sac = sac_train::<f32>(&desk_config(seed), pendulum()).unwrap().agent;
            policies.push(evaluate_policy(format!("SAC seed {seed}"), sac, EvalMode::Repeat));
            let mut c = desk_config(seed);
            c.j = 4;
            let srl = srl_train::<f32>(&c, pendulum()).unwrap().agent;
            policies.push(evaluate_policy(format!("SRL-4 seed {seed}"), srl, EvalMode::Sequence));
        }
        for seed in 0..2 {
            let mut c = desk_config(seed);
            c.j = 2;
            let srl = srl_train::<f32>(&c, pendulum()).unwrap().agent;
            policies.push(evaluate_policy(format!("SRL-2 seed {seed}"), srl, EvalMode::Sequence));
        }
        for p in &policies {
            println!(
                "  {}: curve {:?}, stochastic {:.1}",
                p.label,
                p.curve.mean_returns.iter().map(|v| v.round()).collect::<Vec<_>>(),
                p.stochastic
            );
        }
        Pool {
            random: random.mean,
            random_se: random.std_error,
            policies,
            train_seconds: t0.elapsed().as_secs_f64(),
        }
    })
}

#[test]
fn frequency_robustness_on_pendulum() {
    let pool = pool();
    let compared: Vec<&Policy> = pool
        .policies
        .iter()
        .filter(|p| p.label.starts_with("SAC") || p.label.starts_with("SRL-4"))
        .collect();
    let max = compared.iter().map(|p| p.curve.best()).fold(f64::NEG_INFINITY, f64::max);
    let mean_fas = |prefix: &str| {
        let v: Vec<f64> = compared
            .iter()
            .filter(|p| p.label.starts_with(prefix))
            .map(|p| pool.fas(p, max))
            .collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    let (sac, srl) = (mean_fas("SAC"), mean_fas("SRL-4"));

    let mut sigmas = Vec::new();
    for p in compared.iter().filter(|p| p.label.starts_with("SAC")) {
        let s = evaluate_fixed(&p.agent, pendulum().as_mut(), 1, EvalMode::Repeat, 20, EVAL_SEED + 1).unwrap();
        let se = (s.std_error.powi(2) + pool.random_se.powi(2)).sqrt();
        sigmas.push((s.mean - pool.random) / se);
    }
    let sane = sigmas.iter().all(|&z| z >= 5.0);
    let pass = srl - sac >= 0.10 && sane;
    verdict(
        5,
        "frequency robustness",
        pass,
        &format!(
            "mean FAS SRL-4 {srl:.3} vs SAC {sac:.3} (need +0.10); anchors [{:.1}, {max:.1}]; SAC ASL=1 vs random {:?} sigma (need 5); pool {:.0}s",
            pool.random,
            sigmas.iter().map(|z| format!("{z:.1}")).collect::<Vec<_>>(),
            pool.train_seconds
        ),
    );
    assert!(pass);
}

#[test]
fn stochastic_timestep_correlation() {
    let pool = pool();
    let chosen: Vec<&Policy> = pool
        .policies
        .iter()
        .filter(|p| !p.label.ends_with("seed 2"))
        .collect();
    let max = chosen.iter().map(|p| p.curve.best()).fold(f64::NEG_INFINITY, f64::max);
    let fas_values: Vec<f64> = chosen.iter().map(|p| pool.fas(p, max)).collect();
    let returns: Vec<f64> = chosen.iter().map(|p| p.stochastic).collect();

    // The hard gate: both quantities are recomputed bit for bit.
    let again: Vec<(f64, f64)> = chosen
        .iter()
        .map(|p| {
            let q = evaluate_policy(p.label.clone(), p.agent.clone(), p.mode);
            (fas(&q.curve, pool.random, max).unwrap().fas, q.stochastic)
        })
        .collect();
    let reproducible = again
        .iter()
        .zip(fas_values.iter().zip(&returns))
        .all(|(a, (f, r))| a.0.to_bits() == f.to_bits() && a.1.to_bits() == r.to_bits());
    let r = pearson(&fas_values, &returns);
    let pairs = chosen
        .iter()
        .zip(fas_values.iter().zip(&returns))
        .map(|(p, (f, r))| format!("{} ({f:.3}, {r:.1})", p.label))
        .collect::<Vec<_>>()
        .join("; ");
    match &r {
        Ok(r) if *r >= 0.6 => {}
        _ => println!("WARN [6] Pearson r below 0.6 or undefined: {r:?}; inspect the pairs"),
    }
    let pass = reproducible && chosen.len() >= 6 && r.is_ok();
    verdict(
        6,
        "stochastic-timestep correlation",
        pass,
        &format!("{} policies, r = {:?} (reported, target 0.6); reproducible {reproducible}; {pairs}", chosen.len(), r.map(|v| (v * 1e4).round() / 1e4)),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- 7

#[test]
fn online_planning_parity() {
    let t0 = Instant::now();
    let mut c = TrainConfig::sac();
    c.hidden_size = 32;
    c.batch_size = 64;
    c.start_steps = 1000;
    c.max_steps = 4000;
    c.eval_frequency = 4000;
    c.eval_episodes = 1;
    let trained = sac_train::<f64>(&c, pendulum()).unwrap().agent;
    let mut pass = true;
    let mut notes = Vec::new();
    for name in ["pendulum", "linear", "reacher-point"] {
        let mut env = make_env(name).unwrap();
        let agent = if name == "pendulum" {
            trained.clone()
        } else {
            AgentBundle::<f64>::new(&c, env.spec()).unwrap()
        };
        let truth = GroundTruthModel(env.closed_form().unwrap());
        let planned = online_planning_eval(&agent, &truth, env.as_mut(), &DEFAULT_ASL_GRID, 3, 77).unwrap();
        let closed = evaluate_fixed(&agent, env.as_mut(), 1, EvalMode::Sequence, 3, 77).unwrap();
        let same = planned.curve.mean_returns.iter().all(|&m| m == closed.mean);
        let calls = planned
            .curve
            .asl_grid
            .iter()
            .zip(planned.model_calls.iter().zip(&planned.decisions))
            .all(|(&k, (&calls, &d))| calls == (k as u64 - 1) * d);
        pass &= same && calls;
        notes.push(format!("{name}: identical {same}, calls (k-1)*decisions {calls}"));
    }
    verdict(
        7,
        "online planning parity",
        pass,
        &format!("{}; {:.1}s", notes.join("; "), t0.elapsed().as_secs_f64()),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- 8

#[test]
fn update_bookkeeping() {
    let t0 = Instant::now();
    let mut c = TrainConfig::default();
    c.j = 4;
    c.hidden_size = 16;
    c.batch_size = 32;
    c.start_steps = 1000;
    c.max_steps = 10_000;
    c.eval_frequency = 5000;
    c.eval_episodes = 1;
    let env = pendulum();
    let truth = env.closed_form().unwrap();
    let mut trainer = Trainer::<f64>::new(&c, env).unwrap();
    trainer.train().unwrap();
    let k = trainer.counters.clone();
    let iterations = k.grad_steps;
    let mut imagined = 0usize;
    for t in trainer.replay.iter() {
        let next = truth.next_observation(&t.state, &t.action);
        let reward = truth.reward(&t.state, &t.action);
        if next != t.next_state || reward != t.reward {
            imagined += 1;
        }
    }
    let checks = [
        ("actor", k.actor_updates, iterations / 4),
        ("critic", k.critic_updates, iterations),
        ("model", k.model_updates, iterations),
        ("critic EMA", k.critic_ema_updates, iterations),
        ("model EMA", k.model_ema_updates, iterations),
        ("replay", trainer.replay.len() as u64, k.env_steps),
    ];
    let pass = checks.iter().all(|(_, got, want)| got == want)
        && imagined == 0
        && k.env_steps == 10_000
        && iterations == 9001;
    verdict(
        8,
        "update bookkeeping",
        pass,
        &format!(
            "{iterations} iterations, {} decisions; {}; imagined transitions in replay {imagined}; {:.1}s",
            k.decisions,
            checks
                .iter()
                .map(|(n, g, w)| format!("{n} {g}/{w}"))
                .collect::<Vec<_>>()
                .join(", "),
            t0.elapsed().as_secs_f64()
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- 9

#[test]
fn arbitrary_length_generation() {
    let t0 = Instant::now();
    let mut c = TrainConfig::default();
    c.j = 8;
    c.hidden_size = 32;
    c.batch_size = 64;
    c.start_steps = 2000;
    c.max_steps = 10_000;
    c.eval_frequency = 5000;
    c.eval_episodes = 2;
    let agent = srl_train::<f32>(&c, pendulum()).unwrap().agent;
    let mut rng = seeded(9);
    let mut bounded = true;
    let mut finite = true;
    for _ in 0..100 {
        let th: f32 = rng.random_range(-3.14..3.14);
        let s = [th.cos(), th.sin(), rng.random_range(-8.0..8.0)];
        for det in [false, true] {
            let seq = agent.actor.sample_sequence(&s, 30, det, None, &mut rng).unwrap();
            bounded &= seq.len() == 30 && seq.actions.iter().flatten().all(|a| (-1.0..=1.0).contains(a));
            finite &= seq.log_probs.iter().all(|l| l.is_finite());
        }
    }
    let curve = asl_sweep(&agent, pendulum().as_mut(), &DEFAULT_ASL_GRID, 3, EvalMode::Sequence, 5);
    let swept = matches!(&curve, Ok(c) if c.len() == DEFAULT_ASL_GRID.len() && c.mean_returns.iter().all(|v| v.is_finite()));
    let pass = bounded && finite && swept;
    verdict(
        9,
        "arbitrary-length generation",
        pass,
        &format!(
            "ASL 30 bounded {bounded}, finite log-probs {finite}; sweep over {:?}: {}; {:.1}s",
            DEFAULT_ASL_GRID,
            match &curve {
                Ok(c) => format!("{:?}", c.mean_returns.iter().map(|v| v.round()).collect::<Vec<_>>()),
                Err(e) => e.to_string(),
            },
            t0.elapsed().as_secs_f64()
        ),
    );
    assert!(pass);
}
