//! Everything a trained agent consists of, and its on-disk form.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::actor::{SequencePolicy, Temperature};
use crate::checkpoint::{load_parameters_like, save_parameters};
use crate::config::{FirstInput, Precision, TrainConfig};
use crate::critic::TwinCritic;
use crate::dynamics::{DynamicsModel, RunningNormalizer};
use crate::envs::EnvSpec;
use crate::error::{check_dim, Result, SrlError};
use crate::eval::Controller;
use crate::latent::Encoder;
use crate::nets::ParameterSet;
use crate::rng::{stream, SrlRng};
use crate::scalar::{from_f64_slice, to_f64_vec, Scalar};
use crate::transition::ActionSequence;

const MANIFEST: &str = "agent.json";

#[derive(Clone, Debug)]
pub struct AgentBundle<T> {
    pub config: TrainConfig,
    pub spec: EnvSpec,
    pub actor: SequencePolicy<T>,
    pub critic: TwinCritic<T>,
    pub model: Option<DynamicsModel<T>>,
    pub temperature: Temperature<T>,
    pub encoder: Option<Encoder<T>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct AgentManifest {
    dtype: String,
    config: TrainConfig,
    spec: EnvSpec,
    model_input_norm: Option<RunningNormalizer>,
    model_output_norm: Option<RunningNormalizer>,
}

impl<T: Scalar> AgentBundle<T> {
    /// Fresh networks for `spec`. In latent mode the actor, critic and model
    /// see `latent.dim`-dimensional codes instead of observations.
    pub fn new(config: &TrainConfig, spec: &EnvSpec) -> Result<Self> {
        config.validate()?;
        let mut rng = stream(config.seed, 0);
        let (d_a, h, layers) = (spec.action_dim, config.hidden_size, config.num_hidden_layers);
        let encoder = config
            .latent
            .enabled
            .then(|| Encoder::new(spec.state_dim, config.latent.dim, h, &mut rng));
        let d = encoder.as_ref().map_or(spec.state_dim, |e| e.latent_dim());
        let actor = SequencePolicy::new(d, d_a, h, (config.log_std_min, config.log_std_max), &mut rng);
        let critic = TwinCritic::new(d, d_a, h, layers, &mut rng);
        let model = config.uses_model().then(|| {
            let latent = config.latent.enabled;
            DynamicsModel::new(
                d,
                d_a,
                h,
                layers,
                config.predict_delta && !latent,
                config.normalize_model && !latent,
                &mut rng,
            )
        });
        let temperature = Temperature::new(
            config.init_temperature,
            config.target_entropy_for(d_a),
            config.learn_temperature,
        );
        Ok(Self {
            config: config.clone(),
            spec: spec.clone(),
            actor,
            critic,
            model,
            temperature,
            encoder,
        })
    }

    /// Replaces the learned encoder with the identity map. Only valid when
    /// the latent width equals the observation width.
    pub fn with_identity_encoder(mut self) -> Result<Self> {
        check_dim("latent width", self.spec.state_dim, self.actor.state_dim())?;
        self.encoder = Some(Encoder::identity(self.spec.state_dim));
        Ok(self)
    }

    /// Sequence length the agent was trained for.
    pub fn j(&self) -> usize {
        self.config.effective_j()
    }

    /// Observation mapped to the actor's input space.
    pub fn policy_input(&self, observation: &[f64]) -> Result<Vec<T>> {
        check_dim("observation", self.spec.state_dim, observation.len())?;
        let s: Vec<T> = from_f64_slice(observation);
        match &self.encoder {
            Some(e) => e.encode_state(&s),
            None => Ok(s),
        }
    }

    fn entries(&self) -> Vec<(&'static str, &ParameterSet<T>)> {
        let mut out = vec![
            ("actor", &self.actor.params),
            ("critic", &self.critic.params),
            ("critic_target", &self.critic.target),
            ("temperature", &self.temperature.log_alpha),
        ];
        if let Some(m) = &self.model {
            out.push(("model", &m.params));
            out.push(("model_target", &m.target));
        }
        if let Some(e) = self.encoder.as_ref().filter(|e| !e.is_identity()) {
            out.push(("encoder", &e.params));
            out.push(("encoder_target", &e.target));
        }
        out
    }

    /// Writes `agent.json` plus one tensor archive per parameter set.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let manifest = AgentManifest {
            dtype: T::DTYPE.to_string(),
            config: self.config.clone(),
            spec: self.spec.clone(),
            model_input_norm: self.model.as_ref().map(|m| m.input_norm.clone()),
            model_output_norm: self.model.as_ref().map(|m| m.output_norm.clone()),
        };
        fs::write(dir.join(MANIFEST), serde_json::to_string_pretty(&manifest)?)?;
        for (name, p) in self.entries() {
            save_parameters(p, &dir.join(format!("{name}.bin")))?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let manifest = read_manifest(dir)?;
        if manifest.dtype != T::DTYPE {
            return Err(SrlError::Format(format!(
                "checkpoint holds {} parameters, expected {}",
                manifest.dtype,
                T::DTYPE
            )));
        }
        let mut agent = Self::new(&manifest.config, &manifest.spec)?;
        if agent.encoder.as_ref().is_some_and(|e| e.latent_dim() == manifest.spec.state_dim)
            && !dir.join("encoder.bin").exists()
        {
            agent = agent.with_identity_encoder()?;
        }
        let load = |name: &str, like: &ParameterSet<T>| load_parameters_like(&dir.join(format!("{name}.bin")), like);
        agent.actor.params = load("actor", &agent.actor.params)?;
        agent.critic.params = load("critic", &agent.critic.params)?;
        agent.critic.target = load("critic_target", &agent.critic.target)?;
        agent.temperature.log_alpha = load("temperature", &agent.temperature.log_alpha)?;
        if let Some(m) = &mut agent.model {
            m.params = load("model", &m.params)?;
            m.target = load("model_target", &m.target)?;
            if let Some(n) = manifest.model_input_norm {
                m.input_norm = n;
            }
            if let Some(n) = manifest.model_output_norm {
                m.output_norm = n;
            }
        }
        if let Some(e) = &mut agent.encoder {
            if !e.is_identity() {
                e.params = load("encoder", &e.params)?;
                e.target = load("encoder_target", &e.target)?;
            }
        }
        Ok(agent)
    }
}

fn read_manifest(dir: &Path) -> Result<AgentManifest> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path)
        .map_err(|e| SrlError::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    Ok(serde_json::from_str(&text)?)
}

/// Scalar type a checkpoint directory was written with.
pub fn checkpoint_precision(dir: &Path) -> Result<Precision> {
    match read_manifest(dir)?.dtype.as_str() {
        "f32" => Ok(Precision::F32),
        "f64" => Ok(Precision::F64),
        other => Err(SrlError::Format(format!("unknown dtype {other}"))),
    }
}

impl<T: Scalar> Controller for AgentBundle<T> {
    fn action_dim(&self) -> usize {
        self.spec.action_dim
    }

    fn act(
        &self,
        observation: &[f64],
        len: usize,
        deterministic: bool,
        previous: Option<&[f64]>,
        rng: &mut SrlRng,
    ) -> Result<ActionSequence<f64>> {
        let s = self.policy_input(observation)?;
        let first: Option<Vec<T>> = match self.config.first_input {
            FirstInput::Zero => None,
            FirstInput::PreviousAction => Some(match previous {
                Some(p) => from_f64_slice(p),
                None => vec![T::zero(); self.spec.action_dim],
            }),
        };
        let seq = self.actor.sample_sequence(&s, len, deterministic, first.as_deref(), rng)?;
        Ok(ActionSequence {
            actions: seq.actions.iter().map(|a| to_f64_vec(a)).collect(),
            log_probs: to_f64_vec(&seq.log_probs),
            origin_state: observation.to_vec(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::make_env;
    use crate::rng::seeded;

    fn small(latent: bool) -> TrainConfig {
        let mut c = TrainConfig::default();
        c.hidden_size = 8;
        c.latent.enabled = latent;
        c.latent.dim = 4;
        c
    }

    fn assert_same<T: Scalar>(a: &AgentBundle<T>, b: &AgentBundle<T>) {
        let fa: Vec<u64> = a.entries().iter().map(|(_, p)| p.fingerprint()).collect();
        let fb: Vec<u64> = b.entries().iter().map(|(_, p)| p.fingerprint()).collect();
        assert_eq!(fa, fb);
    }

    #[test]
    fn checkpoint_round_trip() {
        let env = make_env("pendulum").unwrap();
        for latent in [false, true] {
            let mut a = AgentBundle::<f32>::new(&small(latent), env.spec()).unwrap();
            a.critic.target.tensor_mut(0).fill(0.25);
            if let Some(m) = &mut a.model {
                m.observe(&[1.0, 0.0, 0.5], &[0.9, 0.1, 0.4]);
                m.observe(&[0.0, 1.0, -0.5], &[0.1, 0.9, -0.4]);
            }
            let dir = tempfile::tempdir().unwrap();
            a.save(dir.path()).unwrap();
            let b = AgentBundle::<f32>::load(dir.path()).unwrap();
            assert_same(&a, &b);
            assert_eq!(b.encoder.is_some(), latent);
            let (ma, mb) = (a.model.unwrap(), b.model.unwrap());
            assert_eq!(ma.input_norm, mb.input_norm);
            assert_eq!(checkpoint_precision(dir.path()).unwrap(), Precision::F32);
            assert!(AgentBundle::<f64>::load(dir.path()).is_err());
        }
    }

    #[test]
    fn sac_bundle_has_no_model() {
        let env = make_env("pendulum").unwrap();
        let a = AgentBundle::<f64>::new(&TrainConfig::sac(), env.spec()).unwrap();
        assert!(a.model.is_none());
        assert_eq!(a.j(), 1);
    }

    #[test]
    fn identity_encoder_reduces_to_base_policy() {
        let env = make_env("pendulum").unwrap();
        let mut c = small(true);
        c.latent.dim = 3;
        let base = AgentBundle::<f64>::new(&small(false), env.spec()).unwrap();
        let mut latent = AgentBundle::<f64>::new(&c, env.spec()).unwrap().with_identity_encoder().unwrap();
        latent.actor.params = base.actor.params.clone();
        let obs = [0.3, -0.9, 1.2];
        let a = base.act(&obs, 5, false, None, &mut seeded(1)).unwrap();
        let b = latent.act(&obs, 5, false, None, &mut seeded(1)).unwrap();
        assert_eq!(a, b);
        let dir = tempfile::tempdir().unwrap();
        latent.save(dir.path()).unwrap();
        assert!(AgentBundle::<f64>::load(dir.path()).unwrap().encoder.unwrap().is_identity());
    }

    #[test]
    fn missing_checkpoint_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(AgentBundle::<f32>::load(&dir.path().join("nope")).is_err());
    }
}
