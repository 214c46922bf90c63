//! Training configuration. Serialized as flat JSON; nested groups are
//! addressed with dotted keys (`lr.actor`, `latent.enabled`).

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Result, SrlError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algo {
    Srl,
    Sac,
}

/// What the actor-update schedule counts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateUnit {
    /// One tick per gradient step, i.e. per primitive environment step.
    GradientStep,
    /// One tick per decision point (per sampled sequence).
    Decision,
}

/// Which critic value the actor objective maximizes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActorQ {
    Min,
    First,
    Mean,
}

/// Sequence positions whose log-probabilities drive the temperature.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemperaturePositions {
    All,
    First,
}

/// Recurrent input for the first action of a sequence.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FirstInput {
    Zero,
    PreviousAction,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    F32,
    F64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LearningRates {
    pub model: f64,
    pub critic: f64,
    pub actor: f64,
    pub alpha: f64,
}

impl Default for LearningRates {
    fn default() -> Self {
        Self {
            model: 3e-4,
            critic: 3e-4,
            actor: 3e-4,
            alpha: 3e-4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LatentConfig {
    pub enabled: bool,
    pub dim: usize,
    pub horizon: usize,
}

impl Default for LatentConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            dim: 50,
            horizon: 5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub algo: Algo,
    pub env: String,
    #[serde(rename = "J")]
    pub j: usize,
    pub gamma: f64,
    pub tau: f64,
    pub lr: LearningRates,
    pub buffer_capacity: usize,
    pub batch_size: usize,
    pub start_steps: usize,
    pub max_steps: usize,
    pub eval_frequency: usize,
    pub eval_episodes: usize,
    /// `None` picks the algorithm default: 4 for SRL, 1 for SAC.
    pub actor_update_frequency: Option<usize>,
    pub actor_update_unit: UpdateUnit,
    pub hidden_size: usize,
    pub num_hidden_layers: usize,
    /// `None` means `-d_a` per action.
    pub target_entropy: Option<f64>,
    pub init_temperature: f64,
    pub learn_temperature: bool,
    pub seed: u64,
    /// Train the dynamics model. Imagined rollouts with an untrained model
    /// are still used when this is off and `J > 1`.
    pub model_updates: bool,
    pub predict_delta: bool,
    pub normalize_model: bool,
    pub actor_q: ActorQ,
    pub temperature_positions: TemperaturePositions,
    pub first_input: FirstInput,
    pub grad_clip: Option<f64>,
    pub log_std_min: f64,
    pub log_std_max: f64,
    pub precision: Precision,
    pub checkpoints: bool,
    pub latent: LatentConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            algo: Algo::Srl,
            env: "pendulum".into(),
            j: 4,
            gamma: 0.99,
            tau: 0.005,
            lr: LearningRates::default(),
            buffer_capacity: 1_000_000,
            batch_size: 256,
            start_steps: 10_000,
            max_steps: 50_000,
            eval_frequency: 2500,
            eval_episodes: 10,
            actor_update_frequency: None,
            actor_update_unit: UpdateUnit::GradientStep,
            hidden_size: 256,
            num_hidden_layers: 2,
            target_entropy: None,
            init_temperature: 0.1,
            learn_temperature: true,
            seed: 0,
            model_updates: true,
            predict_delta: false,
            normalize_model: true,
            actor_q: ActorQ::Min,
            temperature_positions: TemperaturePositions::All,
            first_input: FirstInput::Zero,
            grad_clip: None,
            log_std_min: -20.0,
            log_std_max: 2.0,
            precision: Precision::F32,
            checkpoints: true,
            latent: LatentConfig::default(),
        }
    }
}

impl TrainConfig {
    /// The SAC baseline: one-step policy, no model, actor updated every step.
    pub fn sac() -> Self {
        Self {
            algo: Algo::Sac,
            j: 1,
            model_updates: false,
            ..Self::default()
        }
    }

    pub fn actor_update_frequency(&self) -> usize {
        self.actor_update_frequency.unwrap_or(match self.algo {
            Algo::Srl => 4,
            Algo::Sac => 1,
        })
    }

    /// Sequence length actually used by the trainer.
    pub fn effective_j(&self) -> usize {
        match self.algo {
            Algo::Srl => self.j,
            Algo::Sac => 1,
        }
    }

    pub fn target_entropy_for(&self, action_dim: usize) -> f64 {
        self.target_entropy.unwrap_or(-(action_dim as f64))
    }

    /// Whether the agent carries a dynamics model.
    pub fn uses_model(&self) -> bool {
        self.algo == Algo::Srl || self.latent.enabled
    }

    /// Whether the model receives gradient steps.
    pub fn trains_model(&self) -> bool {
        self.uses_model() && self.model_updates
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(SrlError::Config(msg));
        if self.j == 0 {
            return bad("J must be at least 1".into());
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad(format!("gamma must lie in (0, 1), got {}", self.gamma));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad(format!("tau must lie in (0, 1], got {}", self.tau));
        }
        for (name, v) in [
            ("lr.model", self.lr.model),
            ("lr.critic", self.lr.critic),
            ("lr.actor", self.lr.actor),
            ("lr.alpha", self.lr.alpha),
            ("init_temperature", self.init_temperature),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        for (name, v) in [
            ("buffer_capacity", self.buffer_capacity),
            ("batch_size", self.batch_size),
            ("max_steps", self.max_steps),
            ("eval_frequency", self.eval_frequency),
            ("eval_episodes", self.eval_episodes),
            ("hidden_size", self.hidden_size),
            ("num_hidden_layers", self.num_hidden_layers),
            ("actor_update_frequency", self.actor_update_frequency()),
        ] {
            if v == 0 {
                return bad(format!("{name} must be positive"));
            }
        }
        if self.log_std_min >= self.log_std_max {
            return bad("log_std_min must be below log_std_max".into());
        }
        if let Some(c) = self.grad_clip {
            if !(c > 0.0) {
                return bad(format!("grad_clip must be positive, got {c}"));
            }
        }
        if self.latent.enabled {
            if self.predict_delta {
                return bad("latent mode predicts latent codes; predict_delta must be off".into());
            }
            if self.latent.dim == 0 || self.latent.horizon == 0 {
                return bad("latent.dim and latent.horizon must be positive".into());
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text)?;
        Self::from_value(value)
    }

    fn from_value(value: Value) -> Result<Self> {
        serde_json::from_value(value).map_err(|e| {
            let msg = e.to_string();
            match unknown_field(&msg) {
                Some(key) => SrlError::UnknownKey(key),
                None => SrlError::Config(msg),
            }
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Applies one `key=value` override. The value is parsed as JSON when
    /// possible and taken as a bare string otherwise.
    pub fn set(&mut self, key: &str, raw: &str) -> Result<()> {
        let mut root = serde_json::to_value(&*self)?;
        let mut slot = &mut root;
        for part in key.split('.') {
            slot = slot
                .as_object_mut()
                .and_then(|m| m.get_mut(part))
                .ok_or_else(|| SrlError::UnknownKey(key.to_string()))?;
        }
        *slot = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        *self = Self::from_value(root).map_err(|e| match e {
            SrlError::Config(msg) => SrlError::Config(format!("{key}: {msg}")),
            other => other,
        })?;
        Ok(())
    }

    /// Applies a list of `key=value` strings in order.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, overrides: &[S]) -> Result<()> {
        for o in overrides {
            let o = o.as_ref();
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| SrlError::Config(format!("override `{o}` is not key=value")))?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }
}

fn unknown_field(msg: &str) -> Option<String> {
    let rest = msg.strip_prefix("unknown field `")?;
    Some(rest[..rest.find('`')?].to_string())
}
