//! Checkpoints of either precision behind one type.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use srl_core::agent::{checkpoint_precision, AgentBundle};
use srl_core::config::{Algo, Precision, TrainConfig};
use srl_core::envs::EnvSpec;
use srl_core::eval::{Controller, EvalMode, TransitionModel};

pub enum LoadedAgent {
    F32(AgentBundle<f32>),
    F64(AgentBundle<f64>),
}

impl LoadedAgent {
    /// Accepts a checkpoint directory or a run directory containing `checkpoint/`.
    pub fn load(path: &Path) -> Result<Self> {
        let dir = resolve(path)?;
        Ok(match checkpoint_precision(&dir)? {
            Precision::F32 => Self::F32(AgentBundle::load(&dir)?),
            Precision::F64 => Self::F64(AgentBundle::load(&dir)?),
        })
    }

    pub fn controller(&self) -> &dyn Controller {
        match self {
            Self::F32(a) => a,
            Self::F64(a) => a,
        }
    }

    pub fn config(&self) -> &TrainConfig {
        match self {
            Self::F32(a) => &a.config,
            Self::F64(a) => &a.config,
        }
    }

    pub fn spec(&self) -> &EnvSpec {
        match self {
            Self::F32(a) => &a.spec,
            Self::F64(a) => &a.spec,
        }
    }

    /// The learned one-step model, when the agent has one over raw states.
    pub fn model(&self) -> Option<&dyn TransitionModel> {
        match self {
            Self::F32(a) if a.encoder.is_none() => a.model.as_ref().map(|m| m as &dyn TransitionModel),
            Self::F64(a) if a.encoder.is_none() => a.model.as_ref().map(|m| m as &dyn TransitionModel),
            _ => None,
        }
    }

    /// Sequence agents unroll; one-step agents repeat.
    pub fn default_mode(&self) -> EvalMode {
        match self.config().algo {
            Algo::Srl => EvalMode::Sequence,
            Algo::Sac => EvalMode::Repeat,
        }
    }

    pub fn label(&self) -> String {
        let c = self.config();
        match c.algo {
            Algo::Srl => format!("SRL-{}", c.effective_j()),
            Algo::Sac => "SAC".into(),
        }
    }
}

fn resolve(path: &Path) -> Result<PathBuf> {
    if path.join("agent.json").is_file() {
        return Ok(path.to_path_buf());
    }
    let nested = path.join("checkpoint");
    if nested.join("agent.json").is_file() {
        return Ok(nested);
    }
    if !path.exists() {
        bail!("checkpoint {} does not exist", path.display());
    }
    Err(anyhow::anyhow!("no agent.json in {} or its checkpoint/ directory", path.display()))
        .context("loading checkpoint")
}
