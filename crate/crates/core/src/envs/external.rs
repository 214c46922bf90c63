use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};

use serde::Deserialize;
use serde_json::{json, Value};

use super::{Env, EnvSpec, Step};
use crate::error::{check_dim, Result, SrlError};

/// Adapter for an out-of-process simulator speaking newline-delimited JSON
/// on stdin/stdout:
///
/// ```text
/// > {"cmd":"spec"}
/// < {"state_dim":17,"action_dim":6,"max_episode_steps":1000,"dt":0.008}
/// > {"cmd":"reset","seed":3}
/// < {"observation":[...]}
/// > {"cmd":"step","action":[...]}
/// < {"observation":[...],"reward":1.0,"terminated":false,"truncated":false}
/// ```
///
/// Actions are sent already scaled to `[-1, 1]`. Any reply may instead be
/// `{"error":"..."}`.
pub struct ExternalEnv {
    spec: EnvSpec,
    command: String,
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
    obs: Vec<f64>,
}

#[derive(Deserialize)]
struct SpecReply {
    state_dim: usize,
    action_dim: usize,
    max_episode_steps: usize,
    #[serde(default = "default_dt")]
    dt: f64,
}

fn default_dt() -> f64 {
    1.0
}

#[derive(Deserialize)]
struct ResetReply {
    observation: Vec<f64>,
}

#[derive(Deserialize)]
struct StepReply {
    observation: Vec<f64>,
    reward: f64,
    terminated: bool,
    #[serde(default)]
    truncated: bool,
}

/// Environment variable holding the command for `external:<id>`.
pub fn registry_variable(id: &str) -> String {
    let id: String = id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_uppercase() } else { '_' })
        .collect();
    format!("SRL_EXTERNAL_ENV_{id}")
}

impl ExternalEnv {
    pub fn from_registry(id: &str) -> Result<Self> {
        let var = registry_variable(id);
        let command = std::env::var(&var)
            .map_err(|_| SrlError::Config(format!("external:{id} needs the simulator command in ${var}")))?;
        Self::spawn(&format!("external:{id}"), &command)
    }

    /// Starts `command` through the shell and queries its spec.
    pub fn spawn(name: &str, command: &str) -> Result<Self> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()
            .map_err(|e| SrlError::Env(format!("{name}: cannot start `{command}`: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        let mut env = Self {
            spec: EnvSpec {
                name: name.to_string(),
                state_dim: 0,
                action_dim: 0,
                max_episode_steps: 0,
                dt: 1.0,
            },
            command: command.to_string(),
            child,
            stdin,
            stdout,
            obs: Vec::new(),
        };
        let reply: SpecReply = env.call(json!({"cmd": "spec"}))?;
        if reply.state_dim == 0 || reply.action_dim == 0 || reply.max_episode_steps == 0 {
            return Err(SrlError::Env(format!("{name}: spec has zero dimensions")));
        }
        env.spec.state_dim = reply.state_dim;
        env.spec.action_dim = reply.action_dim;
        env.spec.max_episode_steps = reply.max_episode_steps;
        env.spec.dt = reply.dt;
        env.obs = vec![0.0; reply.state_dim];
        Ok(env)
    }

    fn call<R: for<'de> Deserialize<'de>>(&mut self, request: Value) -> Result<R> {
        let name = &self.spec.name;
        writeln!(self.stdin, "{request}").and_then(|_| self.stdin.flush()).map_err(|e| SrlError::Env(format!("{name}: write failed: {e}")))?;
        let mut line = String::new();
        let n = self
            .stdout
            .read_line(&mut line)
            .map_err(|e| SrlError::Env(format!("{name}: read failed: {e}")))?;
        if n == 0 {
            return Err(SrlError::Env(format!("{name}: simulator closed its output")));
        }
        let value: Value = serde_json::from_str(&line)?;
        if let Some(err) = value.get("error") {
            return Err(SrlError::Env(format!("{name}: {err}")));
        }
        Ok(serde_json::from_value(value)?)
    }
}

impl Env for ExternalEnv {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> Result<Vec<f64>> {
        let r: ResetReply = self.call(json!({"cmd": "reset", "seed": seed}))?;
        check_dim("external observation", self.spec.state_dim, r.observation.len())?;
        self.obs = r.observation;
        Ok(self.obs.clone())
    }

    fn step(&mut self, action: &[f64]) -> Result<Step> {
        check_dim("action", self.spec.action_dim, action.len())?;
        if action.iter().any(|a| !a.is_finite()) {
            return Err(SrlError::NonFinite("action".into()));
        }
        let a: Vec<f64> = action.iter().map(|x| x.clamp(-1.0, 1.0)).collect();
        let r: StepReply = self.call(json!({"cmd": "step", "action": a}))?;
        check_dim("external observation", self.spec.state_dim, r.observation.len())?;
        if !r.reward.is_finite() {
            return Err(SrlError::NonFinite("external reward".into()));
        }
        self.obs = r.observation.clone();
        Ok(Step {
            observation: r.observation,
            reward: r.reward,
            terminated: r.terminated,
            truncated: r.truncated,
        })
    }

    fn observation(&self) -> Vec<f64> {
        self.obs.clone()
    }

    fn fresh(&self) -> Result<Box<dyn Env>> {
        Ok(Box::new(Self::spawn(&self.spec.name, &self.command)?))
    }
}

impl Drop for ExternalEnv {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}
