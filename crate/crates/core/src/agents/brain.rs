use std::collections::BTreeMap;

use rand_chacha::ChaCha8Rng;

use crate::rl::{
    ppo_update, Action, Checkpoint, CheckpointError, Mlp, Policy, PpoConfig, PpoDiagnostics,
    RlError, RngState, RolloutBuffer,
};

/// A decision waiting for its reward at the end of the step.
#[derive(Debug, Clone, PartialEq)]
pub struct PendingTransition {
    pub observation: Vec<f64>,
    pub action: Action,
    pub log_prob: f64,
    pub value: f64,
    /// Account mark value (half-cents) at decision time.
    pub value_x2_before: i64,
    pub mid_x2_before: i64,
    pub inventory_before: i64,
}

/// Policy, critic, experience buffer and training state owned by one agent.
#[derive(Debug, Clone)]
pub struct Brain {
    pub policy: Policy,
    pub value: Mlp,
    pub buffer: RolloutBuffer,
    pub ppo: PpoConfig,
    pub rng: ChaCha8Rng,
    pub training: bool,
    /// Act on the distribution mean instead of sampling.
    pub deterministic: bool,
    pub diagnostics: Vec<PpoDiagnostics>,
    /// First training failure; the harness aborts the run when set.
    pub failure: Option<RlError>,
    pending: Option<PendingTransition>,
}

impl Brain {
    pub fn new(policy: Policy, value: Mlp, ppo: PpoConfig, rng: ChaCha8Rng) -> Self {
        Brain {
            buffer: RolloutBuffer::new(ppo.capacity),
            policy,
            value,
            ppo,
            rng,
            training: true,
            deterministic: false,
            diagnostics: Vec::new(),
            failure: None,
            pending: None,
        }
    }

    /// Choose an action for `observation`. A full buffer is trained on first,
    /// bootstrapping from this observation's value.
    pub fn decide(&mut self, observation: &[f64]) -> Result<(Action, f64, f64, Vec<f64>), RlError> {
        if self.training && self.buffer.is_full() {
            let bootstrap = self.value.forward(observation)?[0];
            match ppo_update(
                &mut self.policy,
                &mut self.value,
                &mut self.buffer,
                bootstrap,
                &self.ppo,
                &mut self.rng,
            ) {
                Ok(d) => self.diagnostics.push(d),
                Err(e) => {
                    self.failure.get_or_insert(e.clone());
                    return Err(e);
                }
            }
        }
        let out = self.policy.output(observation)?;
        let value = self.value.forward(observation)?[0];
        let (action, log_prob) = if self.deterministic {
            let a = self.policy.mean_action(&out);
            let lp = self.policy.log_prob(&out, &a);
            (a, lp)
        } else {
            self.policy.sample(&out, &mut self.rng)
        };
        Ok((action, log_prob, value, out))
    }

    pub fn set_pending(&mut self, pending: PendingTransition) {
        self.pending = Some(pending);
    }

    pub fn take_pending(&mut self) -> Option<PendingTransition> {
        self.pending.take()
    }

    /// Store a completed transition when training.
    pub fn record(&mut self, pending: PendingTransition, reward: f64) {
        if self.training {
            self.buffer.push(
                pending.observation,
                pending.action,
                pending.log_prob,
                reward,
                pending.value,
                false,
            );
        }
    }

    pub fn checkpoint(&self, meta: BTreeMap<String, String>) -> Checkpoint {
        Checkpoint {
            policy: self.policy.clone(),
            value: self.value.clone(),
            ppo: self.ppo,
            rng: Some(RngState::capture(&self.rng)),
            meta,
        }
    }

    /// Replace parameters (and the RNG position, when stored) from a checkpoint.
    pub fn load(&mut self, ckpt: &Checkpoint) -> Result<(), CheckpointError> {
        if ckpt.policy.net.sizes() != self.policy.net.sizes() || ckpt.policy.head != self.policy.head {
            return Err(CheckpointError::Malformed("policy shape does not match agent".into()));
        }
        if ckpt.value.sizes() != self.value.sizes() {
            return Err(CheckpointError::Malformed("value shape does not match agent".into()));
        }
        self.policy = ckpt.policy.clone();
        self.value = ckpt.value.clone();
        if let Some(state) = &ckpt.rng {
            self.rng = state.restore()?;
        }
        self.buffer.clear();
        self.pending = None;
        Ok(())
    }
}
