use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{gae, Action, Mlp, Policy, RlError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PpoConfig {
    pub clip_epsilon: f64,
    /// MDP discount factor.
    pub discount: f64,
    pub gae_lambda: f64,
    pub epochs: usize,
    pub minibatch: usize,
    /// Plain SGD step size.
    pub learning_rate: f64,
    /// Global gradient-norm bound, applied per network.
    pub max_grad_norm: f64,
    pub value_coef: f64,
    pub entropy_coef: f64,
    /// Rollout length that triggers an update.
    pub capacity: usize,
}

impl Default for PpoConfig {
    fn default() -> Self {
        PpoConfig {
            clip_epsilon: 0.2,
            discount: 0.99,
            gae_lambda: 0.95,
            epochs: 4,
            minibatch: 256,
            learning_rate: 3e-4,
            max_grad_norm: 0.5,
            value_coef: 0.5,
            entropy_coef: 0.01,
            capacity: 2048,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.discount > 0.0 && self.discount < 1.0) {
            return Err(format!("discount must lie in (0, 1), got {}", self.discount));
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return Err(format!("gae_lambda must lie in [0, 1], got {}", self.gae_lambda));
        }
        if self.clip_epsilon <= 0.0 {
            return Err("clip_epsilon must be positive".into());
        }
        if self.epochs == 0 || self.minibatch == 0 || self.capacity == 0 {
            return Err("epochs, minibatch and capacity must be positive".into());
        }
        if self.learning_rate <= 0.0 || self.max_grad_norm <= 0.0 {
            return Err("learning_rate and max_grad_norm must be positive".into());
        }
        Ok(())
    }
}

/// Per-agent experience collected between updates.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RolloutBuffer {
    pub observations: Vec<Vec<f64>>,
    pub actions: Vec<Action>,
    pub log_probs: Vec<f64>,
    pub rewards: Vec<f64>,
    pub values: Vec<f64>,
    pub dones: Vec<bool>,
    capacity: usize,
}

impl RolloutBuffer {
    pub fn new(capacity: usize) -> Self {
        RolloutBuffer {
            capacity,
            ..Default::default()
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.len() >= self.capacity
    }

    pub fn push(&mut self, observation: Vec<f64>, action: Action, log_prob: f64, reward: f64, value: f64, done: bool) {
        self.observations.push(observation);
        self.actions.push(action);
        self.log_probs.push(log_prob);
        self.rewards.push(reward);
        self.values.push(value);
        self.dones.push(done);
    }

    pub fn clear(&mut self) {
        self.observations.clear();
        self.actions.clear();
        self.log_probs.clear();
        self.rewards.clear();
        self.values.clear();
        self.dones.clear();
    }
}

/// min(r·A, clip(r, 1−ε, 1+ε)·A)
pub fn clipped_surrogate(ratio: f64, advantage: f64, epsilon: f64) -> f64 {
    let unclipped = ratio * advantage;
    let clipped = ratio.clamp(1.0 - epsilon, 1.0 + epsilon) * advantage;
    unclipped.min(clipped)
}

/// Samples prepared for the surrogate loss.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingBatch {
    pub observations: Vec<Vec<f64>>,
    pub actions: Vec<Action>,
    pub old_log_probs: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl TrainingBatch {
    pub fn len(&self) -> usize {
        self.advantages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.advantages.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinibatchLoss {
    pub loss: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub mean_ratio: f64,
    pub clip_fraction: f64,
    /// Gradient over `Policy::params_flat()` order.
    pub policy_grad: Vec<f64>,
    pub value_grad: Vec<f64>,
}

/// Total PPO loss on the given samples and its analytic gradient:
/// −mean(clipped surrogate) + c_v·mean((V − R)²) − c_e·mean(entropy).
pub fn ppo_loss(
    policy: &Policy,
    value: &Mlp,
    batch: &TrainingBatch,
    indices: &[usize],
    config: &PpoConfig,
) -> Result<MinibatchLoss, RlError> {
    let n = indices.len() as f64;
    let n_net = policy.net.params().len();
    let mut policy_grad = vec![0.0; policy.param_count()];
    let mut value_grad = vec![0.0; value.params().len()];
    let (mut pol, mut val, mut ent, mut ratio_sum, mut clipped) = (0.0, 0.0, 0.0, 0.0, 0usize);

    for &i in indices {
        let obs = &batch.observations[i];
        let cache = policy.net.forward_cached(obs)?;
        let out = cache.output();
        let (logp, dlp_out, dlp_ls) = policy.log_prob_grad(out, &batch.actions[i]);
        let ratio = (logp - batch.old_log_probs[i]).exp();
        let adv = batch.advantages[i];
        let eps = config.clip_epsilon;
        let surrogate = clipped_surrogate(ratio, adv, eps);
        let d_surr_d_logp = if ratio * adv <= ratio.clamp(1.0 - eps, 1.0 + eps) * adv {
            ratio * adv
        } else {
            0.0
        };
        if (ratio - 1.0).abs() > eps {
            clipped += 1;
        }
        ratio_sum += ratio;
        pol -= surrogate / n;

        let (h, dh_out, dh_ls) = policy.entropy_grad(out);
        ent += h / n;

        let g_logp = -d_surr_d_logp / n;
        let g_h = -config.entropy_coef / n;
        let d_out: Vec<f64> = dlp_out
            .iter()
            .zip(&dh_out)
            .map(|(a, b)| g_logp * a + g_h * b)
            .collect();
        policy.net.backward(&cache, &d_out, &mut policy_grad[..n_net]);
        for (k, (a, b)) in dlp_ls.iter().zip(&dh_ls).enumerate() {
            policy_grad[n_net + k] += g_logp * a + g_h * b;
        }

        let vcache = value.forward_cached(obs)?;
        let v = vcache.output()[0];
        let err = v - batch.returns[i];
        val += err * err / n;
        value.backward(&vcache, &[2.0 * config.value_coef * err / n], &mut value_grad);
    }

    let loss = pol + config.value_coef * val - config.entropy_coef * ent;
    Ok(MinibatchLoss {
        loss,
        policy_loss: pol,
        value_loss: val,
        entropy: ent,
        mean_ratio: ratio_sum / n,
        clip_fraction: clipped as f64 / n,
        policy_grad,
        value_grad,
    })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PpoDiagnostics {
    pub samples: usize,
    pub mean_ratio: f64,
    pub clip_fraction: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    /// max |ratio − 1| over the batch before any parameter change.
    pub initial_ratio_deviation: f64,
    pub mean_return: f64,
}

fn clip_norm(grad: &mut [f64], max_norm: f64) {
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm {
        let scale = max_norm / norm;
        grad.iter_mut().for_each(|g| *g *= scale);
    }
}

/// Run the PPO update over a filled buffer and clear it.
///
/// On a non-finite loss the parameters are restored to their values before
/// the update and `NonFiniteLoss` is returned.
pub fn ppo_update<R: Rng + ?Sized>(
    policy: &mut Policy,
    value: &mut Mlp,
    buffer: &mut RolloutBuffer,
    bootstrap_value: f64,
    config: &PpoConfig,
    rng: &mut R,
) -> Result<PpoDiagnostics, RlError> {
    if buffer.is_empty() {
        return Err(RlError::EmptyBuffer);
    }
    let (mut advantages, returns) = gae(
        &buffer.rewards,
        &buffer.values,
        &buffer.dones,
        bootstrap_value,
        config.discount,
        config.gae_lambda,
    );
    let n = advantages.len();
    let mean = advantages.iter().sum::<f64>() / n as f64;
    let var = advantages.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n as f64;
    let std = var.sqrt().max(1e-8);
    advantages.iter_mut().for_each(|a| *a = (*a - mean) / std);

    let batch = TrainingBatch {
        observations: std::mem::take(&mut buffer.observations),
        actions: std::mem::take(&mut buffer.actions),
        old_log_probs: std::mem::take(&mut buffer.log_probs),
        advantages,
        returns,
    };
    buffer.clear();

    let saved = (policy.clone(), value.clone());
    let result = run_epochs(policy, value, &batch, config, rng);
    if result.is_err() {
        *policy = saved.0;
        *value = saved.1;
    }
    result
}

fn run_epochs<R: Rng + ?Sized>(
    policy: &mut Policy,
    value: &mut Mlp,
    batch: &TrainingBatch,
    config: &PpoConfig,
    rng: &mut R,
) -> Result<PpoDiagnostics, RlError> {
    let n = batch.len();
    let mut initial_dev: f64 = 0.0;
    for i in 0..n {
        let out = policy.output(&batch.observations[i])?;
        let ratio = (policy.log_prob(&out, &batch.actions[i]) - batch.old_log_probs[i]).exp();
        initial_dev = initial_dev.max((ratio - 1.0).abs());
    }

    let mut indices: Vec<usize> = (0..n).collect();
    let mut diag = PpoDiagnostics {
        samples: n,
        initial_ratio_deviation: initial_dev,
        mean_return: batch.returns.iter().sum::<f64>() / n as f64,
        ..Default::default()
    };
    let mut count = 0.0;
    for _ in 0..config.epochs {
        indices.shuffle(rng);
        for chunk in indices.chunks(config.minibatch) {
            let mut mb = ppo_loss(policy, value, batch, chunk, config)?;
            if !mb.loss.is_finite()
                || mb.policy_grad.iter().any(|g| !g.is_finite())
                || mb.value_grad.iter().any(|g| !g.is_finite())
            {
                return Err(RlError::NonFiniteLoss);
            }
            clip_norm(&mut mb.policy_grad, config.max_grad_norm);
            clip_norm(&mut mb.value_grad, config.max_grad_norm);
            let mut flat = policy.params_flat();
            for (p, g) in flat.iter_mut().zip(&mb.policy_grad) {
                *p -= config.learning_rate * g;
            }
            policy.set_params_flat(&flat);
            for (p, g) in value.params_mut().iter_mut().zip(&mb.value_grad) {
                *p -= config.learning_rate * g;
            }
            diag.mean_ratio += mb.mean_ratio;
            diag.clip_fraction += mb.clip_fraction;
            diag.policy_loss += mb.policy_loss;
            diag.value_loss += mb.value_loss;
            diag.entropy += mb.entropy;
            count += 1.0;
        }
    }
    diag.mean_ratio /= count;
    diag.clip_fraction /= count;
    diag.policy_loss /= count;
    diag.value_loss /= count;
    diag.entropy /= count;
    Ok(diag)
}
