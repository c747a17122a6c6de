use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{Mlp, RlError};

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HeadKind {
    /// Diagonal Gaussian over pre-squash actions with state-independent log-std.
    Gaussian { dim: usize },
    Categorical { n: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Action {
    /// Raw (pre-tanh) Gaussian sample.
    Continuous(Vec<f64>),
    Discrete(usize),
}

impl Action {
    pub fn continuous(&self) -> Option<&[f64]> {
        match self {
            Action::Continuous(v) => Some(v),
            Action::Discrete(_) => None,
        }
    }

    pub fn discrete(&self) -> Option<usize> {
        match self {
            Action::Discrete(i) => Some(*i),
            Action::Continuous(_) => None,
        }
    }
}

/// Policy network plus its action head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    pub net: Mlp,
    pub head: HeadKind,
    /// Per-dimension log standard deviation; empty for categorical heads.
    pub log_std: Vec<f64>,
}

/// ln(1 - tanh(u)^2), computed without cancellation for large |u|.
fn log_tanh_jacobian(u: f64) -> f64 {
    let softplus = |x: f64| if x > 30.0 { x } else { x.exp().ln_1p() };
    2.0 * (std::f64::consts::LN_2 - u - softplus(-2.0 * u))
}

fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    logits.iter().map(|z| z - lse).collect()
}

impl Policy {
    pub fn gaussian<R: Rng + ?Sized>(hidden: &[usize], obs_dim: usize, dim: usize, init_log_std: f64, rng: &mut R) -> Self {
        let sizes: Vec<usize> = std::iter::once(obs_dim)
            .chain(hidden.iter().copied())
            .chain(std::iter::once(dim))
            .collect();
        Policy {
            net: Mlp::random(&sizes, 0.01, rng),
            head: HeadKind::Gaussian { dim },
            log_std: vec![init_log_std; dim],
        }
    }

    pub fn categorical<R: Rng + ?Sized>(hidden: &[usize], obs_dim: usize, n: usize, rng: &mut R) -> Self {
        let sizes: Vec<usize> = std::iter::once(obs_dim)
            .chain(hidden.iter().copied())
            .chain(std::iter::once(n))
            .collect();
        Policy {
            net: Mlp::random(&sizes, 0.01, rng),
            head: HeadKind::Categorical { n },
            log_std: Vec::new(),
        }
    }

    pub fn output(&self, observation: &[f64]) -> Result<Vec<f64>, RlError> {
        self.net.forward(observation)
    }

    /// Log-std after clamping into [LOG_STD_MIN, LOG_STD_MAX].
    pub fn effective_log_std(&self, i: usize) -> f64 {
        self.log_std[i].clamp(LOG_STD_MIN, LOG_STD_MAX)
    }

    pub fn probabilities(&self, logits: &[f64]) -> Vec<f64> {
        log_softmax(logits).into_iter().map(f64::exp).collect()
    }

    /// Draw an action and its exact log-probability.
    pub fn sample<R: Rng + ?Sized>(&self, out: &[f64], rng: &mut R) -> (Action, f64) {
        let action = match self.head {
            HeadKind::Gaussian { dim } => Action::Continuous(
                (0..dim)
                    .map(|i| {
                        let z: f64 = StandardNormal.sample(rng);
                        out[i] + self.effective_log_std(i).exp() * z
                    })
                    .collect(),
            ),
            HeadKind::Categorical { .. } => {
                let probs = self.probabilities(out);
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut pick = probs.len() - 1;
                for (i, p) in probs.iter().enumerate() {
                    acc += p;
                    if u < acc {
                        pick = i;
                        break;
                    }
                }
                Action::Discrete(pick)
            }
        };
        let lp = self.log_prob(out, &action);
        (action, lp)
    }

    /// Noise-free action: the Gaussian mean or the most probable class.
    pub fn mean_action(&self, out: &[f64]) -> Action {
        match self.head {
            HeadKind::Gaussian { dim } => Action::Continuous(out[..dim].to_vec()),
            HeadKind::Categorical { .. } => {
                let mut best = 0;
                for (i, v) in out.iter().enumerate() {
                    if *v > out[best] {
                        best = i;
                    }
                }
                Action::Discrete(best)
            }
        }
    }

    /// Log-density of the squashed action (tanh change of variables included)
    /// or log-probability of the class.
    pub fn log_prob(&self, out: &[f64], action: &Action) -> f64 {
        self.log_prob_grad(out, action).0
    }

    /// Returns (log_prob, d/d(net output), d/d(log_std)).
    pub fn log_prob_grad(&self, out: &[f64], action: &Action) -> (f64, Vec<f64>, Vec<f64>) {
        match (self.head, action) {
            (HeadKind::Gaussian { dim }, Action::Continuous(u)) => {
                let mut lp = 0.0;
                let mut d_out = vec![0.0; dim];
                let mut d_ls = vec![0.0; dim];
                for i in 0..dim {
                    let ls = self.effective_log_std(i);
                    let sigma = ls.exp();
                    let z = (u[i] - out[i]) / sigma;
                    lp += -0.5 * z * z - ls - 0.5 * (2.0 * PI).ln() - log_tanh_jacobian(u[i]);
                    d_out[i] = z / sigma;
                    if (LOG_STD_MIN..=LOG_STD_MAX).contains(&self.log_std[i]) {
                        d_ls[i] = z * z - 1.0;
                    }
                }
                (lp, d_out, d_ls)
            }
            (HeadKind::Categorical { .. }, Action::Discrete(a)) => {
                let logp = log_softmax(out);
                let d_out = logp
                    .iter()
                    .enumerate()
                    .map(|(j, lp)| if j == *a { 1.0 } else { 0.0 } - lp.exp())
                    .collect();
                (logp[*a], d_out, Vec::new())
            }
            (head, action) => panic!("action {action:?} does not match head {head:?}"),
        }
    }

    /// Entropy and its gradient (d/d(net output), d/d(log_std)). For the
    /// Gaussian head this is the entropy of the pre-squash distribution.
    pub fn entropy_grad(&self, out: &[f64]) -> (f64, Vec<f64>, Vec<f64>) {
        match self.head {
            HeadKind::Gaussian { dim } => {
                let c = 0.5 * (2.0 * PI * std::f64::consts::E).ln();
                let h = (0..dim).map(|i| self.effective_log_std(i) + c).sum();
                let d_ls = (0..dim)
                    .map(|i| {
                        if (LOG_STD_MIN..=LOG_STD_MAX).contains(&self.log_std[i]) {
                            1.0
                        } else {
                            0.0
                        }
                    })
                    .collect();
                (h, vec![0.0; dim], d_ls)
            }
            HeadKind::Categorical { .. } => {
                let logp = log_softmax(out);
                let h = -logp.iter().map(|lp| lp.exp() * lp).sum::<f64>();
                let d_out = logp.iter().map(|lp| -lp.exp() * (lp + h)).collect();
                (h, d_out, Vec::new())
            }
        }
    }

    pub fn param_count(&self) -> usize {
        self.net.params().len() + self.log_std.len()
    }

    /// Network parameters followed by log-std.
    pub fn params_flat(&self) -> Vec<f64> {
        let mut v = self.net.params().to_vec();
        v.extend_from_slice(&self.log_std);
        v
    }

    pub fn set_params_flat(&mut self, flat: &[f64]) {
        let n = self.net.params().len();
        self.net.params_mut().copy_from_slice(&flat[..n]);
        self.log_std.copy_from_slice(&flat[n..]);
    }
}
