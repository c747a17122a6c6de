//! PPO loss gradients against central differences, and a bandit sanity run.

use cdasim::rl::{ppo_loss, ppo_update, Action, Mlp, Policy, PpoConfig, RolloutBuffer, TrainingBatch};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn randomize(params: &mut [f64], scale: f64, rng: &mut ChaCha8Rng) {
    for p in params {
        let z: f64 = StandardNormal.sample(rng);
        *p = scale * z;
    }
}

/// A random network, head and batch whose old log-probs sit near the current ones,
/// so samples land on both sides of the clip range.
fn random_case(seed: u64) -> (Policy, Mlp, TrainingBatch, PpoConfig) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let obs_dim = rng.random_range(2..6);
    let hidden: Vec<usize> = (0..rng.random_range(1..3)).map(|_| rng.random_range(3..9)).collect();
    let mut policy = if seed.is_multiple_of(2) {
        Policy::gaussian(&hidden, obs_dim, rng.random_range(1..4), -0.3, &mut rng)
    } else {
        Policy::categorical(&hidden, obs_dim, rng.random_range(2..5), &mut rng)
    };
    let mut flat = policy.params_flat();
    randomize(&mut flat, 0.5, &mut rng);
    for ls in flat.iter_mut().skip(policy.net.params().len()) {
        *ls = -0.5 + 0.3 * *ls;
    }
    policy.set_params_flat(&flat);
    let mut vsizes = vec![obs_dim];
    vsizes.extend(&hidden);
    vsizes.push(1);
    let mut value = Mlp::zeros(&vsizes);
    randomize(value.params_mut(), 0.5, &mut rng);

    let n = 16;
    let mut batch = TrainingBatch {
        observations: Vec::new(),
        actions: Vec::new(),
        old_log_probs: Vec::new(),
        advantages: Vec::new(),
        returns: Vec::new(),
    };
    for _ in 0..n {
        let obs: Vec<f64> = (0..obs_dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let out = policy.output(&obs).unwrap();
        let (action, lp) = policy.sample(&out, &mut rng);
        batch.observations.push(obs);
        batch.actions.push(action);
        batch.old_log_probs.push(lp + rng.random_range(-0.3..0.3));
        batch.advantages.push(StandardNormal.sample(&mut rng));
        batch.returns.push(StandardNormal.sample(&mut rng));
    }
    let config = PpoConfig {
        entropy_coef: 0.05,
        ..PpoConfig::default()
    };
    (policy, value, batch, config)
}

fn rel_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(b.iter().map(|x| x * x).sum::<f64>().sqrt());
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

/// Worst relative error between analytic and numeric gradients over 20 cases.
pub fn worst_gradient_error() -> f64 {
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for seed in 0..20 {
        let (policy, value, batch, config) = random_case(seed);
        let idx: Vec<usize> = (0..batch.len()).collect();
        let analytic = ppo_loss(&policy, &value, &batch, &idx, &config).unwrap();

        let base = policy.params_flat();
        let mut numeric = vec![0.0; base.len()];
        for k in 0..base.len() {
            let mut p = policy.clone();
            let mut f = base.clone();
            f[k] = base[k] + h;
            p.set_params_flat(&f);
            let up = ppo_loss(&p, &value, &batch, &idx, &config).unwrap().loss;
            f[k] = base[k] - h;
            p.set_params_flat(&f);
            let down = ppo_loss(&p, &value, &batch, &idx, &config).unwrap().loss;
            numeric[k] = (up - down) / (2.0 * h);
        }
        worst = worst.max(rel_error(&analytic.policy_grad, &numeric));

        let vbase = value.params().to_vec();
        let mut vnum = vec![0.0; vbase.len()];
        for k in 0..vbase.len() {
            let mut v = value.clone();
            v.params_mut()[k] = vbase[k] + h;
            let up = ppo_loss(&policy, &v, &batch, &idx, &config).unwrap().loss;
            v.params_mut()[k] = vbase[k] - h;
            let down = ppo_loss(&policy, &v, &batch, &idx, &config).unwrap().loss;
            vnum[k] = (up - down) / (2.0 * h);
        }
        worst = worst.max(rel_error(&analytic.value_grad, &vnum));
    }
    worst
}

/// Updates until the best arm's probability exceeds 0.9, or None after 50.
pub fn bandit_updates_to_converge(seed: u64) -> Option<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut policy = Policy::categorical(&[8], 1, 4, &mut rng);
    let mut value = Mlp::random(&[1, 8, 1], 1.0, &mut rng);
    let config = PpoConfig {
        learning_rate: 0.1,
        capacity: 64,
        minibatch: 32,
        entropy_coef: 0.0,
        ..PpoConfig::default()
    };
    let payout = [0.1, 0.3, 1.0, 0.5];
    let obs = vec![1.0];
    let mut buffer = RolloutBuffer::new(config.capacity);
    for update in 1..=50 {
        while !buffer.is_full() {
            let out = policy.output(&obs).unwrap();
            let (action, lp) = policy.sample(&out, &mut rng);
            let arm = action.discrete().unwrap();
            let noise: f64 = StandardNormal.sample(&mut rng);
            let v = value.forward(&obs).unwrap()[0];
            buffer.push(obs.clone(), Action::Discrete(arm), lp, payout[arm] + 0.1 * noise, v, true);
        }
        ppo_update(&mut policy, &mut value, &mut buffer, 0.0, &config, &mut rng).unwrap();
        let p = policy.probabilities(&policy.output(&obs).unwrap());
        if p[2] > 0.9 {
            return Some(update);
        }
    }
    None
}

