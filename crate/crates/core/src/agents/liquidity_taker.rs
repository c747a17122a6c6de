use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::{market_features, AgentContext, Brain, ObservationScales, PendingTransition, RewardRecord, StepOutcome};
use crate::exchange::{half_cents_to_dollars, Intent};
use crate::lob::{AgentId, Side, LOT_SHARES};

pub const LT_OBS_DIM: usize = 33;

/// How the Δ in the frequency term is read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeviationReading {
    /// Step-to-step change of each deviation |f* − n/τ|.
    #[default]
    StepChange,
    /// Absolute step-to-step change of the realized frequency, |Δ(n/τ)|.
    ChangeInsideAbs,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LtParams {
    pub omega: f64,
    pub gamma_inv: f64,
    pub alpha: f64,
    pub target_buy: f64,
    pub target_sell: f64,
    /// Frequency window length in steps.
    pub tau: u64,
    /// Market order size in lots.
    pub order_size_lots: u64,
    pub reading: DeviationReading,
}

impl Default for LtParams {
    fn default() -> Self {
        LtParams {
            omega: 0.5,
            gamma_inv: 0.9,
            alpha: 0.01,
            target_buy: 0.5,
            target_sell: 0.5,
            tau: 100,
            order_size_lots: 18,
            reading: DeviationReading::StepChange,
        }
    }
}

impl LtParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.omega) {
            return Err(format!("omega must lie in [0, 1], got {}", self.omega));
        }
        if !(0.0..=1.0).contains(&self.target_buy) || !(0.0..=1.0).contains(&self.target_sell) {
            return Err("target fractions must lie in [0, 1]".into());
        }
        if self.tau == 0 {
            return Err("tau must be at least 1".into());
        }
        if self.order_size_lots == 0 {
            return Err("order size must be at least one lot".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LtAction {
    Buy,
    Sell,
    Skip,
}

impl LtAction {
    pub fn from_index(i: usize) -> Self {
        match i {
            0 => LtAction::Buy,
            1 => LtAction::Sell,
            _ => LtAction::Skip,
        }
    }
}

/// Executed market orders over the trailing window (t − τ, t].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrequencyWindow {
    tau: u64,
    events: VecDeque<(u64, Side)>,
    n_buy: u64,
    n_sell: u64,
}

impl FrequencyWindow {
    pub fn new(tau: u64) -> Self {
        FrequencyWindow {
            tau,
            events: VecDeque::new(),
            n_buy: 0,
            n_sell: 0,
        }
    }

    pub fn record(&mut self, step: u64, side: Side) {
        self.events.push_back((step, side));
        match side {
            Side::Bid => self.n_buy += 1,
            Side::Ask => self.n_sell += 1,
        }
    }

    /// Drop events that fell out of the window ending at `step`.
    pub fn advance(&mut self, step: u64) {
        while let Some(&(s, side)) = self.events.front() {
            if s + self.tau > step {
                break;
            }
            self.events.pop_front();
            match side {
                Side::Bid => self.n_buy -= 1,
                Side::Ask => self.n_sell -= 1,
            }
        }
    }

    pub fn counts(&self) -> (u64, u64) {
        (self.n_buy, self.n_sell)
    }

    pub fn frequencies(&self) -> (f64, f64) {
        (self.n_buy as f64 / self.tau as f64, self.n_sell as f64 / self.tau as f64)
    }
}

/// Frequency term before the (1−ω)/2 factor.
pub fn lt_frequency_penalty(
    reading: DeviationReading,
    targets: (f64, f64),
    freq_now: (f64, f64),
    freq_prev: (f64, f64),
) -> f64 {
    match reading {
        DeviationReading::StepChange => {
            let dev = |target: f64, f: f64| (target - f).abs();
            (dev(targets.0, freq_now.0) - dev(targets.0, freq_prev.0))
                + (dev(targets.1, freq_now.1) - dev(targets.1, freq_prev.1))
        }
        DeviationReading::ChangeInsideAbs => {
            (freq_now.0 - freq_prev.0).abs() + (freq_now.1 - freq_prev.1).abs()
        }
    }
}

/// ω·α·(ΔPnL − γ·|ΔPnL_inv|) − ((1−ω)/2)·((dev_buy_t − dev_buy_{t−1}) + (dev_sell_t − dev_sell_{t−1}))
pub fn lt_reward(
    pnl_delta: f64,
    pnl_inventory_delta: f64,
    dev_buy: f64,
    dev_buy_prev: f64,
    dev_sell: f64,
    dev_sell_prev: f64,
    params: &LtParams,
) -> f64 {
    params.omega * params.alpha * (pnl_delta - params.gamma_inv * pnl_inventory_delta.abs())
        - (1.0 - params.omega) / 2.0 * ((dev_buy - dev_buy_prev) + (dev_sell - dev_sell_prev))
}

#[derive(Debug, Clone)]
pub struct LiquidityTaker {
    pub id: AgentId,
    pub params: LtParams,
    pub scales: ObservationScales,
    pub brain: Brain,
    pub window: FrequencyWindow,
    prev_freq: (f64, f64),
    last_action: Option<LtAction>,
}

impl LiquidityTaker {
    pub fn new(id: AgentId, params: LtParams, scales: ObservationScales, brain: Brain) -> Self {
        LiquidityTaker {
            id,
            window: FrequencyWindow::new(params.tau),
            params,
            scales,
            brain,
            prev_freq: (0.0, 0.0),
            last_action: None,
        }
    }

    /// Override the target fractions (informed-trader schedule).
    pub fn set_targets(&mut self, buy: f64, sell: f64) {
        self.params.target_buy = buy;
        self.params.target_sell = sell;
    }

    pub fn observation(&self, ctx: &AgentContext<'_>) -> Vec<f64> {
        let mut obs = Vec::with_capacity(LT_OBS_DIM);
        market_features(ctx.market, &self.scales, &mut obs);
        obs.push(ctx.account.inventory as f64 / self.scales.inventory_shares);
        obs.push(ctx.account.buying_power() as f64 / ctx.account.initial_cash.max(1) as f64);
        obs.extend([
            self.params.omega,
            self.params.gamma_inv,
            self.params.alpha,
            self.params.target_buy,
            self.params.target_sell,
            self.params.tau as f64 / self.scales.tau_steps,
        ]);
        debug_assert_eq!(obs.len(), LT_OBS_DIM);
        obs
    }

    pub fn act(&mut self, ctx: &AgentContext<'_>) -> Option<Intent> {
        let mid_x2 = ctx.market.mid_x2?;
        let obs = self.observation(ctx);
        let (action, log_prob, value, _) = self.brain.decide(&obs).ok()?;
        let choice = LtAction::from_index(action.discrete().expect("categorical head"));
        self.last_action = Some(choice);
        self.brain.set_pending(PendingTransition {
            observation: obs,
            action,
            log_prob,
            value,
            value_x2_before: ctx.account.value_x2(mid_x2),
            mid_x2_before: mid_x2,
            inventory_before: ctx.account.inventory,
        });
        let quantity = self.params.order_size_lots * LOT_SHARES;
        match choice {
            LtAction::Buy => Some(Intent::Market { side: Side::Bid, quantity }),
            LtAction::Sell => Some(Intent::Market { side: Side::Ask, quantity }),
            LtAction::Skip => None,
        }
    }

    pub fn observe(&mut self, outcome: &StepOutcome<'_>) -> Option<RewardRecord> {
        let step = outcome.market.step;
        for side in outcome.executed {
            self.window.record(step, *side);
        }
        self.window.advance(step);
        let freq = self.window.frequencies();
        let prev = std::mem::replace(&mut self.prev_freq, freq);

        let pending = self.brain.take_pending()?;
        let mid_x2 = outcome.market.last_mid_x2;
        let pnl = half_cents_to_dollars(outcome.account.value_x2(mid_x2) - pending.value_x2_before);
        let pnl_inv = half_cents_to_dollars(pending.inventory_before * (mid_x2 - pending.mid_x2_before));
        let targets = (self.params.target_buy, self.params.target_sell);
        let penalty = lt_frequency_penalty(self.params.reading, targets, freq, prev);
        let reward = self.params.omega * self.params.alpha * (pnl - self.params.gamma_inv * pnl_inv.abs())
            - (1.0 - self.params.omega) / 2.0 * penalty;
        self.brain.record(pending, reward);
        Some(RewardRecord {
            step,
            agent_id: self.id,
            reward,
            pnl_delta: pnl,
            pnl_inventory_delta: pnl_inv,
            aux: penalty,
            action: match self.last_action {
                Some(LtAction::Buy) => "buy",
                Some(LtAction::Sell) => "sell",
                _ => "skip",
            }
            .to_string(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::testutil::{market_from_book, two_sided_book};
    use crate::exchange::Account;
    use crate::rl::{Mlp, Policy, PpoConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn pure_pnl_when_omega_is_one() {
        let p = LtParams {
            omega: 1.0,
            ..Default::default()
        };
        let r = lt_reward(50.0, -10.0, 0.9, 0.1, 0.4, 0.0, &p);
        assert!((r - 0.01 * (50.0 - 0.9 * 10.0)).abs() < 1e-12);
    }

    #[test]
    fn unchanged_deviation_gives_zero() {
        let p = LtParams {
            omega: 0.0,
            ..Default::default()
        };
        assert_eq!(lt_reward(123.0, 4.0, 0.3, 0.3, 0.2, 0.2, &p), 0.0);
    }

    #[test]
    fn improving_buy_deviation_is_rewarded() {
        let p = LtParams {
            omega: 0.5,
            ..Default::default()
        };
        let r = lt_reward(0.0, 0.0, 0.1, 0.3, 0.25, 0.25, &p);
        assert!((r - 0.05).abs() < 1e-12);
    }

    #[test]
    fn penalty_readings() {
        // targets (0.5, 0.5); buy frequency 0.2 → 0.4, sell 0.1 → 0.1
        let step = lt_frequency_penalty(DeviationReading::StepChange, (0.5, 0.5), (0.4, 0.1), (0.2, 0.1));
        assert!((step - (0.1 - 0.3)).abs() < 1e-12);
        let inside = lt_frequency_penalty(DeviationReading::ChangeInsideAbs, (0.5, 0.5), (0.4, 0.1), (0.2, 0.1));
        assert!((inside - 0.2).abs() < 1e-12);
    }

    #[test]
    fn window_counts_trailing_tau_steps() {
        let mut w = FrequencyWindow::new(3);
        w.record(0, Side::Bid);
        w.record(1, Side::Ask);
        w.record(2, Side::Bid);
        w.advance(2);
        assert_eq!(w.counts(), (2, 1));
        w.advance(3); // window (0, 3]
        assert_eq!(w.counts(), (1, 1));
        w.advance(5);
        assert_eq!(w.counts(), (0, 0));
    }

    fn taker(logits: [f64; 3], order_size_lots: u64) -> LiquidityTaker {
        let rng = ChaCha8Rng::seed_from_u64(0);
        let mut net = Mlp::zeros(&[LT_OBS_DIM, 4, 3]);
        let n = net.params().len();
        net.params_mut()[n - 3..].copy_from_slice(&logits);
        let policy = Policy {
            net,
            head: crate::rl::HeadKind::Categorical { n: 3 },
            log_std: vec![],
        };
        let mut brain = Brain::new(policy, Mlp::zeros(&[LT_OBS_DIM, 4, 1]), PpoConfig::default(), rng);
        brain.deterministic = true;
        let params = LtParams {
            order_size_lots,
            ..Default::default()
        };
        LiquidityTaker::new(3, params, ObservationScales::default(), brain)
    }

    #[test]
    fn buy_sends_market_order_of_order_size_lots() {
        let book = two_sided_book();
        let market = market_from_book(&book, 0, vec![]);
        let account = Account::new(3, 100_000_000, 0, 10_000);
        let ctx = AgentContext {
            market: &market,
            account: &account,
            open_orders: &[],
        };
        let mut buyer = taker([5.0, 0.0, 0.0], 18);
        assert_eq!(buyer.observation(&ctx).len(), LT_OBS_DIM);
        assert_eq!(buyer.act(&ctx), Some(Intent::Market { side: Side::Bid, quantity: 1_800 }));
        let mut skipper = taker([0.0, 0.0, 5.0], 18);
        assert_eq!(skipper.act(&ctx), None);
    }
}
