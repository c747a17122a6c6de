use serde::{Deserialize, Serialize};

use super::{market_features, AgentContext, AgentError, Brain, ObservationScales, PendingTransition, RewardRecord, StepOutcome};
use crate::exchange::{half_cents_to_dollars, Intent};
use crate::lob::{AgentId, BookDepth, Shares, Side, Ticks, DEPTH_LEVELS, LOT_SHARES};

pub const MM_OBS_DIM: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MmParams {
    /// Weight of the PnL term.
    pub omega: f64,
    /// Inventory risk sensitivity.
    pub gamma_inv: f64,
    /// PnL normalizer.
    pub alpha: f64,
    /// Target liquidity provision fraction.
    pub target_provision: f64,
    pub eps_s_range: (f64, f64),
    pub eps_a_range: (f64, f64),
}

impl Default for MmParams {
    fn default() -> Self {
        MmParams {
            omega: 0.5,
            gamma_inv: 0.15,
            alpha: 0.09,
            target_provision: 0.5,
            eps_s_range: (-1.0, 1.0),
            eps_a_range: (-1.0, 1.0),
        }
    }
}

impl MmParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.omega) {
            return Err(format!("omega must lie in [0, 1], got {}", self.omega));
        }
        let (lo, hi) = self.eps_s_range;
        if lo > hi || hi <= -1.0 {
            return Err(format!("eps_s range [{lo}, {hi}] must contain a value above -1"));
        }
        if self.eps_a_range.0 > self.eps_a_range.1 {
            return Err("eps_a range is reversed".into());
        }
        Ok(())
    }
}

/// Decoded market-maker action.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MmAction {
    /// Fraction of buying power committed to the quotes.
    pub u: f64,
    pub eps_s: f64,
    pub eps_a: f64,
}

/// Map an unbounded value into [lo, hi] through tanh.
pub fn squash_to_range(raw: f64, (lo, hi): (f64, f64)) -> f64 {
    lo + (raw.tanh() + 1.0) * 0.5 * (hi - lo)
}

/// Unrounded quote prices:
/// p_ask = mid + s·((1+ε_s)/2 + ε_a), p_bid = mid − s·((1+ε_s)/2 − ε_a).
pub fn quote_prices(mid: Option<f64>, spread: f64, eps_s: f64, eps_a: f64) -> Result<(f64, f64), AgentError> {
    let mid = mid.filter(|m| m.is_finite()).ok_or(AgentError::UndefinedMid)?;
    if !(spread > 0.0) {
        return Err(AgentError::NonPositiveSpread(spread));
    }
    let half = (1.0 + eps_s) / 2.0;
    Ok((mid - spread * (half - eps_a), mid + spread * (half + eps_a)))
}

/// Round quotes outward to whole ticks; a collapsed or crossed pair is widened
/// by one tick on each side. Bids never go below one tick.
pub fn round_quotes(bid: f64, ask: f64) -> (Ticks, Ticks) {
    const SLACK: f64 = 1e-9;
    let mut b = (bid + SLACK).floor() as Ticks;
    let mut a = (ask - SLACK).ceil() as Ticks;
    if b >= a {
        b -= 1;
        a += 1;
    }
    if b < 1 {
        b = 1;
        a = a.max(2);
    }
    (b, a)
}

/// Per-side quote size in shares: floor(u·BP / (2·mid)) rounded down to lots.
pub fn mm_order_size(u: f64, buying_power_cents: i64, mid_ticks: f64) -> Shares {
    if u <= 0.0 || buying_power_cents <= 0 || mid_ticks <= 0.0 {
        return 0;
    }
    let shares = (u * buying_power_cents as f64 / (2.0 * mid_ticks)).floor() as Shares;
    shares / LOT_SHARES * LOT_SHARES
}

#[derive(Debug, Clone, PartialEq)]
pub struct LiquidityProvision {
    /// P^i per market maker, in the order of the requested ids.
    pub shares: Vec<f64>,
    /// Set when no market-maker shares rest in the top levels; all P^i are 0.
    pub no_mm_liquidity: bool,
}

/// P^i = Σ_l m_l^(i) / Σ_j Σ_l m_l^(j) over the top five levels of both sides.
pub fn liquidity_provision(depth: &BookDepth, mm_ids: &[AgentId]) -> LiquidityProvision {
    let per_agent: Vec<Shares> = mm_ids
        .iter()
        .map(|id| depth.agent_level_shares(*id).iter().take(DEPTH_LEVELS).sum())
        .collect();
    let total: Shares = per_agent.iter().sum();
    if total == 0 {
        return LiquidityProvision {
            shares: vec![0.0; mm_ids.len()],
            no_mm_liquidity: true,
        };
    }
    LiquidityProvision {
        shares: per_agent.iter().map(|s| *s as f64 / total as f64).collect(),
        no_mm_liquidity: false,
    }
}

/// ω·α·(ΔPnL − γ·|ΔPnL_inv|) − (1−ω)·|P − P*|
pub fn mm_reward(pnl_delta: f64, pnl_inventory_delta: f64, provision: f64, params: &MmParams) -> f64 {
    params.omega * params.alpha * (pnl_delta - params.gamma_inv * pnl_inventory_delta.abs())
        - (1.0 - params.omega) * (provision - params.target_provision).abs()
}

#[derive(Debug, Clone)]
pub struct MarketMaker {
    pub id: AgentId,
    pub params: MmParams,
    pub scales: ObservationScales,
    pub brain: Brain,
    pub last_action: Option<MmAction>,
}

impl MarketMaker {
    pub fn new(id: AgentId, params: MmParams, scales: ObservationScales, brain: Brain) -> Self {
        MarketMaker {
            id,
            params,
            scales,
            brain,
            last_action: None,
        }
    }

    pub fn observation(&self, ctx: &AgentContext<'_>) -> Vec<f64> {
        let mut obs = Vec::with_capacity(MM_OBS_DIM);
        market_features(ctx.market, &self.scales, &mut obs);
        obs.push(self.provision(&ctx.market.depth, &ctx.market.mm_ids));
        obs.push(ctx.account.inventory as f64 / self.scales.inventory_shares);
        obs.push(ctx.account.buying_power() as f64 / ctx.account.initial_cash.max(1) as f64);
        obs.extend([
            self.params.omega,
            self.params.gamma_inv,
            self.params.alpha,
            self.params.target_provision,
        ]);
        debug_assert_eq!(obs.len(), MM_OBS_DIM);
        obs
    }

    fn provision(&self, depth: &BookDepth, mm_ids: &[AgentId]) -> f64 {
        let lp = liquidity_provision(depth, mm_ids);
        mm_ids
            .iter()
            .position(|id| *id == self.id)
            .map_or(0.0, |i| lp.shares[i])
    }

    /// Decode raw policy output into the configured action ranges.
    pub fn decode(&self, raw: &[f64]) -> MmAction {
        MmAction {
            u: squash_to_range(raw[0], (0.0, 1.0)),
            eps_s: squash_to_range(raw[1], self.params.eps_s_range),
            eps_a: squash_to_range(raw[2], self.params.eps_a_range),
        }
    }

    /// Noise-free action for an observation, used when probing policies.
    pub fn mean_action(&self, observation: &[f64]) -> Option<MmAction> {
        let out = self.brain.policy.output(observation).ok()?;
        Some(self.decode(&out))
    }

    /// Cancel-replace quoting. Skips the step when the mid is undefined.
    pub fn act(&mut self, ctx: &AgentContext<'_>) -> Vec<Intent> {
        let market = ctx.market;
        let (Some(mid_x2), Some(spread)) = (market.mid_x2, market.spread()) else {
            return Vec::new();
        };
        let obs = self.observation(ctx);
        let Ok((action, log_prob, value, _)) = self.brain.decide(&obs) else {
            return Vec::new();
        };
        let decoded = self.decode(action.continuous().expect("gaussian head"));
        self.last_action = Some(decoded);
        let account = ctx.account;
        self.brain.set_pending(PendingTransition {
            observation: obs,
            action: action.clone(),
            log_prob,
            value,
            value_x2_before: account.value_x2(mid_x2),
            mid_x2_before: mid_x2,
            inventory_before: account.inventory,
        });

        let mut intents: Vec<Intent> = ctx
            .open_orders
            .iter()
            .map(|(order_id, _)| Intent::Cancel { order_id: *order_id })
            .collect();
        let mid = mid_x2 as f64 / 2.0;
        // Own reservations are released by the cancels above.
        let size = mm_order_size(decoded.u, account.cash, mid);
        if size >= LOT_SHARES {
            let (bid, ask) = quote_prices(Some(mid), spread as f64, decoded.eps_s, decoded.eps_a)
                .expect("mid and spread are defined");
            let (bid, ask) = round_quotes(bid, ask);
            let room = account.inventory + account.short_bound as i64;
            let ask_size = size.min((room.max(0) as Shares) / LOT_SHARES * LOT_SHARES);
            intents.push(Intent::Limit {
                side: Side::Bid,
                price: bid,
                quantity: size,
            });
            if ask_size > 0 {
                intents.push(Intent::Limit {
                    side: Side::Ask,
                    price: ask,
                    quantity: ask_size,
                });
            }
        }
        intents
    }

    pub fn observe(&mut self, outcome: &StepOutcome<'_>) -> Option<RewardRecord> {
        let pending = self.brain.take_pending()?;
        let mid_x2 = outcome.market.last_mid_x2;
        let pnl = half_cents_to_dollars(outcome.account.value_x2(mid_x2) - pending.value_x2_before);
        let pnl_inv = half_cents_to_dollars(pending.inventory_before * (mid_x2 - pending.mid_x2_before));
        let provision = self.provision(&outcome.market.depth, &outcome.market.mm_ids);
        let reward = mm_reward(pnl, pnl_inv, provision, &self.params);
        self.brain.record(pending, reward);
        let a = self.last_action.unwrap_or(MmAction { u: 0.0, eps_s: 0.0, eps_a: 0.0 });
        Some(RewardRecord {
            step: outcome.market.step,
            agent_id: self.id,
            reward,
            pnl_delta: pnl,
            pnl_inventory_delta: pnl_inv,
            aux: provision,
            action: format!("u={:.4} es={:.4} ea={:.4}", a.u, a.eps_s, a.eps_a),
        })
    }
}
