//! Trading agents: RL market makers and liquidity takers, zero-intelligence
//! traders, the scripted flash-sale seller and the informed-trader schedule.

mod brain;
mod flash;
mod liquidity_taker;
mod market_maker;
mod zero_intelligence;

pub use brain::{Brain, PendingTransition};
pub use flash::{flash_sale_step, FlashSaleAgent, FlashSchedule, InformedSchedule};
pub use liquidity_taker::{
    lt_frequency_penalty, lt_reward, DeviationReading, FrequencyWindow, LiquidityTaker, LtAction,
    LtParams, LT_OBS_DIM,
};
pub use market_maker::{
    liquidity_provision, mm_order_size, mm_reward, quote_prices, round_quotes, squash_to_range,
    LiquidityProvision, MarketMaker, MmAction, MmParams, MM_OBS_DIM,
};
pub use zero_intelligence::{ZeroIntelligence, ZiParams};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exchange::{Account, Intent};
use crate::lob::{AgentId, BookDepth, OrderId, Side, Ticks, DEPTH_LEVELS};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AgentError {
    #[error("mid price is undefined")]
    UndefinedMid,
    #[error("spread must be positive, got {0}")]
    NonPositiveSpread(f64),
}

/// Market data broadcast to every agent at a step boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketState {
    pub step: u64,
    pub depth: BookDepth,
    /// Twice the current mid in ticks; `None` when a side is empty.
    pub mid_x2: Option<i64>,
    /// Last defined doubled mid (the opening mid before any is defined).
    pub last_mid_x2: i64,
    /// Mid prices in ticks for steps t−4..t, oldest first, undefined mids carried forward.
    pub mid_history: [f64; 5],
    pub initial_price: Ticks,
    pub mm_ids: Vec<AgentId>,
}

impl MarketState {
    pub fn mid(&self) -> Option<f64> {
        self.mid_x2.map(|m| m as f64 / 2.0)
    }

    pub fn spread(&self) -> Option<Ticks> {
        Some(self.depth.best(Side::Ask)? - self.depth.best(Side::Bid)?)
    }
}

/// What an agent sees when it is asked to act.
#[derive(Debug, Clone, Copy)]
pub struct AgentContext<'a> {
    pub market: &'a MarketState,
    pub account: &'a Account,
    /// This agent's open orders, oldest first.
    pub open_orders: &'a [(OrderId, Side)],
}

/// Post-matching information handed back at the end of a step.
#[derive(Debug, Clone, Copy)]
pub struct StepOutcome<'a> {
    pub market: &'a MarketState,
    pub account: &'a Account,
    /// Sides of this agent's market orders that executed (at least partly) this step.
    pub executed: &'a [Side],
}

/// Normalization constants for observation vectors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ObservationScales {
    pub depth_shares: f64,
    pub inventory_shares: f64,
    pub tau_steps: f64,
}

impl Default for ObservationScales {
    fn default() -> Self {
        ObservationScales {
            depth_shares: 1_000.0,
            inventory_shares: 10_000.0,
            tau_steps: 100.0,
        }
    }
}

/// Shared market block of every RL observation: 5 normalized mids, then
/// top-5 bid prices, bid quantities, ask prices, ask quantities. Prices are
/// percent offsets from the current mid; missing levels encode as (0, 0).
pub(crate) fn market_features(market: &MarketState, scales: &ObservationScales, out: &mut Vec<f64>) {
    let initial = market.initial_price as f64;
    out.extend(market.mid_history.iter().map(|m| m / initial));
    let mid = market.last_mid_x2 as f64 / 2.0;
    for side in [Side::Bid, Side::Ask] {
        let levels = market.depth.side(side);
        for l in 0..DEPTH_LEVELS {
            out.push(levels.get(l).map_or(0.0, |lv| (lv.price as f64 / mid - 1.0) * 100.0));
        }
        for l in 0..DEPTH_LEVELS {
            out.push(levels.get(l).map_or(0.0, |lv| lv.quantity as f64 / scales.depth_shares));
        }
    }
}

/// Per-step reward line for rewards.csv.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardRecord {
    pub step: u64,
    pub agent_id: AgentId,
    pub reward: f64,
    pub pnl_delta: f64,
    pub pnl_inventory_delta: f64,
    /// MM: liquidity provision P; LT: frequency penalty term.
    pub aux: f64,
    /// Decoded action, e.g. "u=0.41 es=0.10 ea=-0.02" or "buy".
    pub action: String,
}

/// Every agent class behind one dispatch point.
#[derive(Debug, Clone)]
pub enum Agent {
    MarketMaker(MarketMaker),
    LiquidityTaker(LiquidityTaker),
    ZeroIntelligence(ZeroIntelligence),
    FlashSale(FlashSaleAgent),
}

impl Agent {
    pub fn id(&self) -> AgentId {
        match self {
            Agent::MarketMaker(a) => a.id,
            Agent::LiquidityTaker(a) => a.id,
            Agent::ZeroIntelligence(a) => a.id,
            Agent::FlashSale(a) => a.id,
        }
    }

    pub fn class(&self) -> &'static str {
        match self {
            Agent::MarketMaker(_) => "mm",
            Agent::LiquidityTaker(_) => "lt",
            Agent::ZeroIntelligence(_) => "zi",
            Agent::FlashSale(_) => "flash",
        }
    }

    pub fn act(&mut self, ctx: &AgentContext<'_>) -> Vec<Intent> {
        match self {
            Agent::MarketMaker(a) => a.act(ctx),
            Agent::LiquidityTaker(a) => a.act(ctx).into_iter().collect(),
            Agent::ZeroIntelligence(a) => a.act(ctx).into_iter().collect(),
            Agent::FlashSale(a) => a.act(ctx.market.step).into_iter().collect(),
        }
    }

    pub fn observe(&mut self, outcome: &StepOutcome<'_>) -> Option<RewardRecord> {
        match self {
            Agent::MarketMaker(a) => a.observe(outcome),
            Agent::LiquidityTaker(a) => a.observe(outcome),
            Agent::ZeroIntelligence(_) | Agent::FlashSale(_) => None,
        }
    }

    pub fn brain(&self) -> Option<&Brain> {
        match self {
            Agent::MarketMaker(a) => Some(&a.brain),
            Agent::LiquidityTaker(a) => Some(&a.brain),
            _ => None,
        }
    }

    pub fn brain_mut(&mut self) -> Option<&mut Brain> {
        match self {
            Agent::MarketMaker(a) => Some(&mut a.brain),
            Agent::LiquidityTaker(a) => Some(&mut a.brain),
            _ => None,
        }
    }
}
