use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::AgentContext;
use crate::exchange::Intent;
use crate::lob::{AgentId, Side, Ticks, LOT_SHARES};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ZiParams {
    pub p_market: f64,
    pub p_limit: f64,
    pub p_cancel: f64,
    /// Limit prices reach this many ticks behind the same-side best.
    pub band_ticks: Ticks,
    pub lots: u64,
}

impl Default for ZiParams {
    fn default() -> Self {
        ZiParams {
            p_market: 0.1,
            p_limit: 0.6,
            p_cancel: 0.3,
            band_ticks: 10,
            lots: 1,
        }
    }
}

impl ZiParams {
    pub fn validate(&self) -> Result<(), String> {
        let ps = [self.p_market, self.p_limit, self.p_cancel];
        if ps.iter().any(|p| !(0.0..=1.0).contains(p)) || ps.iter().sum::<f64>() > 1.0 + 1e-12 {
            return Err("ZI probabilities must be non-negative and sum to at most 1".into());
        }
        if self.band_ticks < 0 || self.lots == 0 {
            return Err("ZI band must be non-negative and lots at least 1".into());
        }
        Ok(())
    }
}

/// Random order flow: market, limit or cancel with fixed probabilities.
#[derive(Debug, Clone)]
pub struct ZeroIntelligence {
    pub id: AgentId,
    pub params: ZiParams,
    pub rng: ChaCha8Rng,
}

impl ZeroIntelligence {
    pub fn new(id: AgentId, params: ZiParams, rng: ChaCha8Rng) -> Self {
        ZeroIntelligence { id, params, rng }
    }

    /// Inclusive limit-price range for a new order on `side`.
    fn price_range(&self, side: Side, best_bid: Option<Ticks>, best_ask: Option<Ticks>, mid: Ticks) -> (Ticks, Ticks) {
        let band = self.params.band_ticks;
        let (lo, hi) = match side {
            Side::Bid => {
                let hi = best_ask.map_or(mid, |a| a - 1);
                let lo = best_bid.map_or(hi - band, |b| b - band);
                (lo, hi)
            }
            Side::Ask => {
                let lo = best_bid.map_or(mid, |b| b + 1);
                let hi = best_ask.map_or(lo + band, |a| a + band);
                (lo, hi)
            }
        };
        (lo.max(1), hi.max(lo.max(1)))
    }

    pub fn act(&mut self, ctx: &AgentContext<'_>) -> Option<Intent> {
        let draw: f64 = self.rng.random();
        let side = if self.rng.random_bool(0.5) { Side::Bid } else { Side::Ask };
        let quantity = self.params.lots * LOT_SHARES;
        let p = self.params;
        if draw < p.p_market {
            ctx.market.depth.best(side.opposite())?;
            Some(Intent::Market { side, quantity })
        } else if draw < p.p_market + p.p_limit {
            let depth = &ctx.market.depth;
            let mid = (ctx.market.last_mid_x2 + 1) / 2;
            let (lo, hi) = self.price_range(side, depth.best(Side::Bid), depth.best(Side::Ask), mid);
            let price = self.rng.random_range(lo..=hi);
            Some(Intent::Limit { side, price, quantity })
        } else if draw < p.p_market + p.p_limit + p.p_cancel {
            if ctx.open_orders.is_empty() {
                return None;
            }
            let i = self.rng.random_range(0..ctx.open_orders.len());
            Some(Intent::Cancel {
                order_id: ctx.open_orders[i].0,
            })
        } else {
            None
        }
    }
}
