//! Price-time priority limit order book for a single asset.
//!
//! Prices are integer ticks (one tick is one cent) and quantities are integer
//! shares. Every order quantity must be a multiple of the lot size. The book
//! never rests crossed: an incoming order that can trade does so against the
//! opposite side, best price first and FIFO within a level, before any
//! remainder is rested (limit) or discarded (market).

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type OrderId = u64;
pub type AgentId = u32;
pub type Ticks = i64;
pub type Shares = u64;

/// Dollar value of one price tick.
pub const TICK_DOLLARS: f64 = 0.01;
/// Shares per lot.
pub const LOT_SHARES: Shares = 100;
/// Number of price levels per side visible to agents.
pub const DEPTH_LEVELS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Side {
    Bid,
    Ask,
}

impl Side {
    pub fn opposite(self) -> Side {
        match self {
            Side::Bid => Side::Ask,
            Side::Ask => Side::Bid,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OrderKind {
    Limit,
    Market,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Order {
    pub id: OrderId,
    pub agent: AgentId,
    pub side: Side,
    pub kind: OrderKind,
    /// Limit price in ticks; `None` for market orders.
    pub price: Option<Ticks>,
    pub quantity: Shares,
    pub remaining: Shares,
    /// Arrival sequence number, assigned by the book on submission.
    pub seq: u64,
}

impl Order {
    pub fn limit(id: OrderId, agent: AgentId, side: Side, price: Ticks, quantity: Shares) -> Self {
        Order {
            id,
            agent,
            side,
            kind: OrderKind::Limit,
            price: Some(price),
            quantity,
            remaining: quantity,
            seq: 0,
        }
    }

    pub fn market(id: OrderId, agent: AgentId, side: Side, quantity: Shares) -> Self {
        Order {
            id,
            agent,
            side,
            kind: OrderKind::Market,
            price: None,
            quantity,
            remaining: quantity,
            seq: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trade {
    pub step: u64,
    /// Execution price; always the maker's resting limit price.
    pub price: Ticks,
    pub quantity: Shares,
    pub taker_order_id: OrderId,
    pub maker_order_id: OrderId,
    pub taker_agent: AgentId,
    pub maker_agent: AgentId,
    pub taker_side: Side,
    pub self_trade: bool,
}

impl Trade {
    pub fn buyer(&self) -> AgentId {
        match self.taker_side {
            Side::Bid => self.taker_agent,
            Side::Ask => self.maker_agent,
        }
    }

    pub fn seller(&self) -> AgentId {
        match self.taker_side {
            Side::Bid => self.maker_agent,
            Side::Ask => self.taker_agent,
        }
    }

    /// Notional in cents (ticks × shares).
    pub fn notional_cents(&self) -> i64 {
        self.price * self.quantity as i64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RejectReason {
    NonPositiveQuantity,
    NotLotMultiple,
    NonPositivePrice,
    MissingPrice,
    DuplicateId,
    EmptyOppositeSide,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LobError {
    #[error("order {id} rejected: {reason:?}")]
    RejectedOrder { id: OrderId, reason: RejectReason },
    #[error("unknown order {0}")]
    UnknownOrder(OrderId),
    #[error("{0:?} side of the book is empty")]
    EmptySide(Side),
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SubmitOutcome {
    pub trades: Vec<Trade>,
    /// Shares left resting in the book after matching.
    pub rested: Shares,
    /// Shares of a market order that found no liquidity and were dropped.
    pub discarded: Shares,
}

impl SubmitOutcome {
    pub fn filled(&self) -> Shares {
        self.trades.iter().map(|t| t.quantity).sum()
    }
}

/// One aggregated price level with per-agent share attribution.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelView {
    pub price: Ticks,
    pub quantity: Shares,
    pub by_agent: BTreeMap<AgentId, Shares>,
}

/// Top-of-book levels for both sides. Missing levels are simply absent.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BookDepth {
    /// Best (highest) bid first.
    pub bids: Vec<LevelView>,
    /// Best (lowest) ask first.
    pub asks: Vec<LevelView>,
}

impl BookDepth {
    pub fn side(&self, side: Side) -> &[LevelView] {
        match side {
            Side::Bid => &self.bids,
            Side::Ask => &self.asks,
        }
    }

    pub fn best(&self, side: Side) -> Option<Ticks> {
        self.side(side).first().map(|l| l.price)
    }

    pub fn total(&self, side: Side) -> Shares {
        self.side(side).iter().map(|l| l.quantity).sum()
    }

    /// m_l for one agent: shares resting at level l, bid and ask sides summed.
    pub fn agent_level_shares(&self, agent: AgentId) -> [Shares; DEPTH_LEVELS] {
        let mut out = [0; DEPTH_LEVELS];
        for levels in [&self.bids, &self.asks] {
            for (l, level) in levels.iter().take(DEPTH_LEVELS).enumerate() {
                out[l] += level.by_agent.get(&agent).copied().unwrap_or(0);
            }
        }
        out
    }

    /// (V_bid − V_ask) / (V_bid + V_ask) over the visible levels; 0 for an empty book.
    pub fn imbalance(&self) -> f64 {
        let bid = self.total(Side::Bid) as f64;
        let ask = self.total(Side::Ask) as f64;
        if bid + ask == 0.0 {
            0.0
        } else {
            (bid - ask) / (bid + ask)
        }
    }

    pub fn snapshot(self) -> Result<DepthSnapshot, LobError> {
        let best_bid = self.best(Side::Bid).ok_or(LobError::EmptySide(Side::Bid))?;
        let best_ask = self.best(Side::Ask).ok_or(LobError::EmptySide(Side::Ask))?;
        Ok(DepthSnapshot {
            depth: self,
            best_bid,
            best_ask,
        })
    }
}

/// Two-sided depth with a defined mid price and spread.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DepthSnapshot {
    pub depth: BookDepth,
    pub best_bid: Ticks,
    pub best_ask: Ticks,
}

impl DepthSnapshot {
    /// Twice the mid price, in ticks; exact.
    pub fn mid_x2(&self) -> i64 {
        self.best_bid + self.best_ask
    }

    /// Mid price in ticks.
    pub fn mid(&self) -> f64 {
        self.mid_x2() as f64 / 2.0
    }

    pub fn spread(&self) -> Ticks {
        self.best_ask - self.best_bid
    }
}

#[derive(Debug, Clone)]
pub struct OrderBook {
    bids: BTreeMap<Ticks, VecDeque<Order>>,
    asks: BTreeMap<Ticks, VecDeque<Order>>,
    locations: HashMap<OrderId, (Side, Ticks)>,
    seq_counter: u64,
    lot_size: Shares,
}

impl Default for OrderBook {
    fn default() -> Self {
        Self::new(LOT_SHARES)
    }
}

impl OrderBook {
    pub fn new(lot_size: Shares) -> Self {
        assert!(lot_size > 0, "lot size must be positive");
        OrderBook {
            bids: BTreeMap::new(),
            asks: BTreeMap::new(),
            locations: HashMap::new(),
            seq_counter: 0,
            lot_size,
        }
    }

    pub fn lot_size(&self) -> Shares {
        self.lot_size
    }

    pub fn best_bid(&self) -> Option<Ticks> {
        self.bids.last_key_value().map(|(p, _)| *p)
    }

    pub fn best_ask(&self) -> Option<Ticks> {
        self.asks.first_key_value().map(|(p, _)| *p)
    }

    pub fn best(&self, side: Side) -> Option<Ticks> {
        match side {
            Side::Bid => self.best_bid(),
            Side::Ask => self.best_ask(),
        }
    }

    pub fn is_empty(&self, side: Side) -> bool {
        match side {
            Side::Bid => self.bids.is_empty(),
            Side::Ask => self.asks.is_empty(),
        }
    }

    pub fn len(&self) -> usize {
        self.locations.len()
    }

    pub fn is_book_empty(&self) -> bool {
        self.locations.is_empty()
    }

    pub fn contains(&self, id: OrderId) -> bool {
        self.locations.contains_key(&id)
    }

    pub fn order(&self, id: OrderId) -> Option<&Order> {
        let (side, price) = self.locations.get(&id)?;
        self.levels(*side)
            .get(price)
            .and_then(|q| q.iter().find(|o| o.id == id))
    }

    /// Resting orders on one side, best price first, FIFO within a level.
    pub fn resting(&self, side: Side) -> Vec<&Order> {
        match side {
            Side::Bid => self.bids.values().rev().flat_map(|q| q.iter()).collect(),
            Side::Ask => self.asks.values().flat_map(|q| q.iter()).collect(),
        }
    }

    /// Aggregated (price, quantity) for every level on a side, best first.
    pub fn level_totals(&self, side: Side) -> Vec<(Ticks, Shares)> {
        let total = |(p, q): (&Ticks, &VecDeque<Order>)| (*p, q.iter().map(|o| o.remaining).sum());
        match side {
            Side::Bid => self.bids.iter().rev().map(total).collect(),
            Side::Ask => self.asks.iter().map(total).collect(),
        }
    }

    fn levels(&self, side: Side) -> &BTreeMap<Ticks, VecDeque<Order>> {
        match side {
            Side::Bid => &self.bids,
            Side::Ask => &self.asks,
        }
    }

    fn validate(&self, order: &Order) -> Result<(), RejectReason> {
        if order.quantity == 0 {
            return Err(RejectReason::NonPositiveQuantity);
        }
        if !order.quantity.is_multiple_of(self.lot_size) {
            return Err(RejectReason::NotLotMultiple);
        }
        if order.kind == OrderKind::Limit {
            match order.price {
                None => return Err(RejectReason::MissingPrice),
                Some(p) if p < 1 => return Err(RejectReason::NonPositivePrice),
                Some(_) => {}
            }
        }
        if self.locations.contains_key(&order.id) {
            return Err(RejectReason::DuplicateId);
        }
        Ok(())
    }

    /// Match an incoming order and rest any limit remainder.
    pub fn submit(&mut self, mut order: Order, step: u64) -> Result<SubmitOutcome, LobError> {
        let reject = |reason| LobError::RejectedOrder { id: order.id, reason };
        self.validate(&order).map_err(reject)?;
        let opposite = order.side.opposite();
        if order.kind == OrderKind::Market && self.is_empty(opposite) {
            return Err(reject(RejectReason::EmptyOppositeSide));
        }

        self.seq_counter += 1;
        order.seq = self.seq_counter;
        order.remaining = order.quantity;

        let mut trades = Vec::new();
        let book = match opposite {
            Side::Bid => &mut self.bids,
            Side::Ask => &mut self.asks,
        };
        while order.remaining > 0 {
            let best = match opposite {
                Side::Bid => book.last_key_value().map(|(p, _)| *p),
                Side::Ask => book.first_key_value().map(|(p, _)| *p),
            };
            let Some(level_price) = best else { break };
            let marketable = match (order.kind, order.side, order.price) {
                (OrderKind::Market, _, _) => true,
                (OrderKind::Limit, Side::Bid, Some(limit)) => limit >= level_price,
                (OrderKind::Limit, Side::Ask, Some(limit)) => limit <= level_price,
                (OrderKind::Limit, _, None) => unreachable!("validated"),
            };
            if !marketable {
                break;
            }
            let queue = book.get_mut(&level_price).expect("level exists");
            while order.remaining > 0 {
                let Some(maker) = queue.front_mut() else { break };
                let qty = order.remaining.min(maker.remaining);
                trades.push(Trade {
                    step,
                    price: level_price,
                    quantity: qty,
                    taker_order_id: order.id,
                    maker_order_id: maker.id,
                    taker_agent: order.agent,
                    maker_agent: maker.agent,
                    taker_side: order.side,
                    self_trade: order.agent == maker.agent,
                });
                order.remaining -= qty;
                maker.remaining -= qty;
                if maker.remaining == 0 {
                    let done = queue.pop_front().expect("front exists");
                    self.locations.remove(&done.id);
                }
            }
            if queue.is_empty() {
                book.remove(&level_price);
            }
        }

        let mut outcome = SubmitOutcome {
            trades,
            rested: 0,
            discarded: 0,
        };
        if order.remaining > 0 {
            match order.kind {
                OrderKind::Market => outcome.discarded = order.remaining,
                OrderKind::Limit => {
                    let price = order.price.expect("validated");
                    outcome.rested = order.remaining;
                    self.locations.insert(order.id, (order.side, price));
                    let own = match order.side {
                        Side::Bid => &mut self.bids,
                        Side::Ask => &mut self.asks,
                    };
                    own.entry(price).or_default().push_back(order);
                }
            }
        }
        Ok(outcome)
    }

    /// Remove a resting order, returning it with its unfilled remainder.
    pub fn cancel(&mut self, id: OrderId) -> Result<Order, LobError> {
        let (side, price) = self.locations.remove(&id).ok_or(LobError::UnknownOrder(id))?;
        let levels = match side {
            Side::Bid => &mut self.bids,
            Side::Ask => &mut self.asks,
        };
        let queue = levels.get_mut(&price).expect("indexed level exists");
        let pos = queue
            .iter()
            .position(|o| o.id == id)
            .expect("indexed order exists");
        let order = queue.remove(pos).expect("position valid");
        if queue.is_empty() {
            levels.remove(&price);
        }
        Ok(order)
    }

    /// Top `levels` price levels on each side with per-agent attribution.
    pub fn depth(&self, levels: usize) -> BookDepth {
        self.depth_filtered(levels, None)
    }

    /// Like `depth`, attributing only the listed agents.
    pub fn depth_attributed(&self, levels: usize, agents: &[AgentId]) -> BookDepth {
        self.depth_filtered(levels, Some(agents))
    }

    fn depth_filtered(&self, levels: usize, agents: Option<&[AgentId]>) -> BookDepth {
        let view = |(p, q): (&Ticks, &VecDeque<Order>)| {
            let mut by_agent = BTreeMap::new();
            let mut quantity = 0;
            for o in q {
                if agents.is_none_or(|a| a.contains(&o.agent)) {
                    *by_agent.entry(o.agent).or_insert(0) += o.remaining;
                }
                quantity += o.remaining;
            }
            LevelView {
                price: *p,
                quantity,
                by_agent,
            }
        };
        BookDepth {
            bids: self.bids.iter().rev().take(levels).map(view).collect(),
            asks: self.asks.iter().take(levels).map(view).collect(),
        }
    }

    /// Top-5 snapshot; fails when either side is empty.
    pub fn snapshot(&self) -> Result<DepthSnapshot, LobError> {
        self.depth(DEPTH_LEVELS).snapshot()
    }

    /// Cost in cents and fillable shares of sweeping `quantity` from `side`.
    pub fn sweep_cost(&self, side: Side, quantity: Shares) -> (i64, Shares) {
        let mut left = quantity;
        let mut cost = 0i64;
        for (price, qty) in self.level_totals(side) {
            if left == 0 {
                break;
            }
            let take = left.min(qty);
            cost += price * take as i64;
            left -= take;
        }
        (cost, quantity - left)
    }

    /// Largest lot-multiple quantity buyable from the ask side for at most `budget_cents`.
    pub fn affordable_buy(&self, budget_cents: i64, max_quantity: Shares) -> Shares {
        let mut left_budget = budget_cents;
        let mut bought = 0;
        'levels: for (price, qty) in self.level_totals(Side::Ask) {
            let mut available = qty;
            while available > 0 && bought < max_quantity {
                let lot_cost = price * self.lot_size as i64;
                if lot_cost > left_budget {
                    break 'levels;
                }
                // Resting quantities are lot multiples, so lots can be taken whole.
                left_budget -= lot_cost;
                bought += self.lot_size;
                available = available.saturating_sub(self.lot_size);
            }
            if bought >= max_quantity {
                break;
            }
        }
        bought
    }

    /// Structural invariants; used by tests and debug audits.
    pub fn check_invariants(&self) -> Result<(), String> {
        if let (Some(b), Some(a)) = (self.best_bid(), self.best_ask()) {
            if b >= a {
                return Err(format!("crossed book: bid {b} >= ask {a}"));
            }
        }
        let mut count = 0;
        for (side, levels) in [(Side::Bid, &self.bids), (Side::Ask, &self.asks)] {
            for (price, queue) in levels {
                if queue.is_empty() {
                    return Err(format!("empty level {price} on {side:?}"));
                }
                let mut last_seq = 0;
                for o in queue {
                    if o.remaining == 0 || o.remaining > o.quantity {
                        return Err(format!("order {} has remaining {}", o.id, o.remaining));
                    }
                    if o.seq <= last_seq {
                        return Err(format!("level {price} out of seq order"));
                    }
                    last_seq = o.seq;
                    if self.locations.get(&o.id) != Some(&(side, *price)) {
                        return Err(format!("order {} not indexed", o.id));
                    }
                    count += 1;
                }
            }
        }
        if count != self.locations.len() {
            return Err("index size mismatch".into());
        }
        Ok(())
    }
}

#[derive(Serialize)]
struct TapeRow {
    step: u64,
    price_ticks: Ticks,
    quantity: Shares,
    taker_agent: AgentId,
    maker_agent: AgentId,
    self_trade_flag: u8,
}

/// Write the trade tape as CSV: step, price_ticks, quantity, taker_agent, maker_agent, self_trade_flag.
pub fn write_trade_tape<W: Write>(trades: &[Trade], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for t in trades {
        w.serialize(TapeRow {
            step: t.step,
            price_ticks: t.price,
            quantity: t.quantity,
            taker_agent: t.taker_agent,
            maker_agent: t.maker_agent,
            self_trade_flag: t.self_trade as u8,
        })?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const L: Shares = LOT_SHARES;

    #[test]
    fn limit_into_empty_book_rests() {
        let mut book = OrderBook::default();
        let out = book.submit(Order::limit(1, 0, Side::Bid, 100, 10 * L), 0).unwrap();
        assert!(out.trades.is_empty());
        assert_eq!(out.rested, 10 * L);
        assert_eq!(book.best_bid(), Some(100));
        assert_eq!(book.best_ask(), None);
    }

    #[test]
    fn market_buy_exact_cross() {
        let mut book = OrderBook::default();
        book.submit(Order::limit(1, 0, Side::Ask, 101, 5 * L), 0).unwrap();
        let out = book.submit(Order::market(2, 1, Side::Bid, 5 * L), 1).unwrap();
        assert_eq!(out.trades.len(), 1);
        assert_eq!((out.trades[0].price, out.trades[0].quantity), (101, 5 * L));
        assert!(book.is_empty(Side::Ask));
    }

    #[test]
    fn market_buy_walks_levels_fifo() {
        let mut book = OrderBook::default();
        book.submit(Order::limit(1, 0, Side::Ask, 101, 3 * L), 0).unwrap();
        book.submit(Order::limit(2, 1, Side::Ask, 101, 4 * L), 0).unwrap();
        book.submit(Order::limit(3, 2, Side::Ask, 102, 5 * L), 0).unwrap();
        let out = book.submit(Order::market(4, 3, Side::Bid, 9 * L), 1).unwrap();
        let fills: Vec<_> = out
            .trades
            .iter()
            .map(|t| (t.maker_order_id, t.price, t.quantity))
            .collect();
        assert_eq!(fills, vec![(1, 101, 3 * L), (2, 101, 4 * L), (3, 102, 2 * L)]);
        assert_eq!(book.level_totals(Side::Ask), vec![(102, 3 * L)]);
    }

    #[test]
    fn marketable_limit_rests_remainder() {
        let mut book = OrderBook::default();
        book.submit(Order::limit(1, 0, Side::Ask, 101, 2 * L), 0).unwrap();
        let out = book.submit(Order::limit(2, 1, Side::Bid, 102, 5 * L), 0).unwrap();
        assert_eq!(out.filled(), 2 * L);
        assert_eq!(out.rested, 3 * L);
        assert_eq!(book.best_bid(), Some(102));
        assert!(book.is_empty(Side::Ask));
    }

    #[test]
    fn market_into_empty_side_is_rejected() {
        let mut book = OrderBook::default();
        let err = book.submit(Order::market(1, 0, Side::Bid, L), 0).unwrap_err();
        assert_eq!(
            err,
            LobError::RejectedOrder {
                id: 1,
                reason: RejectReason::EmptyOppositeSide
            }
        );
    }

    #[test]
    fn market_remainder_is_discarded() {
        let mut book = OrderBook::default();
        book.submit(Order::limit(1, 0, Side::Bid, 99, 2 * L), 0).unwrap();
        let out = book.submit(Order::market(2, 1, Side::Ask, 5 * L), 0).unwrap();
        assert_eq!(out.filled(), 2 * L);
        assert_eq!(out.discarded, 3 * L);
        assert!(book.is_book_empty());
    }

    #[test]
    fn rejects_bad_orders() {
        let mut book = OrderBook::default();
        let reason = |r: Result<SubmitOutcome, LobError>| match r {
            Err(LobError::RejectedOrder { reason, .. }) => reason,
            other => panic!("expected rejection, got {other:?}"),
        };
        assert_eq!(
            reason(book.submit(Order::limit(1, 0, Side::Bid, 100, 0), 0)),
            RejectReason::NonPositiveQuantity
        );
        assert_eq!(
            reason(book.submit(Order::limit(1, 0, Side::Bid, 100, 150), 0)),
            RejectReason::NotLotMultiple
        );
        assert_eq!(
            reason(book.submit(Order::limit(1, 0, Side::Bid, 0, L), 0)),
            RejectReason::NonPositivePrice
        );
        book.submit(Order::limit(1, 0, Side::Bid, 100, L), 0).unwrap();
        assert_eq!(
            reason(book.submit(Order::limit(1, 0, Side::Bid, 99, L), 0)),
            RejectReason::DuplicateId
        );
    }

    #[test]
    fn cancel_only_bid_empties_side() {
        let mut book = OrderBook::default();
        book.submit(Order::limit(1, 0, Side::Bid, 100, L), 0).unwrap();
        book.cancel(1).unwrap();
        assert!(book.is_empty(Side::Bid));
    }

    #[test]
    fn cancel_middle_of_queue_keeps_fifo() {
        let mut book = OrderBook::default();
        for id in 1..=3 {
            book.submit(Order::limit(id, id as AgentId, Side::Bid, 100, L), 0).unwrap();
        }
        book.cancel(2).unwrap();
        assert_eq!(book.level_totals(Side::Bid), vec![(100, 2 * L)]);
        let ids: Vec<_> = book.resting(Side::Bid).iter().map(|o| o.id).collect();
        assert_eq!(ids, vec![1, 3]);
    }

    #[test]
    fn cancel_filled_order_is_unknown() {
        let mut book = OrderBook::default();
        book.submit(Order::limit(1, 0, Side::Ask, 101, L), 0).unwrap();
        book.submit(Order::market(2, 1, Side::Bid, L), 0).unwrap();
        assert_eq!(book.cancel(1), Err(LobError::UnknownOrder(1)));
    }

    #[test]
    fn snapshot_mid_and_spread() {
        let mut book = OrderBook::default();
        book.submit(Order::limit(1, 0, Side::Bid, 100, 10 * L), 0).unwrap();
        book.submit(Order::limit(2, 0, Side::Ask, 101, 10 * L), 0).unwrap();
        let snap = book.snapshot().unwrap();
        assert_eq!(snap.mid(), 100.5);
        assert_eq!(snap.spread(), 1);
        // fewer than five levels: the rest are absent, not zero-priced
        assert_eq!(snap.depth.bids.len(), 1);
        assert_eq!(snap.depth.asks.len(), 1);
    }

    #[test]
    fn snapshot_requires_both_sides() {
        let mut book = OrderBook::default();
        book.submit(Order::limit(1, 0, Side::Bid, 100, L), 0).unwrap();
        assert_eq!(book.snapshot().unwrap_err(), LobError::EmptySide(Side::Ask));
    }

    #[test]
    fn snapshot_attribution_per_agent() {
        let mut book = OrderBook::default();
        book.submit(Order::limit(1, 7, Side::Bid, 100, 5 * L), 0).unwrap();
        book.submit(Order::limit(2, 8, Side::Bid, 100, 5 * L), 0).unwrap();
        book.submit(Order::limit(3, 9, Side::Ask, 102, L), 0).unwrap();
        let snap = book.snapshot().unwrap();
        let level = &snap.depth.bids[0];
        assert_eq!(level.by_agent[&7], 5 * L);
        assert_eq!(level.by_agent[&8], 5 * L);
        assert_eq!(level.quantity, level.by_agent.values().sum::<Shares>());
        assert_eq!(snap.depth.agent_level_shares(7), [5 * L, 0, 0, 0, 0]);
    }

    #[test]
    fn affordable_buy_respects_budget() {
        let mut book = OrderBook::default();
        book.submit(Order::limit(1, 0, Side::Ask, 100, 2 * L), 0).unwrap();
        book.submit(Order::limit(2, 0, Side::Ask, 110, 2 * L), 0).unwrap();
        // 2 lots at 100 = 20,000 cents; third lot costs 11,000
        assert_eq!(book.affordable_buy(30_999, 10 * L), 2 * L);
        assert_eq!(book.affordable_buy(31_000, 10 * L), 3 * L);
        assert_eq!(book.affordable_buy(1_000_000, 3 * L), 3 * L);
        assert_eq!(book.sweep_cost(Side::Ask, 3 * L), (31_000, 3 * L));
    }

    #[test]
    fn trade_tape_csv_header() {
        let t = Trade {
            step: 3,
            price: 101,
            quantity: 200,
            taker_order_id: 1,
            maker_order_id: 2,
            taker_agent: 4,
            maker_agent: 4,
            taker_side: Side::Bid,
            self_trade: true,
        };
        let mut buf = Vec::new();
        write_trade_tape(&[t], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "step,price_ticks,quantity,taker_agent,maker_agent,self_trade_flag\n3,101,200,4,4,1\n"
        );
    }

    #[derive(Debug, Clone)]
    enum Op {
        Limit(bool, i64, u64),
        Market(bool, u64),
        Cancel(usize),
    }

    fn op() -> impl Strategy<Value = Op> {
        prop_oneof![
            4 => (any::<bool>(), 95i64..106, 1u64..6).prop_map(|(b, p, q)| Op::Limit(b, p, q)),
            1 => (any::<bool>(), 1u64..8).prop_map(|(b, q)| Op::Market(b, q)),
            2 => (0usize..64).prop_map(Op::Cancel),
        ]
    }

    proptest! {
        #[test]
        fn book_never_rests_crossed(ops in prop::collection::vec(op(), 1..300)) {
            let mut book = OrderBook::default();
            let mut ids = Vec::new();
            let mut bought = 0u64;
            let mut sold = 0u64;
            for (i, op) in ops.into_iter().enumerate() {
                let id = i as OrderId + 1;
                let side = |b: bool| if b { Side::Bid } else { Side::Ask };
                let res = match op {
                    Op::Limit(b, p, q) => { ids.push(id); book.submit(Order::limit(id, (i % 3) as AgentId, side(b), p, q * L), i as u64) }
                    Op::Market(b, q) => book.submit(Order::market(id, (i % 3) as AgentId, side(b), q * L), i as u64),
                    Op::Cancel(k) => {
                        if let Some(&target) = ids.get(k) { let _ = book.cancel(target); }
                        Ok(SubmitOutcome::default())
                    }
                };
                if let Ok(out) = res {
                    for t in &out.trades {
                        prop_assert!(t.quantity > 0);
                        bought += t.quantity;
                        sold += t.quantity;
                    }
                }
                prop_assert!(book.check_invariants().is_ok(), "{:?}", book.check_invariants());
            }
            prop_assert_eq!(bought, sold);
        }
    }
}
