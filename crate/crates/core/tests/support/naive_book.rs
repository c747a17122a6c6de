//! Brute-force reference matcher and random order streams.

use cdasim::lob::{AgentId, Order, OrderBook, OrderId, OrderKind, Shares, Side, Ticks, Trade, LOT_SHARES};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Resting orders in a flat list; every match scans for the best one.
#[derive(Default)]
pub struct NaiveBook {
    resting: Vec<(Order, u64)>,
    seq: u64,
}

impl NaiveBook {
    fn best_maker(&self, side: Side) -> Option<usize> {
        let mut best: Option<usize> = None;
        for (i, (o, seq)) in self.resting.iter().enumerate() {
            if o.side != side.opposite() {
                continue;
            }
            let better = match best {
                None => true,
                Some(b) => {
                    let (bo, bseq) = &self.resting[b];
                    let (p, bp) = (o.price.unwrap(), bo.price.unwrap());
                    let price_better = match o.side {
                        Side::Bid => p > bp,
                        Side::Ask => p < bp,
                    };
                    price_better || (p == bp && seq < bseq)
                }
            };
            if better {
                best = Some(i);
            }
        }
        best
    }

    fn submit(&mut self, mut order: Order, step: u64) -> Option<Vec<Trade>> {
        if order.kind == OrderKind::Market && !self.resting.iter().any(|(o, _)| o.side == order.side.opposite()) {
            return None;
        }
        let mut trades = Vec::new();
        while order.remaining > 0 {
            let Some(i) = self.best_maker(order.side) else { break };
            let maker_price = self.resting[i].0.price.unwrap();
            let crosses = match (order.kind, order.side) {
                (OrderKind::Market, _) => true,
                (OrderKind::Limit, Side::Bid) => order.price.unwrap() >= maker_price,
                (OrderKind::Limit, Side::Ask) => order.price.unwrap() <= maker_price,
            };
            if !crosses {
                break;
            }
            let maker = &mut self.resting[i].0;
            let qty = order.remaining.min(maker.remaining);
            trades.push(Trade {
                step,
                price: maker_price,
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
                self.resting.remove(i);
            }
        }
        if order.kind == OrderKind::Limit && order.remaining > 0 {
            self.seq += 1;
            self.resting.push((order, self.seq));
        }
        Some(trades)
    }

    fn cancel(&mut self, id: OrderId) -> bool {
        match self.resting.iter().position(|(o, _)| o.id == id) {
            Some(i) => {
                self.resting.remove(i);
                true
            }
            None => false,
        }
    }

    /// (side, price, id, remaining) in priority order.
    pub fn levels(&self) -> Vec<(Side, Ticks, OrderId, Shares)> {
        let mut v: Vec<_> = self.resting.iter().collect();
        v.sort_by_key(|(o, seq)| {
            let p = o.price.unwrap();
            (o.side == Side::Ask, if o.side == Side::Bid { -p } else { p }, *seq)
        });
        v.into_iter().map(|(o, _)| (o.side, o.price.unwrap(), o.id, o.remaining)).collect()
    }
}

pub fn book_levels(book: &OrderBook) -> Vec<(Side, Ticks, OrderId, Shares)> {
    [Side::Bid, Side::Ask]
        .into_iter()
        .flat_map(|s| book.resting(s).into_iter().map(move |o| (s, o.price.unwrap(), o.id, o.remaining)))
        .collect()
}

pub fn random_stream(seed: u64, n: usize) -> (Vec<Trade>, Vec<Trade>, OrderBook, NaiveBook) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut book = OrderBook::new(LOT_SHARES);
    let mut naive = NaiveBook::default();
    let (mut tape, mut naive_tape) = (Vec::new(), Vec::new());
    let mut live: Vec<OrderId> = Vec::new();
    let mut next_id: OrderId = 1;
    for step in 0..n as u64 {
        let r: f64 = rng.random();
        let agent: AgentId = rng.random_range(0..8);
        let side = if rng.random_bool(0.5) { Side::Bid } else { Side::Ask };
        let qty = rng.random_range(1..=5) * LOT_SHARES;
        if r < 0.25 && !live.is_empty() {
            let id = live.swap_remove(rng.random_range(0..live.len()));
            let a = book.cancel(id).is_ok();
            let b = naive.cancel(id);
            assert_eq!(a, b, "cancel of {id} at step {step}");
            continue;
        }
        let order = if r < 0.35 {
            Order::market(next_id, agent, side, qty)
        } else {
            let price = 1_000 + rng.random_range(-15..=15);
            Order::limit(next_id, agent, side, price, qty)
        };
        next_id += 1;
        let ours = book.submit(order.clone(), step);
        let theirs = naive.submit(order.clone(), step);
        match (ours, theirs) {
            (Ok(out), Some(trades)) => {
                assert_eq!(out.trades, trades, "trades at step {step}");
                if out.rested > 0 {
                    live.push(order.id);
                }
                tape.extend(out.trades);
                naive_tape.extend(trades);
            }
            (Err(_), None) => {}
            (a, b) => panic!("divergent acceptance at step {step}: {a:?} vs {b:?}"),
        }
        live.retain(|id| book.contains(*id));
    }
    (tape, naive_tape, book, naive)
}

