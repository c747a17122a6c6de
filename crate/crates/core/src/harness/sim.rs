use std::collections::{BTreeMap, VecDeque};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Mode};
use super::output::checkpoint_file_name;
use super::{derive_seed, HarnessError};
use crate::agents::{
    Agent, AgentContext, Brain, FlashSaleAgent, FlashSchedule, LiquidityTaker, LtParams, MarketMaker,
    MarketState, MmParams, RewardRecord, StepOutcome, ZeroIntelligence, LT_OBS_DIM, MM_OBS_DIM,
};
use crate::exchange::{AccountRecord, Audit, Exchange, MarketEvent};
use crate::lob::{AgentId, OrderId, OrderKind, Shares, Side, Ticks, Trade, DEPTH_LEVELS, LOT_SHARES};
use crate::rl::{load_checkpoint, Mlp, Policy, PpoDiagnostics};

/// Account id of the passive owner of the opening ladder.
pub const UTILITY_AGENT: AgentId = 0;

const STREAM_LATENCY: u64 = 1;
const STREAM_SCHEDULE: u64 = 2;
const STREAM_ENDOWMENT: u64 = 3;
const STREAM_JITTER: u64 = 4;
const STREAM_POLICY: u64 = 1_000;
const STREAM_BRAIN: u64 = 2_000;
const STREAM_ZI: u64 = 3_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunKind {
    Simulate,
    Pretrain,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RosterEntry {
    pub agent_id: AgentId,
    pub class: String,
    /// Position among agents of the same class.
    pub index: usize,
    pub initial_cash_cents: i64,
    pub initial_inventory: i64,
}

impl RosterEntry {
    fn new(agent_id: AgentId, class: &str, index: usize) -> Self {
        RosterEntry {
            agent_id,
            class: class.into(),
            index,
            initial_cash_cents: 0,
            initial_inventory: 0,
        }
    }
}

/// Top-of-book depth at the end of a step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SnapshotRow {
    pub step: u64,
    /// Doubled mid in ticks; absent when a side is empty.
    pub mid_x2: Option<i64>,
    /// Last defined doubled mid.
    pub last_mid_x2: i64,
    /// (price, shares) best first.
    pub bids: Vec<(Ticks, Shares)>,
    pub asks: Vec<(Ticks, Shares)>,
}

/// A market-maker observation logged at decision time, for policy probing.
#[derive(Debug, Clone, PartialEq)]
pub struct StateRow {
    pub step: u64,
    pub agent_id: AgentId,
    pub mm_index: usize,
    pub imbalance: f64,
    /// Informed-schedule phase, or -1 without a schedule.
    pub phase: i64,
    pub observation: Vec<f64>,
}

/// A market order that executed at least partly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutedOrder {
    pub step: u64,
    pub agent_id: AgentId,
    pub side: Side,
    pub filled: Shares,
}

#[derive(Debug, Clone, Default)]
pub struct RunLog {
    pub trades: Vec<Trade>,
    /// End-of-step doubled mid, carried forward over undefined steps.
    pub mids_x2: Vec<i64>,
    /// Whether the book was two-sided at the end of each step.
    pub mid_defined: Vec<bool>,
    pub accounts: Vec<AccountRecord>,
    pub rewards: Vec<RewardRecord>,
    pub snapshots: Vec<SnapshotRow>,
    pub states: Vec<StateRow>,
    pub events: Vec<MarketEvent>,
    pub executed_market: Vec<ExecutedOrder>,
}

/// Everything a finished run leaves behind.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub config: ExperimentConfig,
    pub kind: RunKind,
    pub log: RunLog,
    pub agents: Vec<Agent>,
    pub roster: Vec<RosterEntry>,
    pub opening_mid_x2: i64,
    /// First active step of every flash event inside the run.
    pub flash_event_starts: Vec<u64>,
    /// Checkpoint file name → sha256 of each loaded checkpoint.
    pub loaded_checkpoints: BTreeMap<String, String>,
    pub initial_audit: Audit,
    pub final_audit: Audit,
}

impl RunOutput {
    /// PPO diagnostics per RL agent id.
    pub fn diagnostics(&self) -> Vec<(AgentId, &[PpoDiagnostics])> {
        self.agents
            .iter()
            .filter_map(|a| a.brain().map(|b| (a.id(), b.diagnostics.as_slice())))
            .collect()
    }

    pub fn market_makers(&self) -> impl Iterator<Item = &MarketMaker> {
        self.agents.iter().filter_map(|a| match a {
            Agent::MarketMaker(m) => Some(m),
            _ => None,
        })
    }
}

/// Place the opening ladder: `levels` price levels per side, one tick apart,
/// around `initial_price`, owned by the utility account. Returns its id.
pub fn seed_book(exchange: &mut Exchange, initial_price: Ticks, levels: usize, lots_per_level: u64) -> AgentId {
    let qty = lots_per_level * LOT_SHARES;
    let bids: Vec<Ticks> = (1..=levels as Ticks).map(|k| initial_price - k).collect();
    let asks: Vec<Ticks> = (1..=levels as Ticks).map(|k| initial_price + k).collect();
    let cash: i64 = bids.iter().map(|p| p * qty as i64).sum();
    let inventory = (levels as u64 * qty) as i64;
    let id = exchange.open_account(cash, inventory, 0);
    for (side, prices) in [(Side::Bid, &bids), (Side::Ask, &asks)] {
        for &price in prices {
            exchange
                .route(id, crate::exchange::Intent::Limit { side, price, quantity: qty })
                .expect("utility account covers its ladder");
        }
    }
    let step = exchange.step();
    exchange.drain();
    exchange.set_step(step);
    id
}

fn jitter(rng: &mut ChaCha8Rng, value: f64, rel: f64) -> f64 {
    if rel == 0.0 {
        value
    } else {
        value * rng.random_range(1.0 - rel..=1.0 + rel)
    }
}

/// Market, agents and bookkeeping for one run.
pub struct Simulation {
    pub config: ExperimentConfig,
    pub kind: RunKind,
    pub exchange: Exchange,
    pub agents: Vec<Agent>,
    pub roster: Vec<RosterEntry>,
    pub log: RunLog,
    pub loaded_checkpoints: BTreeMap<String, String>,
    mm_ids: Vec<AgentId>,
    schedule_rng: ChaCha8Rng,
    mid_history: VecDeque<i64>,
    last_mid_x2: i64,
    opening_mid_x2: i64,
    initial_audit: Audit,
    /// Cumulative inventory PnL (half-cents) and previous inventory per account.
    cum_inventory_x2: Vec<i64>,
    prev_inventory: Vec<i64>,
    flash: Option<FlashSchedule>,
    next_step: u64,
}

impl Simulation {
    pub fn new(config: &ExperimentConfig, kind: RunKind) -> Result<Self, HarnessError> {
        let mut config = config.clone();
        match kind {
            RunKind::Simulate => config.validate()?,
            RunKind::Pretrain => {
                config.n_steps = config.pretrain_steps;
                config.checkpoints = None;
                if !config.pretrain_with_schedules {
                    if let Some(f) = config.flash.as_mut() {
                        f.n_events = 0;
                    }
                    config.informed = None;
                }
            }
        }
        let training = match kind {
            RunKind::Simulate => config.training_enabled(),
            RunKind::Pretrain => true,
        };
        let seed = config.seed;

        let mut exchange = Exchange::new(LOT_SHARES, config.latency, derive_seed(seed, STREAM_LATENCY));
        exchange.set_record_events(config.record.events);
        let utility = seed_book(&mut exchange, config.initial_price, config.book.levels, config.book.lots_per_level);
        debug_assert_eq!(utility, UTILITY_AGENT);

        let mut endow = ChaCha8Rng::seed_from_u64(derive_seed(seed, STREAM_ENDOWMENT));
        let (cash_lo, cash_hi) = config.endowment.cash_dollars;
        let (inv_lo, inv_hi) = config.endowment.inventory_lots;
        let short_bound = config.short_bound;
        let mut draw_account = |ex: &mut Exchange, extra_inventory: i64| {
            let cash = (endow.random_range(cash_lo..=cash_hi) * 100.0).round() as i64;
            let inv = endow.random_range(inv_lo..=inv_hi) * LOT_SHARES as i64 + extra_inventory;
            ex.open_account(cash, inv, short_bound)
        };

        let mut jit = ChaCha8Rng::seed_from_u64(derive_seed(seed, STREAM_JITTER));
        let rel = config.rl.jitter;
        let mut roster = vec![RosterEntry {
            agent_id: UTILITY_AGENT,
            class: "book".into(),
            index: 0,
            initial_cash_cents: 0,
            initial_inventory: 0,
        }];
        let mut agents = Vec::new();
        let mut rl_index = 0u64;
        let hidden = config.rl.hidden.clone();
        let mut make_brain = |policy_head: &dyn Fn(&mut ChaCha8Rng) -> Policy, obs_dim: usize| {
            let mut init = ChaCha8Rng::seed_from_u64(derive_seed(seed, STREAM_POLICY + rl_index));
            let policy = policy_head(&mut init);
            let sizes: Vec<usize> = std::iter::once(obs_dim)
                .chain(hidden.iter().copied())
                .chain(std::iter::once(1))
                .collect();
            let value = Mlp::random(&sizes, 1.0, &mut init);
            let rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, STREAM_BRAIN + rl_index));
            rl_index += 1;
            let mut brain = Brain::new(policy, value, config.rl.ppo, rng);
            brain.training = training;
            brain
        };

        let mut mm_ids = Vec::new();
        for (k, base) in config.market_makers.iter().enumerate() {
            let params = MmParams {
                omega: jitter(&mut jit, base.omega, rel).min(1.0),
                gamma_inv: jitter(&mut jit, base.gamma_inv, rel),
                alpha: jitter(&mut jit, base.alpha, rel),
                ..*base
            };
            let id = draw_account(&mut exchange, 0);
            let h = config.rl.hidden.clone();
            let ls = config.rl.init_log_std;
            let brain = make_brain(&|r| Policy::gaussian(&h, MM_OBS_DIM, 3, ls, r), MM_OBS_DIM);
            agents.push(Agent::MarketMaker(MarketMaker::new(id, params, config.rl.scales, brain)));
            roster.push(RosterEntry::new(id, "mm", k));
            mm_ids.push(id);
        }
        for (k, base) in config.liquidity_takers.iter().enumerate() {
            let params = LtParams {
                omega: jitter(&mut jit, base.omega, rel).min(1.0),
                gamma_inv: jitter(&mut jit, base.gamma_inv, rel),
                alpha: jitter(&mut jit, base.alpha, rel),
                ..*base
            };
            let id = draw_account(&mut exchange, 0);
            let h = config.rl.hidden.clone();
            let brain = make_brain(&|r| Policy::categorical(&h, LT_OBS_DIM, 3, r), LT_OBS_DIM);
            agents.push(Agent::LiquidityTaker(LiquidityTaker::new(id, params, config.rl.scales, brain)));
            roster.push(RosterEntry::new(id, "lt", k));
        }
        for k in 0..config.zi.count {
            let id = draw_account(&mut exchange, 0);
            let rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, STREAM_ZI + k as u64));
            agents.push(Agent::ZeroIntelligence(ZeroIntelligence::new(id, config.zi.params, rng)));
            roster.push(RosterEntry::new(id, "zi", k));
        }
        if let Some(schedule) = config.flash {
            let id = draw_account(&mut exchange, schedule.total_shares() as i64);
            agents.push(Agent::FlashSale(FlashSaleAgent::new(id, schedule)));
            roster.push(RosterEntry::new(id, "flash", 0));
        }

        for entry in &mut roster {
            let acc = exchange.account(entry.agent_id).expect("roster ids have accounts");
            entry.initial_cash_cents = acc.cash;
            entry.initial_inventory = acc.inventory;
        }
        let opening_mid_x2 = exchange.book().best_bid().zip(exchange.book().best_ask()).map(|(b, a)| a + b).expect("seeded book is two-sided");
        for acc in exchange.accounts_mut() {
            acc.set_baseline(opening_mid_x2);
        }
        let prev_inventory = exchange.accounts().iter().map(|a| a.inventory).collect();
        let n_accounts = exchange.accounts().len();

        let mut sim = Simulation {
            kind,
            exchange,
            agents,
            roster,
            log: RunLog::default(),
            loaded_checkpoints: BTreeMap::new(),
            mm_ids,
            schedule_rng: ChaCha8Rng::seed_from_u64(derive_seed(seed, STREAM_SCHEDULE)),
            mid_history: std::iter::repeat_n(opening_mid_x2, 5).collect(),
            last_mid_x2: opening_mid_x2,
            opening_mid_x2,
            initial_audit: Audit {
                total_cash: 0,
                total_inventory: 0,
                total_reserved: 0,
                total_reserved_shares: 0,
            },
            cum_inventory_x2: vec![0; n_accounts],
            prev_inventory,
            flash: config.flash,
            next_step: 0,
            config,
        };
        sim.initial_audit = sim.exchange.audit();
        if kind == RunKind::Simulate && sim.config.group.loads_checkpoints() {
            let dir = sim.config.checkpoints.clone().expect("validated");
            sim.load_checkpoints(&dir)?;
        }
        Ok(sim)
    }

    /// Replace every RL agent's parameters with its stored checkpoint.
    pub fn load_checkpoints(&mut self, dir: &Path) -> Result<(), HarnessError> {
        let mut counters: BTreeMap<&'static str, usize> = BTreeMap::new();
        for agent in &mut self.agents {
            let class = agent.class();
            let Some(brain) = agent.brain_mut() else { continue };
            let k = counters.entry(class).or_default();
            let name = checkpoint_file_name(class, *k);
            *k += 1;
            let path = dir.join(&name);
            let to_err = |source| HarnessError::Checkpoint {
                path: path.display().to_string(),
                source,
            };
            let ckpt = load_checkpoint(&path).map_err(to_err)?;
            let training = brain.training;
            brain.load(&ckpt).map_err(to_err)?;
            brain.training = training;
            self.loaded_checkpoints.insert(name, super::output::sha256_file(&path)?);
        }
        Ok(())
    }

    pub fn mm_ids(&self) -> &[AgentId] {
        &self.mm_ids
    }

    pub fn opening_mid_x2(&self) -> i64 {
        self.opening_mid_x2
    }

    pub fn next_step(&self) -> u64 {
        self.next_step
    }

    pub fn is_done(&self) -> bool {
        self.next_step >= self.config.n_steps
    }

    pub(crate) fn market_state(&self, step: u64) -> MarketState {
        let book = self.exchange.book();
        let mid_x2 = book.best_bid().zip(book.best_ask()).map(|(b, a)| a + b);
        let mut mid_history = [0.0; 5];
        for (slot, m) in mid_history.iter_mut().zip(self.mid_history.iter()) {
            *slot = *m as f64 / 2.0;
        }
        MarketState {
            step,
            depth: book.depth_attributed(DEPTH_LEVELS, &self.mm_ids),
            mid_x2,
            last_mid_x2: self.last_mid_x2,
            mid_history,
            initial_price: self.config.initial_price,
            mm_ids: self.mm_ids.clone(),
        }
    }

    /// Start a step: set the clock and apply schedule overrides.
    pub(crate) fn begin_step(&mut self) -> (u64, MarketState) {
        let step = self.next_step;
        self.exchange.set_step(step);
        if let Some((buy, sell)) = self.config.informed.as_ref().and_then(|s| s.targets(step)) {
            for agent in &mut self.agents {
                if let Agent::LiquidityTaker(lt) = agent {
                    lt.set_targets(buy, sell);
                }
            }
        }
        (step, self.market_state(step))
    }

    pub(crate) fn open_orders_with_side(&self, agent: AgentId) -> Vec<(OrderId, Side)> {
        self.exchange.open_orders_with_side(agent)
    }

    /// Seeded permutation of agent indices for this step.
    pub(crate) fn action_order(&mut self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.agents.len()).collect();
        order.shuffle(&mut self.schedule_rng);
        order
    }

    /// Let agent `i` act on `market` and route its intents.
    fn act_agent(&mut self, i: usize, step: u64, market: &MarketState, mm_index: &BTreeMap<AgentId, usize>) {
        let id = self.agents[i].id();
        let open = self.open_orders_with_side(id);
        let account = self.exchange.account(id).expect("agent has an account").clone();
        let ctx = AgentContext {
            market,
            account: &account,
            open_orders: &open,
        };
        if let Agent::MarketMaker(mm) = &self.agents[i] {
            if self.config.record.states && market.mid_x2.is_some() {
                let phase = self.config.informed.as_ref().map_or(-1, |s| s.phase(step) as i64);
                self.log.states.push(StateRow {
                    step,
                    agent_id: id,
                    mm_index: mm_index[&id],
                    imbalance: market.depth.imbalance(),
                    phase,
                    observation: mm.observation(&ctx),
                });
            }
        }
        let intents = self.agents[i].act(&ctx);
        for intent in intents {
            // rejected intents are visible in the event stream
            let _ = self.exchange.route(id, intent);
        }
    }

    /// Match, settle and hand rewards back to the agents. `executed` maps
    /// agent ids to the sides of their filled market orders.
    pub(crate) fn end_step(&mut self, step: u64) -> Result<BTreeMap<AgentId, Vec<Side>>, HarnessError> {
        let report = self.exchange.drain();
        let mut executed: BTreeMap<AgentId, Vec<Side>> = BTreeMap::new();
        for o in &report.orders {
            if o.kind == OrderKind::Market && o.filled > 0 {
                executed.entry(o.agent).or_default().push(o.side);
                self.log.executed_market.push(ExecutedOrder {
                    step,
                    agent_id: o.agent,
                    side: o.side,
                    filled: o.filled,
                });
            }
        }
        self.log.trades.extend(report.trades);

        let book = self.exchange.book();
        let mid_now = book.best_bid().zip(book.best_ask()).map(|(b, a)| a + b);
        let prev_mid = self.last_mid_x2;
        if let Some(m) = mid_now {
            self.last_mid_x2 = m;
        }
        self.mid_history.pop_front();
        self.mid_history.push_back(self.last_mid_x2);
        self.log.mids_x2.push(self.last_mid_x2);
        self.log.mid_defined.push(mid_now.is_some());

        // exact inventory-revaluation PnL for every account
        let dmid = self.last_mid_x2 - prev_mid;
        for (k, acc) in self.exchange.accounts().iter().enumerate() {
            self.cum_inventory_x2[k] += self.prev_inventory[k] * dmid;
            self.prev_inventory[k] = acc.inventory;
        }
        let every = self.config.record.accounts_every;
        if every > 0 && step.is_multiple_of(every) {
            for (k, acc) in self.exchange.accounts().iter().enumerate() {
                let total = acc.pnl_x2(self.last_mid_x2);
                self.log.accounts.push(AccountRecord {
                    step,
                    agent_id: acc.agent_id,
                    cash_cents: acc.cash,
                    inventory: acc.inventory,
                    mid_x2: self.last_mid_x2,
                    pnl_total_x2: total,
                    pnl_inventory_x2: self.cum_inventory_x2[k],
                    pnl_spread_x2: total - self.cum_inventory_x2[k],
                });
            }
        }
        let every = self.config.record.snapshot_every;
        if every > 0 && step.is_multiple_of(every) {
            let depth = book.depth_attributed(DEPTH_LEVELS, &self.mm_ids);
            let levels = |side: Side| depth.side(side).iter().map(|l| (l.price, l.quantity)).collect();
            self.log.snapshots.push(SnapshotRow {
                step,
                mid_x2: mid_now,
                last_mid_x2: self.last_mid_x2,
                bids: levels(Side::Bid),
                asks: levels(Side::Ask),
            });
            if self.config.record.events {
                self.exchange.record_snapshot(depth);
            }
        }
        if self.config.record.events {
            self.log.events.extend(self.exchange.take_events());
        }
        Ok(executed)
    }

    pub(crate) fn check_failures(&self) -> Result<(), HarnessError> {
        for agent in &self.agents {
            if let Some(brain) = agent.brain() {
                if brain.failure.is_some() {
                    return Err(HarnessError::NonFiniteLoss {
                        agent: agent.id(),
                        class: agent.class(),
                    });
                }
            }
        }
        Ok(())
    }

    /// Advance one stepped-mode step.
    pub fn step(&mut self) -> Result<(), HarnessError> {
        let (step, market) = self.begin_step();
        let mm_index: BTreeMap<AgentId, usize> = self.mm_ids.iter().enumerate().map(|(k, id)| (*id, k)).collect();
        for i in self.action_order() {
            self.act_agent(i, step, &market, &mm_index);
        }
        let executed = self.end_step(step)?;
        let post = self.market_state(step);
        for agent in &mut self.agents {
            let id = agent.id();
            let account = self.exchange.account(id).expect("agent has an account");
            let outcome = StepOutcome {
                market: &post,
                account,
                executed: executed.get(&id).map_or(&[], |v| v.as_slice()),
            };
            if let Some(r) = agent.observe(&outcome) {
                self.log.rewards.push(r);
            }
        }
        self.check_failures()?;
        self.advance_clock();
        Ok(())
    }

    pub(crate) fn advance_clock(&mut self) {
        self.next_step += 1;
    }

    /// Cancel all open orders and verify conservation.
    pub fn finish(mut self) -> Result<RunOutput, HarnessError> {
        self.exchange.cancel_all();
        if self.config.record.events {
            self.log.events.extend(self.exchange.take_events());
        }
        let final_audit = self.exchange.audit();
        let a = self.initial_audit;
        if final_audit.total_cash != a.total_cash
            || final_audit.total_inventory != a.total_inventory
            || final_audit.total_reserved != 0
            || final_audit.total_reserved_shares != 0
        {
            return Err(HarnessError::Conservation(format!("initial {a:?}, final {final_audit:?}")));
        }
        let flash_event_starts = self
            .flash
            .map(|f| f.event_starts(self.config.n_steps))
            .unwrap_or_default();
        Ok(RunOutput {
            config: self.config,
            kind: self.kind,
            log: self.log,
            agents: self.agents,
            roster: self.roster,
            opening_mid_x2: self.opening_mid_x2,
            flash_event_starts,
            loaded_checkpoints: self.loaded_checkpoints,
            initial_audit: a,
            final_audit,
        })
    }
}

/// Build and drive a run, calling `progress(done, total)` after every stepped-mode step.
pub fn execute(
    config: &ExperimentConfig,
    kind: RunKind,
    progress: &mut dyn FnMut(u64, u64),
) -> Result<RunOutput, HarnessError> {
    let mut sim = Simulation::new(config, kind)?;
    match sim.config.mode {
        Mode::Stepped => {
            let total = sim.config.n_steps;
            while !sim.is_done() {
                sim.step()?;
                progress(sim.next_step(), total);
            }
            sim.finish()
        }
        Mode::Realtime => super::realtime::run_realtime(sim),
    }
}

/// Run an experiment as configured.
pub fn run(config: &ExperimentConfig) -> Result<RunOutput, HarnessError> {
    execute(config, RunKind::Simulate, &mut |_, _| {})
}

/// Fresh initialization with training on for `pretrain_steps` steps.
pub fn pretrain(config: &ExperimentConfig) -> Result<RunOutput, HarnessError> {
    execute(config, RunKind::Pretrain, &mut |_, _| {})
}
