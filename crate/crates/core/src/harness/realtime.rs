//! Free-running mode: one thread per agent plus the matcher on the calling
//! thread, paced by the wall clock. Intents are routed in arrival order, so
//! runs are not bitwise reproducible.

use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use super::sim::{RunOutput, Simulation, StateRow};
use super::HarnessError;
use crate::agents::{Agent, AgentContext, MarketState, RewardRecord, StepOutcome};
use crate::exchange::{Account, Intent};
use crate::lob::{AgentId, OrderId, Side};

enum ToAgent {
    Act {
        step: u64,
        market: Arc<MarketState>,
        account: Account,
        open_orders: Vec<(OrderId, Side)>,
        targets: Option<(f64, f64)>,
        /// (mm index, informed phase) when the observation should be logged.
        log_state: Option<(usize, i64)>,
    },
    Observe {
        market: Arc<MarketState>,
        account: Account,
        executed: Vec<Side>,
    },
    Stop,
}

enum FromAgent {
    Intents {
        step: u64,
        agent: AgentId,
        intents: Vec<Intent>,
        state: Option<StateRow>,
    },
    Reward(RewardRecord),
    Failed {
        agent: AgentId,
        class: &'static str,
    },
}

fn agent_loop(mut agent: Agent, inbox: Receiver<ToAgent>, outbox: Sender<FromAgent>) -> Agent {
    let mut failed = false;
    while let Ok(msg) = inbox.recv() {
        match msg {
            ToAgent::Act {
                step,
                market,
                account,
                open_orders,
                targets,
                log_state,
            } => {
                if let (Some((buy, sell)), Agent::LiquidityTaker(lt)) = (targets, &mut agent) {
                    lt.set_targets(buy, sell);
                }
                let ctx = AgentContext {
                    market: &market,
                    account: &account,
                    open_orders: &open_orders,
                };
                let state = match (&agent, log_state) {
                    (Agent::MarketMaker(mm), Some((mm_index, phase))) if market.mid_x2.is_some() => Some(StateRow {
                        step,
                        agent_id: mm.id,
                        mm_index,
                        imbalance: market.depth.imbalance(),
                        phase,
                        observation: mm.observation(&ctx),
                    }),
                    _ => None,
                };
                let intents = agent.act(&ctx);
                let _ = outbox.send(FromAgent::Intents {
                    step,
                    agent: agent.id(),
                    intents,
                    state,
                });
            }
            ToAgent::Observe {
                market,
                account,
                executed,
            } => {
                let outcome = StepOutcome {
                    market: &market,
                    account: &account,
                    executed: &executed,
                };
                if let Some(r) = agent.observe(&outcome) {
                    let _ = outbox.send(FromAgent::Reward(r));
                }
            }
            ToAgent::Stop => break,
        }
        if !failed && agent.brain().is_some_and(|b| b.failure.is_some()) {
            failed = true;
            let _ = outbox.send(FromAgent::Failed {
                agent: agent.id(),
                class: agent.class(),
            });
        }
    }
    agent
}

pub(super) fn run_realtime(mut sim: Simulation) -> Result<RunOutput, HarnessError> {
    let step_len = Duration::from_millis(sim.config.realtime.step_millis);
    let agents = std::mem::take(&mut sim.agents);
    let ids: Vec<AgentId> = agents.iter().map(Agent::id).collect();
    let (out_tx, out_rx) = mpsc::channel();
    let mut inboxes = Vec::new();
    let mut handles = Vec::new();
    for agent in agents {
        let (tx, rx) = mpsc::channel();
        let out = out_tx.clone();
        inboxes.push(tx);
        handles.push(thread::spawn(move || agent_loop(agent, rx, out)));
    }
    drop(out_tx);

    let mm_index = |id: AgentId, sim: &Simulation| sim.mm_ids().iter().position(|m| *m == id);
    let mut failure = None;
    let handle = |msg: FromAgent, sim: &mut Simulation, failure: &mut Option<HarnessError>| -> Option<u64> {
        match msg {
            FromAgent::Intents {
                step,
                agent,
                intents,
                state,
            } => {
                for intent in intents {
                    let _ = sim.exchange.route(agent, intent);
                }
                if let Some(s) = state {
                    sim.log.states.push(s);
                }
                Some(step)
            }
            FromAgent::Reward(r) => {
                sim.log.rewards.push(r);
                None
            }
            FromAgent::Failed { agent, class } => {
                failure.get_or_insert(HarnessError::NonFiniteLoss { agent, class });
                None
            }
        }
    };

    while !sim.is_done() && failure.is_none() {
        let deadline = Instant::now() + step_len;
        let (step, market) = sim.begin_step();
        let market = Arc::new(market);
        let targets = sim.config.informed.as_ref().and_then(|s| s.targets(step));
        let phase = sim.config.informed.as_ref().map_or(-1, |s| s.phase(step) as i64);
        for (k, id) in ids.iter().enumerate() {
            let log_state = (sim.config.record.states)
                .then(|| mm_index(*id, &sim).map(|i| (i, phase)))
                .flatten();
            let _ = inboxes[k].send(ToAgent::Act {
                step,
                market: Arc::clone(&market),
                account: sim.exchange.account(*id).expect("agent has an account").clone(),
                open_orders: sim.open_orders_with_side(*id),
                targets,
                log_state,
            });
        }
        let mut answered = 0;
        while answered < ids.len() {
            let now = Instant::now();
            if now >= deadline {
                break;
            }
            match out_rx.recv_timeout(deadline - now) {
                Ok(msg) => {
                    if handle(msg, &mut sim, &mut failure) == Some(step) {
                        answered += 1;
                    }
                }
                Err(RecvTimeoutError::Timeout) => break,
                Err(RecvTimeoutError::Disconnected) => break,
            }
        }
        let executed = sim.end_step(step)?;
        let post = Arc::new(sim.market_state(step));
        for (k, id) in ids.iter().enumerate() {
            let _ = inboxes[k].send(ToAgent::Observe {
                market: Arc::clone(&post),
                account: sim.exchange.account(*id).expect("agent has an account").clone(),
                executed: executed.get(id).cloned().unwrap_or_default(),
            });
        }
        sim.advance_clock();
        let now = Instant::now();
        if now < deadline {
            thread::sleep(deadline - now);
        }
    }

    for tx in &inboxes {
        let _ = tx.send(ToAgent::Stop);
    }
    let agents: Vec<Agent> = handles
        .into_iter()
        .map(|h| h.join().expect("agent thread panicked"))
        .collect();
    // late intents and rewards still in flight
    while let Ok(msg) = out_rx.try_recv() {
        handle(msg, &mut sim, &mut failure);
    }
    if let Some(e) = failure {
        return Err(e);
    }
    sim.agents = agents;
    sim.finish()
}
