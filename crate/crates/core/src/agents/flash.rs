use serde::{Deserialize, Serialize};

use crate::exchange::Intent;
use crate::lob::{AgentId, Side, LOT_SHARES};

/// Repeating burst of market sells: `active` steps on, `idle` steps off.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FlashSchedule {
    pub start: u64,
    pub active: u64,
    pub idle: u64,
    pub n_events: u64,
    /// Lots sold per active step.
    pub lots: u64,
}

impl Default for FlashSchedule {
    fn default() -> Self {
        FlashSchedule {
            start: 0,
            active: 5,
            idle: 400,
            n_events: 88,
            lots: 300,
        }
    }
}

impl FlashSchedule {
    pub fn period(&self) -> u64 {
        self.active + self.idle
    }

    /// Event index if `step` falls inside an active window.
    pub fn event_at(&self, step: u64) -> Option<u64> {
        if step < self.start || self.active == 0 {
            return None;
        }
        let rel = step - self.start;
        let k = rel / self.period();
        (k < self.n_events && rel % self.period() < self.active).then_some(k)
    }

    /// First step of every event that starts before `n_steps`.
    pub fn event_starts(&self, n_steps: u64) -> Vec<u64> {
        (0..self.n_events)
            .map(|k| self.start + k * self.period())
            .take_while(|s| *s < n_steps)
            .collect()
    }

    /// Shares sold over the whole schedule.
    pub fn total_shares(&self) -> u64 {
        self.n_events * self.active * self.lots * LOT_SHARES
    }
}

pub fn flash_sale_step(step: u64, schedule: &FlashSchedule) -> Option<Intent> {
    schedule.event_at(step).map(|_| Intent::Market {
        side: Side::Ask,
        quantity: schedule.lots * LOT_SHARES,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlashSaleAgent {
    pub id: AgentId,
    pub schedule: FlashSchedule,
}

impl FlashSaleAgent {
    pub fn new(id: AgentId, schedule: FlashSchedule) -> Self {
        FlashSaleAgent { id, schedule }
    }

    pub fn act(&self, step: u64) -> Option<Intent> {
        flash_sale_step(step, &self.schedule)
    }
}

/// Target (buy, sell) fractions for every LT, switching each `phase_len` steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InformedSchedule {
    pub phase_len: u64,
    pub phases: Vec<(f64, f64)>,
}

impl Default for InformedSchedule {
    fn default() -> Self {
        InformedSchedule {
            phase_len: 10_000,
            phases: vec![(0.3, 0.4), (0.4, 0.35), (0.4, 0.4), (0.4, 0.3)],
        }
    }
}

impl InformedSchedule {
    /// Targets at `step`; the last phase holds once the schedule is exhausted.
    pub fn targets(&self, step: u64) -> Option<(f64, f64)> {
        let last = self.phases.len().checked_sub(1)?;
        let k = (step / self.phase_len.max(1)) as usize;
        Some(self.phases[k.min(last)])
    }

    pub fn phase(&self, step: u64) -> usize {
        ((step / self.phase_len.max(1)) as usize).min(self.phases.len().saturating_sub(1))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn active_and_idle_windows() {
        let s = FlashSchedule::default();
        for step in 0..5 {
            assert_eq!(
                flash_sale_step(step, &s),
                Some(Intent::Market { side: Side::Ask, quantity: 30_000 })
            );
        }
        for step in 5..405 {
            assert_eq!(flash_sale_step(step, &s), None);
        }
        assert!(flash_sale_step(405, &s).is_some());
        assert_eq!(s.event_at(405), Some(1));
    }

    #[test]
    fn zero_events_is_inert() {
        let s = FlashSchedule {
            n_events: 0,
            ..Default::default()
        };
        assert!((0..2_000).all(|t| flash_sale_step(t, &s).is_none()));
        assert_eq!(s.total_shares(), 0);
    }

    #[test]
    fn one_event_sells_150000_shares() {
        let s = FlashSchedule {
            n_events: 1,
            ..Default::default()
        };
        let sold: u64 = (0..1_000)
            .filter_map(|t| match flash_sale_step(t, &s) {
                Some(Intent::Market { quantity, .. }) => Some(quantity),
                _ => None,
            })
            .sum();
        assert_eq!(sold, 150_000);
        assert_eq!(s.total_shares(), 150_000);
    }

    #[test]
    fn schedule_stops_after_n_events() {
        let s = FlashSchedule {
            n_events: 2,
            ..Default::default()
        };
        assert!(s.event_at(405).is_some());
        assert!(s.event_at(810).is_none());
        assert_eq!(s.event_starts(1_000), vec![0, 405]);
        assert_eq!(s.event_starts(300), vec![0]);
    }

    #[test]
    fn informed_phases() {
        let s = InformedSchedule::default();
        assert_eq!(s.targets(0), Some((0.3, 0.4)));
        assert_eq!(s.targets(9_999), Some((0.3, 0.4)));
        assert_eq!(s.targets(10_000), Some((0.4, 0.35)));
        assert_eq!(s.targets(39_999), Some((0.4, 0.3)));
        assert_eq!(s.targets(40_000), Some((0.4, 0.3)));
        assert_eq!(s.targets(1_000_000), Some((0.4, 0.3)));
        assert_eq!(s.phase(25_000), 2);
    }
}
