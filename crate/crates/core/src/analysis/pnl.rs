use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::stats::quantile_sorted;
use super::AnalysisError;
use crate::exchange::AccountRecord;
use crate::lob::AgentId;

/// Exact PnL split for one account, in half-cents.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PnlDecomposition {
    pub agent_id: AgentId,
    pub steps: Vec<u64>,
    /// Per-step inventory revaluation inv_{t−1}·(mid_t − mid_{t−1}).
    pub inventory_step_x2: Vec<i64>,
    pub cumulative_inventory_x2: Vec<i64>,
    pub cumulative_spread_x2: Vec<i64>,
    pub total_x2: Vec<i64>,
}

impl PnlDecomposition {
    /// Cumulative spread + cumulative inventory = total at every step.
    pub fn identity_holds(&self) -> bool {
        self.cumulative_inventory_x2
            .iter()
            .zip(&self.cumulative_spread_x2)
            .zip(&self.total_x2)
            .all(|((i, s), t)| i + s == *t)
    }
}

/// Split total PnL from an opening state and per-step inventories and mids.
/// `inventory[t]` and `mid_x2[t]` are end-of-step values.
pub fn decompose_series(
    agent_id: AgentId,
    opening_inventory: i64,
    opening_mid_x2: i64,
    steps: &[u64],
    inventory: &[i64],
    mid_x2: &[i64],
    total_x2: &[i64],
) -> Result<PnlDecomposition, AnalysisError> {
    let n = steps.len();
    if inventory.len() != n || mid_x2.len() != n || total_x2.len() != n {
        return Err(AnalysisError::MisalignedSeries(format!(
            "agent {agent_id}: {n} steps, {} inventories, {} mids, {} totals",
            inventory.len(),
            mid_x2.len(),
            total_x2.len()
        )));
    }
    let mut prev_inv = opening_inventory;
    let mut prev_mid = opening_mid_x2;
    let mut cum = 0i64;
    let mut out = PnlDecomposition {
        agent_id,
        steps: steps.to_vec(),
        inventory_step_x2: Vec::with_capacity(n),
        cumulative_inventory_x2: Vec::with_capacity(n),
        cumulative_spread_x2: Vec::with_capacity(n),
        total_x2: total_x2.to_vec(),
    };
    for t in 0..n {
        let d = prev_inv * (mid_x2[t] - prev_mid);
        cum += d;
        out.inventory_step_x2.push(d);
        out.cumulative_inventory_x2.push(cum);
        out.cumulative_spread_x2.push(total_x2[t] - cum);
        prev_inv = inventory[t];
        prev_mid = mid_x2[t];
    }
    Ok(out)
}

/// Decompose every account in a per-step history. `opening` maps account ids
/// to their initial inventory. Rows of each account must cover consecutive
/// steps starting at 0.
pub fn pnl_decompose(
    rows: &[AccountRecord],
    opening: &BTreeMap<AgentId, i64>,
    opening_mid_x2: i64,
) -> Result<Vec<PnlDecomposition>, AnalysisError> {
    let mut by_agent: BTreeMap<AgentId, Vec<&AccountRecord>> = BTreeMap::new();
    for r in rows {
        by_agent.entry(r.agent_id).or_default().push(r);
    }
    let mut out = Vec::new();
    for (agent, list) in by_agent {
        for (k, r) in list.iter().enumerate() {
            if r.step != k as u64 {
                return Err(AnalysisError::MisalignedSeries(format!(
                    "agent {agent}: expected step {k}, found {}",
                    r.step
                )));
            }
        }
        let inv0 = *opening
            .get(&agent)
            .ok_or_else(|| AnalysisError::MisalignedSeries(format!("no opening state for agent {agent}")))?;
        let steps: Vec<u64> = list.iter().map(|r| r.step).collect();
        let inv: Vec<i64> = list.iter().map(|r| r.inventory).collect();
        let mid: Vec<i64> = list.iter().map(|r| r.mid_x2).collect();
        let total: Vec<i64> = list.iter().map(|r| r.pnl_total_x2).collect();
        out.push(decompose_series(agent, inv0, opening_mid_x2, &steps, &inv, &mid, &total)?);
    }
    Ok(out)
}

/// Cross-agent inventory percentiles per step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InventoryBand {
    pub step: u64,
    pub lower: f64,
    pub median: f64,
    pub upper: f64,
}

/// 20th, 50th and 80th inventory percentiles across `agents` at every step.
pub fn inventory_bands(rows: &[AccountRecord], agents: &[AgentId]) -> Vec<InventoryBand> {
    let mut by_step: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
    for r in rows.iter().filter(|r| agents.contains(&r.agent_id)) {
        by_step.entry(r.step).or_default().push(r.inventory as f64);
    }
    by_step
        .into_iter()
        .map(|(step, mut v)| {
            v.sort_by(f64::total_cmp);
            InventoryBand {
                step,
                lower: quantile_sorted(&v, 0.2),
                median: quantile_sorted(&v, 0.5),
                upper: quantile_sorted(&v, 0.8),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn flat_inventory_has_no_inventory_component() {
        let d = decompose_series(1, 0, 20_000, &[0, 1, 2], &[0, 0, 0], &[20_000, 20_010, 19_990], &[0, 50, 120]).unwrap();
        assert!(d.cumulative_inventory_x2.iter().all(|v| *v == 0));
        assert_eq!(d.cumulative_spread_x2, vec![0, 50, 120]);
        assert!(d.identity_holds());
    }

    #[test]
    fn one_lot_bought_at_mid_then_mid_up_one_tick() {
        // bought 100 shares at mid 100.00 during step 0; mid moves up a tick in step 1
        // total PnL at step 1 is 100 shares × 1 cent = 100 cents = 200 half-cents
        let d = decompose_series(1, 0, 20_000, &[0, 1], &[100, 100], &[20_000, 20_002], &[0, 200]).unwrap();
        assert_eq!(d.cumulative_inventory_x2, vec![0, 200]);
        assert_eq!(d.cumulative_spread_x2, vec![0, 0]);
    }

    #[test]
    fn misaligned_inputs_rejected() {
        assert!(matches!(
            decompose_series(1, 0, 0, &[0, 1], &[0], &[0, 0], &[0, 0]),
            Err(AnalysisError::MisalignedSeries(_))
        ));
    }

    #[test]
    fn bands_over_agents() {
        let rows: Vec<AccountRecord> = (0..5)
            .map(|k| AccountRecord {
                step: 0,
                agent_id: k,
                cash_cents: 0,
                inventory: k as i64 * 100,
                mid_x2: 0,
                pnl_total_x2: 0,
                pnl_inventory_x2: 0,
                pnl_spread_x2: 0,
            })
            .collect();
        let b = inventory_bands(&rows, &[0, 1, 2, 3, 4]);
        assert_eq!(b.len(), 1);
        assert_eq!(b[0].median, 200.0);
        assert!((b[0].lower - 80.0).abs() < 1e-12 && (b[0].upper - 320.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn identity_exact(
            moves in prop::collection::vec((-5i64..=5, -300i64..=300, -10_000i64..10_000), 1..100),
        ) {
            let steps: Vec<u64> = (0..moves.len() as u64).collect();
            let mut mid = 20_000;
            let mut inv = 0;
            let (mut mids, mut invs, mut totals) = (vec![], vec![], vec![]);
            for (dm, di, t) in &moves {
                mid += dm;
                inv += di;
                mids.push(mid);
                invs.push(inv);
                totals.push(*t);
            }
            let d = decompose_series(0, 0, 20_000, &steps, &invs, &mids, &totals).unwrap();
            prop_assert!(d.identity_holds());
        }
    }
}
