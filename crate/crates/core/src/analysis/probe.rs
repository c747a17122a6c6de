use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::agents::{squash_to_range, MmParams};
use crate::harness::StateRow;
use crate::rl::Policy;

pub const DEFAULT_IMBALANCE_THRESHOLD: f64 = 0.2;

/// How logged states are split before probing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Partitioning {
    /// Balanced iff |imbalance| ≤ threshold.
    Imbalance { threshold: f64 },
    /// One partition per informed-schedule phase.
    Phase,
}

impl Default for Partitioning {
    fn default() -> Self {
        Partitioning::Imbalance {
            threshold: DEFAULT_IMBALANCE_THRESHOLD,
        }
    }
}

impl Partitioning {
    pub fn label(&self, s: &StateRow) -> String {
        match *self {
            Partitioning::Imbalance { threshold } => {
                if s.imbalance.abs() <= threshold {
                    "balanced".into()
                } else {
                    "imbalanced".into()
                }
            }
            Partitioning::Phase => format!("phase_{}", s.phase),
        }
    }

    /// Partitions that are always reported, even when empty.
    fn expected(&self) -> Vec<String> {
        match self {
            Partitioning::Imbalance { .. } => vec!["balanced".into(), "imbalanced".into()],
            Partitioning::Phase => Vec::new(),
        }
    }
}

/// A named set of market-maker policies indexed like `StateRow::mm_index`.
#[derive(Debug, Clone)]
pub struct PolicyGroup {
    pub label: String,
    pub policies: Vec<(Policy, MmParams)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionActions {
    pub group: String,
    pub partition: String,
    pub eps_s: Vec<f64>,
    pub eps_a: Vec<f64>,
    pub mean_eps_s: Option<f64>,
    pub mean_eps_a: Option<f64>,
}

impl PartitionActions {
    pub fn len(&self) -> usize {
        self.eps_s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eps_s.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub partitioning: Partitioning,
    pub results: Vec<PartitionActions>,
    /// Partitions without any logged state.
    pub empty_partitions: Vec<String>,
}

impl ProbeReport {
    /// Actions of a group on a partition; `NoStatesInPartition` if it is empty.
    pub fn get(&self, group: &str, partition: &str) -> Result<&PartitionActions, AnalysisError> {
        self.results
            .iter()
            .find(|r| r.group == group && r.partition == partition && !r.is_empty())
            .ok_or_else(|| AnalysisError::NoStatesInPartition(partition.to_string()))
    }
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Feed every logged state to each group's policy for its market maker and
/// collect the noise-free ε_s and ε_a per partition.
pub fn probe_policies(
    states: &[StateRow],
    groups: &[PolicyGroup],
    partitioning: Partitioning,
) -> Result<ProbeReport, AnalysisError> {
    let mut parts: BTreeMap<String, Vec<&StateRow>> = partitioning.expected().into_iter().map(|p| (p, Vec::new())).collect();
    for s in states {
        parts.entry(partitioning.label(s)).or_default().push(s);
    }
    let mut results = Vec::new();
    for g in groups {
        for (name, rows) in &parts {
            let (mut eps_s, mut eps_a) = (Vec::with_capacity(rows.len()), Vec::with_capacity(rows.len()));
            for s in rows {
                let (policy, params) = g.policies.get(s.mm_index).ok_or_else(|| {
                    AnalysisError::MisalignedSeries(format!("group {} has no policy for market maker {}", g.label, s.mm_index))
                })?;
                let out = policy
                    .output(&s.observation)
                    .map_err(|e| AnalysisError::MisalignedSeries(format!("state at step {}: {e}", s.step)))?;
                eps_s.push(squash_to_range(out[1], params.eps_s_range));
                eps_a.push(squash_to_range(out[2], params.eps_a_range));
            }
            results.push(PartitionActions {
                group: g.label.clone(),
                partition: name.clone(),
                mean_eps_s: mean(&eps_s),
                mean_eps_a: mean(&eps_a),
                eps_s,
                eps_a,
            });
        }
    }
    let empty_partitions = parts.iter().filter(|(_, v)| v.is_empty()).map(|(k, _)| k.clone()).collect();
    Ok(ProbeReport {
        partitioning,
        results,
        empty_partitions,
    })
}

/// Read a `states.csv` written by the harness.
pub fn read_states(path: &Path) -> Result<Vec<StateRow>, AnalysisError> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let field = |i: usize| rec.get(i).unwrap_or_default();
        let bad = |i: usize| AnalysisError::Parse(format!("{}: bad field {i} in row {}", path.display(), out.len() + 1));
        let observation = (5..rec.len())
            .map(|i| field(i).parse::<f64>().map_err(|_| bad(i)))
            .collect::<Result<Vec<f64>, _>>()?;
        out.push(StateRow {
            step: field(0).parse().map_err(|_| bad(0))?,
            agent_id: field(1).parse().map_err(|_| bad(1))?,
            mm_index: field(2).parse().map_err(|_| bad(2))?,
            imbalance: field(3).parse().map_err(|_| bad(3))?,
            phase: field(4).parse().map_err(|_| bad(4))?,
            observation,
        });
    }
    Ok(out)
}

/// One row per (group, partition, state) for plotting.
pub fn write_probe_csv(report: &ProbeReport, path: &Path) -> Result<(), AnalysisError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["group", "partition", "eps_s", "eps_a"])?;
    for r in &report.results {
        for (s, a) in r.eps_s.iter().zip(&r.eps_a) {
            w.write_record([r.group.as_str(), r.partition.as_str(), &s.to_string(), &a.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn state(imbalance: f64, phase: i64, seed: f64) -> StateRow {
        StateRow {
            step: 0,
            agent_id: 1,
            mm_index: 0,
            imbalance,
            phase,
            observation: (0..4).map(|k| seed + k as f64 * 0.1).collect(),
        }
    }

    fn group(label: &str, seed: u64) -> PolicyGroup {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        PolicyGroup {
            label: label.into(),
            policies: vec![(Policy::gaussian(&[8], 4, 3, -0.5, &mut rng), MmParams::default())],
        }
    }

    #[test]
    fn all_balanced_leaves_imbalanced_empty() {
        let states = vec![state(0.5, -1, 0.0), state(-0.9, -1, 1.0)];
        let rep = probe_policies(&states, &[group("A", 1)], Partitioning::Imbalance { threshold: 1.0 }).unwrap();
        assert_eq!(rep.empty_partitions, vec!["imbalanced".to_string()]);
        assert!(matches!(rep.get("A", "imbalanced"), Err(AnalysisError::NoStatesInPartition(_))));
        assert_eq!(rep.get("A", "balanced").unwrap().len(), 2);
    }

    #[test]
    fn identical_checkpoints_give_identical_distributions() {
        let states: Vec<StateRow> = (0..20).map(|k| state(k as f64 / 10.0 - 1.0, -1, k as f64)).collect();
        let rep = probe_policies(&states, &[group("A", 5), group("B", 5)], Partitioning::default()).unwrap();
        for p in ["balanced", "imbalanced"] {
            let a = rep.get("A", p).unwrap();
            let b = rep.get("B", p).unwrap();
            assert_eq!(a.eps_s, b.eps_s);
            assert_eq!(a.eps_a, b.eps_a);
        }
    }

    #[test]
    fn phase_partitioning_and_ranges() {
        let states = vec![state(0.0, 0, 0.0), state(0.0, 1, 0.3), state(0.0, 1, 0.6)];
        let rep = probe_policies(&states, &[group("A", 2)], Partitioning::Phase).unwrap();
        assert_eq!(rep.get("A", "phase_1").unwrap().len(), 2);
        for r in &rep.results {
            assert!(r.eps_s.iter().chain(&r.eps_a).all(|v| (-1.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn missing_policy_is_misaligned() {
        let mut s = state(0.0, -1, 0.0);
        s.mm_index = 3;
        assert!(matches!(
            probe_policies(&[s], &[group("A", 1)], Partitioning::default()),
            Err(AnalysisError::MisalignedSeries(_))
        ));
    }
}
