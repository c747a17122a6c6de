use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::sim::{RosterEntry, RunKind, RunOutput};
use super::HarnessError;
use crate::exchange::write_account_history;
use crate::lob::write_trade_tape;
use crate::rl::save_checkpoint;

pub const MANIFEST_FILE: &str = "run_manifest.json";

pub fn checkpoint_file_name(class: &str, index: usize) -> String {
    format!("{class}_{index:02}.ckpt")
}

pub fn sha256_file(path: &Path) -> Result<String, HarnessError> {
    let bytes = fs::read(path)?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

/// Everything needed to reproduce a run and audit its outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub artifact: String,
    pub version: String,
    pub kind: RunKind,
    pub name: String,
    pub seed: u64,
    pub n_steps: u64,
    pub group: String,
    /// Full config echo in TOML.
    pub config: String,
    pub roster: Vec<RosterEntry>,
    pub opening_mid_x2: i64,
    pub flash_event_starts: Vec<u64>,
    /// Relative path → sha256 for every output file.
    pub files: BTreeMap<String, String>,
    /// Checkpoints this run started from, with their hashes.
    pub checkpoints_loaded: BTreeMap<String, String>,
    pub checkpoints_written: BTreeMap<String, String>,
}

pub fn load_run_manifest(dir: &Path) -> Result<RunManifest, HarnessError> {
    let text = fs::read_to_string(dir.join(MANIFEST_FILE))?;
    Ok(serde_json::from_str(&text)?)
}

fn writer(dir: &Path, name: &str) -> Result<BufWriter<File>, HarnessError> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn write_states(out: &RunOutput, dir: &Path) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(writer(dir, "states.csv")?);
    let dim = out.log.states.first().map_or(0, |s| s.observation.len());
    let mut header = vec!["step".to_string(), "agent_id".into(), "mm_index".into(), "imbalance".into(), "phase".into()];
    header.extend((0..dim).map(|k| format!("o{k}")));
    w.write_record(&header)?;
    for s in &out.log.states {
        let mut rec = vec![
            s.step.to_string(),
            s.agent_id.to_string(),
            s.mm_index.to_string(),
            format!("{:?}", s.imbalance),
            s.phase.to_string(),
        ];
        // Debug formatting of f64 round-trips exactly
        rec.extend(s.observation.iter().map(|v| format!("{v:?}")));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct DiagnosticRow {
    agent_id: u32,
    update: usize,
    samples: usize,
    mean_ratio: f64,
    clip_fraction: f64,
    policy_loss: f64,
    value_loss: f64,
    entropy: f64,
    initial_ratio_deviation: f64,
    mean_return: f64,
}

/// Write every output of a run into `dir` (created if absent) and return the manifest.
pub fn write_run(out: &RunOutput, dir: &Path) -> Result<RunManifest, HarnessError> {
    fs::create_dir_all(dir)?;
    let mut files = Vec::new();

    write_trade_tape(&out.log.trades, writer(dir, "trades.csv")?)?;
    files.push("trades.csv".to_string());
    write_account_history(&out.log.accounts, writer(dir, "accounts.csv")?)?;
    files.push("accounts.csv".into());

    let mut w = csv::Writer::from_writer(writer(dir, "mids.csv")?);
    w.write_record(["step", "mid_x2", "defined"])?;
    for (step, (m, d)) in out.log.mids_x2.iter().zip(&out.log.mid_defined).enumerate() {
        w.write_record([step.to_string(), m.to_string(), d.to_string()])?;
    }
    w.flush()?;
    files.push("mids.csv".into());

    let mut w = writer(dir, "snapshots.jsonl")?;
    for s in &out.log.snapshots {
        serde_json::to_writer(&mut w, s)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    files.push("snapshots.jsonl".into());

    let mut w = csv::Writer::from_writer(writer(dir, "rewards.csv")?);
    for r in &out.log.rewards {
        w.serialize(r)?;
    }
    w.flush()?;
    files.push("rewards.csv".into());

    let mut w = csv::Writer::from_writer(writer(dir, "executed.csv")?);
    for e in &out.log.executed_market {
        w.serialize(e)?;
    }
    w.flush()?;
    files.push("executed.csv".into());

    if !out.log.states.is_empty() {
        write_states(out, dir)?;
        files.push("states.csv".into());
    }
    if !out.log.events.is_empty() {
        let mut w = writer(dir, "events.jsonl")?;
        for e in &out.log.events {
            serde_json::to_writer(&mut w, e)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        files.push("events.jsonl".into());
    }

    let diags = out.diagnostics();
    if diags.iter().any(|(_, d)| !d.is_empty()) {
        let mut w = csv::Writer::from_writer(writer(dir, "diagnostics.csv")?);
        for (agent_id, list) in diags {
            for (update, d) in list.iter().enumerate() {
                w.serialize(DiagnosticRow {
                    agent_id,
                    update,
                    samples: d.samples,
                    mean_ratio: d.mean_ratio,
                    clip_fraction: d.clip_fraction,
                    policy_loss: d.policy_loss,
                    value_loss: d.value_loss,
                    entropy: d.entropy,
                    initial_ratio_deviation: d.initial_ratio_deviation,
                    mean_return: d.mean_return,
                })?;
            }
        }
        w.flush()?;
        files.push("diagnostics.csv".into());
    }

    let mut checkpoints_written = BTreeMap::new();
    let mut counters: BTreeMap<&str, usize> = BTreeMap::new();
    let ckpt_dir = dir.join("checkpoints");
    for agent in &out.agents {
        let Some(brain) = agent.brain() else { continue };
        fs::create_dir_all(&ckpt_dir)?;
        let class = agent.class();
        let k = counters.entry(class).or_default();
        let name = checkpoint_file_name(class, *k);
        *k += 1;
        let meta = BTreeMap::from([
            ("agent_id".to_string(), agent.id().to_string()),
            ("class".to_string(), class.to_string()),
            ("run".to_string(), out.config.name.clone()),
            ("seed".to_string(), out.config.seed.to_string()),
            ("steps".to_string(), out.config.n_steps.to_string()),
        ]);
        let path = ckpt_dir.join(&name);
        save_checkpoint(&path, &brain.checkpoint(meta)).map_err(|source| HarnessError::Checkpoint {
            path: path.display().to_string(),
            source,
        })?;
        checkpoints_written.insert(name.clone(), sha256_file(&path)?);
        files.push(format!("checkpoints/{name}"));
    }

    let mut hashes = BTreeMap::new();
    for f in files {
        let h = sha256_file(&dir.join(&f))?;
        hashes.insert(f, h);
    }
    let manifest = RunManifest {
        artifact: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        kind: out.kind,
        name: out.config.name.clone(),
        seed: out.config.seed,
        n_steps: out.config.n_steps,
        group: format!("{:?}", out.config.group),
        config: out.config.to_toml(),
        roster: out.roster.clone(),
        opening_mid_x2: out.opening_mid_x2,
        flash_event_starts: out.flash_event_starts.clone(),
        files: hashes,
        checkpoints_loaded: out.loaded_checkpoints.clone(),
        checkpoints_written,
    };
    let mut w = writer(dir, MANIFEST_FILE)?;
    serde_json::to_writer_pretty(&mut w, &manifest)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(manifest)
}
