use std::collections::BTreeMap;
use std::fs;

use cdasim::agents::Agent;
use cdasim::analysis::{analyze_run, AnalyzeOptions};
use cdasim::harness::{
    checkpoint_file_name, load_run_manifest, pretrain, run, write_run, ExecutedOrder, ExperimentConfig, Group,
    Mode, PRESETS,
};
use cdasim::lob::Side;
use cdasim::rl::load_checkpoint;

fn short(name: &str, steps: u64) -> ExperimentConfig {
    let mut c = ExperimentConfig::preset(name).unwrap();
    c.n_steps = steps;
    c.pretrain_steps = steps;
    c
}

#[test]
fn every_preset_runs_and_conserves() {
    for name in PRESETS {
        let out = run(&short(name, 600)).unwrap();
        assert_eq!(out.initial_audit.total_cash, out.final_audit.total_cash, "{name}");
        assert_eq!(out.initial_audit.total_inventory, out.final_audit.total_inventory, "{name}");
        assert_eq!(out.final_audit.total_reserved, 0);
        assert_eq!(out.final_audit.total_reserved_shares, 0);
        assert_eq!(out.log.mids_x2.len(), 600);
    }
}

#[test]
fn stepped_runs_write_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = short("flash_sale", 800);
    let a = write_run(&run(&cfg).unwrap(), &dir.path().join("a")).unwrap();
    let b = write_run(&run(&cfg).unwrap(), &dir.path().join("b")).unwrap();
    assert_eq!(a.files, b.files);
    assert!(a.files.contains_key("trades.csv"));
    assert!(a.files.keys().any(|f| f.starts_with("checkpoints/")));

    let mut other = cfg.clone();
    other.seed += 1;
    let c = write_run(&run(&other).unwrap(), &dir.path().join("c")).unwrap();
    assert_ne!(a.files["trades.csv"], c.files["trades.csv"]);
}

#[test]
fn pretrained_checkpoints_load_and_stay_frozen_in_testing() {
    let dir = tempfile::tempdir().unwrap();
    let base = short("rl_desk", 600);
    let pre = pretrain(&base).unwrap();
    let pre_manifest = write_run(&pre, &dir.path().join("pre")).unwrap();
    assert!(pre.diagnostics().iter().any(|(_, d)| !d.is_empty()), "pretraining ran PPO updates");

    let mut test = base.clone();
    test.group = Group::Testing;
    test.checkpoints = Some(dir.path().join("pre/checkpoints"));
    let out = run(&test).unwrap();
    let manifest = write_run(&out, &dir.path().join("test")).unwrap();
    for (name, hash) in &manifest.checkpoints_loaded {
        assert_eq!(pre_manifest.checkpoints_written.get(name), Some(hash), "{name}");
    }
    let mut k = 0;
    for agent in &out.agents {
        if let Agent::MarketMaker(mm) = agent {
            let ckpt = load_checkpoint(&dir.path().join("pre/checkpoints").join(checkpoint_file_name("mm", k))).unwrap();
            assert_eq!(mm.brain.policy, ckpt.policy, "frozen policy unchanged");
            k += 1;
        }
    }
    assert_eq!(k, 4);
    assert!(out.diagnostics().iter().all(|(_, d)| d.is_empty()));

    test.group = Group::ContinualTraining;
    let trained = run(&test).unwrap();
    assert!(trained.diagnostics().iter().any(|(_, d)| !d.is_empty()));
}

#[test]
fn lt_windows_match_executed_log() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&short("rl_desk", 1_500)).unwrap();
    write_run(&out, dir.path()).unwrap();
    let mut rdr = csv::Reader::from_path(dir.path().join("executed.csv")).unwrap();
    let rows: Vec<ExecutedOrder> = rdr.deserialize().map(Result::unwrap).collect();
    let last = out.config.n_steps - 1;
    let mut checked = 0;
    for agent in &out.agents {
        if let Agent::LiquidityTaker(lt) = agent {
            let tau = lt.params.tau;
            let mut counts = BTreeMap::from([(Side::Bid, 0u64), (Side::Ask, 0u64)]);
            for r in rows.iter().filter(|r| r.agent_id == lt.id && r.step + tau > last) {
                *counts.get_mut(&r.side).unwrap() += 1;
            }
            assert_eq!(lt.window.counts(), (counts[&Side::Bid], counts[&Side::Ask]), "agent {}", lt.id);
            checked += 1;
        }
    }
    assert_eq!(checked, 10);
}

#[test]
fn analysis_recomputes_from_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&short("flash_sale", 2_500)).unwrap();
    write_run(&out, dir.path()).unwrap();
    let (manifest, report) = analyze_run(dir.path(), &AnalyzeOptions::default()).unwrap();
    assert_eq!(manifest.n_steps, 2_500);
    assert!(report.pnl_identity_holds);
    let impact = report.impact.unwrap();
    assert_eq!(impact.mean[0], 1.0);
    assert!(!impact.is_empty());
    // the in-memory log and the files agree on the mid path
    let mids = fs::read_to_string(dir.path().join("mids.csv")).unwrap();
    assert_eq!(mids.lines().count(), 2_501);
}

#[test]
fn realtime_mode_conserves() {
    let mut c = short("rl_desk", 150);
    c.mode = Mode::Realtime;
    c.realtime.step_millis = 2;
    let out = run(&c).unwrap();
    assert_eq!(out.initial_audit.total_cash, out.final_audit.total_cash);
    assert_eq!(out.initial_audit.total_inventory, out.final_audit.total_inventory);
    assert_eq!(out.log.mids_x2.len(), 150);
}

#[test]
fn manifest_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let written = write_run(&run(&short("zi_desk", 300)).unwrap(), dir.path()).unwrap();
    let read = load_run_manifest(dir.path()).unwrap();
    assert_eq!(written, read);
    let echo = ExperimentConfig::from_toml(&read.config).unwrap();
    assert_eq!(echo.n_steps, 300);
}
