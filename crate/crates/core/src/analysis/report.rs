use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::impact::{price_impact, ImpactCurve};
use super::pnl::{inventory_bands, pnl_decompose, InventoryBand};
use super::stats::{acf, excess_kurtosis, qq_pairs, ReturnSeries};
use super::AnalysisError;
use crate::exchange::AccountRecord;
use crate::harness::{load_run_manifest, RunManifest};

pub const MIN_REPORT_STEPS: usize = 2_000;
pub const ACF_MAX_LAG: usize = 50;
pub const QQ_POINTS: usize = 99;
/// Runs at least this long use the full Δt grid.
pub const FULL_GRID_STEPS: usize = 7_200;
pub const SHORT_GRID: [usize; 3] = [1, 10, 30];
pub const FULL_GRID: [usize; 5] = [1, 10, 30, 60, 120];
pub const DEFAULT_IMPACT_HORIZON: usize = 100;

pub fn default_grid(n_steps: usize) -> Vec<usize> {
    if n_steps < FULL_GRID_STEPS {
        SHORT_GRID.to_vec()
    } else {
        FULL_GRID.to_vec()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KurtosisRow {
    pub dt: usize,
    pub n_returns: usize,
    pub excess_kurtosis: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcfRow {
    pub lag: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QqRow {
    pub p: f64,
    pub simulated: f64,
    pub reference: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StylizedFacts {
    pub kurtosis: Vec<KurtosisRow>,
    /// ACFs of 1-step returns, their absolute values and their squares.
    pub acf_returns: Vec<AcfRow>,
    pub acf_abs: Vec<AcfRow>,
    pub acf_sq: Vec<AcfRow>,
    pub qq: Vec<QqRow>,
}

impl StylizedFacts {
    pub fn kurtosis_at(&self, dt: usize) -> Option<f64> {
        self.kurtosis.iter().find(|k| k.dt == dt).map(|k| k.excess_kurtosis)
    }

    pub fn first_lag_acf(&self) -> Option<f64> {
        self.acf_returns.get(1).map(|r| r.value)
    }

    /// True when kurtosis never rises as Δt grows.
    pub fn kurtosis_non_increasing(&self) -> bool {
        self.kurtosis.windows(2).all(|w| w[1].excess_kurtosis <= w[0].excess_kurtosis)
    }
}

fn acf_rows(x: &[f64], max_lag: usize) -> Result<Vec<AcfRow>, AnalysisError> {
    Ok(acf(x, max_lag)?
        .into_iter()
        .enumerate()
        .map(|(lag, value)| AcfRow { lag, value })
        .collect())
}

/// Kurtosis over the Δt grid, ACFs of 1-step returns to lag 50, and QQ pairs
/// against `reference` returns when given.
pub fn stylized_facts_report(
    mids: &[f64],
    grid: Option<&[usize]>,
    reference: Option<&[f64]>,
) -> Result<StylizedFacts, AnalysisError> {
    if mids.len() < MIN_REPORT_STEPS {
        return Err(AnalysisError::DegenerateSeries(format!(
            "mid series spans {} steps, need at least {MIN_REPORT_STEPS}",
            mids.len()
        )));
    }
    let grid = grid.map_or_else(|| default_grid(mids.len()), <[usize]>::to_vec);
    let kurtosis = grid
        .iter()
        .map(|&dt| {
            let r = ReturnSeries::from_prices(mids, dt)?;
            Ok(KurtosisRow {
                dt,
                n_returns: r.values.len(),
                excess_kurtosis: excess_kurtosis(&r.values)?,
            })
        })
        .collect::<Result<Vec<_>, AnalysisError>>()?;
    let r = ReturnSeries::from_prices(mids, 1)?;
    let qq = match reference {
        Some(reference) => qq_pairs(&r.values, reference, QQ_POINTS)?
            .into_iter()
            .map(|(p, simulated, reference)| QqRow { p, simulated, reference })
            .collect(),
        None => Vec::new(),
    };
    Ok(StylizedFacts {
        kurtosis,
        acf_returns: acf_rows(&r.values, ACF_MAX_LAG)?,
        acf_abs: acf_rows(&r.abs(), ACF_MAX_LAG)?,
        acf_sq: acf_rows(&r.squared(), ACF_MAX_LAG)?,
        qq,
    })
}

/// One float per line; blank lines and a non-numeric header are skipped.
pub fn read_reference_returns(path: &Path) -> Result<Vec<f64>, AnalysisError> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(File::open(path)?).lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        match t.parse::<f64>() {
            Ok(v) if v.is_finite() => out.push(v),
            _ if i == 0 => continue,
            _ => return Err(AnalysisError::Parse(format!("{}: line {}: {t:?}", path.display(), i + 1))),
        }
    }
    Ok(out)
}

pub fn write_rows<T: Serialize>(rows: &[T], path: &Path) -> Result<(), AnalysisError> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, AnalysisError> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<Result<Vec<T>, _>>()?)
}

impl StylizedFacts {
    pub fn write_csvs(&self, dir: &Path) -> Result<(), AnalysisError> {
        write_rows(&self.kurtosis, &dir.join("kurtosis_table.csv"))?;
        write_rows(&self.acf_returns, &dir.join("acf_returns.csv"))?;
        write_rows(&self.acf_abs, &dir.join("acf_abs.csv"))?;
        write_rows(&self.acf_sq, &dir.join("acf_sq.csv"))?;
        if !self.qq.is_empty() {
            write_rows(&self.qq, &dir.join("qq.csv"))?;
        }
        Ok(())
    }

    pub fn read_csvs(dir: &Path) -> Result<Self, AnalysisError> {
        let qq_path = dir.join("qq.csv");
        Ok(StylizedFacts {
            kurtosis: read_rows(&dir.join("kurtosis_table.csv"))?,
            acf_returns: read_rows(&dir.join("acf_returns.csv"))?,
            acf_abs: read_rows(&dir.join("acf_abs.csv"))?,
            acf_sq: read_rows(&dir.join("acf_sq.csv"))?,
            qq: if qq_path.exists() { read_rows(&qq_path)? } else { Vec::new() },
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MidRow {
    pub step: u64,
    pub mid_x2: i64,
    pub defined: bool,
}

/// Per-account PnL totals at the last recorded step, in dollars.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PnlSummary {
    pub agent_id: u32,
    pub class: String,
    pub total: f64,
    pub spread: f64,
    pub inventory: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpactRow {
    pub k: usize,
    pub mean: f64,
}

/// Everything `analyze` derives from one run directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub run: String,
    pub seed: u64,
    pub n_steps: u64,
    pub stylized_facts: StylizedFacts,
    pub pnl_identity_holds: bool,
    pub pnl: Vec<PnlSummary>,
    pub mm_inventory_bands: Vec<InventoryBand>,
    pub impact: Option<ImpactCurve>,
    /// Flash events whose window did not fit in the run.
    pub impact_events_dropped: usize,
}

#[derive(Debug, Clone, Default)]
pub struct AnalyzeOptions {
    pub grid: Option<Vec<usize>>,
    pub reference: Option<Vec<f64>>,
    pub impact_horizon: Option<usize>,
}

pub fn read_mids(path: &Path) -> Result<Vec<MidRow>, AnalysisError> {
    read_rows(path)
}

/// Mid prices in dollars, indexed by step.
pub fn mids_in_dollars(rows: &[MidRow]) -> Vec<f64> {
    rows.iter().map(|r| r.mid_x2 as f64 / 200.0).collect()
}

/// Event bases t0 = first active step − 1 whose window fits into `len` prices.
pub fn impact_bases(event_starts: &[u64], horizon: usize, len: usize) -> (Vec<usize>, usize) {
    let mut kept = Vec::new();
    let mut dropped = 0;
    for &s in event_starts {
        match (s as usize).checked_sub(1) {
            Some(t0) if t0 + horizon < len => kept.push(t0),
            _ => dropped += 1,
        }
    }
    (kept, dropped)
}

/// Recompute every statistic from the files of a finished run.
pub fn analyze_run(dir: &Path, opts: &AnalyzeOptions) -> Result<(RunManifest, RunReport), AnalysisError> {
    let manifest = load_run_manifest(dir).map_err(|e| AnalysisError::Parse(format!("{}: {e}", dir.display())))?;
    let mids = read_mids(&dir.join("mids.csv"))?;
    for (k, m) in mids.iter().enumerate() {
        if m.step != k as u64 {
            return Err(AnalysisError::MisalignedSeries(format!("mids.csv: row {k} has step {}", m.step)));
        }
    }
    let prices = mids_in_dollars(&mids);
    let stylized_facts = stylized_facts_report(&prices, opts.grid.as_deref(), opts.reference.as_deref())?;

    let accounts: Vec<AccountRecord> = read_rows(&dir.join("accounts.csv"))?;
    let opening: BTreeMap<u32, i64> = manifest.roster.iter().map(|r| (r.agent_id, r.initial_inventory)).collect();
    let decomps = pnl_decompose(&accounts, &opening, manifest.opening_mid_x2)?;
    let pnl_identity_holds = decomps.iter().all(|d| d.identity_holds())
        && accounts.iter().all(|a| a.pnl_inventory_x2 + a.pnl_spread_x2 == a.pnl_total_x2);
    let class_of: BTreeMap<u32, &str> = manifest.roster.iter().map(|r| (r.agent_id, r.class.as_str())).collect();
    let pnl = decomps
        .iter()
        .filter_map(|d| {
            let last = d.total_x2.len().checked_sub(1)?;
            Some(PnlSummary {
                agent_id: d.agent_id,
                class: class_of.get(&d.agent_id).copied().unwrap_or("utility").to_string(),
                total: d.total_x2[last] as f64 / 200.0,
                spread: d.cumulative_spread_x2[last] as f64 / 200.0,
                inventory: d.cumulative_inventory_x2[last] as f64 / 200.0,
            })
        })
        .collect();
    let mm_ids: Vec<u32> = manifest.roster.iter().filter(|r| r.class == "mm").map(|r| r.agent_id).collect();
    let mm_inventory_bands = if mm_ids.is_empty() { Vec::new() } else { inventory_bands(&accounts, &mm_ids) };

    let horizon = opts.impact_horizon.unwrap_or(DEFAULT_IMPACT_HORIZON);
    let (bases, impact_events_dropped) = impact_bases(&manifest.flash_event_starts, horizon, prices.len());
    let impact = if manifest.flash_event_starts.is_empty() {
        None
    } else {
        Some(price_impact(&prices, &bases, horizon)?)
    };
    let report = RunReport {
        run: manifest.name.clone(),
        seed: manifest.seed,
        n_steps: manifest.n_steps,
        stylized_facts,
        pnl_identity_holds,
        pnl,
        mm_inventory_bands,
        impact,
        impact_events_dropped,
    };
    Ok((manifest, report))
}

/// report.json plus the per-figure CSVs.
pub fn write_report(report: &RunReport, dir: &Path) -> Result<(), AnalysisError> {
    fs::create_dir_all(dir)?;
    report.stylized_facts.write_csvs(dir)?;
    write_rows(&report.pnl, &dir.join("pnl.csv"))?;
    if !report.mm_inventory_bands.is_empty() {
        write_rows(&report.mm_inventory_bands, &dir.join("inventory_bands.csv"))?;
    }
    if let Some(c) = &report.impact {
        let rows: Vec<ImpactRow> = c.mean.iter().enumerate().map(|(k, &mean)| ImpactRow { k, mean }).collect();
        write_rows(&rows, &dir.join("impact.csv"))?;
    }
    let f = File::create(dir.join("report.json"))?;
    serde_json::to_writer_pretty(f, report)?;
    Ok(())
}
