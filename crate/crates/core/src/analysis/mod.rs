//! Statistics over finished runs: stylized facts, PnL decomposition, price
//! impact and policy probing. Everything here reads logs only.

mod impact;
mod pnl;
mod probe;
mod report;
mod stats;

pub use impact::{price_impact, ImpactCurve};
pub use pnl::{decompose_series, inventory_bands, pnl_decompose, InventoryBand, PnlDecomposition};
pub use probe::{
    probe_policies, read_states, write_probe_csv, PartitionActions, Partitioning, PolicyGroup, ProbeReport,
    DEFAULT_IMBALANCE_THRESHOLD,
};
pub use report::{
    analyze_run, default_grid, impact_bases, mids_in_dollars, read_mids, read_reference_returns, read_rows,
    stylized_facts_report, write_report, write_rows, AcfRow, AnalyzeOptions, ImpactRow, KurtosisRow, MidRow,
    PnlSummary, QqRow, RunReport, StylizedFacts, ACF_MAX_LAG, DEFAULT_IMPACT_HORIZON, FULL_GRID, FULL_GRID_STEPS,
    MIN_REPORT_STEPS, SHORT_GRID,
};
pub use stats::{acf, excess_kurtosis, qq_pairs, quantile_sorted, ReturnSeries};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("degenerate series: {0}")]
    DegenerateSeries(String),
    #[error("misaligned series: {0}")]
    MisalignedSeries(String),
    #[error("event window [{start}, {start}+{horizon}] exceeds series of length {len}")]
    WindowOutOfRange { start: usize, horizon: usize, len: usize },
    #[error("no states in partition {0}")]
    NoStatesInPartition(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
