//! Python bindings: the order book, the quoting and reward formulas, run
//! orchestration and the analysis pipeline.

use std::path::{Path, PathBuf};

use cdasim::agents::{self, LtParams, MmParams};
use cdasim::analysis::{self, AnalysisError, AnalyzeOptions};
use cdasim::exchange::Audit;
use cdasim::harness::{self, ExperimentConfig, Group, HarnessError, RunOutput};
use cdasim::lob::{self, Order, OrderId, Side, Trade};
use pyo3::exceptions::{PyKeyError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use serde::Serialize;

fn value_err(e: impl ToString) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn harness_err(e: HarnessError) -> PyErr {
    match e {
        HarnessError::ConfigInvalid(_) | HarnessError::OutputExists(_) => value_err(e),
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

fn analysis_err(e: AnalysisError) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

/// Serialize through JSON into plain Python objects.
fn to_py<T: Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(value_err)?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

fn parse_side(side: &str) -> PyResult<Side> {
    match side.to_ascii_lowercase().as_str() {
        "bid" | "buy" => Ok(Side::Bid),
        "ask" | "sell" => Ok(Side::Ask),
        _ => Err(value_err(format!("side must be 'bid' or 'ask', got {side:?}"))),
    }
}

fn parse_group(group: &str) -> PyResult<Group> {
    match group.to_ascii_lowercase().as_str() {
        "train" | "training" | "continual" | "a" => Ok(Group::ContinualTraining),
        "test" | "testing" | "b" => Ok(Group::Testing),
        "untrained" | "c" => Ok(Group::Untrained),
        _ => Err(value_err(format!("unknown group {group:?}"))),
    }
}

fn trade_dict<'py>(py: Python<'py>, t: &Trade) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("step", t.step)?;
    d.set_item("price", t.price)?;
    d.set_item("quantity", t.quantity)?;
    d.set_item("taker_order_id", t.taker_order_id)?;
    d.set_item("maker_order_id", t.maker_order_id)?;
    d.set_item("taker_agent", t.taker_agent)?;
    d.set_item("maker_agent", t.maker_agent)?;
    d.set_item("taker_side", if t.taker_side == Side::Bid { "bid" } else { "ask" })?;
    Ok(d)
}

/// Price-time priority limit order book with integer tick prices.
#[pyclass(name = "OrderBook")]
struct PyOrderBook {
    book: lob::OrderBook,
    next_id: OrderId,
}

#[pymethods]
impl PyOrderBook {
    #[new]
    #[pyo3(signature = (lot_size = lob::LOT_SHARES))]
    fn new(lot_size: u64) -> PyResult<Self> {
        if lot_size == 0 {
            return Err(value_err("lot_size must be positive"));
        }
        Ok(PyOrderBook { book: lob::OrderBook::new(lot_size), next_id: 1 })
    }

    /// Submit a limit order; returns the order id, fills and resting quantity.
    #[pyo3(signature = (agent, side, price, quantity, step = 0))]
    fn submit_limit<'py>(
        &mut self,
        py: Python<'py>,
        agent: u32,
        side: &str,
        price: i64,
        quantity: u64,
        step: u64,
    ) -> PyResult<Bound<'py, PyDict>> {
        let order = Order::limit(self.next_id, agent, parse_side(side)?, price, quantity);
        self.submit(py, order, step)
    }

    /// Submit a market order; unfilled quantity is discarded.
    #[pyo3(signature = (agent, side, quantity, step = 0))]
    fn submit_market<'py>(
        &mut self,
        py: Python<'py>,
        agent: u32,
        side: &str,
        quantity: u64,
        step: u64,
    ) -> PyResult<Bound<'py, PyDict>> {
        let order = Order::market(self.next_id, agent, parse_side(side)?, quantity);
        self.submit(py, order, step)
    }

    /// Cancel a resting order and return its unfilled quantity.
    fn cancel(&mut self, order_id: OrderId) -> PyResult<u64> {
        self.book
            .cancel(order_id)
            .map(|o| o.remaining)
            .map_err(|e| PyKeyError::new_err(e.to_string()))
    }

    #[getter]
    fn best_bid(&self) -> Option<i64> {
        self.book.best_bid()
    }

    #[getter]
    fn best_ask(&self) -> Option<i64> {
        self.book.best_ask()
    }

    /// Mid price in ticks, or None when a side is empty.
    #[getter]
    fn mid(&self) -> Option<f64> {
        self.book.snapshot().ok().map(|s| s.mid())
    }

    #[getter]
    fn spread(&self) -> Option<i64> {
        self.book.snapshot().ok().map(|s| s.spread())
    }

    /// Top levels per side as lists of (price, quantity).
    #[pyo3(signature = (levels = lob::DEPTH_LEVELS))]
    fn depth<'py>(&self, py: Python<'py>, levels: usize) -> PyResult<Bound<'py, PyDict>> {
        let depth = self.book.depth(levels);
        let d = PyDict::new(py);
        let side = |s: &[lob::LevelView]| s.iter().map(|l| (l.price, l.quantity)).collect::<Vec<_>>();
        d.set_item("bids", side(&depth.bids))?;
        d.set_item("asks", side(&depth.asks))?;
        d.set_item("imbalance", depth.imbalance())?;
        Ok(d)
    }

    fn check_invariants(&self) -> PyResult<()> {
        self.book.check_invariants().map_err(PyRuntimeError::new_err)
    }

    fn __len__(&self) -> usize {
        self.book.len()
    }
}

impl PyOrderBook {
    fn submit<'py>(&mut self, py: Python<'py>, order: Order, step: u64) -> PyResult<Bound<'py, PyDict>> {
        let id = order.id;
        let out = self.book.submit(order, step).map_err(value_err)?;
        self.next_id += 1;
        let d = PyDict::new(py);
        d.set_item("order_id", id)?;
        let trades = PyList::empty(py);
        for t in &out.trades {
            trades.append(trade_dict(py, t)?)?;
        }
        d.set_item("trades", trades)?;
        d.set_item("rested", out.rested)?;
        d.set_item("discarded", out.discarded)?;
        Ok(d)
    }
}

/// Unrounded (bid, ask) quotes for a market maker.
#[pyfunction]
fn quote_prices(mid: f64, spread: f64, eps_s: f64, eps_a: f64) -> PyResult<(f64, f64)> {
    agents::quote_prices(Some(mid), spread, eps_s, eps_a).map_err(value_err)
}

#[pyfunction]
#[pyo3(signature = (pnl_delta, pnl_inventory_delta, provision, omega = None, gamma_inv = None, alpha = None, target_provision = None))]
fn mm_reward(
    pnl_delta: f64,
    pnl_inventory_delta: f64,
    provision: f64,
    omega: Option<f64>,
    gamma_inv: Option<f64>,
    alpha: Option<f64>,
    target_provision: Option<f64>,
) -> f64 {
    let d = MmParams::default();
    let p = MmParams {
        omega: omega.unwrap_or(d.omega),
        gamma_inv: gamma_inv.unwrap_or(d.gamma_inv),
        alpha: alpha.unwrap_or(d.alpha),
        target_provision: target_provision.unwrap_or(d.target_provision),
        ..d
    };
    agents::mm_reward(pnl_delta, pnl_inventory_delta, provision, &p)
}

#[pyfunction]
#[pyo3(signature = (pnl_delta, pnl_inventory_delta, dev_buy, dev_buy_prev, dev_sell, dev_sell_prev, omega = None, gamma_inv = None, alpha = None))]
#[allow(clippy::too_many_arguments)]
fn lt_reward(
    pnl_delta: f64,
    pnl_inventory_delta: f64,
    dev_buy: f64,
    dev_buy_prev: f64,
    dev_sell: f64,
    dev_sell_prev: f64,
    omega: Option<f64>,
    gamma_inv: Option<f64>,
    alpha: Option<f64>,
) -> f64 {
    let d = LtParams::default();
    let p = LtParams {
        omega: omega.unwrap_or(d.omega),
        gamma_inv: gamma_inv.unwrap_or(d.gamma_inv),
        alpha: alpha.unwrap_or(d.alpha),
        ..d
    };
    agents::lt_reward(pnl_delta, pnl_inventory_delta, dev_buy, dev_buy_prev, dev_sell, dev_sell_prev, &p)
}

#[pyfunction]
fn presets() -> Vec<&'static str> {
    harness::PRESETS.to_vec()
}

/// A preset name or TOML path, parsed and validated, as a dict.
#[pyfunction]
fn load_config(py: Python<'_>, config: &str) -> PyResult<Py<PyAny>> {
    let c = ExperimentConfig::load(config).map_err(harness_err)?;
    to_py(py, &c)
}

fn build_config(
    config: &str,
    seed: Option<u64>,
    steps: Option<u64>,
    group: Option<&str>,
    checkpoints: Option<PathBuf>,
    pretraining: bool,
) -> PyResult<ExperimentConfig> {
    let mut c = ExperimentConfig::load(config).map_err(harness_err)?;
    if let Some(seed) = seed {
        c.seed = seed;
    }
    if let Some(steps) = steps {
        if pretraining {
            c.pretrain_steps = steps;
        } else {
            c.n_steps = steps;
        }
    }
    if let Some(g) = group {
        c.group = parse_group(g)?;
        c.training = None;
        if !c.group.loads_checkpoints() {
            c.checkpoints = None;
        }
    }
    if let Some(dir) = checkpoints {
        let nested = dir.join("checkpoints");
        c.checkpoints = Some(if nested.is_dir() { nested } else { dir });
    }
    if !pretraining {
        c.validate().map_err(harness_err)?;
    }
    Ok(c)
}

fn audit_dict<'py>(py: Python<'py>, a: &Audit) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("total_cash", a.total_cash)?;
    d.set_item("total_inventory", a.total_inventory)?;
    d.set_item("total_reserved", a.total_reserved)?;
    d.set_item("total_reserved_shares", a.total_reserved_shares)?;
    Ok(d)
}

fn summarize(py: Python<'_>, out: &RunOutput, dir: Option<&Path>) -> PyResult<Py<PyAny>> {
    let d = PyDict::new(py);
    d.set_item("name", &out.config.name)?;
    d.set_item("seed", out.config.seed)?;
    d.set_item("group", out.config.group.label())?;
    d.set_item("n_trades", out.log.trades.len())?;
    let mids: Vec<f64> = out.log.mids_x2.iter().map(|m| *m as f64 / 200.0).collect();
    d.set_item("mids", mids)?;
    d.set_item("flash_event_starts", out.flash_event_starts.clone())?;
    d.set_item("initial_audit", audit_dict(py, &out.initial_audit)?)?;
    d.set_item("final_audit", audit_dict(py, &out.final_audit)?)?;
    if let Some(dir) = dir {
        let manifest = harness::write_run(out, dir).map_err(harness_err)?;
        d.set_item("manifest", to_py(py, &manifest)?)?;
    }
    Ok(d.into_any().unbind())
}

/// Run a stepped or realtime simulation; with `out`, also write the run directory.
#[pyfunction]
#[pyo3(signature = (config, seed = None, steps = None, group = None, checkpoints = None, out = None))]
fn simulate(
    py: Python<'_>,
    config: &str,
    seed: Option<u64>,
    steps: Option<u64>,
    group: Option<&str>,
    checkpoints: Option<PathBuf>,
    out: Option<PathBuf>,
) -> PyResult<Py<PyAny>> {
    let c = build_config(config, seed, steps, group, checkpoints, false)?;
    let result = py.detach(|| harness::run(&c)).map_err(harness_err)?;
    summarize(py, &result, out.as_deref())
}

/// Pretrain RL agents and write their checkpoints under `out`.
#[pyfunction]
#[pyo3(signature = (config, out, seed = None, steps = None))]
fn pretrain(py: Python<'_>, config: &str, out: PathBuf, seed: Option<u64>, steps: Option<u64>) -> PyResult<Py<PyAny>> {
    let c = build_config(config, seed, steps, None, None, true)?;
    let result = py.detach(|| harness::pretrain(&c)).map_err(harness_err)?;
    summarize(py, &result, Some(&out))
}

/// Analyze a written run; with `out`, also write the report files.
#[pyfunction]
#[pyo3(signature = (run, out = None, grid = None, horizon = None))]
fn analyze(
    py: Python<'_>,
    run: PathBuf,
    out: Option<PathBuf>,
    grid: Option<Vec<usize>>,
    horizon: Option<usize>,
) -> PyResult<Py<PyAny>> {
    let opts = AnalyzeOptions { grid, reference: None, impact_horizon: horizon };
    let (_, report) = analysis::analyze_run(&run, &opts).map_err(analysis_err)?;
    if let Some(dir) = out {
        analysis::write_report(&report, &dir).map_err(analysis_err)?;
    }
    to_py(py, &report)
}

/// Kurtosis table, return ACFs and QQ pairs for a mid-price path.
#[pyfunction]
#[pyo3(signature = (prices, grid = None, reference = None))]
fn stylized_facts(
    py: Python<'_>,
    prices: Vec<f64>,
    grid: Option<Vec<usize>>,
    reference: Option<Vec<f64>>,
) -> PyResult<Py<PyAny>> {
    let facts = analysis::stylized_facts_report(&prices, grid.as_deref(), reference.as_deref()).map_err(analysis_err)?;
    to_py(py, &facts)
}

#[pyfunction]
fn excess_kurtosis(values: Vec<f64>) -> PyResult<f64> {
    analysis::excess_kurtosis(&values).map_err(analysis_err)
}

#[pyfunction]
fn acf(values: Vec<f64>, max_lag: usize) -> PyResult<Vec<f64>> {
    analysis::acf(&values, max_lag).map_err(analysis_err)
}

/// Mean normalized price path after each base index.
#[pyfunction]
fn price_impact(py: Python<'_>, prices: Vec<f64>, bases: Vec<usize>, horizon: usize) -> PyResult<Py<PyAny>> {
    let curve = analysis::price_impact(&prices, &bases, horizon).map_err(analysis_err)?;
    to_py(py, &curve)
}

#[pymodule(name = "cdasim")]
fn cdasim_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyOrderBook>()?;
    m.add("LOT_SHARES", lob::LOT_SHARES)?;
    m.add_function(wrap_pyfunction!(quote_prices, m)?)?;
    m.add_function(wrap_pyfunction!(mm_reward, m)?)?;
    m.add_function(wrap_pyfunction!(lt_reward, m)?)?;
    m.add_function(wrap_pyfunction!(presets, m)?)?;
    m.add_function(wrap_pyfunction!(load_config, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(pretrain, m)?)?;
    m.add_function(wrap_pyfunction!(analyze, m)?)?;
    m.add_function(wrap_pyfunction!(stylized_facts, m)?)?;
    m.add_function(wrap_pyfunction!(excess_kurtosis, m)?)?;
    m.add_function(wrap_pyfunction!(acf, m)?)?;
    m.add_function(wrap_pyfunction!(price_impact, m)?)?;
    Ok(())
}
