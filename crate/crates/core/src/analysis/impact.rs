use serde::{Deserialize, Serialize};

use super::AnalysisError;

/// Event-aligned price path p_{t0+k}/p_{t0}, averaged over events.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpactCurve {
    pub horizon: usize,
    pub mean: Vec<f64>,
    pub per_event: Vec<Vec<f64>>,
    /// Lowest point of the mean curve and its offset k.
    pub trough: Option<(usize, f64)>,
    /// Mean curve at the horizon.
    pub terminal: Option<f64>,
}

impl ImpactCurve {
    pub fn is_empty(&self) -> bool {
        self.per_event.is_empty()
    }
}

/// `bases` are the pre-event indices t0 into `prices`.
pub fn price_impact(prices: &[f64], bases: &[usize], horizon: usize) -> Result<ImpactCurve, AnalysisError> {
    let mut per_event = Vec::with_capacity(bases.len());
    for &t0 in bases {
        if t0 + horizon >= prices.len() {
            return Err(AnalysisError::WindowOutOfRange {
                start: t0,
                horizon,
                len: prices.len(),
            });
        }
        let p0 = prices[t0];
        if !(p0 > 0.0) {
            return Err(AnalysisError::DegenerateSeries(format!("non-positive price at {t0}")));
        }
        per_event.push(prices[t0..=t0 + horizon].iter().map(|p| p / p0).collect::<Vec<f64>>());
    }
    if per_event.is_empty() {
        return Ok(ImpactCurve {
            horizon,
            mean: Vec::new(),
            per_event,
            trough: None,
            terminal: None,
        });
    }
    let n = per_event.len() as f64;
    let mean: Vec<f64> = (0..=horizon)
        .map(|k| per_event.iter().map(|e| e[k]).sum::<f64>() / n)
        .collect();
    let trough = mean
        .iter()
        .copied()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(&b.1));
    Ok(ImpactCurve {
        horizon,
        terminal: mean.last().copied(),
        mean,
        per_event,
        trough,
    })
}
