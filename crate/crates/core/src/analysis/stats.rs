use serde::{Deserialize, Serialize};

use super::AnalysisError;

/// Log-returns of a price series sampled every `dt` steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnSeries {
    pub dt: usize,
    pub values: Vec<f64>,
}

impl ReturnSeries {
    /// ln(p[(k+1)·dt] / p[k·dt]) over consecutive samples.
    pub fn from_prices(prices: &[f64], dt: usize) -> Result<Self, AnalysisError> {
        if dt == 0 {
            return Err(AnalysisError::DegenerateSeries("sampling interval must be positive".into()));
        }
        if prices.iter().any(|p| !(p.is_finite() && *p > 0.0)) {
            return Err(AnalysisError::DegenerateSeries("prices must be finite and positive".into()));
        }
        let sampled: Vec<f64> = prices.iter().step_by(dt).copied().collect();
        let values = sampled.windows(2).map(|w| (w[1] / w[0]).ln()).collect();
        Ok(ReturnSeries { dt, values })
    }

    pub fn abs(&self) -> Vec<f64> {
        self.values.iter().map(|r| r.abs()).collect()
    }

    pub fn squared(&self) -> Vec<f64> {
        self.values.iter().map(|r| r * r).collect()
    }
}

fn central_moments(x: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let (mut m2, mut m4) = (0.0, 0.0);
    for v in x {
        let d = v - mean;
        let d2 = d * d;
        m2 += d2;
        m4 += d2 * d2;
    }
    (mean, m2 / n, m4 / n)
}

/// Fourth standardized moment minus 3 (population moments).
pub fn excess_kurtosis(x: &[f64]) -> Result<f64, AnalysisError> {
    if x.len() < 4 {
        return Err(AnalysisError::DegenerateSeries(format!("need at least 4 values, got {}", x.len())));
    }
    let (_, m2, m4) = central_moments(x);
    if !(m2 > 0.0) {
        return Err(AnalysisError::DegenerateSeries("zero variance".into()));
    }
    Ok(m4 / (m2 * m2) - 3.0)
}

/// ρ(k) = Σ (x_t − x̄)(x_{t+k} − x̄) / Σ (x_t − x̄)² for k = 0..=max_lag.
pub fn acf(x: &[f64], max_lag: usize) -> Result<Vec<f64>, AnalysisError> {
    if max_lag >= x.len() {
        return Err(AnalysisError::DegenerateSeries(format!(
            "max lag {max_lag} needs more than {} values",
            x.len()
        )));
    }
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let d: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let denom: f64 = d.iter().map(|v| v * v).sum();
    if !(denom > 0.0) {
        return Err(AnalysisError::DegenerateSeries("zero variance".into()));
    }
    Ok((0..=max_lag)
        .map(|k| {
            if k == 0 {
                1.0
            } else {
                d.iter().zip(&d[k..]).map(|(a, b)| a * b).sum::<f64>() / denom
            }
        })
        .collect())
}

/// Linear-interpolation quantile of sorted data at probability `p`.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = p.clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn standardized_sorted(x: &[f64]) -> Result<Vec<f64>, AnalysisError> {
    let (mean, m2, _) = central_moments(x);
    if !(m2 > 0.0) {
        return Err(AnalysisError::DegenerateSeries("zero variance".into()));
    }
    let sd = m2.sqrt();
    let mut z: Vec<f64> = x.iter().map(|v| (v - mean) / sd).collect();
    z.sort_by(f64::total_cmp);
    Ok(z)
}

/// Standardized quantile pairs (simulated, reference) at `points` probabilities.
pub fn qq_pairs(sim: &[f64], reference: &[f64], points: usize) -> Result<Vec<(f64, f64, f64)>, AnalysisError> {
    if sim.len() < 2 || reference.len() < 2 || points == 0 {
        return Err(AnalysisError::DegenerateSeries("QQ needs two non-trivial series".into()));
    }
    let a = standardized_sorted(sim)?;
    let b = standardized_sorted(reference)?;
    Ok((0..points)
        .map(|i| {
            let p = (i as f64 + 0.5) / points as f64;
            (p, quantile_sorted(&a, p), quantile_sorted(&b, p))
        })
        .collect())
}
