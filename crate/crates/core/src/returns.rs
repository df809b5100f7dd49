//! Time-weighted return of irregular trade series.
//!
//! For consecutive trades `(t_i, P_i)` and `(t_{i+1}, P_{i+1})`:
//!
//! ```text
//! R          = (P_{i+1} - P_i) / P_i
//! R_adjusted = (1 + R)^(1 / Δt) - 1          Δt = t_{i+1} - t_i seconds
//! R_total    = Π (1 + R_adjusted,i) - 1
//! ```
//!
//! `R_total` is the product of per-second equivalent rates. It is not the
//! holding-period return of the series and is implemented as written.
//! Powers go through `ln_1p`/`exp_m1`, and the product is accumulated as a
//! compensated sum of logarithms so results stay accurate when every factor
//! is within a few ulps of one.

use crate::model::{Dataset, IntervalReturn, PriceSeries, ReturnSummary};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ReturnsError {
    #[error("insufficient data: {len} observation(s), at least 2 required")]
    InsufficientData { len: usize },
    #[error("length mismatch: {timestamps} timestamps, {prices} prices")]
    LengthMismatch { timestamps: usize, prices: usize },
    #[error("timestamps must be strictly increasing (index {index})")]
    NonIncreasing { index: usize },
    #[error("price at index {index} must be positive and finite")]
    InvalidPrice { index: usize },
}

/// Sorts by time, drops non-positive or non-finite prices and keeps the last
/// trade of each second.
pub fn clean_series(raw: &PriceSeries) -> PriceSeries {
    let mut obs: Vec<(i64, f64)> = raw.observations().filter(|&(_, p)| p.is_finite() && p > 0.0).collect();
    obs.sort_by_key(|&(t, _)| t);
    let mut cleaned: Vec<(i64, f64)> = Vec::with_capacity(obs.len());
    for (t, p) in obs {
        match cleaned.last_mut() {
            Some(last) if last.0 == t => last.1 = p,
            _ => cleaned.push((t, p)),
        }
    }
    let (timestamps, prices) = cleaned.into_iter().unzip();
    PriceSeries::new(raw.token.clone(), timestamps, prices)
}

fn check(series: &PriceSeries) -> Result<(), ReturnsError> {
    let (nt, np) = (series.timestamps.len(), series.prices.len());
    if nt != np {
        return Err(ReturnsError::LengthMismatch {
            timestamps: nt,
            prices: np,
        });
    }
    if nt < 2 {
        return Err(ReturnsError::InsufficientData { len: nt });
    }
    if let Some(i) = series.timestamps.windows(2).position(|w| w[1] <= w[0]) {
        return Err(ReturnsError::NonIncreasing { index: i + 1 });
    }
    if let Some(i) = series.prices.iter().position(|p| !(p.is_finite() && *p > 0.0)) {
        return Err(ReturnsError::InvalidPrice { index: i });
    }
    Ok(())
}

/// `(P_{i+1} - P_i) / P_i` for each consecutive pair.
pub fn simple_returns(series: &PriceSeries) -> Result<Vec<f64>, ReturnsError> {
    check(series)?;
    Ok(series.prices.windows(2).map(|w| (w[1] - w[0]) / w[0]).collect())
}

/// `(1 + R)^(1/Δt) - 1`; exactly `R` when `Δt` is one second.
pub fn per_second_rate(simple_return: f64, delta_seconds: i64) -> f64 {
    if delta_seconds == 1 {
        simple_return
    } else {
        (simple_return.ln_1p() / delta_seconds as f64).exp_m1()
    }
}

pub fn interval_adjusted_returns(series: &PriceSeries) -> Result<Vec<IntervalReturn>, ReturnsError> {
    let simple = simple_returns(series)?;
    Ok(simple
        .into_iter()
        .zip(series.timestamps.windows(2))
        .map(|(r, w)| {
            let dt = w[1] - w[0];
            IntervalReturn {
                simple_return: r,
                delta_seconds: dt,
                adjusted_return: per_second_rate(r, dt),
            }
        })
        .collect())
}

/// `Π (1 + R_adjusted,i) - 1` over all `n - 1` intervals of a cleaned series.
pub fn time_weighted_return(series: &PriceSeries) -> Result<ReturnSummary, ReturnsError> {
    let intervals = interval_adjusted_returns(series)?;
    let total_return = match intervals.as_slice() {
        [only] => only.adjusted_return,
        _ => {
            let mut log_growth = NeumaierSum::default();
            for iv in &intervals {
                log_growth.add(iv.simple_return.ln_1p() / iv.delta_seconds as f64);
            }
            log_growth.total().exp_m1()
        }
    };
    Ok(ReturnSummary {
        token: series.token.clone(),
        total_return,
        interval_count: intervals.len(),
    })
}

/// Drops trades after `cutoff`, then tokens left with fewer than
/// `min_trades` observations, then series left with no tokens.
pub fn filter_dataset(dataset: &Dataset, min_trades: usize, cutoff: i64) -> Dataset {
    let mut out = Dataset::new();
    for (name, tokens) in dataset.series() {
        let kept: Vec<PriceSeries> = tokens
            .iter()
            .map(|s| {
                let (timestamps, prices) = s.observations().filter(|&(t, _)| t <= cutoff).unzip();
                PriceSeries::new(s.token.clone(), timestamps, prices)
            })
            .filter(|s| s.len() >= min_trades)
            .collect();
        if !kept.is_empty() {
            out.insert_series(name.clone(), kept);
        }
    }
    out
}

/// Cleans every series, filters, and computes one summary per surviving token.
pub fn analyze_dataset(dataset: &Dataset, min_trades: usize, cutoff: i64) -> Vec<ReturnSummary> {
    let cleaned = dataset.map_series(clean_series);
    filter_dataset(&cleaned, min_trades.max(2), cutoff)
        .tokens()
        .filter_map(|s| time_weighted_return(s).ok())
        .collect()
}

#[derive(Default)]
struct NeumaierSum {
    sum: f64,
    compensation: f64,
}

impl NeumaierSum {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn total(&self) -> f64 {
        self.sum + self.compensation
    }
}
