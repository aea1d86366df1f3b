//! Burn-in detection on windowed success-rate traces.

use serde::{Deserialize, Serialize};

use crate::error::{param, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StationarityCheck {
    pub stationary: bool,
    /// First window of the stationary tail.
    pub burn_in_windows: Option<usize>,
}

/// Default threshold, in standard errors of a block mean.
pub const DEFAULT_SIGMAS: f64 = 3.0;

/// `trace[w][k]` is the success rate of class `k` in window `w`; NaN marks a
/// window in which the class was never offered.
///
/// For each candidate burn-in `b` up to half the trace, the tail from `b` is
/// cut into four consecutive blocks. The tail is stationary when, for every
/// class, consecutive block means differ by at most `sigmas` standard errors.
/// The per-window noise is estimated from successive differences, so a
/// smooth drift is not mistaken for noise.
pub fn detect_stationarity(trace: &[Vec<f64>], sigmas: f64) -> Result<StationarityCheck> {
    if trace.len() < 4 {
        return Err(param("stationarity check needs at least four windows"));
    }
    for b in 0..=trace.len() / 2 {
        let tail = &trace[b..];
        if tail.len() < 4 {
            break;
        }
        if tail_is_flat(tail, sigmas) {
            return Ok(StationarityCheck { stationary: true, burn_in_windows: Some(b) });
        }
    }
    Ok(StationarityCheck { stationary: false, burn_in_windows: None })
}

fn tail_is_flat(tail: &[Vec<f64>], sigmas: f64) -> bool {
    let k = tail[0].len();
    let block = tail.len() / 4;
    let used = &tail[tail.len() - 4 * block..];
    (0..k).all(|c| {
        let series: Vec<f64> = used.iter().map(|w| w[c]).collect();
        if series.iter().any(|x| x.is_nan()) {
            return true;
        }
        let diffs: f64 = series.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum();
        let sigma = (diffs / (2.0 * (series.len() - 1) as f64)).sqrt();
        let se = sigma / (block as f64).sqrt();
        let means: Vec<f64> = series.chunks(block).map(|ch| ch.iter().sum::<f64>() / block as f64).collect();
        means.windows(2).all(|m| (m[1] - m[0]).abs() <= sigmas * se)
    })
}
