//! Descriptive statistics across seeds: mean, median, standard
//! deviation, 99% confidence interval, and maximum over a selected
//! window of the per-epoch accuracy table.

use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

/// Which accuracy values enter the aggregate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StatWindow {
    /// Every epoch in the second half of each seed's series.
    LastHalf,
    /// Only the final epoch of each seed.
    LastEpoch,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunStats {
    pub n: usize,
    pub mean: f64,
    pub median: f64,
    pub std: f64,
    pub max: f64,
    /// Absent when fewer than two observations exist.
    pub ci99: Option<(f64, f64)>,
}

/// Aggregate a per-seed, per-epoch accuracy table over a window.
pub fn aggregate_stats(table: &[Vec<f64>], window: StatWindow) -> Result<RunStats> {
    if table.is_empty() {
        return Err(Error::Parameter("no seed series to aggregate".into()));
    }
    let epochs = table[0].len();
    if epochs == 0 || table.iter().any(|row| row.len() != epochs) {
        return Err(Error::Dimension("seed series must be non-empty and equal length".into()));
    }
    let mut values: Vec<f64> = Vec::new();
    for row in table {
        match window {
            StatWindow::LastHalf => values.extend(&row[epochs / 2..]),
            StatWindow::LastEpoch => values.push(row[epochs - 1]),
        }
    }
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let mut sorted = values.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    };
    let max = sorted[n - 1];
    let (std, ci99) = if n >= 2 {
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
        let std = var.sqrt();
        let t = StudentsT::new(0.0, 1.0, (n - 1) as f64)
            .map_err(|e| Error::Numeric(format!("t-distribution: {e}")))?
            .inverse_cdf(0.995);
        let half = t * std / (n as f64).sqrt();
        (std, Some((mean - half, mean + half)))
    } else {
        (0.0, None)
    };
    Ok(RunStats {
        n,
        mean,
        median,
        std,
        max,
        ci99,
    })
}
