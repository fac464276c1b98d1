//! Time series of scalar functionals and the regression helpers used to
//! extract decay rates from them.

use crate::error::{Error, Result};

/// A nonnegative scalar functional sampled along a run.
#[derive(Debug, Clone)]
pub struct DecayTrace {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    /// Which functional and which run produced this trace.
    pub label: String,
}

impl DecayTrace {
    pub fn new(times: Vec<f64>, values: Vec<f64>, label: impl Into<String>) -> Result<Self> {
        if times.len() != values.len() {
            return Err(Error::InvalidInput(format!(
                "trace length mismatch: {} times vs {} values",
                times.len(),
                values.len()
            )));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput(
                "trace times must be strictly increasing".into(),
            ));
        }
        Ok(DecayTrace {
            times,
            values,
            label: label.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Restrict to t in [lo, hi].
    pub fn window(&self, lo: f64, hi: f64) -> DecayTrace {
        let mut times = Vec::new();
        let mut values = Vec::new();
        for (&t, &v) in self.times.iter().zip(&self.values) {
            if t >= lo && t <= hi {
                times.push(t);
                values.push(v);
            }
        }
        DecayTrace {
            times,
            values,
            label: self.label.clone(),
        }
    }
}

/// Ordinary least squares y = intercept + slope x.
#[derive(Debug, Clone, Copy)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope estimate.
    pub slope_se: f64,
    pub r_squared: f64,
    pub n: usize,
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    let n = x.len();
    if n != y.len() || n < 3 {
        return Err(Error::InvalidInput(format!(
            "linear fit needs at least 3 matched points, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    let nf = n as f64;
    let mean_x = x.iter().sum::<f64>() / nf;
    let mean_y = y.iter().sum::<f64>() / nf;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for i in 0..n {
        let dx = x[i] - mean_x;
        let dy = y[i] - mean_y;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return Err(Error::InvalidInput("degenerate abscissa in fit".into()));
    }
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let ss_res = (syy - slope * sxy).max(0.0);
    let r_squared = if syy > 0.0 { 1.0 - ss_res / syy } else { 1.0 };
    let slope_se = (ss_res / (nf - 2.0) / sxx).sqrt();
    Ok(LinearFit {
        slope,
        intercept,
        slope_se,
        r_squared,
        n,
    })
}

/// Fit `values ~ C exp(-rate t)` on the window; requires positive values.
/// Returns the fit of ln(values) against t (so `rate = -slope`).
pub fn exponential_rate_fit(trace: &DecayTrace, lo: f64, hi: f64) -> Result<LinearFit> {
    let w = trace.window(lo, hi);
    if w.values.iter().any(|&v| v <= 0.0) {
        return Err(Error::InvalidInput(
            "exponential fit needs strictly positive values on the window".into(),
        ));
    }
    let logs: Vec<f64> = w.values.iter().map(|v| v.ln()).collect();
    linear_fit(&w.times, &logs)
}

/// Fit `values ~ C t^slope` on the window; requires positive values and times.
pub fn loglog_slope_fit(trace: &DecayTrace, lo: f64, hi: f64) -> Result<LinearFit> {
    let w = trace.window(lo, hi);
    if w.values.iter().any(|&v| v <= 0.0) || w.times.iter().any(|&t| t <= 0.0) {
        return Err(Error::InvalidInput(
            "log-log fit needs strictly positive times and values".into(),
        ));
    }
    let log_t: Vec<f64> = w.times.iter().map(|t| t.ln()).collect();
    let log_v: Vec<f64> = w.values.iter().map(|v| v.ln()).collect();
    linear_fit(&log_t, &log_v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trace_rejects_mismatched_and_unsorted_input() {
        assert!(DecayTrace::new(vec![0.0, 1.0], vec![1.0], "x").is_err());
        assert!(DecayTrace::new(vec![0.0, 0.0], vec![1.0, 1.0], "x").is_err());
    }

    #[test]
    fn exponential_fit_recovers_exact_rate() {
        let times: Vec<f64> = (0..100).map(|k| k as f64 * 0.1).collect();
        let values: Vec<f64> = times.iter().map(|t| 3.0 * (-0.7 * t).exp()).collect();
        let trace = DecayTrace::new(times, values, "synthetic").unwrap();
        let fit = exponential_rate_fit(&trace, 0.0, 10.0).unwrap();
        assert!((-fit.slope - 0.7).abs() < 1e-12);
        assert!(fit.r_squared > 1.0 - 1e-12);
        assert!(fit.slope_se < 1e-12);
    }

    #[test]
    fn loglog_fit_recovers_power_law() {
        let times: Vec<f64> = (1..200).map(|k| k as f64).collect();
        let values: Vec<f64> = times.iter().map(|t| 2.0 * t.powf(-0.5)).collect();
        let trace = DecayTrace::new(times, values, "power").unwrap();
        let fit = loglog_slope_fit(&trace, 1.0, 200.0).unwrap();
        assert!((fit.slope + 0.5).abs() < 1e-6);
    }

    #[test]
    fn window_selects_inclusive_range() {
        let trace = DecayTrace::new(vec![0.0, 1.0, 2.0, 3.0], vec![4.0, 3.0, 2.0, 1.0], "w")
            .unwrap();
        let w = trace.window(1.0, 2.0);
        assert_eq!(w.times, vec![1.0, 2.0]);
        assert_eq!(w.values, vec![3.0, 2.0]);
    }
}
