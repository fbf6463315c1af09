//! Log-log least squares for convergence-rate readouts.

use crate::error::{AdamFieldError, Result};
use serde::Serialize;

#[derive(Debug, Clone, Serialize)]
pub struct RateFit {
    pub points: Vec<(f64, f64)>,
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual in log space.
    pub residual: f64,
    /// x-range of the fitted points.
    pub window: (f64, f64),
}

/// Ordinary least squares on `(log x, log y)`.
pub fn fit_loglog_slope(points: &[(f64, f64)]) -> Result<RateFit> {
    if points.len() < 3 {
        return Err(AdamFieldError::Precondition(
            "need at least 3 points for a rate fit".into(),
        ));
    }
    if points.iter().any(|&(x, y)| x <= 0.0 || y <= 0.0) {
        return Err(AdamFieldError::Precondition(
            "rate fits need strictly positive coordinates".into(),
        ));
    }
    let n = points.len() as f64;
    let logs: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(AdamFieldError::Precondition(
            "all x values coincide".into(),
        ));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual = (logs
        .iter()
        .map(|p| {
            let r = p.1 - (intercept + slope * p.0);
            r * r
        })
        .sum::<f64>()
        / n)
        .sqrt();
    let xs: Vec<f64> = points.iter().map(|p| p.0).collect();
    let window = (
        xs.iter().cloned().fold(f64::INFINITY, f64::min),
        xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
    );
    Ok(RateFit {
        points: points.to_vec(),
        slope,
        intercept,
        residual,
        window,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn exact_power_laws() {
        let xs = [1.0, 2.0, 4.0, 8.0];
        let identity: Vec<(f64, f64)> = xs.iter().map(|&x| (x, x)).collect();
        let fit = fit_loglog_slope(&identity).unwrap();
        assert_relative_eq!(fit.slope, 1.0, epsilon = 1e-12);
        assert!(fit.residual < 1e-12);

        let sqrt: Vec<(f64, f64)> = xs.iter().map(|&x| (x, x.sqrt())).collect();
        let fit = fit_loglog_slope(&sqrt).unwrap();
        assert_relative_eq!(fit.slope, 0.5, epsilon = 1e-12);

        let inv: Vec<(f64, f64)> = xs.iter().map(|&x| (x, 7.0 / x)).collect();
        let fit = fit_loglog_slope(&inv).unwrap();
        assert_relative_eq!(fit.slope, -1.0, epsilon = 1e-12);
        assert_relative_eq!(fit.intercept, 7.0f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn nonpositive_values_rejected() {
        assert!(fit_loglog_slope(&[(1.0, 1.0), (2.0, 0.0), (3.0, 1.0)]).is_err());
        assert!(fit_loglog_slope(&[(1.0, 1.0), (2.0, 2.0)]).is_err());
    }
}
