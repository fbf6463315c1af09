//! Stochastic bisection for the equilibrium of a scalar Adam field.
//!
//! The field is evaluated through a frozen-CRN oracle, so all θ values see
//! the same underlying draws and the empirical field is monotone wherever the
//! true field is. The sign at the midpoint is accepted only with a 3-SE
//! margin; otherwise the replica count doubles, up to a budget.

use crate::error::{AdamFieldError, Result};
use crate::innovation::Innovation;
use crate::seq_space::DampingParams;

use super::oracle::{FieldOracle, FrozenOracle};

/// Result of a bisection run.
#[derive(Debug, Clone)]
pub struct RootEstimate {
    pub theta_star: f64,
    /// Width of the final bracketing interval.
    pub ci_width: f64,
    /// Oracle replicas in use when the search stopped.
    pub replicas_used: usize,
    /// The sign test at some midpoint stayed unresolved at the full budget;
    /// the returned interval is the best achieved.
    pub budget_exhausted: bool,
    /// Field value and standard error at `theta_star`.
    pub f_value: f64,
    pub f_se: f64,
    /// Standard error of `theta_star` itself via the local slope.
    pub theta_se: f64,
}

fn confident_sign(oracle: &FrozenOracle, theta: f64) -> Option<f64> {
    let (mean, se) = oracle.eval(&[theta]);
    if mean[0].abs() > 3.0 * se[0] {
        Some(mean[0].signum())
    } else {
        None
    }
}

/// Locate the zero of the field on `[lo, hi]`, assuming `f(lo) > 0 > f(hi)`.
///
/// `replicas_init` seeds the oracle bank; whenever the midpoint confidence
/// interval straddles zero the bank doubles, up to `replica_budget`.
#[allow(clippy::too_many_arguments)]
pub fn find_zero(
    innovation: &Innovation,
    params: DampingParams,
    interval: (f64, f64),
    tol_theta: f64,
    replicas_init: usize,
    replica_budget: usize,
    depth: usize,
    seed: u64,
) -> Result<RootEstimate> {
    if innovation.dim() != 1 {
        return Err(AdamFieldError::Precondition(
            "root finding is one-dimensional".into(),
        ));
    }
    let (mut lo, mut hi) = interval;
    if !(lo < hi) || !(tol_theta > 0.0) {
        return Err(AdamFieldError::Precondition(
            "need lo < hi and tol_theta > 0".into(),
        ));
    }
    let mut oracle = FrozenOracle::build(
        innovation.clone(),
        params,
        depth,
        replicas_init.max(2),
        seed,
    )?;

    // establish the bracket with 3-SE confidence, growing the bank if needed
    let sign_at = |oracle: &mut FrozenOracle, theta: f64| -> Option<f64> {
        loop {
            if let Some(s) = confident_sign(oracle, theta) {
                return Some(s);
            }
            if oracle.replicas() >= replica_budget {
                return None;
            }
            let next = (oracle.replicas() * 2).min(replica_budget);
            oracle.extend(next);
        }
    };

    match (sign_at(&mut oracle, lo), sign_at(&mut oracle, hi)) {
        (Some(sl), Some(sh)) if sl > 0.0 && sh < 0.0 => {}
        (Some(sl), Some(sh)) => {
            return Err(AdamFieldError::RootFinding(format!(
                "no sign change on [{lo}, {hi}]: signs ({sl}, {sh})"
            )));
        }
        _ => {
            return Err(AdamFieldError::RootFinding(format!(
                "could not establish field signs at the endpoints of [{lo}, {hi}] within budget"
            )));
        }
    }

    let mut budget_exhausted = false;
    while hi - lo > tol_theta {
        let mid = 0.5 * (lo + hi);
        match sign_at(&mut oracle, mid) {
            Some(s) if s > 0.0 => lo = mid,
            Some(_) => hi = mid,
            None => {
                budget_exhausted = true;
                break;
            }
        }
    }

    let theta_star = 0.5 * (lo + hi);
    let (fm, fse) = oracle.eval(&[theta_star]);
    let slope = oracle
        .derivative(&[theta_star])
        .map(|d| d[0])
        .unwrap_or(f64::NAN);
    let theta_se = if slope.is_finite() && slope != 0.0 {
        (fse[0] / slope).abs()
    } else {
        f64::NAN
    };
    Ok(RootEstimate {
        theta_star,
        ci_width: hi - lo,
        replicas_used: oracle.replicas(),
        budget_exhausted,
        f_value: fm[0],
        f_se: fse[0],
        theta_se,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::innovation::UDist;

    fn params(a: f64, b: f64, e: f64) -> DampingParams {
        DampingParams::new(a, b, e).unwrap()
    }

    #[test]
    fn symmetric_innovation_root_is_the_mean() {
        let p = params(0.5, 0.75, 0.1);
        let innov = Innovation::quadratic(UDist::rademacher(), 1, 8);
        let root = find_zero(&innov, p, (-1.0, 1.0), 1e-3, 1024, 1 << 17, 160, 3).unwrap();
        assert!(
            root.theta_star.abs() <= 2e-3 + 3.0 * root.theta_se,
            "theta* = {} (se {})",
            root.theta_star,
            root.theta_se
        );
        // |f(θ*)| CI contains 0
        assert!(root.f_value.abs() <= 3.0 * root.f_se + 1e-12);
    }

    #[test]
    fn noiseless_field_bisects_to_the_shift() {
        // constant U = c gives f(θ) = (c-θ)/(|c-θ|+ε): sign-function root at c
        let p = params(0.5, 0.75, 0.1);
        let c = 0.737;
        let innov = Innovation::quadratic(UDist::Constant { value: c }, 1, 1);
        let root = find_zero(&innov, p, (0.0, 2.0), 1e-6, 8, 64, 160, 1).unwrap();
        assert!((root.theta_star - c).abs() <= 1e-6);
        assert!(!root.budget_exhausted);
    }

    #[test]
    fn missing_sign_change_is_reported() {
        let p = params(0.5, 0.75, 0.1);
        let innov = Innovation::quadratic(UDist::Constant { value: 5.0 }, 1, 1);
        let err = find_zero(&innov, p, (0.0, 2.0), 1e-6, 8, 64, 160, 1).unwrap_err();
        assert!(matches!(err, AdamFieldError::RootFinding(_)));
    }

    #[test]
    fn tight_tolerance_exhausts_budget_with_flag() {
        // near the root the sign cannot be resolved at a tiny budget
        let p = params(0.5, 0.75, 0.1);
        let innov = Innovation::quadratic(UDist::rademacher(), 1, 2);
        let root = find_zero(&innov, p, (-1.0, 1.0), 1e-9, 64, 256, 120, 3).unwrap();
        assert!(root.budget_exhausted);
        assert!(root.ci_width > 1e-9);
    }
}
