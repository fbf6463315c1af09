//! ρ-partitions of the step index and the explicit constants κ₁...κ₆.
//!
//! A ρ-partition chops the index set into windows whose training-time length
//! is as close as possible to `ρ √γ` from below: `n_ℓ` is the largest integer
//! with `t_{n_ℓ} - t_{n_{ℓ-1}} ≤ ρ sqrt(γ_{n_{ℓ-1}+1})`. That is the scale on
//! which freezing θ inside a window is accurate.

use crate::error::{AdamFieldError, Result};
use crate::schedule::StepSchedule;
use crate::seq_space::{rho_weights, DampingParams};
use serde::Serialize;

#[derive(Debug, Clone)]
pub struct RhoPartition {
    pub n0: u64,
    pub rho: f64,
    /// `n_0 < n_1 < ...`, starting value included.
    pub indices: Vec<u64>,
    /// Training times `t_{n_ℓ}` aligned with `indices`.
    pub times: Vec<f64>,
}

impl RhoPartition {
    /// Number of complete windows.
    pub fn windows(&self) -> usize {
        self.indices.len().saturating_sub(1)
    }

    /// Window `ℓ ∈ 1..=windows()` as `(n_{ℓ-1}, n_ℓ]` plus its time length.
    pub fn window(&self, ell: usize) -> (u64, u64, f64) {
        (
            self.indices[ell - 1],
            self.indices[ell],
            self.times[ell] - self.times[ell - 1],
        )
    }
}

/// First `count` partition points by forward scan of the training times.
pub fn rho_partition(
    schedule: &StepSchedule,
    n0: u64,
    rho: f64,
    count: usize,
) -> Result<RhoPartition> {
    let gamma_first = schedule.gamma(n0 + 1);
    if !(rho >= gamma_first.sqrt()) {
        return Err(AdamFieldError::Precondition(format!(
            "rho = {rho} below sqrt(gamma_{{n0+1}}) = {}",
            gamma_first.sqrt()
        )));
    }
    let mut indices = vec![n0];
    let mut times = vec![0.0f64]; // relative to t_{n0}; shifted below
    let mut n = n0;
    let mut t = 0.0;
    for _ in 0..count {
        let t_prev = t;
        let threshold = rho * schedule.gamma(n + 1).sqrt();
        // maximality: extend while the next step still fits
        loop {
            if n + 1 > schedule.max_index() {
                return Err(AdamFieldError::Precondition(
                    "schedule exhausted while building the partition".into(),
                ));
            }
            let g = schedule.gamma(n + 1);
            if t + g - t_prev <= threshold {
                t += g;
                n += 1;
            } else {
                break;
            }
        }
        indices.push(n);
        times.push(t);
    }
    let t_n0 = schedule.training_time(n0);
    for t in &mut times {
        *t += t_n0;
    }
    Ok(RhoPartition {
        n0,
        rho,
        indices,
        times,
    })
}

/// Per-window outcome of the partition property checks.
#[derive(Debug, Clone, Serialize)]
pub struct WindowCheck {
    pub ell: usize,
    /// (i): `sqrt(γ_{n_{ℓ-1}+1}) ≤ (ρ - sqrt(γ_{n_{ℓ-1}+1}))^{-1} Δt_ℓ`
    /// whenever `γ_{n_{ℓ-1}+1} < ρ²` (`None` when not applicable).
    pub lower_bound_ok: Option<bool>,
    /// (ii): `γ_{n_{ℓ-1}+1} / γ_{n_ℓ+1} ≤ K`
    pub ratio_k_ok: bool,
    /// (ii): `γ_{n_{ℓ-1}+1} / γ_{n_ℓ+1} ≤ 1 + ζ K Δt_ℓ`
    pub ratio_fine_ok: bool,
    /// maximality certificate: adding one more step overshoots the window
    pub maximal: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct PartitionReport {
    pub k_const: f64,
    pub zeta: f64,
    pub checks: Vec<WindowCheck>,
    pub violations: Vec<usize>,
}

impl PartitionReport {
    pub fn all_pass(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Verify the window-geometry properties of a partition under the step-ratio
/// bound `(γ_n - γ_{n+1})/γ_n² ≤ ζ`.
pub fn partition_properties_check(
    partition: &RhoPartition,
    schedule: &StepSchedule,
    zeta: f64,
) -> Result<PartitionReport> {
    let n0 = partition.n0;
    let rho = partition.rho;
    let g1 = schedule.gamma(n0 + 1);
    if !(zeta * rho * g1.sqrt() < 1.0) {
        return Err(AdamFieldError::Precondition(format!(
            "zeta * rho * sqrt(gamma_{{n0+1}}) = {} must be below 1",
            zeta * rho * g1.sqrt()
        )));
    }
    // the ratio condition must hold on the scanned range
    let last = *partition.indices.last().unwrap();
    for n in (n0 + 1)..=last {
        let g = schedule.gamma(n);
        let ratio = (g - schedule.gamma(n + 1)) / (g * g);
        if ratio > zeta * (1.0 + 1e-12) {
            return Err(AdamFieldError::Precondition(format!(
                "step-ratio condition fails at n={n}: {ratio} > {zeta}"
            )));
        }
    }
    let k_const = 1.0 / (1.0 - zeta * rho * g1.sqrt());
    let mut checks = Vec::new();
    let mut violations = Vec::new();
    for ell in 1..=partition.windows() {
        let (n_prev, n_cur, dt) = partition.window(ell);
        let g_prev = schedule.gamma(n_prev + 1);
        let g_next = schedule.gamma(n_cur + 1);
        let lower_bound_ok = if g_prev < rho * rho {
            Some(g_prev.sqrt() <= dt / (rho - g_prev.sqrt()) + 1e-12)
        } else {
            None
        };
        let ratio = g_prev / g_next;
        let ratio_k_ok = ratio <= k_const * (1.0 + 1e-12);
        let ratio_fine_ok = ratio <= 1.0 + zeta * k_const * dt + 1e-12;
        let maximal = dt + schedule.gamma(n_cur + 1) > rho * g_prev.sqrt();
        let ok = lower_bound_ok.unwrap_or(true) && ratio_k_ok && ratio_fine_ok && maximal;
        if !ok {
            violations.push(ell);
        }
        checks.push(WindowCheck {
            ell,
            lower_bound_ok,
            ratio_k_ok,
            ratio_fine_ok,
            maximal,
        });
    }
    Ok(PartitionReport {
        k_const,
        zeta,
        checks,
        violations,
    })
}

/// The explicit constants of the approximation-process bounds.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct KappaConstants {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub k4: f64,
    pub k5: f64,
    pub k6: f64,
    /// `(1 - 2^{-(1/2 - 1/p)})^{-1}`, the maximal-inequality factor (finite
    /// for p > 2).
    pub doob_factor: f64,
    pub p: f64,
    pub c_p: f64,
}

pub fn kappa_constants(params: DampingParams, dim: usize, p: f64, c_p: f64) -> Result<KappaConstants> {
    if p < 2.0 {
        return Err(AdamFieldError::Precondition("p must be at least 2".into()));
    }
    if !(c_p > 0.0) {
        return Err(AdamFieldError::Precondition("C_p must be positive".into()));
    }
    let (a, b) = (params.alpha(), params.beta());
    let w = rho_weights(params, 1)?;
    let rho0 = w.value(0);
    let ell1 = w.ell1_total();
    let k1 = 2.0 / (1.0 - b.powf(1.5));
    let k2 = k1 * (rho0 / (1.0 - b) + ell1);
    let k3 = (1.0 - a) / (1.0 - b).sqrt() * params.coupling() * dim as f64 * ell1;
    let k4 = 2.0 / (1.0 - b.sqrt()) * ell1;
    let k5 = 1.0 / (1.0 - b.sqrt());
    let k6 = 2.0 * c_p * ((rho0 * ell1).sqrt() / (1.0 - b.sqrt()) + ell1);
    let doob_factor = if p > 2.0 {
        1.0 / (1.0 - 2f64.powf(-(0.5 - 1.0 / p)))
    } else {
        f64::INFINITY
    };
    Ok(KappaConstants {
        k1,
        k2,
        k3,
        k4,
        k5,
        k6,
        doob_factor,
        p,
        c_p,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn harmonic_partition_hand_values() {
        // γ_n = 1/n, n0 = 0, ρ = 1: thresholds 1, sqrt(1/2), sqrt(1/3), 1/2
        // against harmonic sums give 1, 2, 3, 5
        let s = StepSchedule::inv_n();
        let p = rho_partition(&s, 0, 1.0, 4).unwrap();
        assert_eq!(p.indices, vec![0, 1, 2, 3, 5]);
    }

    #[test]
    fn constant_schedule_steps_one_by_one() {
        // with γ ≡ γ0 and ρ = sqrt(γ0), each window is exactly one step
        let g0 = 0.04;
        let s = StepSchedule::table(vec![g0; 20]).unwrap();
        let p = rho_partition(&s, 0, g0.sqrt(), 6).unwrap();
        assert_eq!(p.indices, vec![0, 1, 2, 3, 4, 5, 6]);
    }

    #[test]
    fn maximality_certificate() {
        let s = StepSchedule::inv_n();
        let p = rho_partition(&s, 0, 1.3, 12).unwrap();
        for ell in 1..=p.windows() {
            let (n_prev, n_cur, dt) = p.window(ell);
            let threshold = 1.3 * s.gamma(n_prev + 1).sqrt();
            assert!(dt <= threshold);
            assert!(dt + s.gamma(n_cur + 1) > threshold);
        }
    }

    #[test]
    fn rho_below_threshold_is_rejected() {
        let s = StepSchedule::inv_n();
        assert!(rho_partition(&s, 0, 0.9, 4).is_err());
    }

    #[test]
    fn boundary_zeta_precondition_fails() {
        // ζρ sqrt(γ_1) = 1 violates the strict inequality
        let s = StepSchedule::inv_n();
        let p = rho_partition(&s, 0, 1.0, 4).unwrap();
        assert!(partition_properties_check(&p, &s, 1.0).is_err());
    }

    #[test]
    fn harmonic_partition_properties_from_n0_8() {
        // sqrt(γ_9) = 1/3, so K = (1 - 1/3)^{-1} = 1.5; 50 windows all pass
        let s = StepSchedule::inv_n();
        let p = rho_partition(&s, 8, 1.0, 50).unwrap();
        let rep = partition_properties_check(&p, &s, 1.0).unwrap();
        assert_relative_eq!(rep.k_const, 1.5, epsilon = 1e-12);
        assert!(rep.all_pass(), "violations: {:?}", rep.violations);
        assert_eq!(rep.checks.len(), 50);
    }

    #[test]
    fn constant_schedule_ratios_are_unity() {
        let g0 = 0.04;
        let s = StepSchedule::table(vec![g0; 40]).unwrap();
        let p = rho_partition(&s, 0, g0.sqrt(), 10).unwrap();
        let rep = partition_properties_check(&p, &s, 0.0).unwrap();
        assert_eq!(rep.k_const, 1.0);
        assert!(rep.all_pass());
    }

    #[test]
    fn kappa_values() {
        let dp = DampingParams::new(0.5, 0.75, 0.1).unwrap();
        let k = kappa_constants(dp, 1, 4.0, 4.0).unwrap();
        // κ₁ = 2/(1 - 0.75^{3/2}); 0.75^{3/2} = 0.6495190528...
        assert_relative_eq!(k.k1, 2.0 / (1.0 - 0.649_519_052_838_329), max_relative = 1e-12);
        assert_relative_eq!(k.k1, 5.70644, max_relative = 1e-4);
        // κ₅ for β = 0.25 is 1/(1 - 1/2) = 2
        let dp2 = DampingParams::new(0.3, 0.25, 1.0).unwrap();
        let k2 = kappa_constants(dp2, 1, 4.0, 4.0).unwrap();
        assert_relative_eq!(k2.k5, 2.0, epsilon = 1e-14);
        // κ₆ is linear in C_p
        let k_double = kappa_constants(dp, 1, 4.0, 8.0).unwrap();
        assert_relative_eq!(k_double.k6, 2.0 * k.k6, max_relative = 1e-14);
    }
}
