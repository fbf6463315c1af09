//! The windowwise error recursion between Adam and its ODE shadow.
//!
//! On the partition points, the normalized squared L^p error
//! `e_ℓ = γ_{n_ℓ+1}^{-1} E[1{𝔑 ≥ n_ℓ} ‖θ_{n_ℓ} - Ψ_{t_{n_ℓ}}‖^p]^{2/p}`
//! satisfies
//!
//! ```text
//! e_ℓ ≤ (1 - 2c' Δt_ℓ) e_{ℓ-1} + (K (2 √e_{ℓ-1} + δ₂) a_ℓ + b_ℓ) Δt_ℓ
//! ```
//!
//! with explicit coefficients driven by κ₁...κ₆ and the regularity constants.
//! The recursion is checked empirically windowwise; the technical feasibility
//! conditions (a)-(d) that the theory needs are evaluated and reported, not
//! optimized — desk-scale configurations typically violate (c) because the
//! Lipschitz constant enters squared, while the recursion inequality itself
//! holds with large margins.

use crate::adam::{AdamSim, AdamState, StepOptions};
use crate::error::{AdamFieldError, Result};
use crate::field::oracle::FrozenOracle;
use crate::innovation::Innovation;
use crate::ode::approx::{estimate_regularity, rho_partition_to_horizon, RegularityEstimate};
use crate::ode::integrate::integrate_ode;
use crate::ode::partition::{kappa_constants, KappaConstants};
use crate::schedule::StepSchedule;
use crate::seq_space::{g_bound, rho_weights, DampingParams};
use crate::util::{mean_stderr, norm2, par_map_indexed};
use serde::Serialize;

#[derive(Clone)]
pub struct RecursionConfig {
    pub params: DampingParams,
    pub schedule: StepSchedule,
    pub innovation: Innovation,
    pub n0: u64,
    pub theta0: Vec<f64>,
    pub psi0: Vec<f64>,
    pub horizon: u64,
    pub rho: f64,
    pub p: f64,
    pub c_p: f64,
    pub replicas: usize,
    pub seed: u64,
    pub v_box: f64,
    /// Tube radii at partition points; `None` keeps the tube infinite so the
    /// stopping time reduces to the box exit.
    pub tube_radii: Option<Vec<f64>>,
    /// Whether the tube is also checked at every step instead of only at
    /// partition points.
    pub tube_at_all_steps: bool,
    pub c_prime: f64,
    pub c1: f64,
    pub zeta: Option<f64>,
    pub delta1: Option<f64>,
    pub delta2: Option<f64>,
    pub regularity: Option<RegularityEstimate>,
    pub oracle_replicas: usize,
    pub oracle_depth: usize,
    pub substeps: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct RecursionWindow {
    pub ell: usize,
    pub n_ell: u64,
    pub t_n_ell: f64,
    pub e_ell: f64,
    pub e_se: f64,
    pub rhs: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct Feasibility {
    pub a_ok: bool,
    pub b_ok: bool,
    pub c_ok: bool,
    pub d_ok: bool,
    pub k_const: f64,
    pub zeta: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub l_lipschitz: f64,
    pub c_bound: f64,
}

#[derive(Debug, Serialize)]
pub struct ErrorRecursion {
    pub windows: Vec<RecursionWindow>,
    pub feasibility: Feasibility,
    pub kappas: KappaConstants,
    pub pass_fraction: f64,
    pub replicas: usize,
}

/// Empirical e-sequence and windowwise recursion check.
pub fn error_sequence(cfg: &RecursionConfig) -> Result<ErrorRecursion> {
    if cfg.p < 2.0 {
        return Err(AdamFieldError::Precondition(
            "p must be at least 2".into(),
        ));
    }
    let d = cfg.theta0.len();
    let partition = rho_partition_to_horizon(&cfg.schedule, cfg.n0, cfg.rho, cfg.horizon)?;
    let windows = partition.windows();
    if windows < 2 {
        return Err(AdamFieldError::Precondition(
            "need at least two partition windows".into(),
        ));
    }
    if let Some(radii) = &cfg.tube_radii {
        if radii.len() < partition.indices.len() {
            return Err(AdamFieldError::Precondition(
                "tube radii must cover every partition point".into(),
            ));
        }
    }

    let kappas = kappa_constants(cfg.params, d, cfg.p, cfg.c_p)?;
    let reg = match cfg.regularity {
        Some(r) => r,
        None => estimate_regularity(&cfg.innovation, cfg.v_box, cfg.p, 4000, cfg.seed ^ 0xd00d)?,
    };
    let weights = rho_weights(cfg.params, 1)?;
    let l_lip = weights.ell1_total() * reg.l_tilde;
    let c_bound = g_bound(cfg.params, d);

    // frozen oracle drives the ODE
    let oracle = FrozenOracle::build(
        cfg.innovation.clone(),
        cfg.params,
        cfg.oracle_depth,
        cfg.oracle_replicas,
        cfg.seed ^ 0xcafe,
    )?;
    let psi = integrate_ode(&oracle, &cfg.psi0, &partition.times, cfg.substeps)?;

    // feasibility constants
    let g1 = cfg.schedule.gamma(cfg.n0 + 1);
    let zeta = cfg.zeta.unwrap_or_else(|| {
        let mut sup = 0.0f64;
        for n in cfg.n0 + 1..=cfg.horizon.min(cfg.schedule.max_index() - 1) {
            let g = cfg.schedule.gamma(n);
            sup = sup.max((g - cfg.schedule.gamma(n + 1)) / (g * g));
        }
        sup * (1.0 + 1e-9)
    });
    let delta1 = cfg.delta1.unwrap_or(g1);
    let k_const = 1.0 / (1.0 - zeta * cfg.rho * g1.sqrt());
    let x_norm = 0.0; // runs start from (m, v) = (0, 0)
    let d_lhs = cfg.rho / (cfg.rho - delta1.sqrt())
        * (kappas.k3 * cfg.rho * cfg.rho * reg.l_tilde
            + 0.5 * l_lip * c_bound * cfg.rho * cfg.rho
            + (kappas.k2 + kappas.k4) * reg.c
            + (kappas.k1 + kappas.k5) * x_norm)
        * g1.sqrt();
    let delta2 = cfg.delta2.unwrap_or(d_lhs);
    let feasibility = Feasibility {
        a_ok: zeta * cfg.rho * g1.sqrt() < 1.0 && g1 <= delta1 && delta1 < cfg.rho * cfg.rho,
        b_ok: true, // zeta defaults to the measured sup, so (b) holds by choice
        c_ok: 2.0 * cfg.c1 - l_lip * l_lip * cfg.rho * g1.sqrt() - zeta * k_const
            >= 2.0 * cfg.c_prime,
        d_ok: d_lhs <= delta2,
        k_const,
        zeta,
        delta1,
        delta2,
        l_lipschitz: l_lip,
        c_bound,
    };

    // replica paths at partition points, with the stopping time realized
    let stride_checks = cfg.tube_at_all_steps;
    let rows: Vec<(Vec<f64>, u64)> = par_map_indexed(cfg.replicas, |r| {
        let init = AdamState::start(cfg.n0, cfg.theta0.clone());
        let mut sim = AdamSim::new(
            init,
            cfg.innovation.clone(),
            cfg.params,
            cfg.schedule.clone(),
            cfg.seed,
            r as u64,
            StepOptions::default(),
        );
        let mut deviations = Vec::with_capacity(partition.indices.len());
        let mut stop = u64::MAX;
        let mut dev0 = 0.0;
        for i in 0..d {
            let e = cfg.theta0[i] - psi.states[0][i];
            dev0 += e * e;
        }
        deviations.push(dev0.sqrt());
        if cfg.theta0.iter().any(|v| v.abs() > cfg.v_box) {
            stop = cfg.n0;
        }
        let mut widx = 1usize;
        for n in cfg.n0 + 1..=*partition.indices.last().unwrap() {
            sim.step();
            if stop == u64::MAX && sim.state.theta.iter().any(|v| v.abs() > cfg.v_box) {
                stop = n;
            }
            if stride_checks {
                // tube at every step, interpolating Ψ as its window value
                if let (Some(radii), u64::MAX) = (&cfg.tube_radii, stop) {
                    let dev = dist(&sim.state.theta, &psi.states[widx.min(psi.states.len() - 1)]);
                    if dev > radii[widx.min(radii.len() - 1)] {
                        stop = n;
                    }
                }
            }
            if widx < partition.indices.len() && n == partition.indices[widx] {
                let dev = dist(&sim.state.theta, &psi.states[widx]);
                deviations.push(dev);
                if stop == u64::MAX {
                    if let Some(radii) = &cfg.tube_radii {
                        if dev > radii[widx] {
                            stop = n;
                        }
                    }
                }
                widx += 1;
            }
        }
        (deviations, stop)
    });

    // e_ℓ with delta-method standard errors
    let mut e = Vec::with_capacity(partition.indices.len());
    let mut e_se = Vec::with_capacity(partition.indices.len());
    for (ell, &n_ell) in partition.indices.iter().enumerate() {
        let gamma_next = cfg.schedule.gamma(n_ell + 1);
        let powered: Vec<f64> = rows
            .iter()
            .map(|(devs, stop)| {
                if *stop >= n_ell {
                    devs[ell].powf(cfg.p)
                } else {
                    0.0
                }
            })
            .collect();
        let (mp, mp_se) = mean_stderr(&powered);
        if mp <= 0.0 {
            e.push(0.0);
            e_se.push(0.0);
            continue;
        }
        let val = mp.powf(2.0 / cfg.p) / gamma_next;
        let se = (2.0 / cfg.p) * mp.powf(2.0 / cfg.p - 1.0) * mp_se / gamma_next;
        e.push(val);
        e_se.push(se);
    }

    // recursion check per window
    let mut out_windows = Vec::with_capacity(windows);
    let mut passes = 0usize;
    for ell in 1..=windows {
        let (n_prev, n_cur, dt) = partition.window(ell);
        let g_first = cfg.schedule.gamma(n_prev + 1);
        let aleph = kappas.k3 * cfg.rho * cfg.rho * reg.l_tilde
            + (kappas.k2 + kappas.k4) * reg.c
            + (kappas.k1 + kappas.k5)
                * cfg.params.beta().powf((n_prev - cfg.n0) as f64 / 2.0)
                * x_norm;
        let a_l = aleph / (cfg.rho - delta1.sqrt()) + 0.5 * l_lip * c_bound * cfg.rho;
        let frak_p = cfg.p - 1.0 + (0.5 * cfg.p * (cfg.p - 1.0)).powf(2.0 / cfg.p);
        let b_l = frak_p
            * (2.0 * k_const * kappas.k6 * kappas.k6 * reg.c_tilde * reg.c_tilde
                + 4.0 * k_const / (cfg.rho - delta1.sqrt()) * aleph * aleph * g_first.sqrt());
        let e_prev_hi = e[ell - 1] + 3.0 * e_se[ell - 1];
        let rhs = (1.0 - 2.0 * cfg.c_prime * dt) * e_prev_hi
            + (k_const * (2.0 * e_prev_hi.sqrt() + delta2) * a_l + b_l) * dt;
        let pass = e[ell] - 3.0 * e_se[ell] <= rhs;
        if pass {
            passes += 1;
        }
        out_windows.push(RecursionWindow {
            ell,
            n_ell: n_cur,
            t_n_ell: partition.times[ell],
            e_ell: e[ell],
            e_se: e_se[ell],
            rhs,
            pass,
        });
    }
    Ok(ErrorRecursion {
        windows: out_windows,
        feasibility,
        kappas,
        pass_fraction: passes as f64 / windows as f64,
        replicas: cfg.replicas,
    })
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    norm2(&a.iter().zip(b).map(|(x, y)| x - y).collect::<Vec<_>>())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::innovation::UDist;

    fn cfg(innovation: Innovation, p: f64) -> RecursionConfig {
        RecursionConfig {
            params: DampingParams::new(0.5, 0.75, 0.1).unwrap(),
            schedule: StepSchedule::power(1.0, 0.0, 2.0 / 3.0).unwrap(),
            innovation,
            n0: 8,
            theta0: vec![0.0],
            psi0: vec![0.0],
            horizon: 1200,
            rho: 1.0,
            p,
            c_p: 4.0,
            replicas: 60,
            seed: 29,
            v_box: 4.0,
            tube_radii: None,
            tube_at_all_steps: false,
            c_prime: 0.05,
            c1: 0.5,
            zeta: None,
            delta1: None,
            delta2: None,
            regularity: None,
            oracle_replicas: 4096,
            oracle_depth: 160,
            substeps: 8,
        }
    }

    #[test]
    fn p_below_two_rejected_at_boundary() {
        let innov = Innovation::quadratic(UDist::rademacher(), 1, 8);
        assert!(error_sequence(&cfg(innov.clone(), 1.5)).is_err());
        assert!(error_sequence(&cfg(innov, 2.0)).is_ok());
    }

    #[test]
    fn equilibrium_start_keeps_errors_on_the_noise_floor() {
        // symmetric U at its mean: ϑ = 0 is the field zero; Ψ ≡ ~0 and the
        // deviations stay on the √γ noise floor, so e_ℓ stays bounded
        let innov = Innovation::quadratic(UDist::rademacher(), 1, 8);
        let rep = error_sequence(&cfg(innov, 2.0)).unwrap();
        assert!(rep.pass_fraction >= 0.95, "pass fraction {}", rep.pass_fraction);
        let e_max = rep
            .windows
            .iter()
            .map(|w| w.e_ell)
            .fold(0.0f64, f64::max);
        assert!(e_max.is_finite() && e_max < 1e3);
        // e_0 small: started at the equilibrium
        assert!(rep.windows[0].e_ell < 10.0);
    }

    #[test]
    fn zero_noise_recursion_is_deterministic_discretization_error() {
        let innov = Innovation::quadratic(UDist::Constant { value: 1.0 }, 1, 1);
        let mut c = cfg(innov, 2.0);
        c.theta0 = vec![1.0];
        c.psi0 = vec![1.0];
        c.replicas = 2;
        let rep = error_sequence(&c).unwrap();
        assert!(rep.pass_fraction >= 0.95, "pass fraction {}", rep.pass_fraction);
        for w in &rep.windows {
            assert_eq!(w.e_se, 0.0, "no Monte Carlo spread without noise");
        }
    }

    #[test]
    fn tube_stopping_reduces_contributions() {
        let innov = Innovation::quadratic(UDist::rademacher(), 1, 2);
        let mut c = cfg(innov, 2.0);
        let base = error_sequence(&c).unwrap();
        let n_points = base.windows.len() + 1;
        c.tube_radii = Some(vec![1e-6; n_points]);
        let tubed = error_sequence(&c).unwrap();
        // a tiny tube stops nearly every replica immediately: e collapses
        let sum_base: f64 = base.windows.iter().map(|w| w.e_ell).sum();
        let sum_tubed: f64 = tubed.windows.iter().map(|w| w.e_ell).sum();
        assert!(sum_tubed <= sum_base);
    }

    #[test]
    fn feasibility_is_reported_honestly() {
        let innov = Innovation::quadratic(UDist::rademacher(), 1, 8);
        let rep = error_sequence(&cfg(innov, 4.0)).unwrap();
        // (a), (b), (d) hold by construction of the defaults
        assert!(rep.feasibility.a_ok);
        assert!(rep.feasibility.b_ok);
        assert!(rep.feasibility.d_ok);
        // (c) involves L² and fails at desk scale; the report must say so
        assert!(!rep.feasibility.c_ok);
    }
}
