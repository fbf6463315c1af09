//! The approximation-process family and the empirical bound suite.
//!
//! A base Adam run `θ` is shadowed by four successively simpler processes
//! sharing its randomness:
//!
//! * `Θ` — exact-`g` increments `γ_k g(X(k))` (no bias correction),
//! * `Θ̃` — θ frozen at the last partition point inside each window,
//! * `Θ̃̃` — additionally, the pre-window history replaced by fresh i.i.d.
//!   draws at the frozen θ (stationary equilibrium),
//! * `Θ̄` — drift-only increments `γ_k f(θ_frozen)` from a frozen oracle.
//!
//! The pairwise increment gaps obey explicit L^p bounds with constants
//! κ₁...κ₆; `prop_bounds_report` measures both sides on replica ensembles.

use crate::adam::{adam_step, AdamState, StepOptions};
use crate::error::{AdamFieldError, Result};
use crate::field::oracle::{FieldOracle, FrozenOracle};
use crate::innovation::Innovation;
use crate::ode::partition::{kappa_constants, KappaConstants, RhoPartition};
use crate::rng::{Domain, StreamRng};
use crate::schedule::StepSchedule;
use crate::seq_space::{lrho_norm, rho_weights, DampingParams, WeightedSeq};
use crate::util::{lp_norm, norm2, par_map_indexed};
use serde::Serialize;

/// Empirical p-regularity parameters `(C, C̃, L̃)` of an innovation on a box.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct RegularityEstimate {
    /// sup over the box of `E[|X|²]^{1/2}`
    pub c: f64,
    /// sup of `E[|X - E X|^p]^{1/p}`
    pub c_tilde: f64,
    /// Lipschitz constant of `θ → X(U, θ)` in `L^p`
    pub l_tilde: f64,
}

/// Estimate `(C, C̃, L̃)` on the box `[-v_box, v_box]^d` by moment Monte
/// Carlo over a θ-grid, with a 10% safety inflation.
pub fn estimate_regularity(
    innovation: &Innovation,
    v_box: f64,
    p: f64,
    n_samples: usize,
    seed: u64,
) -> Result<RegularityEstimate> {
    let d = innovation.dim();
    let grid_n = 9usize;
    let grid: Vec<Vec<f64>> = (0..grid_n)
        .map(|i| {
            let t = -v_box + 2.0 * v_box * i as f64 / (grid_n - 1) as f64;
            vec![t; d]
        })
        .collect();
    let stride = innovation.stride();
    let mut c: f64 = 0.0;
    let mut c_tilde: f64 = 0.0;
    let mut l_tilde: f64 = 0.0;
    let mut x = vec![0.0; d];
    let mut y = vec![0.0; d];
    for (gi, theta) in grid.iter().enumerate() {
        let mut rng = StreamRng::new(seed, Domain::Moments, 100 + gi as u64, stride);
        let mut rows: Vec<Vec<f64>> = Vec::with_capacity(n_samples);
        for _ in 0..n_samples {
            innovation.sample_x(&mut rng, theta, &mut x);
            rows.push(x.clone());
        }
        let mut mean = vec![0.0; d];
        for r in &rows {
            for i in 0..d {
                mean[i] += r[i];
            }
        }
        for mi in &mut mean {
            *mi /= n_samples as f64;
        }
        let sq = rows.iter().map(|r| norm2(r).powi(2)).sum::<f64>() / n_samples as f64;
        c = c.max(sq.sqrt());
        let centered = rows
            .iter()
            .map(|r| {
                let diff: Vec<f64> = r.iter().zip(&mean).map(|(a, b)| a - b).collect();
                norm2(&diff).powf(p)
            })
            .sum::<f64>()
            / n_samples as f64;
        c_tilde = c_tilde.max(centered.powf(1.0 / p));
    }
    for w in grid.windows(2) {
        let (ta, tb) = (&w[0], &w[1]);
        let dist = norm2(&ta.iter().zip(tb).map(|(a, b)| a - b).collect::<Vec<_>>());
        if dist == 0.0 {
            continue;
        }
        let mut rng_a = StreamRng::new(seed, Domain::Moments, 300, stride);
        let mut rng_b = StreamRng::new(seed, Domain::Moments, 300, stride);
        let mut acc = 0.0;
        for _ in 0..n_samples {
            innovation.sample_x(&mut rng_a, ta, &mut x);
            innovation.sample_x(&mut rng_b, tb, &mut y);
            let diff: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a - b).collect();
            acc += norm2(&diff).powf(p);
        }
        let lp = (acc / n_samples as f64).powf(1.0 / p);
        l_tilde = l_tilde.max(lp / dist);
    }
    Ok(RegularityEstimate {
        c: 1.1 * c,
        c_tilde: 1.1 * c_tilde,
        l_tilde: 1.1 * l_tilde,
    })
}

/// Configuration of a replica ensemble for the approximation analysis.
#[derive(Clone)]
pub struct ApproxConfig {
    pub params: DampingParams,
    pub schedule: StepSchedule,
    pub innovation: Innovation,
    pub n0: u64,
    pub theta0: Vec<f64>,
    /// Deterministic pre-start history `x`; `(m₀, v₀)` are its series values.
    pub history: Option<WeightedSeq>,
    pub horizon: u64,
    pub rho: f64,
    /// Stopping box: first exit of any θ-component from `[-v_box, v_box]`.
    pub v_box: f64,
    pub p: f64,
    pub c_p: f64,
    pub replicas: usize,
    pub seed: u64,
    /// Fresh-history truncation tolerance for the stationarized process.
    pub tail_tol: f64,
    /// Start indices for the exact-vs-`Θ` tail bound (defaults to `[n0]`).
    pub frak_n_list: Vec<u64>,
}

impl ApproxConfig {
    fn init_state(&self) -> Result<AdamState> {
        let d = self.theta0.len();
        let (m0, v0) = match &self.history {
            Some(h) => (
                h.momentum_series(self.params),
                h.damping_series(self.params),
            ),
            None => (vec![0.0; d], vec![0.0; d]),
        };
        AdamState::new(self.n0, self.theta0.clone(), m0, v0)
    }

    fn history_norm(&self) -> Result<f64> {
        match &self.history {
            Some(h) => {
                let w = rho_weights(self.params, h.depth().max(1))?;
                lrho_norm(h, &w)
            }
            None => Ok(0.0),
        }
    }
}

/// The four shadow paths of one base run, cumulative, indexed `n0..=horizon`.
pub struct ApproxPaths {
    pub ns: Vec<u64>,
    pub theta: Vec<Vec<f64>>,
    pub big_theta: Vec<Vec<f64>>,
    pub tilde: Vec<Vec<f64>>,
    pub dtilde: Vec<Vec<f64>>,
    pub bar: Vec<Vec<f64>>,
    /// First exit from the box, `u64::MAX` if none.
    pub stop: u64,
}

/// Per-replica raw material shared by the path extractor and the bound suite.
struct ReplicaWalk {
    /// θ_n for n0..=horizon
    theta_path: Vec<Vec<f64>>,
    /// γ_k g(X(k)) for k in n0+1..=horizon (index k - n0 - 1)
    d_big_theta: Vec<Vec<f64>>,
    /// |Δθ_k - ΔΘ_k| per step
    exact_gap: Vec<f64>,
    /// (m, v) snapshots at partition points (window starts)
    snapshots: Vec<(Vec<f64>, Vec<f64>)>,
    stop: u64,
}

fn base_walk(cfg: &ApproxConfig, partition: &RhoPartition, replica: u64) -> Result<ReplicaWalk> {
    let d = cfg.theta0.len();
    let eps = cfg.params.epsilon();
    let init = cfg.init_state()?;
    let mut state = init.clone();
    let mut rng = StreamRng::new(cfg.seed, Domain::Trajectory, replica, cfg.innovation.stride());
    rng.seek(cfg.n0 + 1);
    let steps = (cfg.horizon - cfg.n0) as usize;
    let mut theta_path = Vec::with_capacity(steps + 1);
    theta_path.push(state.theta.clone());
    let mut d_big_theta = Vec::with_capacity(steps);
    let mut exact_gap = Vec::with_capacity(steps);
    let mut snapshots = Vec::with_capacity(partition.indices.len());
    let mut stop = u64::MAX;
    let in_box = |th: &[f64], b: f64| th.iter().all(|v| v.abs() <= b);
    if !in_box(&state.theta, cfg.v_box) {
        stop = cfg.n0;
    }
    let mut snap_iter = partition.indices.iter().peekable();
    if snap_iter.peek() == Some(&&cfg.n0) {
        snapshots.push((state.m.clone(), state.v.clone()));
        snap_iter.next();
    }
    let mut x = vec![0.0; d];
    let mut sigma = vec![0.0; d];
    let opts = StepOptions::default();
    for k in cfg.n0 + 1..=cfg.horizon {
        let gamma = cfg.schedule.gamma(k);
        let prev = state.theta.clone();
        cfg.innovation.sample_x(&mut rng, &prev, &mut x);
        adam_step(&mut state, &x, cfg.params, gamma, opts, &mut sigma);
        let mut d_theta_gap = 0.0;
        let mut dbt = vec![0.0; d];
        for i in 0..d {
            let g = state.m[i] / (eps + state.v[i].sqrt());
            dbt[i] = gamma * g;
            let diff = (state.theta[i] - prev[i]) - dbt[i];
            d_theta_gap += diff * diff;
        }
        if stop == u64::MAX && !in_box(&state.theta, cfg.v_box) {
            stop = k;
        }
        let indicator = stop >= k;
        exact_gap.push(if indicator { d_theta_gap.sqrt() } else { 0.0 });
        d_big_theta.push(dbt);
        theta_path.push(state.theta.clone());
        if snap_iter.peek() == Some(&&k) {
            snapshots.push((state.m.clone(), state.v.clone()));
            snap_iter.next();
        }
    }
    Ok(ReplicaWalk {
        theta_path,
        d_big_theta,
        exact_gap,
        snapshots,
        stop,
    })
}

/// Extract the four shadow paths of one replica under shared randomness.
pub fn approx_processes(
    cfg: &ApproxConfig,
    replica: u64,
    oracle: &FrozenOracle,
) -> Result<ApproxPaths> {
    let partition = rho_partition_to_horizon(&cfg.schedule, cfg.n0, cfg.rho, cfg.horizon)?;
    let walk = base_walk(cfg, &partition, replica)?;
    let d = cfg.theta0.len();
    let eps = cfg.params.epsilon();
    let (a, b) = (cfg.params.alpha(), cfg.params.beta());
    let steps = (cfg.horizon - cfg.n0) as usize;
    let k_tail = cfg.params.depth_for_tolerance(cfg.tail_tol, 20000);

    let mut big_theta = vec![vec![0.0; d]];
    for k in 0..steps {
        let prev = big_theta.last().unwrap().clone();
        big_theta.push(
            prev.iter()
                .zip(&walk.d_big_theta[k])
                .map(|(p, dv)| p + dv)
                .collect(),
        );
    }

    let mut tilde = vec![vec![0.0; d]];
    let mut dtilde = vec![vec![0.0; d]];
    let mut bar = vec![vec![0.0; d]];
    let mut redraw = StreamRng::new(cfg.seed, Domain::Trajectory, replica, cfg.innovation.stride());
    let mut aux = StreamRng::new(cfg.seed, Domain::WindowAux, replica, cfg.innovation.stride());
    let mut x = vec![0.0; d];
    for ell in 1..=partition.windows() {
        let (n_prev, n_cur, _dt) = partition.window(ell);
        let theta_f = walk.theta_path[(n_prev - cfg.n0) as usize].clone();
        let (mut mt, mut vt) = walk.snapshots[ell - 1].clone();
        let (mut mdt, mut vdt) = fresh_history(
            cfg,
            &mut aux,
            ell as u64,
            k_tail,
            &theta_f,
        );
        let (f_hat, _) = oracle.eval(&theta_f);
        redraw.seek(n_prev + 1);
        for k in n_prev + 1..=n_cur {
            let gamma = cfg.schedule.gamma(k);
            cfg.innovation.sample_x(&mut redraw, &theta_f, &mut x);
            let mut t_next = tilde.last().unwrap().clone();
            let mut dt_next = dtilde.last().unwrap().clone();
            let mut bar_next = bar.last().unwrap().clone();
            for i in 0..d {
                mt[i] = a * mt[i] + (1.0 - a) * x[i];
                vt[i] = b * vt[i] + (1.0 - b) * x[i] * x[i];
                mdt[i] = a * mdt[i] + (1.0 - a) * x[i];
                vdt[i] = b * vdt[i] + (1.0 - b) * x[i] * x[i];
                t_next[i] += gamma * mt[i] / (eps + vt[i].sqrt());
                dt_next[i] += gamma * mdt[i] / (eps + vdt[i].sqrt());
                bar_next[i] += gamma * f_hat[i];
            }
            tilde.push(t_next);
            dtilde.push(dt_next);
            bar.push(bar_next);
        }
    }
    // the windowed processes are defined on complete windows only; truncate
    // every path at the last partition point
    let n_last = *partition.indices.last().unwrap();
    let keep = (n_last - cfg.n0) as usize + 1;
    let mut theta = walk.theta_path;
    theta.truncate(keep);
    big_theta.truncate(keep);
    debug_assert_eq!(tilde.len(), keep);

    Ok(ApproxPaths {
        ns: (cfg.n0..=n_last).collect(),
        theta,
        big_theta,
        tilde,
        dtilde,
        bar,
        stop: walk.stop,
    })
}

/// Truncated fresh i.i.d. history at frozen θ: the exponential averages a
/// stationarized window starts from.
fn fresh_history(
    cfg: &ApproxConfig,
    aux: &mut StreamRng,
    ell: u64,
    k_tail: usize,
    theta_f: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let d = theta_f.len();
    let (a, b) = (cfg.params.alpha(), cfg.params.beta());
    let mut m = vec![0.0; d];
    let mut v = vec![0.0; d];
    let mut wa = 1.0 - a;
    let mut wb = 1.0 - b;
    let mut x = vec![0.0; d];
    aux.seek(ell * k_tail as u64);
    for _ in 0..k_tail {
        cfg.innovation.sample_x(aux, theta_f, &mut x);
        for i in 0..d {
            m[i] += wa * x[i];
            v[i] += wb * x[i] * x[i];
        }
        wa *= a;
        wb *= b;
    }
    (m, v)
}

/// Build a partition covering `(n0, horizon]`, dropping any incomplete final
/// window.
pub fn rho_partition_to_horizon(
    schedule: &StepSchedule,
    n0: u64,
    rho: f64,
    horizon: u64,
) -> Result<RhoPartition> {
    let mut count = 8usize;
    loop {
        let p = super::partition::rho_partition(schedule, n0, rho, count)?;
        if *p.indices.last().unwrap() >= horizon {
            let mut indices = p.indices;
            let mut times = p.times;
            while *indices.last().unwrap() > horizon {
                indices.pop();
                times.pop();
            }
            return Ok(RhoPartition {
                n0,
                rho,
                indices,
                times,
            });
        }
        count *= 2;
        if count > 1 << 22 {
            return Err(AdamFieldError::Numeric(
                "partition grew unreasonably large".into(),
            ));
        }
    }
}

/// One row of the bound table.
#[derive(Debug, Clone, Serialize)]
pub struct BoundRow {
    pub bound: String,
    /// Window index, or the 𝔫 value for the tail bound.
    pub window: u64,
    pub lhs: f64,
    pub lhs_se: f64,
    pub rhs: f64,
    pub ratio: f64,
    pub pass: bool,
}

#[derive(Debug, Serialize)]
pub struct PropBoundsReport {
    pub rows: Vec<BoundRow>,
    pub regularity: RegularityEstimate,
    pub kappas: KappaConstants,
    pub windows: usize,
    pub replicas: usize,
    pub all_pass: bool,
}

struct ReplicaContrib {
    s1: Vec<f64>,
    s2: Vec<f64>,
    s3: Vec<f64>,
    d4: Vec<f64>,
    d4max: Vec<f64>,
    oracle_se: f64,
}

fn replica_contrib(
    cfg: &ApproxConfig,
    partition: &RhoPartition,
    oracle: &FrozenOracle,
    replica: u64,
    k_tail: usize,
) -> Result<ReplicaContrib> {
    let walk = base_walk(cfg, partition, replica)?;
    let d = cfg.theta0.len();
    let eps = cfg.params.epsilon();
    let (a, b) = (cfg.params.alpha(), cfg.params.beta());

    // (I): suffix sums of the exact-vs-Θ gap at each requested 𝔫
    let s1 = cfg
        .frak_n_list
        .iter()
        .map(|&frak| {
            let from = (frak.max(cfg.n0) - cfg.n0) as usize;
            walk.exact_gap[from..].iter().sum()
        })
        .collect();

    let windows = partition.windows();
    let mut s2 = vec![0.0; windows];
    let mut s3 = vec![0.0; windows];
    let mut d4 = vec![0.0; windows];
    let mut d4max = vec![0.0; windows];
    let mut oracle_se: f64 = 0.0;
    let mut redraw = StreamRng::new(cfg.seed, Domain::Trajectory, replica, cfg.innovation.stride());
    let mut aux = StreamRng::new(cfg.seed, Domain::WindowAux, replica, cfg.innovation.stride());
    let mut x = vec![0.0; d];
    for ell in 1..=windows {
        let (n_prev, n_cur, _dt) = partition.window(ell);
        let ind_prev = walk.stop > n_prev;
        let theta_f = walk.theta_path[(n_prev - cfg.n0) as usize].clone();
        let (mut mt, mut vt) = walk.snapshots[ell - 1].clone();
        let (mut mdt, mut vdt) = fresh_history(cfg, &mut aux, ell as u64, k_tail, &theta_f);
        let (f_hat, f_se) = oracle.eval(&theta_f);
        oracle_se = oracle_se.max(norm2(&f_se));
        let mut cum = vec![0.0; d];
        let mut t_in = 0.0;
        let mut max_dev: f64 = 0.0;
        redraw.seek(n_prev + 1);
        for k in n_prev + 1..=n_cur {
            let gamma = cfg.schedule.gamma(k);
            t_in += gamma;
            cfg.innovation.sample_x(&mut redraw, &theta_f, &mut x);
            let mut gap2 = 0.0;
            let mut gap3 = 0.0;
            let dbt = &walk.d_big_theta[(k - cfg.n0 - 1) as usize];
            for i in 0..d {
                mt[i] = a * mt[i] + (1.0 - a) * x[i];
                vt[i] = b * vt[i] + (1.0 - b) * x[i] * x[i];
                mdt[i] = a * mdt[i] + (1.0 - a) * x[i];
                vdt[i] = b * vdt[i] + (1.0 - b) * x[i] * x[i];
                let d_tilde = gamma * mt[i] / (eps + vt[i].sqrt());
                let d_dtilde = gamma * mdt[i] / (eps + vdt[i].sqrt());
                gap2 += (dbt[i] - d_tilde) * (dbt[i] - d_tilde);
                gap3 += (d_tilde - d_dtilde) * (d_tilde - d_dtilde);
                cum[i] += d_dtilde;
            }
            if walk.stop >= k {
                s2[ell - 1] += gap2.sqrt();
            }
            s3[ell - 1] += gap3.sqrt();
            let dev = (0..d)
                .map(|i| {
                    let e = cum[i] - t_in * f_hat[i];
                    e * e
                })
                .sum::<f64>()
                .sqrt();
            max_dev = max_dev.max(dev);
            if k == n_cur {
                d4[ell - 1] = if ind_prev { dev } else { 0.0 };
            }
        }
        if !ind_prev {
            s3[ell - 1] = 0.0;
            max_dev = 0.0;
        }
        d4max[ell - 1] = max_dev;
    }
    Ok(ReplicaContrib {
        s1,
        s2,
        s3,
        d4,
        d4max,
        oracle_se,
    })
}

/// Measure both sides of the five approximation bounds on a replica
/// ensemble. `pass` allows the Monte Carlo slack `3·SE(LHS)` plus the
/// frozen-oracle error propagated through the drift terms.
pub fn prop_bounds_report(
    cfg: &ApproxConfig,
    regularity: Option<RegularityEstimate>,
    oracle_replicas: usize,
    oracle_depth: usize,
) -> Result<PropBoundsReport> {
    if cfg.p < 2.0 {
        return Err(AdamFieldError::Precondition("p must be at least 2".into()));
    }
    let partition = rho_partition_to_horizon(&cfg.schedule, cfg.n0, cfg.rho, cfg.horizon)?;
    if partition.windows() == 0 {
        return Err(AdamFieldError::Precondition(
            "horizon too short for one partition window".into(),
        ));
    }
    let d = cfg.theta0.len();
    let kappas = kappa_constants(cfg.params, d, cfg.p, cfg.c_p)?;
    let reg = match regularity {
        Some(r) => r,
        None => estimate_regularity(&cfg.innovation, cfg.v_box, cfg.p, 4000, cfg.seed ^ 0xabc)?,
    };
    let oracle = FrozenOracle::build(
        cfg.innovation.clone(),
        cfg.params,
        oracle_depth,
        oracle_replicas,
        cfg.seed ^ 0xf0f0,
    )?;
    let k_tail = cfg.params.depth_for_tolerance(cfg.tail_tol, 20000);
    let contribs: Vec<Result<ReplicaContrib>> = par_map_indexed(cfg.replicas, |r| {
        replica_contrib(cfg, &partition, &oracle, r as u64, k_tail)
    });
    let mut ok_contribs = Vec::with_capacity(cfg.replicas);
    for c in contribs {
        ok_contribs.push(c?);
    }
    let x_norm = cfg.history_norm()?;
    let (b, p) = (cfg.params.beta(), cfg.p);
    let oracle_se_max = ok_contribs
        .iter()
        .map(|c| c.oracle_se)
        .fold(0.0f64, f64::max);

    let mut rows = Vec::new();
    let mut push_row =
        |bound: &str, window: u64, samples: Vec<f64>, rhs: f64, extra_slack: f64| {
            let (lhs, lhs_se) = lp_norm(&samples, p);
            let allowed = rhs + 3.0 * lhs_se + extra_slack;
            let pass = lhs <= allowed;
            rows.push(BoundRow {
                bound: bound.to_string(),
                window,
                lhs,
                lhs_se,
                rhs,
                ratio: if lhs > 0.0 { rhs / lhs } else { f64::INFINITY },
                pass,
            });
        };

    for (fi, &frak) in cfg.frak_n_list.iter().enumerate() {
        let samples: Vec<f64> = ok_contribs.iter().map(|c| c.s1[fi]).collect();
        let rhs = (kappas.k1 * b.powf(0.5 * (frak as f64 + 1.0) - cfg.n0 as f64) * x_norm
            + kappas.k2 * reg.c)
            * cfg.schedule.gamma(frak + 1)
            * b.powf(frak as f64 + 1.0);
        push_row("I", frak, samples, rhs, 0.0);
    }
    for ell in 1..=partition.windows() {
        let (n_prev, n_cur, dt) = partition.window(ell);
        let g_first = cfg.schedule.gamma(n_prev + 1);
        let rhs2 = kappas.k3 * reg.l_tilde * dt * dt;
        push_row(
            "II",
            ell as u64,
            ok_contribs.iter().map(|c| c.s2[ell - 1]).collect(),
            rhs2,
            0.0,
        );
        let rhs3 = g_first
            * (kappas.k4 * reg.c
                + kappas.k5 * b.powf((n_prev - cfg.n0) as f64 / 2.0) * x_norm);
        push_row(
            "III",
            ell as u64,
            ok_contribs.iter().map(|c| c.s3[ell - 1]).collect(),
            rhs3,
            0.0,
        );
        let gamma_sq: f64 = (n_prev + 1..=n_cur)
            .map(|k| cfg.schedule.gamma(k).powi(2))
            .sum();
        let rhs4a = kappas.k6 * reg.c_tilde * gamma_sq.sqrt();
        push_row(
            "IV.a",
            ell as u64,
            ok_contribs.iter().map(|c| c.d4[ell - 1]).collect(),
            rhs4a,
            3.0 * oracle_se_max * dt,
        );
        if p > 2.0 {
            let rhs4b = kappas.doob_factor
                * kappas.k6
                * reg.c_tilde
                * g_first
                * ((n_cur - n_prev) as f64).sqrt();
            push_row(
                "IV.b",
                ell as u64,
                ok_contribs.iter().map(|c| c.d4max[ell - 1]).collect(),
                rhs4b,
                3.0 * oracle_se_max * dt,
            );
        }
    }
    let all_pass = rows.iter().all(|r| r.pass);
    Ok(PropBoundsReport {
        rows,
        regularity: reg,
        kappas,
        windows: partition.windows(),
        replicas: cfg.replicas,
        all_pass,
    })
}
