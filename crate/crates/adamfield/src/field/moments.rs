//! Moment profiles of an innovation and the explicit field bounds built from
//! them: the perturbation bound on `|f - f̃|`, the mini-batch field bound at a
//! zero of `E[X]`, and the geometric inverse-moment envelope.

use crate::error::{AdamFieldError, Result};
use crate::innovation::Innovation;
use crate::rng::{Domain, StreamRng};
use crate::seq_space::DampingParams;
use crate::util::{mean_stderr, par_map_indexed};

/// `h(x) = 1/(√x + ε)` and its derivatives, the lens through which the
/// damping series enters every bound.
pub fn h(x: f64, eps: f64) -> f64 {
    1.0 / (x.sqrt() + eps)
}

pub fn h_prime_abs(x: f64, eps: f64) -> f64 {
    let s = x.sqrt();
    1.0 / ((s + eps) * (s + eps) * 2.0 * s)
}

pub fn h_double_prime(x: f64, eps: f64) -> f64 {
    let s = x.sqrt();
    1.0 / ((s + eps).powi(3) * 2.0 * x) + 1.0 / ((s + eps) * (s + eps) * 4.0 * x * s)
}

/// A scalar Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, Default)]
pub struct Estimate {
    pub mean: f64,
    pub se: f64,
}

impl Estimate {
    fn from_samples(xs: &[f64]) -> Self {
        let (mean, se) = mean_stderr(xs);
        Self { mean, se }
    }
}

/// Moment estimates of an innovation at a fixed `θ` (scalar case).
///
/// `phi_q = E[|X_base|^q]` always refer to the single-draw base innovation;
/// the damping-series moments (`inv_*`, `h_*`) refer to the innovation as
/// given, mini-batch included.
#[derive(Debug, Clone)]
pub struct MomentProfile {
    pub phi2: Estimate,
    pub phi3: Estimate,
    pub phi5: Estimate,
    pub mean_x: Estimate,
    pub m3_x: Estimate,
    /// `E[V^{-1/2}]`
    pub inv_half: Estimate,
    /// `E[V^{-3/2}]`
    pub inv_three_half: Estimate,
    /// `E[|h'(V)|]`
    pub h_prime_abs: Estimate,
    /// `E[h''(V)]`
    pub h_double_prime: Estimate,
    /// `E[(√V + ε)^{-2} V^{-3/2}]`, the factor in the perturbation bound
    pub h_pert: Estimate,
    /// Inverse moments hit a zero damping series; they are untrustworthy.
    pub infeasible: bool,
    pub depth: usize,
    pub replicas: usize,
}

/// Estimate the profile at `θ`: base-`X` moments from plain sampling,
/// damping-series functionals from truncated histories of the innovation
/// itself.
pub fn estimate_moment_profile(
    innovation: &Innovation,
    theta: &[f64],
    params: DampingParams,
    depth: usize,
    replicas: usize,
    seed: u64,
) -> Result<MomentProfile> {
    if innovation.dim() != 1 {
        return Err(AdamFieldError::Precondition(
            "moment profiles are one-dimensional".into(),
        ));
    }
    let eps = params.epsilon();
    let base = innovation.base();

    // base-X absolute and signed moments
    let n_base = (replicas * depth.min(64)).max(replicas);
    let mut abs2 = Vec::with_capacity(n_base);
    let mut abs3 = Vec::with_capacity(n_base);
    let mut abs5 = Vec::with_capacity(n_base);
    let mut sig1 = Vec::with_capacity(n_base);
    let mut sig3 = Vec::with_capacity(n_base);
    let mut rng = StreamRng::new(seed, Domain::Moments, 1, base.stride());
    let mut x = vec![0.0; 1];
    for _ in 0..n_base {
        base.sample_x(&mut rng, theta, &mut x);
        let v = x[0];
        let a = v.abs();
        abs2.push(a * a);
        abs3.push(a * a * a);
        abs5.push(a.powi(5));
        sig1.push(v);
        sig3.push(v * v * v);
    }

    // damping-series functionals of the batched innovation
    let (b, stride) = (params.beta(), innovation.stride());
    let rows = par_map_indexed(replicas, |r| {
        let mut rng = StreamRng::new(seed, Domain::Field, r as u64, stride);
        let mut v = 0.0;
        let mut wb = 1.0 - b;
        let mut xs = [0.0];
        for _ in 0..depth {
            innovation.sample_x(&mut rng, theta, &mut xs);
            v += wb * xs[0] * xs[0];
            wb *= b;
        }
        v
    });
    let infeasible = rows.iter().any(|&v| v <= 0.0);
    let take = |f: &dyn Fn(f64) -> f64| -> Estimate {
        let vals: Vec<f64> = rows
            .iter()
            .map(|&v| if v > 0.0 { f(v) } else { 0.0 })
            .collect();
        Estimate::from_samples(&vals)
    };

    Ok(MomentProfile {
        phi2: Estimate::from_samples(&abs2),
        phi3: Estimate::from_samples(&abs3),
        phi5: Estimate::from_samples(&abs5),
        mean_x: Estimate::from_samples(&sig1),
        m3_x: Estimate::from_samples(&sig3),
        inv_half: take(&|v| v.powf(-0.5)),
        inv_three_half: take(&|v| v.powf(-1.5)),
        h_prime_abs: take(&|v| h_prime_abs(v, eps)),
        h_double_prime: take(&|v| h_double_prime(v, eps)),
        h_pert: take(&|v| {
            let s = v.sqrt();
            1.0 / ((s + eps) * (s + eps) * v * s)
        }),
        infeasible,
        depth,
        replicas,
    })
}

/// Explicit bound on `|f - f̃|`:
/// `(3/8) (1-α)(1-β)² / (β^{5/2} (1-αβ²)) · E[(√V+ε)^{-2} V^{-3/2}] · E[|X|⁵]`.
pub fn perturbation_bound(profile: &MomentProfile, params: DampingParams) -> Result<f64> {
    if profile.phi5.mean == 0.0 {
        return Ok(0.0);
    }
    if profile.infeasible {
        return Err(AdamFieldError::Precondition(
            "profile infeasible: damping series hit zero".into(),
        ));
    }
    let (a, b) = (params.alpha(), params.beta());
    let front = 3.0 / 8.0 * (1.0 - a) * (1.0 - b) * (1.0 - b)
        / (b.powf(2.5) * (1.0 - a * b * b));
    Ok(front * profile.h_pert.mean * profile.phi5.mean)
}

/// The mini-batch field bound at a `θ` with `E[X(U, θ)] = 0`:
///
/// ```text
/// β^{-3/2} (1-α)(1-β)/(1-αβ) φ₃ E|h'(V_M)| M^{-2}
///   + β^{-5/2} (1-α)(1-β)²/(1-αβ²) E[h''(V_M)]
///       (2 C₃ φ₂ φ₃ M^{-5/2} + 5 φ₂ φ₃ M^{-3} + φ₅ M^{-4})
/// ```
///
/// `φ_q` are base-`X` moments, the `h`-moments belong to the batched damping
/// series, and `C₃` is the third-moment martingale constant (configured, not
/// asserted sharp).
pub fn minibatch_field_bound(
    profile: &MomentProfile,
    params: DampingParams,
    m: usize,
    c3: f64,
) -> Result<f64> {
    let tol = 3.0 * profile.mean_x.se + 1e-12;
    if profile.mean_x.mean.abs() > tol {
        return Err(AdamFieldError::Precondition(format!(
            "E[X] = {} ± {} not zero at the evaluated θ",
            profile.mean_x.mean, profile.mean_x.se
        )));
    }
    if profile.infeasible {
        return Err(AdamFieldError::Precondition(
            "profile infeasible: damping series hit zero".into(),
        ));
    }
    let (a, b) = (params.alpha(), params.beta());
    let mf = m as f64;
    let first = b.powf(-1.5) * (1.0 - a) * (1.0 - b) / (1.0 - a * b)
        * profile.phi3.mean
        * profile.h_prime_abs.mean
        / (mf * mf);
    let second = b.powf(-2.5) * (1.0 - a) * (1.0 - b) * (1.0 - b) / (1.0 - a * b * b)
        * profile.h_double_prime.mean
        * (2.0 * c3 * profile.phi2.mean * profile.phi3.mean * mf.powf(-2.5)
            + 5.0 * profile.phi2.mean * profile.phi3.mean * mf.powi(-3)
            + profile.phi5.mean * mf.powi(-4));
    Ok(first + second)
}

/// Geometric envelope for inverse moments of the damping series: for
/// independent `Z_k` with `P(Z_k² < δ) ≤ q` and `q < β^p`,
/// `E[v(Z)^{-p}] ≤ (β/(1-β))^p (1-q)/(β^p - q) δ^{-p}`.
pub fn inverse_moment_bound(beta: f64, delta: f64, p: f64, q: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&beta) {
        return Err(AdamFieldError::Precondition("beta must lie in (0,1)".into()));
    }
    if !(delta > 0.0) {
        return Err(AdamFieldError::Precondition("delta must be positive".into()));
    }
    let bp = beta.powf(p);
    if !(q >= 0.0 && q < bp) {
        return Err(AdamFieldError::Precondition(format!(
            "hypothesis violated: need 0 <= q < beta^p, got q={q}, beta^p={bp}"
        )));
    }
    Ok((beta / (1.0 - beta)).powf(p) * (1.0 - q) / (bp - q) * delta.powf(-p))
}
