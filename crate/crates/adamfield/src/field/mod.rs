//! Monte Carlo estimation of the Adam vector field.
//!
//! The field of an innovation at `θ` is `f(θ) = E[g(X(U_0, θ), X(U_-1, θ), ...)]`
//! over an i.i.d. stationary history. Estimators truncate the history at depth
//! `K` (geometric tails make the neglected mass `≤ g_bound · (α^K + β^{K/2})`
//! scale) and average over independent replicas. Replicas are addressed by
//! counter-based streams, so estimates at different `θ` under one seed share
//! common random numbers.

pub mod moments;
pub mod oracle;
pub mod root;

pub use moments::{
    estimate_moment_profile, inverse_moment_bound, minibatch_field_bound, perturbation_bound,
    MomentProfile,
};
pub use oracle::{AnalyticOracle, FieldOracle, FrozenOracle};
pub use root::{find_zero, RootEstimate};

use crate::error::{AdamFieldError, Result};
use crate::innovation::Innovation;
use crate::rng::{Domain, StreamRng};
use crate::seq_space::DampingParams;
use crate::util::{mean_stderr, par_map_indexed};

/// Monte Carlo estimate of a vector quantity.
#[derive(Debug, Clone)]
pub struct FieldEstimate {
    pub mean: Vec<f64>,
    pub std_error: Vec<f64>,
    /// Replicas that entered the average.
    pub replicas: usize,
    /// History truncation depth.
    pub depth: usize,
    /// Replicas discarded for non-finite samples.
    pub discarded: usize,
    /// Set when a feasibility precondition looked violated (divergent inverse
    /// moments); the estimate is still reported.
    pub flag: Option<String>,
}

impl FieldEstimate {
    fn from_rows(rows: Vec<Option<Vec<f64>>>, dim: usize, depth: usize) -> Result<Self> {
        let total = rows.len();
        let kept: Vec<Vec<f64>> = rows.into_iter().flatten().collect();
        let discarded = total - kept.len();
        if discarded * 100 > total {
            return Err(AdamFieldError::Numeric(format!(
                "{discarded} of {total} replicas discarded (>1%)"
            )));
        }
        if kept.is_empty() {
            return Err(AdamFieldError::Numeric("all replicas discarded".into()));
        }
        let mut mean = vec![0.0; dim];
        let mut se = vec![0.0; dim];
        for i in 0..dim {
            let col: Vec<f64> = kept.iter().map(|r| r[i]).collect();
            let (m, s) = mean_stderr(&col);
            mean[i] = m;
            se[i] = s;
        }
        Ok(Self {
            mean,
            std_error: se,
            replicas: kept.len(),
            depth,
            discarded,
            flag: None,
        })
    }

    /// Scalar accessors for one-dimensional estimates.
    pub fn value(&self) -> f64 {
        self.mean[0]
    }

    pub fn se(&self) -> f64 {
        self.std_error[0]
    }
}

/// One replica's truncated history statistics: momentum series, damping
/// series, and the raw samples (most recent first).
pub(crate) struct ReplicaBank {
    pub(crate) samples: Vec<f64>, // depth × dim, row-major by history index
    pub(crate) m: Vec<f64>,
    pub(crate) v: Vec<f64>,
}

pub(crate) fn draw_replica(
    innovation: &Innovation,
    theta: &[f64],
    params: DampingParams,
    depth: usize,
    rng: &mut StreamRng,
) -> ReplicaBank {
    let d = theta.len();
    let (a, b) = (params.alpha(), params.beta());
    let mut samples = vec![0.0; depth * d];
    let mut m = vec![0.0; d];
    let mut v = vec![0.0; d];
    let mut wa = 1.0 - a;
    let mut wb = 1.0 - b;
    let mut x = vec![0.0; d];
    for j in 0..depth {
        innovation.sample_x(rng, theta, &mut x);
        for i in 0..d {
            samples[j * d + i] = x[i];
            m[i] += wa * x[i];
            v[i] += wb * x[i] * x[i];
        }
        wa *= a;
        wb *= b;
    }
    ReplicaBank { samples, m, v }
}

/// Estimate `f(θ)` by truncated Monte Carlo: `replicas` independent histories
/// of depth `depth`, each mapped through `g`.
pub fn estimate_field(
    innovation: &Innovation,
    theta: &[f64],
    params: DampingParams,
    depth: usize,
    replicas: usize,
    seed: u64,
) -> Result<FieldEstimate> {
    if depth == 0 || replicas == 0 {
        return Err(AdamFieldError::Precondition(
            "depth and replicas must be at least 1".into(),
        ));
    }
    let d = theta.len();
    let eps = params.epsilon();
    let stride = innovation.stride();
    let rows = par_map_indexed(replicas, |r| {
        let mut rng = StreamRng::new(seed, Domain::Field, r as u64, stride);
        let bank = draw_replica(innovation, theta, params, depth, &mut rng);
        let g: Vec<f64> = bank
            .m
            .iter()
            .zip(&bank.v)
            .map(|(mi, vi)| mi / (eps + vi.sqrt()))
            .collect();
        if g.iter().all(|x| x.is_finite()) {
            Some(g)
        } else {
            None
        }
    });
    FieldEstimate::from_rows(rows, d, depth)
}

/// Shared output of the first-order computation on one replica.
struct FirstOrderRow {
    /// `Σ_j α^j h(V^{≠j})` per component
    a_sum: Vec<f64>,
    /// `Σ_j (αβ)^j |h'(V^{≠j})|` per component
    b_sum: Vec<f64>,
    degenerate: bool,
}

fn first_order_row(bank: &ReplicaBank, params: DampingParams, depth: usize, d: usize) -> FirstOrderRow {
    let (a, b, eps) = (params.alpha(), params.beta(), params.epsilon());
    let mut a_sum = vec![0.0; d];
    let mut b_sum = vec![0.0; d];
    let mut degenerate = false;
    for i in 0..d {
        let v_full = bank.v[i];
        let mut wa = 1.0;
        let mut wab = 1.0;
        let mut wb = 1.0 - b;
        for j in 0..depth {
            let xj = bank.samples[j * d + i];
            let v_not = (v_full - wb * xj * xj).max(0.0);
            let sq = v_not.sqrt();
            a_sum[i] += wa / (sq + eps);
            if sq == 0.0 {
                // |h'| diverges at 0; flag and skip the term
                degenerate = true;
            } else {
                b_sum[i] += wab / ((sq + eps) * (sq + eps) * 2.0 * sq);
            }
            wa *= a;
            wab *= a * b;
            wb *= b;
        }
    }
    FirstOrderRow {
        a_sum,
        b_sum,
        degenerate,
    }
}

/// Moments `(E[X], E[X³])` for the first-order field: exact for built-ins,
/// otherwise estimated from `n` Monte Carlo draws on the `Moments` domain.
fn x_moments(
    innovation: &Innovation,
    theta: &[f64],
    seed: u64,
    n: usize,
) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
    if let (Some(m1), Some(m3)) = (innovation.mean_x(theta), innovation.m3_x(theta)) {
        let d = theta.len();
        return (m1, vec![0.0; d], m3, vec![0.0; d]);
    }
    let d = theta.len();
    let mut rng = StreamRng::new(seed, Domain::Moments, 0, innovation.stride());
    let mut x = vec![0.0; d];
    let mut cols1 = vec![Vec::with_capacity(n); d];
    let mut cols3 = vec![Vec::with_capacity(n); d];
    for _ in 0..n {
        innovation.sample_x(&mut rng, theta, &mut x);
        for i in 0..d {
            cols1[i].push(x[i]);
            cols3[i].push(x[i] * x[i] * x[i]);
        }
    }
    let mut m1 = vec![0.0; d];
    let mut s1 = vec![0.0; d];
    let mut m3 = vec![0.0; d];
    let mut s3 = vec![0.0; d];
    for i in 0..d {
        let (a, b) = mean_stderr(&cols1[i]);
        m1[i] = a;
        s1[i] = b;
        let (a, b) = mean_stderr(&cols3[i]);
        m3[i] = a;
        s3[i] = b;
    }
    (m1, s1, m3, s3)
}

/// First-order approximation of the field: the `E[X]` drift term plus the
/// `E[X³]` skew correction, with `V^{≠k}` realized by zeroing index `k` in
/// the truncated damping series.
pub fn first_order_field(
    innovation: &Innovation,
    theta: &[f64],
    params: DampingParams,
    depth: usize,
    replicas: usize,
    seed: u64,
) -> Result<FieldEstimate> {
    if depth == 0 || replicas == 0 {
        return Err(AdamFieldError::Precondition(
            "depth and replicas must be at least 1".into(),
        ));
    }
    let d = theta.len();
    let (a, b) = (params.alpha(), params.beta());
    let stride = innovation.stride();
    let rows = par_map_indexed(replicas, |r| {
        let mut rng = StreamRng::new(seed, Domain::Field, r as u64, stride);
        let bank = draw_replica(innovation, theta, params, depth, &mut rng);
        first_order_row(&bank, params, depth, d)
    });
    let degenerate = rows.iter().any(|r| r.degenerate);
    let (m1, se1, m3, se3) = x_moments(innovation, theta, seed ^ 0x5157, replicas.max(4096));

    let mut mean = vec![0.0; d];
    let mut se = vec![0.0; d];
    for i in 0..d {
        let a_col: Vec<f64> = rows.iter().map(|r| r.a_sum[i]).collect();
        let b_col: Vec<f64> = rows.iter().map(|r| r.b_sum[i]).collect();
        let (am, ase) = mean_stderr(&a_col);
        let (bm, bse) = mean_stderr(&b_col);
        let term1 = (1.0 - a) * am * m1[i];
        let term2 = (1.0 - a) * (1.0 - b) * bm * m3[i];
        mean[i] = term1 - term2;
        // independent-factor error propagation on both products
        let var1 = ((1.0 - a) * ase * m1[i]).powi(2) + ((1.0 - a) * am * se1[i]).powi(2);
        let var2 = ((1.0 - a) * (1.0 - b) * bse * m3[i]).powi(2)
            + ((1.0 - a) * (1.0 - b) * bm * se3[i]).powi(2);
        se[i] = (var1 + var2).sqrt();
    }
    Ok(FieldEstimate {
        mean,
        std_error: se,
        replicas,
        depth,
        discarded: 0,
        flag: degenerate.then(|| "divergent inverse moment at V=0".to_string()),
    })
}

/// Direct estimator for the gap `f - f̃`: the per-replica Taylor remainder
/// `(1-α) Σ_k α^k (h(V) - h(V^{≠k}) - h'(V^{≠k}) Δ_k) X_k` whose expectation
/// is exactly `f - f̃` at the shared truncation level. Needs exact `(E X,
/// E X³)`, so it is available for built-ins only; its variance scales with
/// the gap itself, which is what makes the `(1-β)²` regime measurable.
pub fn perturbation_gap(
    innovation: &Innovation,
    theta: &[f64],
    params: DampingParams,
    depth: usize,
    replicas: usize,
    seed: u64,
) -> Result<FieldEstimate> {
    if innovation.mean_x(theta).is_none() || innovation.m3_x(theta).is_none() {
        return Err(AdamFieldError::Precondition(
            "perturbation_gap needs exact first and third moments".into(),
        ));
    }
    let d = theta.len();
    let (a, b, eps) = (params.alpha(), params.beta(), params.epsilon());
    let stride = innovation.stride();
    let rows = par_map_indexed(replicas, |r| {
        let mut rng = StreamRng::new(seed, Domain::Field, r as u64, stride);
        let bank = draw_replica(innovation, theta, params, depth, &mut rng);
        let mut out = vec![0.0; d];
        let mut ok = true;
        for i in 0..d {
            let v_full = bank.v[i];
            let h_full = 1.0 / (v_full.sqrt() + eps);
            let mut wa = 1.0 - a;
            let mut wb = 1.0 - b;
            let mut acc = 0.0;
            for j in 0..depth {
                let xj = bank.samples[j * d + i];
                let delta = wb * xj * xj;
                let v_not = (v_full - delta).max(0.0);
                let sq = v_not.sqrt();
                let h_not = 1.0 / (sq + eps);
                let hp_not = if sq == 0.0 {
                    if delta == 0.0 {
                        0.0
                    } else {
                        ok = false;
                        0.0
                    }
                } else {
                    -1.0 / ((sq + eps) * (sq + eps) * 2.0 * sq)
                };
                acc += wa * (h_full - h_not - hp_not * delta) * xj;
                wa *= a;
                wb *= b;
            }
            out[i] = acc;
        }
        if ok && out.iter().all(|x| x.is_finite()) {
            Some(out)
        } else {
            None
        }
    });
    FieldEstimate::from_rows(rows, d, depth)
}

/// Monte Carlo estimate of `f'(θ)` for scalar innovations with a constant
/// `∂X/∂θ` (quadratic innovations have slope -1; other affine slopes may be
/// supplied by the caller):
///
/// ```text
/// f'(θ) = s E[(1-α^K) h(V) + 2 h'(V) M^β M^α]
/// ```
///
/// which for `s = -1` is the `-E[(ε+√V)^{-1}] + E[M^α M^β (ε+√V)^{-2} V^{-1/2}]`
/// form used in the equilibrium analysis.
pub fn estimate_field_derivative(
    innovation: &Innovation,
    theta: f64,
    params: DampingParams,
    depth: usize,
    replicas: usize,
    seed: u64,
    dx_dtheta: Option<f64>,
) -> Result<FieldEstimate> {
    if innovation.dim() != 1 {
        return Err(AdamFieldError::Precondition(
            "derivative estimator is one-dimensional".into(),
        ));
    }
    let slope = dx_dtheta.or(innovation.affine_slope()).ok_or_else(|| {
        AdamFieldError::Precondition("innovation needs a constant ∂X/∂θ".into())
    })?;
    let (a, b, eps) = (params.alpha(), params.beta(), params.epsilon());
    let alpha_partial = 1.0 - a.powi(depth as i32);
    let stride = innovation.stride();
    let th = [theta];
    let rows = par_map_indexed(replicas, |r| {
        let mut rng = StreamRng::new(seed, Domain::Field, r as u64, stride);
        let bank = draw_replica(innovation, &th, params, depth, &mut rng);
        let v = bank.v[0];
        let m_alpha = bank.m[0];
        let mut m_beta = 0.0;
        let mut wb = 1.0 - b;
        for j in 0..depth {
            m_beta += wb * bank.samples[j];
            wb *= b;
        }
        let sq = v.sqrt();
        let second = if sq == 0.0 {
            if m_alpha * m_beta == 0.0 {
                0.0
            } else {
                return None; // measure-zero guard
            }
        } else {
            m_alpha * m_beta / ((sq + eps) * (sq + eps) * sq)
        };
        let value = slope * (alpha_partial / (sq + eps) - second);
        value.is_finite().then_some(vec![value])
    });
    FieldEstimate::from_rows(rows, 1, depth)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::innovation::UDist;
    use approx::assert_relative_eq;

    fn params(a: f64, b: f64, e: f64) -> DampingParams {
        DampingParams::new(a, b, e).unwrap()
    }

    #[test]
    fn deterministic_field_closed_form() {
        let p = params(0.9, 0.99, 0.1);
        let depth = p.depth_for_tolerance(1e-12, 20000);
        let innov = Innovation::deterministic(vec![1.0]);
        let est = estimate_field(&innov, &[0.0], p, depth, 3, 1).unwrap();
        assert_relative_eq!(est.value(), 1.0 / 1.1, max_relative = 1e-7);
        assert_eq!(est.se(), 0.0);
    }

    #[test]
    fn symmetric_field_vanishes_at_mean() {
        let p = params(0.5, 0.75, 0.1);
        let depth = p.depth_for_tolerance(1e-10, 20000);
        let innov = Innovation::quadratic(UDist::rademacher(), 1, 1);
        let est = estimate_field(&innov, &[0.0], p, depth, 20_000, 7).unwrap();
        assert!(est.value().abs() <= 3.0 * est.se(), "f(E U) = {} ± {}", est.value(), est.se());
    }

    #[test]
    fn field_sign_structure_far_from_mean() {
        let p = params(0.5, 0.75, 0.1);
        let depth = p.depth_for_tolerance(1e-10, 20000);
        let innov = Innovation::quadratic(UDist::rademacher(), 1, 1);
        let hi = estimate_field(&innov, &[10.0], p, depth, 2000, 7).unwrap();
        let lo = estimate_field(&innov, &[-10.0], p, depth, 2000, 7).unwrap();
        assert!(hi.value() < 0.0 && lo.value() > 0.0);
    }

    #[test]
    fn first_order_deterministic_matches_closed_form() {
        // X ≡ c: V^{≠k} = c²(1 - β^K - (1-β)β^k) exactly at truncation level
        let p = params(0.5, 0.75, 0.1);
        let depth = 200;
        let c = 1.0;
        let innov = Innovation::deterministic(vec![c]);
        let est = first_order_field(&innov, &[0.0], p, depth, 2, 5).unwrap();
        let (a, b, eps): (f64, f64, f64) = (0.5, 0.75, 0.1);
        let v_full = c * c * (1.0 - b.powi(depth as i32));
        let mut term1 = 0.0;
        let mut term2 = 0.0;
        let mut wa: f64 = 1.0;
        let mut wab: f64 = 1.0;
        let mut wb: f64 = 1.0 - b;
        for _ in 0..depth {
            let v_not: f64 = v_full - wb * c * c;
            let sq = v_not.sqrt();
            term1 += wa / (sq + eps);
            term2 += wab / ((sq + eps) * (sq + eps) * 2.0 * sq);
            wa *= a;
            wab *= a * b;
            wb *= b;
        }
        let expected = (1.0 - a) * term1 * c - (1.0 - a) * (1.0 - b) * term2 * c * c * c;
        assert_relative_eq!(est.value(), expected, max_relative = 1e-10);
    }

    #[test]
    fn first_order_vanishes_for_symmetric_innovation() {
        let p = params(0.5, 0.75, 0.1);
        let innov = Innovation::quadratic(UDist::rademacher(), 1, 1);
        let est = first_order_field(&innov, &[0.0], p, 64, 200, 3).unwrap();
        assert_eq!(est.value(), 0.0);
    }

    #[test]
    fn first_order_sign_for_asymmetric_innovation() {
        // E[X³] = -12 < 0 at θ = E[U], so the skew term makes f̃ > 0
        let p = params(0.5, 0.75, 0.1);
        let innov = Innovation::quadratic(
            UDist::TwoPoint { p: 0.8, hi: 1.0, lo: -4.0 },
            1,
            1,
        );
        let est = first_order_field(&innov, &[0.0], p, 160, 4000, 3).unwrap();
        assert!(est.value() > 0.0, "f̃(0) = {}", est.value());
    }

    #[test]
    fn derivative_deterministic_closed_form() {
        // X ≡ c via constant-U quadratic: f' = -ε/(ε+c)²
        let p = params(0.9, 0.99, 0.1);
        let depth = p.depth_for_tolerance(1e-12, 20000);
        let innov = Innovation::quadratic(UDist::Constant { value: 1.0 }, 1, 1);
        let est =
            estimate_field_derivative(&innov, 0.0, p, depth, 3, 1, None).unwrap();
        assert_relative_eq!(est.value(), -0.1 / 1.21, max_relative = 1e-6);
    }

    #[test]
    fn derivative_negative_for_large_batch() {
        let p = params(0.5, 0.75, 0.1);
        let depth = p.depth_for_tolerance(1e-10, 20000);
        let innov = Innovation::quadratic(UDist::rademacher(), 1, 64);
        for theta in [-1.0, -0.3, 0.0, 0.4, 1.0] {
            let est =
                estimate_field_derivative(&innov, theta, p, depth, 3000, 11, None).unwrap();
            assert!(
                est.value() + 3.0 * est.se() < 0.0,
                "f'({theta}) = {} ± {}",
                est.value(),
                est.se()
            );
        }
    }

    #[test]
    fn derivative_matches_central_difference_under_crn() {
        let p = params(0.5, 0.75, 0.1);
        let depth = p.depth_for_tolerance(1e-10, 20000);
        let innov = Innovation::quadratic(UDist::rademacher(), 1, 8);
        let (seed, n) = (23, 4000);
        let h = 1e-3;
        let fp = estimate_field(&innov, &[0.3 + h], p, depth, n, seed).unwrap();
        let fm = estimate_field(&innov, &[0.3 - h], p, depth, n, seed).unwrap();
        let fd = (fp.value() - fm.value()) / (2.0 * h);
        let deriv = estimate_field_derivative(&innov, 0.3, p, depth, n, seed, None).unwrap();
        // CRN makes the difference quotient tight; allow 3 combined SEs + O(h²)
        let tol = 3.0 * (deriv.se() + (fp.se() + fm.se()) / (2.0 * h) / 100.0) + 10.0 * h * h;
        assert!(
            (fd - deriv.value()).abs() <= tol.max(3.0 * deriv.se()),
            "fd={fd} deriv={} tol={tol}",
            deriv.value()
        );
    }

    #[test]
    fn truncation_tail_is_controlled() {
        // doubling the depth moves the estimate by at most the analytic tail
        let p = params(0.5, 0.75, 0.1);
        let innov = Innovation::quadratic(UDist::rademacher(), 1, 4);
        let k = 40;
        let a = estimate_field(&innov, &[0.2], p, k, 500, 9).unwrap();
        let b = estimate_field(&innov, &[0.2], p, 2 * k, 500, 9).unwrap();
        let rate: f64 = p.alpha().max(p.beta().sqrt());
        let tail = crate::seq_space::g_bound(p, 1) * 2.0 * rate.powi(k as i32)
            / (1.0 - p.alpha())
            + 3.0 * (a.se() + b.se());
        assert!((a.value() - b.value()).abs() <= tail);
    }

    #[test]
    fn crn_field_is_monotone_on_grid() {
        // with shared streams the quadratic empirical field decreases in θ
        let p = params(0.5, 0.75, 0.1);
        let innov = Innovation::quadratic(UDist::rademacher(), 1, 4);
        let depth = 160;
        let mut prev = f64::INFINITY;
        for k in 0..=20 {
            let theta = -1.0 + 0.1 * k as f64;
            let est = estimate_field(&innov, &[theta], p, depth, 400, 31).unwrap();
            assert!(est.value() < prev + 1e-12);
            prev = est.value();
        }
    }
}
