//! The weighted sequence space of past innovations.
//!
//! Histories are sequences `x = (x_0, x_{-1}, ...)` of vectors in ℝ^d indexed
//! into the past, stored most-recent-first at finite depth with an implicit
//! zero tail. The space carries the weighted ℓ¹ norm `Σ_k ϱ_k |x_k|` with
//! geometrically decaying weights `ϱ_k`, and the update map
//!
//! ```text
//! g(x)_i = (1-α) Σ_k α^{|k|} x_k^(i) / (ε + sqrt((1-β) Σ_k β^{|k|} (x_k^(i))²))
//! ```
//!
//! is 1-Lipschitz with respect to that norm and uniformly bounded. Those two
//! facts, plus the √β-contraction of the shift into the past, are what every
//! other module leans on.

use crate::error::{AdamFieldError, Result};
use serde::{Deserialize, Serialize};

/// Adam damping parameters `(α, β, ε)` with `0 ≤ α < √β < 1` and `ε > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DampingParams {
    alpha: f64,
    beta: f64,
    epsilon: f64,
}

impl DampingParams {
    pub fn new(alpha: f64, beta: f64, epsilon: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&alpha) || !alpha.is_finite() {
            return Err(AdamFieldError::InvalidParameter(format!(
                "alpha must lie in [0,1), got {alpha}"
            )));
        }
        if !(0.0..1.0).contains(&beta) || !beta.is_finite() {
            return Err(AdamFieldError::InvalidParameter(format!(
                "beta must lie in [0,1), got {beta}"
            )));
        }
        if !(epsilon > 0.0) || !epsilon.is_finite() {
            return Err(AdamFieldError::InvalidParameter(format!(
                "epsilon must be positive, got {epsilon}"
            )));
        }
        if alpha >= beta.sqrt() {
            return Err(AdamFieldError::InvalidParameter(format!(
                "alpha < sqrt(beta) required, got alpha={alpha}, sqrt(beta)={}",
                beta.sqrt()
            )));
        }
        Ok(Self {
            alpha,
            beta,
            epsilon,
        })
    }

    #[inline]
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    #[inline]
    pub fn beta(&self) -> f64 {
        self.beta
    }

    #[inline]
    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// `1 / sqrt(1 - α²/β)`, the factor coupling the momentum and damping
    /// series; infinite only at the excluded boundary `α = √β`.
    pub fn coupling(&self) -> f64 {
        if self.alpha == 0.0 {
            1.0
        } else {
            1.0 / (1.0 - self.alpha * self.alpha / self.beta).sqrt()
        }
    }

    /// Smallest depth `K` with `max(α, √β)^K ≤ tol`, capped at `cap`.
    pub fn depth_for_tolerance(&self, tol: f64, cap: usize) -> usize {
        let rate = self.alpha.max(self.beta.sqrt());
        if rate <= 0.0 {
            return 1;
        }
        let k = (tol.ln() / rate.ln()).ceil();
        (k.max(1.0) as usize).min(cap)
    }
}

/// Geometric decay weights `ϱ_k` for wrapped parameters, most-recent-first,
/// together with the closed-form ℓ¹ total of the full infinite family.
#[derive(Debug, Clone)]
pub struct RhoWeights {
    params: DampingParams,
    values: Vec<f64>,
    ell1_total: f64,
}

/// First `depth` weights `ϱ_0, ϱ_{-1}, ...` and the exact ℓ¹ total
/// `ε⁻¹ (1 + (1-α) / ((1-√β) sqrt(1-α²/β)))`.
pub fn rho_weights(params: DampingParams, depth: usize) -> Result<RhoWeights> {
    if depth == 0 {
        return Err(AdamFieldError::Precondition(
            "weight depth must be at least 1".into(),
        ));
    }
    let (a, b, eps) = (params.alpha(), params.beta(), params.epsilon());
    let coupling = params.coupling();
    let values = (0..depth)
        .map(|k| (1.0 - a) / eps * (a.powi(k as i32) + coupling * b.sqrt().powi(k as i32)))
        .collect();
    let ell1_total = (1.0 + (1.0 - a) / (1.0 - b.sqrt()) * coupling) / eps;
    Ok(RhoWeights {
        params,
        values,
        ell1_total,
    })
}

impl RhoWeights {
    pub fn params(&self) -> DampingParams {
        self.params
    }

    /// Weight at index `-k` (`k` steps into the past).
    pub fn value(&self, k: usize) -> f64 {
        self.values[k]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn depth(&self) -> usize {
        self.values.len()
    }

    /// Exact `‖ϱ‖_{ℓ¹}` of the infinite weight family.
    pub fn ell1_total(&self) -> f64 {
        self.ell1_total
    }
}

/// A finite-depth history of ℝ^d vectors, most recent first, with an implicit
/// zero tail. Serializes as a JSON array of arrays for test fixtures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedSeq {
    dim: usize,
    entries: Vec<Vec<f64>>,
}

impl WeightedSeq {
    pub fn new(dim: usize, entries: Vec<Vec<f64>>) -> Result<Self> {
        if dim == 0 {
            return Err(AdamFieldError::InvalidParameter(
                "dimension must be positive".into(),
            ));
        }
        for e in &entries {
            if e.len() != dim {
                return Err(AdamFieldError::DimensionMismatch {
                    expected: dim,
                    got: e.len(),
                });
            }
        }
        Ok(Self { dim, entries })
    }

    /// One-dimensional history from scalars.
    pub fn scalar(entries: &[f64]) -> Self {
        Self {
            dim: 1,
            entries: entries.iter().map(|&v| vec![v]).collect(),
        }
    }

    pub fn zero(dim: usize) -> Self {
        Self {
            dim,
            entries: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn depth(&self) -> usize {
        self.entries.len()
    }

    /// Entry `k` steps into the past (zero vector beyond the stored depth).
    pub fn entry(&self, k: usize) -> Option<&[f64]> {
        self.entries.get(k).map(|e| e.as_slice())
    }

    pub fn entries(&self) -> &[Vec<f64>] {
        &self.entries
    }

    /// Momentum-series value `m(x) = (1-α) Σ_k α^{|k|} x_k`.
    pub fn momentum_series(&self, params: DampingParams) -> Vec<f64> {
        let a = params.alpha();
        let mut out = vec![0.0; self.dim];
        let mut w = 1.0 - a;
        for e in &self.entries {
            for (o, v) in out.iter_mut().zip(e) {
                *o += w * v;
            }
            w *= a;
            if w == 0.0 {
                break;
            }
        }
        out
    }

    /// Damping-series value `v(x)^(i) = (1-β) Σ_k β^{|k|} (x_k^(i))²`.
    pub fn damping_series(&self, params: DampingParams) -> Vec<f64> {
        let b = params.beta();
        let mut out = vec![0.0; self.dim];
        let mut w = 1.0 - b;
        for e in &self.entries {
            for (o, v) in out.iter_mut().zip(e) {
                *o += w * v * v;
            }
            w *= b;
        }
        out
    }
}

/// Weighted norm `Σ_k ϱ_k |x_k|` with `|·|` Euclidean on ℝ^d.
pub fn lrho_norm(x: &WeightedSeq, w: &RhoWeights) -> Result<f64> {
    if w.depth() < x.depth() {
        return Err(AdamFieldError::Precondition(format!(
            "weights cover depth {}, sequence has depth {}",
            w.depth(),
            x.depth()
        )));
    }
    Ok(x.entries
        .iter()
        .zip(w.values())
        .map(|(e, rho)| rho * crate::util::norm2(e))
        .sum())
}

/// The update map `g` evaluated on a finite history.
///
/// Components with an infinite damping series are defined to be zero; that
/// case is unreachable at finite depth, where the denominator is at least ε.
pub fn g_map(x: &WeightedSeq, params: DampingParams) -> Vec<f64> {
    let m = x.momentum_series(params);
    let v = x.damping_series(params);
    m.iter()
        .zip(&v)
        .map(|(mi, vi)| mi / (params.epsilon() + vi.sqrt()))
        .collect()
}

/// Uniform bound `√d (1-α) / sqrt(1-β) / sqrt(1-α²/β)` on `|g|`.
pub fn g_bound(params: DampingParams, dim: usize) -> f64 {
    (dim as f64).sqrt() * (1.0 - params.alpha()) / (1.0 - params.beta()).sqrt()
        * params.coupling()
}

/// The shift into the past: entry `x_k` moves to index `k-1` and the present
/// slot becomes zero. Contracts the weighted norm by √β.
pub fn translate(x: &WeightedSeq) -> WeightedSeq {
    if x.entries.is_empty() {
        return x.clone();
    }
    let mut entries = Vec::with_capacity(x.entries.len() + 1);
    entries.push(vec![0.0; x.dim]);
    entries.extend(x.entries.iter().cloned());
    WeightedSeq {
        dim: x.dim,
        entries,
    }
}

/// Certified upper bound on the representation seminorm `(m, v)_{ℓ_ϱ}`:
/// the cheapest weighted norm over histories with at most `budget` nonzero
/// atoms per component that reproduce `m` and `v` exactly, `+∞` if none is
/// found. An optional explicit history consistent with `(m, v)` is always an
/// admissible bound and wins if smaller.
pub fn mv_seminorm_upper(
    m: &[f64],
    v: &[f64],
    params: DampingParams,
    budget: usize,
    history: Option<&WeightedSeq>,
) -> Result<f64> {
    if m.len() != v.len() {
        return Err(AdamFieldError::DimensionMismatch {
            expected: m.len(),
            got: v.len(),
        });
    }
    if v.iter().any(|&vi| vi < 0.0) {
        return Err(AdamFieldError::Precondition(
            "v must be componentwise nonnegative".into(),
        ));
    }

    let scan_depth = 48usize;
    let weights = rho_weights(params, scan_depth + 2)?;

    let mut best = 0.0f64;
    for i in 0..m.len() {
        let comp = component_upper(m[i], v[i], params, budget, &weights, scan_depth);
        if !comp.is_finite() {
            best = f64::INFINITY;
            break;
        }
        // component histories are stacked at shared positions; the Euclidean
        // entry norm is at most the sum of per-component magnitudes
        best += comp;
    }

    if let Some(h) = history {
        let hm = h.momentum_series(params);
        let hv = h.damping_series(params);
        let consistent = hm
            .iter()
            .zip(m)
            .all(|(a, b)| (a - b).abs() <= 1e-9 * (1.0 + b.abs()))
            && hv
                .iter()
                .zip(v)
                .all(|(a, b)| (a - b).abs() <= 1e-9 * (1.0 + b.abs()));
        if !consistent {
            return Err(AdamFieldError::Precondition(
                "provided history does not represent (m, v)".into(),
            ));
        }
        let hw = rho_weights(params, h.depth().max(1))?;
        best = best.min(lrho_norm(h, &hw)?);
    }
    Ok(best)
}

/// Scalar case of the seminorm search: one- and two-atom representations.
fn component_upper(
    m: f64,
    v: f64,
    params: DampingParams,
    budget: usize,
    weights: &RhoWeights,
    scan_depth: usize,
) -> f64 {
    let (a, b) = (params.alpha(), params.beta());
    if v == 0.0 {
        return if m == 0.0 { 0.0 } else { f64::INFINITY };
    }
    // Cauchy-Schwarz feasibility: |m| ≤ (1-α)(1-β)^{-1/2}(1-α²/β)^{-1/2} √v
    let cs = (1.0 - a) / (1.0 - b).sqrt() * params.coupling() * v.sqrt();
    if m.abs() > cs * (1.0 + 1e-12) {
        return f64::INFINITY;
    }

    let am = |k: usize| (1.0 - a) * a.powi(k as i32); // m-coefficient of an atom at depth k
    let bv = |k: usize| (1.0 - b) * b.powi(k as i32); // v-coefficient

    let mut best = f64::INFINITY;

    // one atom: sign and size fixed by v, m must match exactly
    for k in 0..=scan_depth {
        let s_mag = (v / bv(k)).sqrt();
        let coeff = am(k);
        if coeff == 0.0 {
            if m == 0.0 {
                best = best.min(weights.value(k) * s_mag);
            }
            continue;
        }
        for s in [s_mag, -s_mag] {
            if (coeff * s - m).abs() <= 1e-9 * (1.0 + m.abs()) {
                best = best.min(weights.value(k) * s_mag);
            }
        }
    }

    if budget < 2 {
        return best;
    }

    // two atoms at depths k1 < k2: linear m-constraint plus quadratic
    // v-constraint leave at most two candidate solutions per pair
    for k1 in 0..scan_depth {
        for k2 in (k1 + 1)..=scan_depth {
            let (a1, a2) = (am(k1), am(k2));
            let (b1, b2) = (bv(k1), bv(k2));
            let candidates: Vec<(f64, f64)> = if a2 == 0.0 && a1 == 0.0 {
                // α = 0 and both atoms in the strict past: m must vanish
                if m != 0.0 {
                    continue;
                }
                // split v arbitrarily; cheapest is everything in one atom,
                // already covered by the one-atom scan
                continue;
            } else if a2 == 0.0 {
                let s1 = m / a1;
                let rem = v - b1 * s1 * s1;
                if rem < 0.0 {
                    continue;
                }
                let s2 = (rem / b2).sqrt();
                vec![(s1, s2), (s1, -s2)]
            } else {
                // s2 = (m - a1 s1)/a2 substituted into the v-constraint
                let qa = b1 + b2 * a1 * a1 / (a2 * a2);
                let qb = -2.0 * b2 * a1 * m / (a2 * a2);
                let qc = b2 * m * m / (a2 * a2) - v;
                let disc = qb * qb - 4.0 * qa * qc;
                if disc < 0.0 {
                    continue;
                }
                let sq = disc.sqrt();
                [(-qb + sq) / (2.0 * qa), (-qb - sq) / (2.0 * qa)]
                    .into_iter()
                    .map(|s1| (s1, (m - a1 * s1) / a2))
                    .collect()
            };
            for (s1, s2) in candidates {
                let norm = weights.value(k1) * s1.abs() + weights.value(k2) * s2.abs();
                best = best.min(norm);
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{Domain, StreamRng};
    use approx::assert_relative_eq;

    fn params(a: f64, b: f64, e: f64) -> DampingParams {
        DampingParams::new(a, b, e).unwrap()
    }

    #[test]
    fn params_validation() {
        assert!(DampingParams::new(0.9, 0.999, 1e-8).is_ok());
        // boundary: alpha = sqrt(beta)
        assert!(DampingParams::new(0.9, 0.81, 0.1).is_err());
        // alpha < sqrt(beta) fails for (0, 0, .)
        assert!(DampingParams::new(0.0, 0.0, 1.0).is_err());
        assert!(DampingParams::new(0.5, 0.9, 0.0).is_err());
    }

    #[test]
    fn rho_zero_weight_hand_value() {
        // evaluate the weight formula at k = 0 by hand
        let w = rho_weights(params(0.9, 0.999, 0.1), 4).unwrap();
        assert_relative_eq!(w.value(0), 3.29906, max_relative = 1e-4);
        // α = 0 kills the α-term scaling and the coupling is 1
        let w = rho_weights(params(0.0, 0.5, 1.0), 4).unwrap();
        assert_relative_eq!(w.value(0), 2.0, epsilon = 1e-14);
    }

    #[test]
    fn rho_ell1_total_matches_series() {
        let p = params(0.9, 0.99, 0.1);
        let w = rho_weights(p, 9000).unwrap();
        let partial: f64 = w.values().iter().sum();
        assert_relative_eq!(partial, w.ell1_total(), max_relative = 1e-12);
    }

    #[test]
    fn weight_decay_ratio() {
        for (a, b) in [(0.9, 0.999), (0.0, 0.5), (0.5, 0.75)] {
            let p = params(a, b, 0.3);
            let w = rho_weights(p, 200).unwrap();
            for k in 1..200 {
                assert!(
                    w.value(k) <= b.sqrt() * w.value(k - 1) * (1.0 + 1e-13),
                    "decay violated at k={k} for ({a},{b})"
                );
            }
        }
    }

    #[test]
    fn lrho_norm_examples() {
        let p = params(0.0, 0.5, 1.0);
        let w = rho_weights(p, 64).unwrap();
        assert_eq!(lrho_norm(&WeightedSeq::zero(1), &w).unwrap(), 0.0);
        let single = WeightedSeq::scalar(&[1.0]);
        assert_relative_eq!(lrho_norm(&single, &w).unwrap(), 2.0, epsilon = 1e-14);
        // constant sequence sums the weights; compare against the closed form
        let p = params(0.9, 0.99, 0.1);
        let depth = 6000;
        let w = rho_weights(p, depth).unwrap();
        let ones = WeightedSeq::scalar(&vec![1.0; depth]);
        assert_relative_eq!(
            lrho_norm(&ones, &w).unwrap(),
            w.ell1_total(),
            max_relative = 1e-10
        );
    }

    #[test]
    fn lrho_norm_depth_mismatch() {
        let p = params(0.0, 0.5, 1.0);
        let w = rho_weights(p, 2).unwrap();
        let x = WeightedSeq::scalar(&[1.0, 2.0, 3.0]);
        assert!(lrho_norm(&x, &w).is_err());
    }

    #[test]
    fn g_map_zero_and_constant() {
        let p = params(0.5, 0.75, 0.1);
        assert_eq!(g_map(&WeightedSeq::zero(1), p), vec![0.0]);
        let depth = p.depth_for_tolerance(1e-12, 20000);
        let ones = WeightedSeq::scalar(&vec![1.0; depth]);
        // both series telescope to c and c² for a constant history
        assert_relative_eq!(g_map(&ones, p)[0], 1.0 / 1.1, max_relative = 1e-9);
    }

    #[test]
    fn g_bound_values() {
        assert_relative_eq!(g_bound(params(0.0, 0.5, 1.0), 1), 1.41421, max_relative = 1e-5);
        assert_relative_eq!(g_bound(params(0.9, 0.999, 0.1), 1), 7.2703, max_relative = 1e-3);
        let p = params(0.3, 0.8, 0.2);
        assert_relative_eq!(g_bound(p, 4), 2.0 * g_bound(p, 1), epsilon = 1e-14);
    }

    #[test]
    fn g_is_odd() {
        let p = params(0.6, 0.9, 0.05);
        let x = WeightedSeq::scalar(&[0.3, -1.2, 4.0, 0.0, -0.7]);
        let neg =
            WeightedSeq::new(1, x.entries().iter().map(|e| vec![-e[0]]).collect()).unwrap();
        let gx = g_map(&x, p);
        let gn = g_map(&neg, p);
        assert_eq!(gx[0], -gn[0]);
    }

    #[test]
    fn translate_shifts_and_contracts() {
        let p = params(0.5, 0.75, 0.1);
        let w = rho_weights(p, 64).unwrap();
        let x = WeightedSeq::scalar(&[2.0]);
        let tx = translate(&x);
        assert_eq!(tx.depth(), 2);
        assert_eq!(tx.entry(0).unwrap(), &[0.0]);
        assert_eq!(tx.entry(1).unwrap(), &[2.0]);
        assert_relative_eq!(
            lrho_norm(&tx, &w).unwrap(),
            w.value(1) * 2.0,
            epsilon = 1e-14
        );
        let z = translate(&WeightedSeq::zero(3));
        assert_eq!(z.depth(), 0);

        let mut rng = StreamRng::new(99, Domain::Moments, 0, 1);
        for _ in 0..200 {
            let depth = 1 + (rng.next_u64() % 20) as usize;
            let entries: Vec<f64> = (0..depth).map(|_| 4.0 * rng.next_f64() - 2.0).collect();
            let x = WeightedSeq::scalar(&entries);
            let n = lrho_norm(&x, &w).unwrap();
            let tn = lrho_norm(&translate(&x), &w).unwrap();
            assert!(tn <= p.beta().sqrt() * n * (1.0 + 1e-12) + 1e-300);
        }
    }

    #[test]
    fn zero_tail_does_not_change_anything() {
        let p = params(0.7, 0.9, 0.2);
        let w = rho_weights(p, 64).unwrap();
        let x = WeightedSeq::scalar(&[1.0, -0.5, 0.25]);
        let mut padded_entries = x.entries().to_vec();
        padded_entries.extend(std::iter::repeat_n(vec![0.0], 10));
        let padded = WeightedSeq::new(1, padded_entries).unwrap();
        assert_eq!(g_map(&x, p), g_map(&padded, p));
        assert_eq!(
            lrho_norm(&x, &w).unwrap(),
            lrho_norm(&padded, &w).unwrap()
        );
    }

    #[test]
    fn mv_upper_bound_cases() {
        let p = params(0.5, 0.75, 0.1);
        // zero pair via the empty representation
        assert_eq!(
            mv_seminorm_upper(&[0.0], &[0.0], p, 2, None).unwrap(),
            0.0
        );
        // the one-atom history x0 = 1 is itself a representation
        let (m, v) = (1.0 - p.alpha(), 1.0 - p.beta());
        let w = rho_weights(p, 4).unwrap();
        let ub = mv_seminorm_upper(&[m], &[v], p, 2, None).unwrap();
        assert!(ub <= w.value(0) * (1.0 + 1e-9));
        // infeasible: |m| beyond the Cauchy-Schwarz envelope
        let cs = (1.0 - p.alpha()) / (1.0 - p.beta()).sqrt() * p.coupling();
        let bad = mv_seminorm_upper(&[2.0 * cs], &[1.0], p, 2, None).unwrap();
        assert!(bad.is_infinite());
        // an explicit history is an admissible bound
        let h = WeightedSeq::scalar(&[1.0]);
        let with_history = mv_seminorm_upper(&[m], &[v], p, 2, Some(&h)).unwrap();
        assert!(with_history <= w.value(0) * (1.0 + 1e-12));
        // inconsistent history is rejected
        let wrong = WeightedSeq::scalar(&[2.0]);
        assert!(mv_seminorm_upper(&[m], &[v], p, 2, Some(&wrong)).is_err());
    }

    #[test]
    fn mv_two_atom_beats_history() {
        // a two-atom history; the search must not exceed its norm
        let p = params(0.5, 0.75, 0.1);
        let h = WeightedSeq::scalar(&[0.8, -0.3]);
        let m = h.momentum_series(p);
        let v = h.damping_series(p);
        let w = rho_weights(p, 4).unwrap();
        let hist_norm = lrho_norm(&h, &w).unwrap();
        let ub = mv_seminorm_upper(&m, &v, p, 2, None).unwrap();
        assert!(ub <= hist_norm * (1.0 + 1e-9), "ub={ub} hist={hist_norm}");
    }
}
