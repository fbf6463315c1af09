//! Innovations: the sampleable pair `(X, U)`.
//!
//! An innovation couples a distribution for the random input `U` with an
//! update map `X(u, θ) ∈ ℝ^d`. Built-ins cover the quadratic problem
//! `X(u, θ) = mean(u) - θ` (with its mini-batch variants), deterministic
//! fields, and user closures. Every sampler consumes a fixed number of `u64`
//! draws per sample so that draws stay addressable by index, which is what
//! makes replay and common random numbers work.

use crate::rng::StreamRng;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Distribution of one scalar component of `U`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "dist", rename_all = "snake_case")]
pub enum UDist {
    /// `P(U = hi) = p`, `P(U = lo) = 1 - p`.
    TwoPoint { p: f64, hi: f64, lo: f64 },
    Uniform { lo: f64, hi: f64 },
    Normal { mu: f64, sigma: f64 },
    Constant { value: f64 },
    /// Uniform draw from an explicit sample set (external sample files).
    Empirical { samples: Vec<f64> },
}

impl UDist {
    /// Symmetric two-point distribution on `{-1, +1}`.
    pub fn rademacher() -> Self {
        Self::TwoPoint {
            p: 0.5,
            hi: 1.0,
            lo: -1.0,
        }
    }

    /// Number of `u64` draws one sample consumes.
    pub fn stride(&self) -> u64 {
        match self {
            Self::Normal { .. } => 2,
            _ => 1,
        }
    }

    /// Draw one value, consuming exactly `self.stride()` `u64`s.
    pub fn sample(&self, rng: &mut StreamRng) -> f64 {
        match self {
            Self::TwoPoint { p, hi, lo } => {
                if rng.next_f64() < *p {
                    *hi
                } else {
                    *lo
                }
            }
            Self::Uniform { lo, hi } => lo + (hi - lo) * rng.next_f64(),
            Self::Normal { mu, sigma } => {
                let u1 = rng.next_f64();
                let u2 = rng.next_f64();
                let r = (-2.0 * (1.0 - u1).ln()).sqrt();
                mu + sigma * r * (std::f64::consts::TAU * u2).cos()
            }
            Self::Constant { value } => {
                let _ = rng.next_u64();
                *value
            }
            Self::Empirical { samples } => {
                let u = rng.next_f64();
                let idx = ((u * samples.len() as f64) as usize).min(samples.len() - 1);
                samples[idx]
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            Self::TwoPoint { p, hi, lo } => p * hi + (1.0 - p) * lo,
            Self::Uniform { lo, hi } => 0.5 * (lo + hi),
            Self::Normal { mu, .. } => *mu,
            Self::Constant { value } => *value,
            Self::Empirical { samples } => samples.iter().sum::<f64>() / samples.len() as f64,
        }
    }

    pub fn variance(&self) -> f64 {
        match self {
            Self::TwoPoint { p, hi, lo } => p * (1.0 - p) * (hi - lo) * (hi - lo),
            Self::Uniform { lo, hi } => (hi - lo) * (hi - lo) / 12.0,
            Self::Normal { sigma, .. } => sigma * sigma,
            Self::Constant { .. } => 0.0,
            Self::Empirical { samples } => {
                let m = self.mean();
                samples.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / samples.len() as f64
            }
        }
    }

    /// Third central moment `E[(U - E U)³]`.
    pub fn third_central(&self) -> f64 {
        match self {
            Self::TwoPoint { p, hi, lo } => {
                let m = self.mean();
                p * (hi - m).powi(3) + (1.0 - p) * (lo - m).powi(3)
            }
            Self::Uniform { .. } | Self::Normal { .. } | Self::Constant { .. } => 0.0,
            Self::Empirical { samples } => {
                let m = self.mean();
                samples.iter().map(|x| (x - m).powi(3)).sum::<f64>() / samples.len() as f64
            }
        }
    }

    /// `E[|U - c|^q]` where available in closed form.
    pub fn abs_moment_about(&self, q: f64, c: f64) -> Option<f64> {
        match self {
            Self::TwoPoint { p, hi, lo } => {
                Some(p * (hi - c).abs().powf(q) + (1.0 - p) * (lo - c).abs().powf(q))
            }
            Self::Constant { value } => Some((value - c).abs().powf(q)),
            Self::Uniform { lo, hi } => {
                // integrate |x-c|^q over [lo, hi] / (hi - lo)
                let w = hi - lo;
                let anti = |y: f64| y.abs().powf(q + 1.0) / (q + 1.0);
                let (a, b) = (lo - c, hi - c);
                let integral = if a >= 0.0 {
                    anti(b) - anti(a)
                } else if b <= 0.0 {
                    anti(a) - anti(b)
                } else {
                    anti(a) + anti(b)
                };
                Some(integral / w)
            }
            Self::Normal { .. } | Self::Empirical { .. } => None,
        }
    }

    /// Whether the distribution is symmetric about its mean.
    pub fn is_symmetric(&self) -> bool {
        match self {
            Self::TwoPoint { p, .. } => (*p - 0.5).abs() < 1e-15,
            Self::Uniform { .. } | Self::Normal { .. } | Self::Constant { .. } => true,
            Self::Empirical { .. } => false,
        }
    }

    /// Bound on `|U|` if the support is bounded.
    pub fn max_abs(&self) -> Option<f64> {
        match self {
            Self::TwoPoint { hi, lo, .. } => Some(hi.abs().max(lo.abs())),
            Self::Uniform { lo, hi } => Some(hi.abs().max(lo.abs())),
            Self::Constant { value } => Some(value.abs()),
            Self::Empirical { samples } => {
                samples.iter().map(|x| x.abs()).fold(None, |acc, v| {
                    Some(acc.map_or(v, |a: f64| a.max(v)))
                })
            }
            Self::Normal { .. } => None,
        }
    }
}

/// Sampler type for user-supplied innovations: fills `out` with `X(u, θ)`
/// from draws on `rng`.
pub type CustomSampler = Arc<dyn Fn(&mut StreamRng, &[f64], &mut [f64]) + Send + Sync>;

/// A sampleable innovation `(X, U)`.
#[derive(Clone)]
pub enum Innovation {
    /// `X(u, θ) = (1/M) Σ_r u_r - θ` with i.i.d. components drawn from
    /// `dist`; the mini-batch quadratic innovation of size `batch`.
    Quadratic {
        dist: UDist,
        dim: usize,
        batch: usize,
    },
    /// `X ≡ value`, independent of `u` and `θ`.
    Deterministic { value: Vec<f64> },
    /// Mini-batch average of `batch` independent draws of an arbitrary base.
    Minibatch { base: Box<Innovation>, batch: usize },
    /// User-supplied sampler with a declared dimension and rng stride.
    Custom {
        dim: usize,
        stride: u64,
        sampler: CustomSampler,
    },
}

impl std::fmt::Debug for Innovation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Quadratic { dist, dim, batch } => f
                .debug_struct("Quadratic")
                .field("dist", dist)
                .field("dim", dim)
                .field("batch", batch)
                .finish(),
            Self::Deterministic { value } => {
                f.debug_struct("Deterministic").field("value", value).finish()
            }
            Self::Minibatch { base, batch } => f
                .debug_struct("Minibatch")
                .field("base", base)
                .field("batch", batch)
                .finish(),
            Self::Custom { dim, stride, .. } => f
                .debug_struct("Custom")
                .field("dim", dim)
                .field("stride", stride)
                .finish(),
        }
    }
}

impl Innovation {
    pub fn quadratic(dist: UDist, dim: usize, batch: usize) -> Self {
        Self::Quadratic {
            dist,
            dim,
            batch: batch.max(1),
        }
    }

    pub fn deterministic(value: Vec<f64>) -> Self {
        Self::Deterministic { value }
    }

    /// The innovation that samples `M` independent copies of `U` and averages
    /// `X` over them. `M = 1` is distributionally identical to the base.
    pub fn minibatch(self, m: usize) -> Self {
        let m = m.max(1);
        match self {
            Self::Quadratic { dist, dim, batch } => Self::Quadratic {
                dist,
                dim,
                batch: batch * m,
            },
            other if m == 1 => other,
            other => Self::Minibatch {
                base: Box::new(other),
                batch: m,
            },
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Quadratic { dim, .. } => *dim,
            Self::Deterministic { value } => value.len(),
            Self::Minibatch { base, .. } => base.dim(),
            Self::Custom { dim, .. } => *dim,
        }
    }

    /// `u64` draws consumed by one `X` sample.
    pub fn stride(&self) -> u64 {
        match self {
            Self::Quadratic { dist, dim, batch } => {
                dist.stride() * (*dim as u64) * (*batch as u64)
            }
            Self::Deterministic { .. } => 0,
            Self::Minibatch { base, batch } => base.stride() * (*batch as u64),
            Self::Custom { stride, .. } => *stride,
        }
    }

    /// Mini-batch size (1 for unbatched innovations).
    pub fn batch_size(&self) -> usize {
        match self {
            Self::Quadratic { batch, .. } => *batch,
            Self::Minibatch { batch, .. } => *batch,
            _ => 1,
        }
    }

    /// The single-draw innovation underlying a mini-batch.
    pub fn base(&self) -> Innovation {
        match self {
            Self::Quadratic { dist, dim, .. } => Self::Quadratic {
                dist: dist.clone(),
                dim: *dim,
                batch: 1,
            },
            Self::Minibatch { base, .. } => (**base).clone(),
            other => other.clone(),
        }
    }

    /// Draw `U` and evaluate `X(u, θ)` into `out`.
    pub fn sample_x(&self, rng: &mut StreamRng, theta: &[f64], out: &mut [f64]) {
        debug_assert_eq!(theta.len(), self.dim());
        debug_assert_eq!(out.len(), self.dim());
        match self {
            Self::Quadratic { dist, batch, .. } => {
                out.fill(0.0);
                for _ in 0..*batch {
                    for o in out.iter_mut() {
                        *o += dist.sample(rng);
                    }
                }
                let inv = 1.0 / *batch as f64;
                for (o, th) in out.iter_mut().zip(theta) {
                    *o = *o * inv - th;
                }
            }
            Self::Deterministic { value } => out.copy_from_slice(value),
            Self::Minibatch { base, batch } => {
                let mut tmp = vec![0.0; out.len()];
                out.fill(0.0);
                for _ in 0..*batch {
                    base.sample_x(rng, theta, &mut tmp);
                    for (o, t) in out.iter_mut().zip(&tmp) {
                        *o += t;
                    }
                }
                let inv = 1.0 / *batch as f64;
                for o in out.iter_mut() {
                    *o *= inv;
                }
            }
            Self::Custom { sampler, .. } => sampler(rng, theta, out),
        }
    }

    /// Slope `s` when `X(u, θ) = X(u, 0) + s θ` componentwise; enables
    /// sufficient-statistic field oracles and the analytic derivative.
    pub fn affine_slope(&self) -> Option<f64> {
        match self {
            Self::Quadratic { .. } => Some(-1.0),
            Self::Deterministic { .. } => Some(0.0),
            Self::Minibatch { base, .. } => base.affine_slope(),
            Self::Custom { .. } => None,
        }
    }

    /// Exact `E[X(U, θ)]` where available.
    pub fn mean_x(&self, theta: &[f64]) -> Option<Vec<f64>> {
        match self {
            Self::Quadratic { dist, .. } => {
                let m = dist.mean();
                Some(theta.iter().map(|th| m - th).collect())
            }
            Self::Deterministic { value } => Some(value.clone()),
            Self::Minibatch { base, .. } => base.mean_x(theta),
            Self::Custom { .. } => None,
        }
    }

    /// Exact componentwise `E[(X^(i))³]` where available.
    pub fn m3_x(&self, theta: &[f64]) -> Option<Vec<f64>> {
        match self {
            Self::Quadratic { dist, batch, .. } => {
                let mb = *batch as f64;
                let mu3 = dist.third_central() / (mb * mb);
                let var = dist.variance() / mb;
                let mean = dist.mean();
                Some(
                    theta
                        .iter()
                        .map(|th| {
                            let d = mean - th;
                            mu3 + 3.0 * var * d + d * d * d
                        })
                        .collect(),
                )
            }
            Self::Deterministic { value } => Some(value.iter().map(|v| v * v * v).collect()),
            Self::Minibatch { .. } | Self::Custom { .. } => None,
        }
    }

    /// Exact `E[|X^(i)|^q]` for unbatched built-ins (componentwise constant).
    pub fn abs_moment_x(&self, q: f64, theta: &[f64]) -> Option<f64> {
        match self {
            Self::Quadratic { dist, batch, .. } if *batch == 1 && theta.len() == 1 => {
                dist.abs_moment_about(q, theta[0])
            }
            Self::Deterministic { value } if value.len() == 1 => {
                Some(value[0].abs().powf(q))
            }
            _ => None,
        }
    }

    /// Whether the innovation has no randomness at all.
    pub fn is_deterministic(&self) -> bool {
        match self {
            Self::Deterministic { .. } => true,
            Self::Quadratic { dist, .. } => matches!(dist, UDist::Constant { .. }),
            Self::Minibatch { base, .. } => base.is_deterministic(),
            Self::Custom { .. } => false,
        }
    }

    /// Whether `X(·, θ)` is symmetric about zero at this `θ` (quadratic case:
    /// symmetric `U` evaluated at its mean).
    pub fn symmetric_at(&self, theta: &[f64]) -> bool {
        match self {
            Self::Quadratic { dist, .. } => {
                dist.is_symmetric() && theta.iter().all(|&t| (t - dist.mean()).abs() < 1e-14)
            }
            Self::Minibatch { base, .. } => base.symmetric_at(theta),
            _ => false,
        }
    }

    /// Bound on `|X|` over a θ-box `[-r, r]^d`, if computable.
    pub fn x_bound(&self, theta_radius: f64) -> Option<f64> {
        match self {
            Self::Quadratic { dist, dim, .. } => dist
                .max_abs()
                .map(|u| ((u + theta_radius) * (u + theta_radius) * *dim as f64).sqrt()),
            Self::Deterministic { value } => Some(crate::util::norm2(value)),
            Self::Minibatch { base, .. } => base.x_bound(theta_radius),
            Self::Custom { .. } => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Domain;
    use crate::util::mean_stderr;
    use approx::assert_relative_eq;

    #[test]
    fn strides_are_respected() {
        // sampling k items sequentially must equal seeking to index k
        let innov = Innovation::quadratic(UDist::Normal { mu: 0.0, sigma: 1.0 }, 2, 3);
        let stride = innov.stride();
        assert_eq!(stride, 2 * 2 * 3);
        let theta = [0.1, -0.2];
        let mut seq = StreamRng::new(5, Domain::Field, 0, stride);
        let mut out = [0.0; 2];
        for _ in 0..4 {
            innov.sample_x(&mut seq, &theta, &mut out);
        }
        let fifth_seq = {
            innov.sample_x(&mut seq, &theta, &mut out);
            out
        };
        let mut seek = StreamRng::new(5, Domain::Field, 0, stride);
        seek.seek(4);
        let mut out2 = [0.0; 2];
        innov.sample_x(&mut seek, &theta, &mut out2);
        assert_eq!(fifth_seq, out2);
    }

    #[test]
    fn quadratic_mean_is_batch_free() {
        let dist = UDist::TwoPoint {
            p: 0.8,
            hi: 1.0,
            lo: -4.0,
        };
        assert_relative_eq!(dist.mean(), 0.0, epsilon = 1e-15);
        for m in [1, 4, 16] {
            let innov = Innovation::quadratic(dist.clone(), 1, m);
            let mean = innov.mean_x(&[0.3]).unwrap();
            assert_relative_eq!(mean[0], -0.3, epsilon = 1e-15);
        }
    }

    #[test]
    fn minibatch_variance_scales_inversely() {
        // Var(X_M) = Var(U)/M, checked by Monte Carlo at three batch sizes
        let dist = UDist::TwoPoint {
            p: 0.8,
            hi: 1.0,
            lo: -4.0,
        };
        let var_u = dist.variance();
        let n = 100_000u64;
        for (stream, m) in [(0u64, 1usize), (1, 4), (2, 16)] {
            let innov = Innovation::quadratic(dist.clone(), 1, m);
            let mut rng = StreamRng::new(404, Domain::Moments, stream, innov.stride());
            let mut out = [0.0];
            let samples: Vec<f64> = (0..n)
                .map(|_| {
                    innov.sample_x(&mut rng, &[0.0], &mut out);
                    out[0]
                })
                .collect();
            let sq: Vec<f64> = samples.iter().map(|x| x * x).collect();
            let (var_hat, se) = mean_stderr(&sq);
            let expected = var_u / m as f64;
            assert!(
                (var_hat - expected).abs() <= 3.0 * se,
                "M={m}: var {var_hat} vs {expected} (se {se})"
            );
        }
    }

    #[test]
    fn minibatch_m1_is_identity_for_quadratic() {
        let innov = Innovation::quadratic(UDist::rademacher(), 1, 1);
        let same = innov.clone().minibatch(1);
        let mut a = StreamRng::new(9, Domain::Field, 0, innov.stride());
        let mut b = StreamRng::new(9, Domain::Field, 0, same.stride());
        let (mut xa, mut xb) = ([0.0], [0.0]);
        for _ in 0..100 {
            innov.sample_x(&mut a, &[0.25], &mut xa);
            same.sample_x(&mut b, &[0.25], &mut xb);
            assert_eq!(xa, xb);
        }
    }

    #[test]
    fn third_moment_arithmetic() {
        let dist = UDist::TwoPoint {
            p: 0.8,
            hi: 1.0,
            lo: -4.0,
        };
        // E[U³] with mean zero: 0.8·1 + 0.2·(-64) = -12
        let innov = Innovation::quadratic(dist, 1, 1);
        assert_relative_eq!(innov.m3_x(&[0.0]).unwrap()[0], -12.0, epsilon = 1e-12);
    }

    #[test]
    fn uniform_abs_moment_closed_form() {
        let d = UDist::Uniform { lo: -1.0, hi: 1.0 };
        // E|U|^2 = 1/3, straddling c = 0
        assert_relative_eq!(d.abs_moment_about(2.0, 0.0).unwrap(), 1.0 / 3.0, epsilon = 1e-14);
        // support entirely right of c
        assert_relative_eq!(
            d.abs_moment_about(2.0, -2.0).unwrap(),
            ((3.0f64).powi(3) - 1.0) / 3.0 / 2.0,
            epsilon = 1e-12
        );
    }
}
