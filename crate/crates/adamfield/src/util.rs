//! Small numeric helpers: summary statistics and deterministic replica
//! parallelism.

/// Sample mean and standard error of the mean.
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Empirical L^p norm `E[|x|^p]^(1/p)` with a delta-method standard error.
pub fn lp_norm(xs: &[f64], p: f64) -> (f64, f64) {
    let powered: Vec<f64> = xs.iter().map(|x| x.abs().powf(p)).collect();
    let (mp, se_mp) = mean_stderr(&powered);
    if mp <= 0.0 {
        return (0.0, 0.0);
    }
    let norm = mp.powf(1.0 / p);
    // d/dm m^(1/p) = (1/p) m^(1/p - 1)
    let se = (1.0 / p) * mp.powf(1.0 / p - 1.0) * se_mp;
    (norm, se)
}

/// Euclidean norm of a slice.
#[inline]
pub fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Worker count: `ADAMFIELD_THREADS` if set, else available parallelism.
pub fn worker_count() -> usize {
    if let Ok(s) = std::env::var("ADAMFIELD_THREADS") {
        if let Ok(n) = s.trim().parse::<usize>() {
            return n.max(1);
        }
    }
    std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
}

/// Evaluate `f(0..n)` across worker threads and return results in index
/// order. Each index is computed independently, so the output does not depend
/// on the worker count and aggregates reduced over it stay deterministic.
pub fn par_map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    let workers = worker_count().min(n.max(1));
    if workers <= 1 || n <= 1 {
        return (0..n).map(f).collect();
    }
    let mut slots: Vec<Option<T>> = Vec::with_capacity(n);
    slots.resize_with(n, || None);
    let chunk = n.div_ceil(workers);
    std::thread::scope(|scope| {
        for (w, slice) in slots.chunks_mut(chunk).enumerate() {
            let f = &f;
            scope.spawn(move || {
                let base = w * chunk;
                for (i, slot) in slice.iter_mut().enumerate() {
                    *slot = Some(f(base + i));
                }
            });
        }
    });
    slots.into_iter().map(|s| s.unwrap()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lp_norm_matches_direct_computation() {
        let xs = [1.0, -2.0, 3.0, -4.0];
        let (n2, _) = lp_norm(&xs, 2.0);
        let direct = (xs.iter().map(|x| x * x).sum::<f64>() / 4.0).sqrt();
        assert!((n2 - direct).abs() < 1e-14);
    }

    #[test]
    fn par_map_preserves_order() {
        let out = par_map_indexed(1000, |i| i * i);
        for (i, v) in out.iter().enumerate() {
            assert_eq!(*v, i * i);
        }
    }
}
