//! Fixed-substep classical Runge-Kutta integration of `dΨ = f(Ψ) dt`.
//!
//! The field oracle is either an analytic closure or a frozen-CRN Monte Carlo
//! estimate; frozen randomness makes the oracle a deterministic function, so
//! the integrator output is a deterministic function of `(ψ0, grid, substeps)`.

use crate::error::{AdamFieldError, Result};
use crate::field::oracle::FieldOracle;

#[derive(Debug, Clone)]
pub struct OdePath {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub substeps: usize,
}

impl OdePath {
    pub fn state(&self, idx: usize) -> &[f64] {
        &self.states[idx]
    }
}

/// Integrate over the grid, recording the state at every grid time
/// (including the initial one). `substeps` RK4 steps are taken per grid
/// interval.
pub fn integrate_ode(
    oracle: &dyn FieldOracle,
    psi0: &[f64],
    grid: &[f64],
    substeps: usize,
) -> Result<OdePath> {
    if grid.is_empty() || substeps == 0 {
        return Err(AdamFieldError::Precondition(
            "grid must be nonempty and substeps positive".into(),
        ));
    }
    let d = psi0.len();
    let f = |x: &[f64]| oracle.eval(x).0;
    let mut states = Vec::with_capacity(grid.len());
    let mut y = psi0.to_vec();
    states.push(y.clone());
    for w in grid.windows(2) {
        let h = (w[1] - w[0]) / substeps as f64;
        if h < 0.0 {
            return Err(AdamFieldError::Precondition(
                "grid times must be nondecreasing".into(),
            ));
        }
        for _ in 0..substeps {
            let k1 = f(&y);
            let y2: Vec<f64> = (0..d).map(|i| y[i] + 0.5 * h * k1[i]).collect();
            let k2 = f(&y2);
            let y3: Vec<f64> = (0..d).map(|i| y[i] + 0.5 * h * k2[i]).collect();
            let k3 = f(&y3);
            let y4: Vec<f64> = (0..d).map(|i| y[i] + h * k3[i]).collect();
            let k4 = f(&y4);
            for i in 0..d {
                y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(AdamFieldError::Numeric(
                "non-finite ODE state encountered".into(),
            ));
        }
        states.push(y.clone());
    }
    Ok(OdePath {
        times: grid.to_vec(),
        states,
        substeps,
    })
}
