//! Angular momenta, the diamond product, and convergence-rate fits.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::state::PacketState;

/// Antisymmetric `d×d` matrix in units of action.
#[derive(Debug, Clone, PartialEq)]
pub struct AngularMomentumMatrix(pub DMatrix<f64>);

impl AngularMomentumMatrix {
    /// Upper-triangle entries `(i, j, value)` with `i < j`.
    pub fn upper_entries(&self) -> Vec<(usize, usize, f64)> {
        let d = self.0.nrows();
        (0..d).flat_map(|i| ((i + 1)..d).map(move |j| (i, j))).map(|(i, j)| (i, j, self.0[(i, j)])).collect()
    }

    pub fn max_asymmetry(&self) -> f64 {
        (&self.0 + self.0.transpose()).amax()
    }
}

/// `(q ⋄ p)_ij = q_j p_i - q_i p_j`.
pub fn diamond(q: &DVector<f64>, p: &DVector<f64>) -> DMatrix<f64> {
    assert_eq!(q.len(), p.len(), "diamond of vectors with different lengths");
    let d = q.len();
    DMatrix::from_fn(d, d, |i, j| q[j] * p[i] - q[i] * p[j])
}

/// `J_hbar = q ⋄ p - (hbar/2) [B⁻¹, A]`.
pub fn semiclassical_angular_momentum(state: &PacketState, hbar: f64) -> AngularMomentumMatrix {
    let c = state.b_inv();
    let a = state.a();
    let comm = c * a - a * c;
    AngularMomentumMatrix(diamond(state.q(), state.p()) - comm * (0.5 * hbar))
}

/// Classical angular momentum: `q₁p₂ - q₂p₁` in 2D, `q × p` in 3D.
pub fn classical_angular_momentum(q: &[f64], p: &[f64]) -> Result<Vec<f64>> {
    match (q.len(), p.len()) {
        (2, 2) => Ok(vec![q[0] * p[1] - q[1] * p[0]]),
        (3, 3) => Ok(vec![q[1] * p[2] - q[2] * p[1], q[2] * p[0] - q[0] * p[2], q[0] * p[1] - q[1] * p[0]]),
        (d, _) => Err(Error::InvalidParameter(format!("angular momentum needs d = 2 or 3 with matching p, got d = {d}"))),
    }
}

/// `error ≈ exp(intercept) · hbar^exponent`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerLawFit {
    pub intercept: f64,
    pub exponent: f64,
}

/// Ordinary least squares of `ln error` on `ln hbar`.
pub fn loglog_fit(pairs: &[(f64, f64)]) -> Result<PowerLawFit> {
    if pairs.len() < 2 {
        return Err(Error::InvalidParameter("log-log fit needs at least two points".into()));
    }
    if let Some((h, e)) = pairs.iter().find(|(h, e)| !(*h > 0.0 && *e > 0.0)) {
        return Err(Error::InvalidParameter(format!("log-log fit needs positive values, got ({h}, {e})")));
    }
    let n = pairs.len() as f64;
    let xs: Vec<f64> = pairs.iter().map(|(h, _)| h.ln()).collect();
    let ys: Vec<f64> = pairs.iter().map(|(_, e)| e.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidParameter("log-log fit needs at least two distinct hbar values".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let exponent = sxy / sxx;
    Ok(PowerLawFit { intercept: my - exponent * mx, exponent })
}

/// Per-`hbar` errors against the Egorov reference plus fitted rates.
#[derive(Debug, Clone)]
pub struct ConvergenceReport {
    pub t_star: f64,
    pub hbars: Vec<f64>,
    pub classical_error: Vec<f64>,
    pub semiclassical_error: Vec<f64>,
    /// Norm of the standard-error vector of the Egorov mean phase point.
    pub egorov_se: Vec<f64>,
    pub samples: Vec<usize>,
    pub classical_fit: PowerLawFit,
    pub semiclassical_fit: PowerLawFit,
}

impl ConvergenceReport {
    pub fn new(
        t_star: f64,
        hbars: Vec<f64>,
        classical_error: Vec<f64>,
        semiclassical_error: Vec<f64>,
        egorov_se: Vec<f64>,
        samples: Vec<usize>,
    ) -> Result<Self> {
        let pairs = |e: &[f64]| hbars.iter().copied().zip(e.iter().copied()).collect::<Vec<_>>();
        let classical_fit = loglog_fit(&pairs(&classical_error))?;
        let semiclassical_fit = loglog_fit(&pairs(&semiclassical_error))?;
        Ok(Self { t_star, hbars, classical_error, semiclassical_error, egorov_se, samples, classical_fit, semiclassical_fit })
    }
}
