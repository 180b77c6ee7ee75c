//! Post-synthesis verification: connective stability over all interconnection
//! corners, invariant-ellipsoid containment, dissipativity along logged
//! trajectories, and the robustness/resilience loss metrics.

pub mod connective;
pub mod dissipativity;
pub mod ellipsoid;
pub mod metrics;

use nalgebra::{Complex, DMatrix, Schur};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::model::{GainMatrix, SystemMatrices};

pub use connective::{connective_stability_check, predicted_zero_modes, ConnectiveOptions, ConnectiveReport, CornerResult};
pub use dissipativity::{dissipativity_check, DissipativityReport, SupplyRate};
pub use ellipsoid::{ellipsoid_containment, EllipsoidOptions, EllipsoidReport};
pub use metrics::{loss_metrics, sharing_groups, sharing_residuals, window_metrics, MetricsReport, SignalLoss, Window, WindowMetrics};

/// `A_D + B_D K_D + dA_D` and `E_D + dE_D` for the live couplings in `sys`.
pub fn closed_loop(sys: &SystemMatrices, gain: &GainMatrix) -> (DMatrix<f64>, DMatrix<f64>) {
    let a = &sys.a_d + &sys.b_d * gain.to_matrix() + &sys.delta_a;
    let e = &sys.e_d + &sys.delta_e;
    (a, e)
}

const SCHUR_MAX_ITER: usize = 10_000;

/// Eigenvalues of a general real matrix.
///
/// The QR sweep deflates relative to the diagonal, so clusters near zero can
/// stall it. On failure the spectrum is moved away from the origin by a
/// diagonal shift, then additionally rotated by seeded random orthogonal
/// similarities.
pub fn eigenvalues(m: &DMatrix<f64>) -> Result<Vec<Complex<f64>>> {
    let n = m.nrows();
    let unshift = |s: Schur<f64, nalgebra::Dyn>, c: f64| s.complex_eigenvalues().iter().map(|z| z - c).collect();
    if let Some(s) = Schur::try_new(m.clone(), f64::EPSILON, SCHUR_MAX_ITER) {
        return Ok(unshift(s, 0.0));
    }
    let c = m.abs().row_sum().max() + 1.0;
    let shifted = m + DMatrix::identity(n, n) * c;
    if let Some(s) = Schur::try_new(shifted.clone(), f64::EPSILON, SCHUR_MAX_ITER) {
        return Ok(unshift(s, c));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    for _ in 0..8 {
        let g = DMatrix::from_fn(n, n, |_, _| StandardNormal.sample(&mut rng));
        let q = g.qr().q();
        if let Some(s) = Schur::try_new(q.transpose() * &shifted * &q, f64::EPSILON, SCHUR_MAX_ITER) {
            return Ok(unshift(s, c));
        }
    }
    Err(Error::Solver(format!("eigenvalue iteration did not converge for a {n}x{n} matrix")))
}
