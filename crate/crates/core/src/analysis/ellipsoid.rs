//! Monte-Carlo check that `{x : x' P x <= 1}` is invariant under admissible
//! couplings and disturbances.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::model::{GainMatrix, SystemMatrices};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EllipsoidOptions {
    pub trials: usize,
    pub horizon: f64,
    pub dt: f64,
    /// Hold time of each piecewise-constant disturbance value.
    pub hold: f64,
    pub seed: u64,
    /// Pass threshold on `sup V - 1`.
    pub tolerance: f64,
}

impl Default for EllipsoidOptions {
    fn default() -> Self {
        EllipsoidOptions {
            trials: 200,
            horizon: 5.0,
            dt: 1e-3,
            hold: 0.25,
            seed: 0,
            tolerance: 1e-3,
        }
    }
}

/// How a trial's disturbance is generated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DisturbanceMode {
    /// Random directions on the bound, held for `hold` seconds.
    PiecewiseConstant,
    /// The admissible value maximising `dV/dt` at each evaluation.
    WorstCase,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub mode: DisturbanceMode,
    /// Coupling scales applied to `H` and `G`, each in `[0, 1]`.
    pub scale_a: f64,
    pub scale_e: f64,
    pub v0: f64,
    pub max_v: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EllipsoidReport {
    pub trials: Vec<TrialResult>,
    pub max_v: f64,
    pub tolerance: f64,
}

impl EllipsoidReport {
    pub fn passed(&self) -> bool {
        self.max_v <= 1.0 + self.tolerance
    }
}

struct Plant<'a> {
    a: DMatrix<f64>,
    e: DMatrix<f64>,
    /// `D (E + dE)' P`, the direction of steepest `V` increase in `d_n`.
    ascent: DMatrix<f64>,
    dscale: &'a DVector<f64>,
}

impl Plant<'_> {
    fn rhs(&self, x: &DVector<f64>, dn: &DVector<f64>) -> DVector<f64> {
        &self.a * x + &self.e * dn.component_mul(self.dscale)
    }

    fn worst(&self, x: &DVector<f64>) -> DVector<f64> {
        let g = &self.ascent * x;
        let nrm = g.norm();
        if nrm > 0.0 {
            g / nrm
        } else {
            let mut u = DVector::zeros(g.len());
            u[0] = 1.0;
            u
        }
    }
}

fn unit(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    loop {
        let v = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let nrm = v.norm();
        if nrm > 1e-12 {
            return v / nrm;
        }
    }
}

fn quad(p: &DMatrix<f64>, x: &DVector<f64>) -> f64 {
    x.dot(&(p * x))
}

/// Integrates `dx = (A + BK + s_a alpha H) x + (E + s_e beta G) d` from
/// random points on the `V = 1` shell with `d' S_D d = 1`, and reports the
/// largest `V` seen.
///
/// Trial `j` uses its own stream seeded from `seed + j`, so results do not
/// depend on scheduling.
pub fn ellipsoid_containment(
    p_lyap: &DMatrix<f64>,
    sys: &SystemMatrices,
    gain: &GainMatrix,
    alpha: f64,
    beta: f64,
    opts: &EllipsoidOptions,
) -> Result<EllipsoidReport> {
    let nx = sys.a_d.nrows();
    let nd = sys.e_d.ncols();
    if p_lyap.shape() != (nx, nx) {
        return Err(Error::Dimension(format!("P is {:?}, expected {nx}x{nx}", p_lyap.shape())));
    }
    if p_lyap.clone().cholesky().is_none() {
        return Err(invalid("p_lyap", "must be positive definite"));
    }
    if !(opts.dt > 0.0 && opts.horizon > 0.0 && opts.hold > 0.0) {
        return Err(invalid("ellipsoid options", "dt, horizon and hold must be positive"));
    }
    let dscale = DVector::from_fn(nd, |r, _| 1.0 / sys.s_bar_d[(r, r)].sqrt());
    let base = &sys.a_d + &sys.b_d * gain.to_matrix();
    let steps = (opts.horizon / opts.dt).round() as usize;
    let hold_steps = ((opts.hold / opts.dt).round() as usize).max(1);

    let trials: Vec<TrialResult> = (0..opts.trials)
        .into_par_iter()
        .map(|j| {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(j as u64));
            let mode = if j % 2 == 0 {
                DisturbanceMode::WorstCase
            } else {
                DisturbanceMode::PiecewiseConstant
            };
            // half the trials sit on the coupling bound
            let (sa, se) = if j % 4 < 2 { (1.0, 1.0) } else { (rng.gen::<f64>(), rng.gen::<f64>()) };
            let a = &base + &sys.h_mat * (sa * alpha);
            let e = &sys.e_d + &sys.g_mat * (se * beta);
            let ascent = DMatrix::from_diagonal(&dscale) * e.transpose() * p_lyap;
            let plant = Plant { a, e, ascent, dscale: &dscale };
            let z = unit(&mut rng, nx);
            let mut x = &z / quad(p_lyap, &z).sqrt();
            let v0 = quad(p_lyap, &x);
            let mut max_v = v0;
            let mut held = unit(&mut rng, nd);
            for k in 0..steps {
                if k % hold_steps == 0 {
                    held = unit(&mut rng, nd);
                }
                let h = opts.dt;
                let f = |x: &DVector<f64>| {
                    let dn = match mode {
                        DisturbanceMode::WorstCase => plant.worst(x),
                        DisturbanceMode::PiecewiseConstant => held.clone(),
                    };
                    plant.rhs(x, &dn)
                };
                let k1 = f(&x);
                let k2 = f(&(&x + &k1 * (h / 2.0)));
                let k3 = f(&(&x + &k2 * (h / 2.0)));
                let k4 = f(&(&x + &k3 * h));
                x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
                max_v = max_v.max(quad(p_lyap, &x));
            }
            TrialResult {
                mode,
                scale_a: sa,
                scale_e: se,
                v0,
                max_v,
            }
        })
        .collect();
    let max_v = trials.iter().map(|t| t.max_v).fold(f64::NEG_INFINITY, f64::max);
    Ok(EllipsoidReport {
        trials,
        max_v,
        tolerance: opts.tolerance,
    })
}

/// `V(x(t))` along the undisturbed closed loop, sampled every `dt`.
pub fn unforced_lyapunov_trace(p_lyap: &DMatrix<f64>, a_cl: &DMatrix<f64>, x0: &DVector<f64>, dt: f64, steps: usize) -> Vec<f64> {
    let mut x = x0.clone();
    let mut out = Vec::with_capacity(steps + 1);
    out.push(quad(p_lyap, &x));
    for _ in 0..steps {
        let k1 = a_cl * &x;
        let k2 = a_cl * (&x + &k1 * (dt / 2.0));
        let k3 = a_cl * (&x + &k2 * (dt / 2.0));
        let k4 = a_cl * (&x + &k3 * dt);
        x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
        out.push(quad(p_lyap, &x));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_vectors_are_normalised() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in [1, 4, 20] {
            assert!((unit(&mut rng, n).norm() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn rejects_indefinite_p() {
        let (ders, c) = crate::presets::five_der_system();
        let sys = crate::model::aggregate(&ders, &c).unwrap();
        let p = -DMatrix::<f64>::identity(20, 20);
        let r = ellipsoid_containment(&p, &sys, &GainMatrix::zero(5), 1.0, 1.0, &Default::default());
        assert!(r.is_err());
    }
}
