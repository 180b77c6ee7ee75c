//! Equilibrium-independent dissipativity along logged trajectories.
//!
//! With `V = x~' P x~`, `x~ = x - x*`, `d~ = d - d*` and the certificate's
//! multipliers, Young's inequality applied to the coupling terms gives
//!
//! ```text
//! dV/dt <= -x~' (S - dS) x~ + d~' (Q + dQ) d~ + 2 d~' R x~
//! S  = tau_v P + tau_h alpha^2 H'H      dS = tau_h dA'dA
//! Q  = tau_d S_D - tau_g beta^2 G'G     dQ = tau_g dE'dE
//! R  = 0
//! ```
//!
//! for any live `dA`, `dE`, as long as `(x*, d*)` is an equilibrium of the
//! active configuration.

use nalgebra::{DMatrix, DVector};

use super::closed_loop;
use crate::error::{Error, Result};
use crate::model::{aggregate, SystemMatrices, NX};
use crate::sim::{record_index, Scenario, TrajectoryLog};
use crate::synthesis::Certificate;

#[derive(Debug, Clone, PartialEq)]
pub struct SupplyRate {
    pub s_mat: DMatrix<f64>,
    pub ds_mat: DMatrix<f64>,
    pub q_mat: DMatrix<f64>,
    pub dq_mat: DMatrix<f64>,
    /// `2N x 4N` cross term.
    pub r_mat: DMatrix<f64>,
}

impl SupplyRate {
    /// `design` supplies `H`, `G` and `S_D`; `live` supplies `dA`, `dE`.
    pub fn new(cert: &Certificate, design: &SystemMatrices, live: &SystemMatrices) -> Self {
        let h = cert.hyper;
        let (a2, b2) = (cert.alpha * cert.alpha, cert.beta * cert.beta);
        let s_mat = &cert.p_lyap * h.tau_v + design.h_mat.tr_mul(&design.h_mat) * (h.tau_h * a2);
        let ds_mat = live.delta_a.tr_mul(&live.delta_a) * h.tau_h;
        let q_mat = &design.s_bar_d * h.tau_d - design.g_mat.tr_mul(&design.g_mat) * (h.tau_g * b2);
        let dq_mat = live.delta_e.tr_mul(&live.delta_e) * h.tau_g;
        let r_mat = DMatrix::zeros(q_mat.nrows(), s_mat.nrows());
        SupplyRate {
            s_mat: symmetrize(s_mat),
            ds_mat,
            q_mat: symmetrize(q_mat),
            dq_mat,
            r_mat,
        }
    }

    pub fn rhs(&self, xt: &DVector<f64>, dt: &DVector<f64>) -> f64 {
        -xt.dot(&((&self.s_mat - &self.ds_mat) * xt)) + dt.dot(&((&self.q_mat + &self.dq_mat) * dt)) + 2.0 * dt.dot(&(&self.r_mat * xt))
    }
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentCheck {
    pub t_start: f64,
    pub t_end: f64,
    pub samples: usize,
    pub max_violation: f64,
    /// `x*` and `d*` used for this segment.
    pub x_star: DVector<f64>,
    pub d_star: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DissipativityReport {
    pub segments: Vec<SegmentCheck>,
    /// Largest `(dV/dt - rhs) / max(1, |rhs|)` over all checked samples.
    pub max_violation: f64,
    pub worst_t: f64,
    /// Segments with DAPI disabled, where the certified vector field does not apply.
    pub skipped_segments: usize,
}

/// Pass threshold on the relative violation.
pub const VIOLATION_TOL: f64 = 1e-6;
/// Allowed disagreement between the `h` and `2h` derivative stencils,
/// relative to the largest `|dV/dt|` on the segment.
pub const STENCIL_TOL: f64 = 1e-4;

impl DissipativityReport {
    pub fn passed(&self) -> bool {
        self.max_violation <= VIOLATION_TOL
    }
}

/// Equilibrium of `A_cl x + E_cl d* = 0`.
pub fn equilibrium(a_cl: &DMatrix<f64>, e_cl: &DMatrix<f64>, d_star: &DVector<f64>) -> Result<DVector<f64>> {
    let rhs = -(e_cl * d_star);
    a_cl.clone()
        .lu()
        .solve(&rhs)
        .filter(|x| x.iter().all(|v| v.is_finite()))
        .ok_or_else(|| Error::Solver("closed-loop matrix is singular; the equilibrium is not unique".into()))
}

fn stencil(v: &[f64], k: usize, h: f64, step: usize) -> f64 {
    let s = step;
    (v[k - 2 * s] - 8.0 * v[k - s] + 8.0 * v[k + s] - v[k + 2 * s]) / (12.0 * h * s as f64)
}

/// Checks the dissipation inequality at every interior sample of every
/// configuration segment of `log`, which must come from running `sc` with the
/// certificate's gain.
pub fn dissipativity_check(log: &TrajectoryLog, sc: &Scenario, cert: &Certificate) -> Result<DissipativityReport> {
    if sc.gain != cert.k_gain {
        return Err(Error::Scenario("the scenario does not use the certified gain".into()));
    }
    let configs = sc.configurations()?;
    let design = aggregate(&sc.ders, &sc.coupling)?;
    let nx = NX * sc.ders.len();
    let mut segments = Vec::new();
    let mut skipped = 0;
    let (mut max_violation, mut worst_t) = (f64::NEG_INFINITY, f64::NAN);

    for (c, cfg) in configs.iter().enumerate() {
        let i0 = record_index(log, cfg.t_start, sc.dt);
        let i1 = match configs.get(c + 1) {
            Some(next) => record_index(log, next.t_start, sc.dt),
            None => log.len(),
        }
        .min(log.len());
        if !cfg.dapi_enabled {
            skipped += 1;
            continue;
        }
        // stencils of width 4h must stay inside [i0, i1)
        if i1 < i0 + 9 {
            continue;
        }
        let live = cfg.system(&sc.ders)?;
        let (a_cl, e_cl) = closed_loop(&live, &sc.gain);
        let d_star = log.disturbance(i1 - 1);
        let x_star = equilibrium(&a_cl, &e_cl, &d_star)?;
        let supply = SupplyRate::new(cert, &design, &live);

        let v: Vec<f64> = (i0..i1)
            .map(|k| {
                let xt = log.state(k) - &x_star;
                xt.dot(&(&cert.p_lyap * &xt))
            })
            .collect();
        let mut seg_max = f64::NEG_INFINITY;
        let mut vdot_scale: f64 = 0.0;
        let mut stencil_gap: f64 = 0.0;
        for k in 2..v.len() - 2 {
            let vd = stencil(&v, k, sc.dt, 1);
            vdot_scale = vdot_scale.max(vd.abs());
            if k >= 4 && k + 4 < v.len() {
                stencil_gap = stencil_gap.max((vd - stencil(&v, k, sc.dt, 2)).abs());
            }
            let idx = i0 + k;
            let xt = log.state(idx) - &x_star;
            let dt_ = log.disturbance(idx) - &d_star;
            let rhs = supply.rhs(&xt, &dt_);
            let viol = (vd - rhs) / rhs.abs().max(1.0);
            if viol > seg_max {
                seg_max = viol;
            }
            if viol > max_violation {
                max_violation = viol;
                worst_t = log.times[idx];
            }
        }
        debug_assert_eq!(x_star.len(), nx);
        if stencil_gap > STENCIL_TOL * vdot_scale.max(1e-300) {
            return Err(Error::Scenario(format!(
                "sampling too coarse for a derivative estimate on the segment starting at t = {}: \
                 h and 2h stencils differ by {stencil_gap:.3e} (scale {vdot_scale:.3e})",
                cfg.t_start
            )));
        }
        segments.push(SegmentCheck {
            t_start: cfg.t_start,
            t_end: log.times[i1 - 1],
            samples: v.len() - 4,
            max_violation: seg_max,
            x_star,
            d_star,
        });
    }
    Ok(DissipativityReport {
        segments,
        max_violation,
        worst_t,
        skipped_segments: skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stencil_is_exact_on_quartics() {
        let h = 0.1;
        let v: Vec<f64> = (0..9).map(|k| (k as f64 * h).powi(4) - 2.0 * (k as f64 * h)).collect();
        let t = 4.0 * h;
        let exact = 4.0 * t * t * t - 2.0;
        assert!((stencil(&v, 4, h, 1) - exact).abs() < 1e-10);
        assert!((stencil(&v, 4, h, 2) - exact).abs() < 1e-10);
    }

    #[test]
    fn equilibrium_solves_the_linear_system() {
        let a = DMatrix::from_row_slice(2, 2, &[-1.0, 0.5, 0.0, -2.0]);
        let e = DMatrix::from_row_slice(2, 1, &[1.0, 1.0]);
        let d = DVector::from_vec(vec![3.0]);
        let x = equilibrium(&a, &e, &d).unwrap();
        assert!((&a * &x + &e * &d).norm() < 1e-12);
        assert!(equilibrium(&DMatrix::zeros(2, 2), &e, &d).is_err());
    }
}
