//! Quasi-static lossless power-flow surrogate linearised at the setpoint
//! voltages. Active power follows angle differences, reactive power follows
//! voltage-magnitude differences.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::{components, DerParams};

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct DerState {
    pub delta: f64,
    pub d_omega: f64,
    pub omega_c: f64,
    pub d_v: f64,
    pub e_c: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Disturbance {
    pub d_p: f64,
    pub d_q: f64,
}

/// A load bus. Its demand is split over the attached DERs in proportion to
/// the attachment susceptance.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadBus {
    pub name: String,
    pub attach: Vec<(usize, f64)>,
    pub p: f64,
    pub q: f64,
}

impl LoadBus {
    /// A load sitting directly at one DER's terminals.
    pub fn local(name: impl Into<String>, der: usize, p: f64, q: f64) -> Self {
        LoadBus {
            name: name.into(),
            attach: vec![(der, 1.0)],
            p,
            q,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridTopology {
    /// Line susceptance between DER buses (S).
    pub susceptance: DMatrix<f64>,
    /// 1 where a line is physically closed.
    pub island_mask: DMatrix<f64>,
    pub loads: Vec<LoadBus>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerFlow {
    pub disturbances: Vec<Disturbance>,
    /// Number of DERs whose deviation was scaled back onto the capacity ball.
    pub clamped: usize,
}

impl GridTopology {
    /// Uniform susceptance `b` on every listed line, no loads.
    pub fn from_lines(n: usize, lines: &[(usize, usize)], b: f64) -> Result<Self> {
        let mut s = DMatrix::zeros(n, n);
        for &(i, j) in lines {
            if i >= n || j >= n || i == j {
                return Err(Error::Topology(format!("bad line ({i}, {j}) for {n} buses")));
            }
            s[(i, j)] = b;
            s[(j, i)] = b;
        }
        let mask = s.map(|v| if v > 0.0 { 1.0 } else { 0.0 });
        let g = GridTopology {
            susceptance: s,
            island_mask: mask,
            loads: Vec::new(),
        };
        g.validate()?;
        Ok(g)
    }

    pub fn n_buses(&self) -> usize {
        self.susceptance.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_buses();
        if self.susceptance.ncols() != n || self.island_mask.shape() != (n, n) {
            return Err(Error::Dimension("susceptance and island mask must be square and equal-sized".into()));
        }
        for i in 0..n {
            if self.susceptance[(i, i)] != 0.0 {
                return Err(Error::Topology(format!("nonzero self-susceptance at bus {i}")));
            }
            for j in 0..n {
                let b = self.susceptance[(i, j)];
                if b < 0.0 || b != self.susceptance[(j, i)] {
                    return Err(Error::Topology(format!("susceptance ({i}, {j}) must be symmetric and non-negative")));
                }
                if self.island_mask[(i, j)] != self.island_mask[(j, i)] {
                    return Err(Error::Topology(format!("island mask not symmetric at ({i}, {j})")));
                }
                if self.island_mask[(i, j)] == 0.0 && b != 0.0 {
                    return Err(Error::Topology(format!("open line ({i}, {j}) still has susceptance")));
                }
            }
        }
        for l in &self.loads {
            if l.attach.is_empty() {
                return Err(Error::Topology(format!("load `{}` is attached to nothing", l.name)));
            }
            for &(d, b) in &l.attach {
                if d >= n || !(b > 0.0) {
                    return Err(Error::Topology(format!("load `{}` has bad attachment ({d}, {b})", l.name)));
                }
            }
        }
        Ok(())
    }

    /// Island label per bus.
    pub fn islands(&self) -> Vec<usize> {
        components(&self.susceptance)
    }

    /// Active and reactive load assigned to each DER.
    pub fn load_shares(&self) -> Vec<(f64, f64)> {
        let mut out = vec![(0.0, 0.0); self.n_buses()];
        for l in &self.loads {
            let total: f64 = l.attach.iter().map(|a| a.1).sum();
            for &(d, b) in &l.attach {
                out[d].0 += l.p * b / total;
                out[d].1 += l.q * b / total;
            }
        }
        out
    }
}

/// Opens the listed lines. Lines that are already open are left alone.
pub fn apply_physical_island(grid: &GridTopology, cut: &[(usize, usize)]) -> Result<GridTopology> {
    let n = grid.n_buses();
    let mut g = grid.clone();
    for &(i, j) in cut {
        if i >= n || j >= n || i == j {
            return Err(Error::UnknownTarget(format!("line ({i}, {j})")));
        }
        g.susceptance[(i, j)] = 0.0;
        g.susceptance[(j, i)] = 0.0;
        g.island_mask[(i, j)] = 0.0;
        g.island_mask[(j, i)] = 0.0;
    }
    Ok(g)
}

/// Power deviations seen by each DER for the given angles and voltages.
///
/// `dp_i = sum_j B_ij V*_i V*_j (delta_i - delta_j) + P_load,i - P*_i`,
/// `dq_i = sum_j B_ij V*_i (dV_i - dV_j) + Q_load,i - Q*_i`,
/// followed by projection onto `dp^2 + dq^2 <= s_bar^2`.
pub fn electrical_powers(states: &[DerState], ders: &[DerParams], grid: &GridTopology) -> PowerFlow {
    let n = states.len();
    debug_assert_eq!(ders.len(), n);
    let shares = grid.load_shares();
    let mut clamped = 0;
    let disturbances = (0..n)
        .map(|i| {
            let mut p = 0.0;
            let mut q = 0.0;
            for j in 0..n {
                let b = grid.susceptance[(i, j)];
                if b != 0.0 {
                    p += b * ders[i].v_star * ders[j].v_star * (states[i].delta - states[j].delta);
                    q += b * ders[i].v_star * (states[i].d_v - states[j].d_v);
                }
            }
            let mut d_p = p + shares[i].0 - ders[i].p_star;
            let mut d_q = q + shares[i].1 - ders[i].q_star;
            let norm = d_p.hypot(d_q);
            if norm > ders[i].s_bar {
                let s = ders[i].s_bar / norm;
                d_p *= s;
                d_q *= s;
                clamped += 1;
            }
            Disturbance { d_p, d_q }
        })
        .collect();
    PowerFlow { disturbances, clamped }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;

    fn two_ders() -> (Vec<DerParams>, GridTopology) {
        let (ders, _) = presets::five_der_system();
        let ders = vec![ders[0].clone(), ders[1].clone()];
        let mut g = GridTopology::from_lines(2, &[(0, 1)], 0.7).unwrap();
        g.loads.push(LoadBus {
            name: "mid".into(),
            attach: vec![(0, 0.5), (1, 0.5)],
            p: 1000.0,
            q: 0.0,
        });
        (ders, g)
    }

    #[test]
    fn equilibrium_without_loads() {
        let (ders, mut g) = two_ders();
        g.loads.clear();
        let s = [DerState { delta: 0.3, d_v: 2.0, ..Default::default() }; 2];
        let f = electrical_powers(&s, &ders, &g);
        for d in f.disturbances {
            assert_eq!(d.d_p, 0.0);
            assert_eq!(d.d_q, 0.0);
        }
    }

    #[test]
    fn midpoint_load_splits_evenly() {
        let (ders, g) = two_ders();
        let s = [DerState::default(); 2];
        let f = electrical_powers(&s, &ders, &g);
        assert_eq!(f.disturbances[0].d_p, 500.0);
        assert_eq!(f.disturbances[1].d_p, 500.0);
    }

    #[test]
    fn isolated_der_sees_only_local_load() {
        let (ders, coupling) = presets::five_der_system();
        let g = presets::five_der_grid();
        let cut: Vec<_> = coupling.links().into_iter().filter(|&(i, j)| i == 2 || j == 2).collect();
        let g = apply_physical_island(&g, &cut).unwrap();
        let mut s = [DerState::default(); 5];
        for (i, st) in s.iter_mut().enumerate() {
            st.delta = 0.01 * i as f64;
            st.d_v = 0.1 * i as f64;
        }
        let f = electrical_powers(&s, &ders, &g);
        let local = g.load_shares()[2];
        assert_eq!(f.disturbances[2].d_p, local.0);
        assert_eq!(f.disturbances[2].d_q, local.1);
    }

    #[test]
    fn empty_cut_is_identity() {
        let g = presets::five_der_grid();
        assert_eq!(apply_physical_island(&g, &[]).unwrap(), g);
        assert!(apply_physical_island(&g, &[(0, 9)]).is_err());
    }

    #[test]
    fn clamps_to_capacity() {
        let (ders, mut g) = two_ders();
        g.loads[0].p = 1e6;
        let f = electrical_powers(&[DerState::default(); 2], &ders, &g);
        assert_eq!(f.clamped, 2);
        assert!((f.disturbances[0].d_p - ders[0].s_bar).abs() < 1e-9);
    }
}
