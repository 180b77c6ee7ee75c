//! Runtime control laws: droop with filtering, DAPI consensus, the structured
//! state feedback and the cyber/physical attack transformations.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::model::{CouplingSpec, DerParams, GainMatrix, SystemMatrices, I_DOMEGA, I_DV, I_E, I_OMEGA, ND, NU, NX};
use crate::network::{apply_physical_island, DerState, Disturbance, GridTopology};

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ControlInput {
    pub u_omega: f64,
    pub u_v: f64,
    pub du_omega: f64,
    pub du_v: f64,
}

impl ControlInput {
    pub fn new(omega_c: f64, e_c: f64, du_omega: f64, du_v: f64) -> Self {
        ControlInput {
            u_omega: omega_c + du_omega,
            u_v: e_c + du_v,
            du_omega,
            du_v,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AttackKind {
    /// Cuts both the communication and the electrical links of the targets.
    ConfidentialityIsland,
    /// Adds offsets to live couplings. `None` means "add the nominal value",
    /// i.e. double the coupling.
    Fdi { a_offset: Option<f64>, b_offset: Option<f64> },
    /// Zeroes the frequency coupling, and the voltage coupling too unless
    /// `keep_voltage` is set.
    Dos { keep_voltage: bool },
}

#[derive(Debug, Clone, PartialEq)]
pub enum AttackTarget {
    /// Every link between this DER set and the rest of the network.
    Ders(Vec<usize>),
    Links(Vec<(usize, usize)>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackEvent {
    pub t_start: f64,
    pub kind: AttackKind,
    pub targets: AttackTarget,
}

impl AttackTarget {
    /// Resolves the target to concrete undirected links, checking indices.
    pub fn resolve(&self, n: usize) -> Result<Vec<(usize, usize)>> {
        match self {
            AttackTarget::Ders(set) => {
                for &d in set {
                    if d >= n {
                        return Err(Error::UnknownTarget(format!("DER {d}")));
                    }
                }
                let mut out = Vec::new();
                for i in 0..n {
                    for j in (i + 1)..n {
                        if set.contains(&i) != set.contains(&j) {
                            out.push((i, j));
                        }
                    }
                }
                Ok(out)
            }
            AttackTarget::Links(links) => {
                for &(i, j) in links {
                    if i >= n || j >= n || i == j {
                        return Err(Error::UnknownTarget(format!("link ({i}, {j})")));
                    }
                }
                Ok(links.clone())
            }
        }
    }
}

/// `(Omega_dot, e_dot)` for every DER from the distributed-averaging laws.
pub fn dapi_consensus_terms(
    states: &[DerState],
    disturbances: &[Disturbance],
    coupling: &CouplingSpec,
    ders: &[DerParams],
) -> Result<Vec<(f64, f64)>> {
    let n = states.len();
    if disturbances.len() != n || ders.len() != n || coupling.n_ders != n {
        return Err(Error::Dimension("state, disturbance, coupling and DER counts differ".into()));
    }
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut om = -states[i].d_omega;
        let mut ev = -ders[i].xi * states[i].d_v;
        for j in 0..n {
            if i == j {
                continue;
            }
            let a = coupling.a_live[(i, j)];
            if a != 0.0 {
                om -= a * (states[i].omega_c - states[j].omega_c);
            }
            let b = coupling.b_live[(i, j)];
            if b != 0.0 {
                let qi = ders[i].q_norm().ok_or(Error::ZeroReactiveNormalizer { i, j, der: i })?;
                let qj = ders[j].q_norm().ok_or(Error::ZeroReactiveNormalizer { i, j, der: j })?;
                ev -= b * (disturbances[i].d_q / qi - disturbances[j].d_q / qj);
            }
        }
        out.push((om / ders[i].k, ev / ders[i].kappa));
    }
    Ok(out)
}

/// `du = K_D x`, evaluated block by block.
pub fn feedback(x: &DVector<f64>, gain: &GainMatrix) -> DVector<f64> {
    let n = gain.n_ders();
    let mut du = DVector::zeros(NU * n);
    for (i, g) in gain.blocks.iter().enumerate() {
        let s = NX * i;
        du[NU * i] = g[0] * x[s + I_DOMEGA] + g[1] * x[s + I_OMEGA];
        du[NU * i + 1] = g[2] * x[s + I_DV] + g[3] * x[s + I_E];
    }
    du
}

/// Secondary inputs for all DERs. With DAPI disabled the inputs are zero.
pub fn control_inputs(x: &DVector<f64>, gain: &GainMatrix, dapi_enabled: bool) -> Vec<ControlInput> {
    let n = gain.n_ders();
    if !dapi_enabled {
        return vec![ControlInput::default(); n];
    }
    let du = feedback(x, gain);
    (0..n)
        .map(|i| ControlInput::new(x[NX * i + I_OMEGA], x[NX * i + I_E], du[NU * i], du[NU * i + 1]))
        .collect()
}

/// Time derivative of the stacked controllable state `x`.
///
/// `lap_a`, `lap_b`, `m_diag`, `n_diag` and `q_star_inv` are taken from `sys`;
/// time constants come from `ders`.
pub fn state_derivative(
    x: &DVector<f64>,
    d: &DVector<f64>,
    u: &[ControlInput],
    sys: &SystemMatrices,
    ders: &[DerParams],
) -> DVector<f64> {
    let n = sys.n_ders;
    debug_assert_eq!(x.len(), NX * n);
    debug_assert_eq!(d.len(), ND * n);
    let mut dx = DVector::zeros(NX * n);
    for i in 0..n {
        let p = &ders[i];
        let s = NX * i;
        let dp = d[ND * i];
        let dq = d[ND * i + 1];
        let mut lap_omega = 0.0;
        let mut lap_q = 0.0;
        for j in 0..n {
            let la = sys.lap_a[(i, j)];
            if la != 0.0 {
                lap_omega += la * x[NX * j + I_OMEGA];
            }
            let lb = sys.lap_b[(i, j)];
            if lb != 0.0 {
                lap_q += lb * sys.q_star_inv[(j, j)] * d[ND * j + 1];
            }
        }
        dx[s + I_DOMEGA] = (-x[s + I_DOMEGA] + u[i].u_omega - sys.m_diag[(i, i)] * dp) / p.tau_c;
        dx[s + I_OMEGA] = (-x[s + I_DOMEGA] - lap_omega) / p.k;
        dx[s + I_DV] = (-x[s + I_DV] + u[i].u_v - sys.n_diag[(i, i)] * dq) / p.tau_c;
        dx[s + I_E] = (-p.xi * x[s + I_DV] - lap_q) / p.kappa;
    }
    dx
}

/// Applies one attack to copies of the coupling and grid.
pub fn apply_attack(
    coupling: &CouplingSpec,
    grid: &GridTopology,
    event: &AttackEvent,
    t: f64,
) -> Result<(CouplingSpec, GridTopology)> {
    if t < event.t_start {
        return Err(Error::Scenario(format!(
            "attack scheduled for t = {} applied at t = {t}",
            event.t_start
        )));
    }
    let n = coupling.n_ders;
    let links = event.targets.resolve(n)?;
    let mut c = coupling.clone();
    let mut g = grid.clone();
    let set = |m: &mut nalgebra::DMatrix<f64>, i: usize, j: usize, v: f64| {
        m[(i, j)] = v;
        m[(j, i)] = v;
    };
    match &event.kind {
        AttackKind::ConfidentialityIsland => {
            for &(i, j) in &links {
                set(&mut c.a_live, i, j, 0.0);
                set(&mut c.b_live, i, j, 0.0);
                set(&mut c.strengths, i, j, 0.0);
            }
            g = apply_physical_island(&g, &links)?;
        }
        AttackKind::Fdi { a_offset, b_offset } => {
            for &(i, j) in &links {
                if c.e_fund[(i, j)] == 0.0 {
                    return Err(Error::UnknownTarget(format!(
                        "link ({i}, {j}) is not in the fundamental interconnection"
                    )));
                }
                let a = c.a_live[(i, j)];
                let b = c.b_live[(i, j)];
                let na = a + a_offset.unwrap_or(a);
                let nb = b + b_offset.unwrap_or(b);
                set(&mut c.a_live, i, j, na.max(0.0));
                set(&mut c.b_live, i, j, nb.max(0.0));
                if c.a_max[(i, j)] > 0.0 {
                    let s = c.strengths[(i, j)] * if a > 0.0 { na / a } else { 1.0 };
                    set(&mut c.strengths, i, j, s.max(0.0));
                }
            }
        }
        AttackKind::Dos { keep_voltage } => {
            for &(i, j) in &links {
                set(&mut c.a_live, i, j, 0.0);
                if !keep_voltage {
                    set(&mut c.b_live, i, j, 0.0);
                }
                set(&mut c.strengths, i, j, 0.0);
            }
        }
    }
    c.validate()?;
    Ok((c, g))
}
