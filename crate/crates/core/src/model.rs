//! Per-DER state-space blocks and the aggregated networked model.
//!
//! Ordering conventions used throughout the crate: the controllable state of
//! DER `i` occupies rows `4i..4i+4` as `[dω, Ω, dV, e]`, its disturbance
//! occupies `2i..2i+2` as `[dp, dq]`, and its secondary input `2i..2i+2` as
//! `[du_ω, du_V]`.

use nalgebra::{DMatrix, DVector, Matrix4, Matrix4x2};

use crate::error::{invalid, Error, Result};

pub const NX: usize = 4;
pub const ND: usize = 2;
pub const NU: usize = 2;

/// Index of each entry inside a DER's 4-vector.
pub const I_DOMEGA: usize = 0;
pub const I_OMEGA: usize = 1;
pub const I_DV: usize = 2;
pub const I_E: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct DerParams {
    /// Frequency droop gain (rad/s per W).
    pub m: f64,
    /// Voltage droop gain (V per var).
    pub n: f64,
    /// Low-pass filter time constant (s).
    pub tau_c: f64,
    /// Inverse DAPI frequency integral gain (s).
    pub k: f64,
    /// Inverse DAPI voltage integral gain (s).
    pub kappa: f64,
    /// Weight of the voltage-deviation term in the voltage consensus.
    pub xi: f64,
    pub p_star: f64,
    pub q_star: f64,
    pub omega_star: f64,
    pub v_star: f64,
    /// Maximum apparent-power deviation (VA).
    pub s_bar: f64,
    /// Reactive rating used to normalise reactive sharing when `q_star` is 0.
    /// `None` keeps the strict rule: no voltage coupling may touch this DER.
    pub q_rating: Option<f64>,
}

impl DerParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("m", self.m),
            ("n", self.n),
            ("tau_c", self.tau_c),
            ("k", self.k),
            ("kappa", self.kappa),
            ("s_bar", self.s_bar),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(invalid(name, format!("must be positive and finite, got {v}")));
            }
        }
        if !(self.xi >= 0.0) {
            return Err(invalid("xi", format!("must be non-negative, got {}", self.xi)));
        }
        if let Some(r) = self.q_rating {
            if !(r > 0.0) {
                return Err(invalid("q_rating", format!("must be positive, got {r}")));
            }
        }
        Ok(())
    }

    /// Normaliser of reactive power in the voltage consensus, if any.
    pub fn q_norm(&self) -> Option<f64> {
        if self.q_star != 0.0 {
            Some(self.q_star)
        } else {
            self.q_rating
        }
    }
}

/// Returns `(A_i, B_i, E_i)` for one DER.
pub fn build_der_matrices(p: &DerParams) -> Result<(Matrix4<f64>, Matrix4x2<f64>, Matrix4x2<f64>)> {
    for (name, v) in [("tau_c", p.tau_c), ("k", p.k), ("kappa", p.kappa)] {
        if !(v > 0.0) {
            return Err(invalid(name, format!("must be positive, got {v}")));
        }
    }
    let t = 1.0 / p.tau_c;
    #[rustfmt::skip]
    let a = Matrix4::new(
        -t,          t,   0.0,  0.0,
        -1.0 / p.k,  0.0, 0.0,  0.0,
        0.0,         0.0, -t,   t,
        0.0,         0.0, -p.xi / p.kappa, 0.0,
    );
    #[rustfmt::skip]
    let b = Matrix4x2::new(
        t,   0.0,
        0.0, 0.0,
        0.0, t,
        0.0, 0.0,
    );
    #[rustfmt::skip]
    let e = Matrix4x2::new(
        -p.m * t, 0.0,
        0.0,      0.0,
        0.0,      -p.n * t,
        0.0,      0.0,
    );
    Ok((a, b, e))
}

/// Interconnection data: which links may exist and their current weights.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingSpec {
    pub n_ders: usize,
    pub e_fund: DMatrix<f64>,
    pub a_max: DMatrix<f64>,
    pub b_max: DMatrix<f64>,
    pub a_live: DMatrix<f64>,
    pub b_live: DMatrix<f64>,
    pub strengths: DMatrix<f64>,
}

impl CouplingSpec {
    /// Builds a coupling with every permitted link at its maximal weight.
    pub fn new(e_fund: DMatrix<f64>, a_max: DMatrix<f64>, b_max: DMatrix<f64>) -> Result<Self> {
        let n = e_fund.nrows();
        let strengths = e_fund.clone();
        let spec = CouplingSpec {
            n_ders: n,
            a_live: a_max.clone(),
            b_live: b_max.clone(),
            e_fund,
            a_max,
            b_max,
            strengths,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Uniform weights `a`, `b` on every permitted link.
    pub fn uniform(e_fund: DMatrix<f64>, a: f64, b: f64) -> Result<Self> {
        let a_max = &e_fund * a;
        let b_max = &e_fund * b;
        Self::new(e_fund, a_max, b_max)
    }

    /// Fundamental matrix from an undirected link list.
    pub fn fundamental(n: usize, links: &[(usize, usize)]) -> Result<DMatrix<f64>> {
        let mut e = DMatrix::zeros(n, n);
        for &(i, j) in links {
            if i >= n || j >= n || i == j {
                return Err(Error::Topology(format!("bad link ({i}, {j}) for {n} DERs")));
            }
            e[(i, j)] = 1.0;
            e[(j, i)] = 1.0;
        }
        Ok(e)
    }

    /// Live couplings parameterised by connective strengths:
    /// `a_ij = alpha * e_ij * a_max_ij`, `b_ij = beta * e_ij * b_max_ij`.
    pub fn with_strengths(&self, alpha: f64, beta: f64, strengths: &DMatrix<f64>) -> Result<Self> {
        let mut out = self.clone();
        out.strengths = strengths.clone();
        out.a_live = self.a_max.component_mul(strengths) * alpha;
        out.b_live = self.b_max.component_mul(strengths) * beta;
        out.validate()?;
        Ok(out)
    }

    /// Permitted links as `(i, j)` with `i < j`, in row-major order.
    pub fn links(&self) -> Vec<(usize, usize)> {
        let n = self.n_ders;
        let mut out = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                if self.e_fund[(i, j)] != 0.0 {
                    out.push((i, j));
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_ders;
        for (name, m) in [
            ("e_fund", &self.e_fund),
            ("a_max", &self.a_max),
            ("b_max", &self.b_max),
            ("a_live", &self.a_live),
            ("b_live", &self.b_live),
            ("strengths", &self.strengths),
        ] {
            if m.nrows() != n || m.ncols() != n {
                return Err(Error::Dimension(format!("{name} is {}x{}, expected {n}x{n}", m.nrows(), m.ncols())));
            }
        }
        for i in 0..n {
            if self.e_fund[(i, i)] != 0.0 {
                return Err(Error::Topology(format!("e_fund has nonzero diagonal at {i}")));
            }
            for j in 0..n {
                let e = self.e_fund[(i, j)];
                if e != 0.0 && e != 1.0 {
                    return Err(Error::Topology(format!("e_fund[{i}][{j}] = {e} is not binary")));
                }
                if e != self.e_fund[(j, i)] {
                    return Err(Error::Topology(format!("e_fund is not symmetric at ({i}, {j})")));
                }
                for (name, m) in [
                    ("a_max", &self.a_max),
                    ("b_max", &self.b_max),
                    ("a_live", &self.a_live),
                    ("b_live", &self.b_live),
                    ("strengths", &self.strengths),
                ] {
                    let v = m[(i, j)];
                    if v < 0.0 || !v.is_finite() {
                        return Err(invalid(name, format!("entry ({i}, {j}) = {v} must be finite and non-negative")));
                    }
                    if e == 0.0 && v != 0.0 {
                        return Err(Error::Topology(format!(
                            "{name}[{i}][{j}] = {v} on a link absent from e_fund"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Graph Laplacian of a non-negative weight matrix (diagonal ignored).
pub fn laplacian(w: &DMatrix<f64>) -> DMatrix<f64> {
    let n = w.nrows();
    let mut l = DMatrix::zeros(n, n);
    for i in 0..n {
        let mut deg = 0.0;
        for j in 0..n {
            if i != j {
                l[(i, j)] = -w[(i, j)];
                deg += w[(i, j)];
            }
        }
        l[(i, i)] = deg;
    }
    l
}

/// Number of connected components of the graph with edges where `w_ij > 0`.
pub fn component_count(w: &DMatrix<f64>) -> usize {
    components(w).iter().copied().max().map_or(0, |c| c + 1)
}

/// Component label for each node (labels are dense and ordered by first node).
pub fn components(w: &DMatrix<f64>) -> Vec<usize> {
    let n = w.nrows();
    let mut label = vec![usize::MAX; n];
    let mut next = 0;
    for s in 0..n {
        if label[s] != usize::MAX {
            continue;
        }
        let mut stack = vec![s];
        label[s] = next;
        while let Some(u) = stack.pop() {
            for v in 0..n {
                if v != u && label[v] == usize::MAX && (w[(u, v)] > 0.0 || w[(v, u)] > 0.0) {
                    label[v] = next;
                    stack.push(v);
                }
            }
        }
        next += 1;
    }
    label
}

/// Consensus-state uncertainty blocks touching DER `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintyBlocks {
    pub da_ii: Matrix4<f64>,
    pub da_ij: Vec<(usize, Matrix4<f64>)>,
    pub de_ii: Matrix4x2<f64>,
    pub de_ij: Vec<(usize, Matrix4x2<f64>)>,
}

pub fn build_uncertainty_blocks(ders: &[DerParams], coupling: &CouplingSpec, i: usize) -> Result<UncertaintyBlocks> {
    let n = coupling.n_ders;
    if ders.len() != n {
        return Err(Error::Dimension(format!("{} DERs but coupling is for {n}", ders.len())));
    }
    if i >= n {
        return Err(Error::UnknownTarget(format!("DER index {i}")));
    }
    let p = &ders[i];
    let mut blocks = UncertaintyBlocks {
        da_ii: Matrix4::zeros(),
        da_ij: Vec::new(),
        de_ii: Matrix4x2::zeros(),
        de_ij: Vec::new(),
    };
    for j in 0..n {
        if j == i {
            continue;
        }
        let a = coupling.a_live[(i, j)];
        if a != 0.0 {
            blocks.da_ii[(I_OMEGA, I_OMEGA)] -= a / p.k;
            let mut off = Matrix4::zeros();
            off[(I_OMEGA, I_OMEGA)] = a / p.k;
            blocks.da_ij.push((j, off));
        }
        let b = coupling.b_live[(i, j)];
        if b != 0.0 {
            let qi = p.q_norm().ok_or(Error::ZeroReactiveNormalizer { i, j, der: i })?;
            let qj = ders[j].q_norm().ok_or(Error::ZeroReactiveNormalizer { i, j, der: j })?;
            blocks.de_ii[(I_E, 1)] -= b / (p.kappa * qi);
            let mut off = Matrix4x2::zeros();
            off[(I_E, 1)] = b / (p.kappa * qj);
            blocks.de_ij.push((j, off));
        }
    }
    Ok(blocks)
}

/// Aggregated `dA_D` for an arbitrary frequency-coupling matrix.
pub fn uncertainty_a(ders: &[DerParams], a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = ders.len();
    let mut da = DMatrix::zeros(NX * n, NX * n);
    for i in 0..n {
        let r = NX * i + I_OMEGA;
        for j in 0..n {
            if i != j && a[(i, j)] != 0.0 {
                let w = a[(i, j)] / ders[i].k;
                da[(r, r)] -= w;
                da[(r, NX * j + I_OMEGA)] += w;
            }
        }
    }
    da
}

/// Aggregated `dE_D` for an arbitrary voltage-coupling matrix.
pub fn uncertainty_e(ders: &[DerParams], b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = ders.len();
    let mut de = DMatrix::zeros(NX * n, ND * n);
    for i in 0..n {
        let r = NX * i + I_E;
        for j in 0..n {
            if i == j || b[(i, j)] == 0.0 {
                continue;
            }
            let qi = ders[i].q_norm().ok_or(Error::ZeroReactiveNormalizer { i, j, der: i })?;
            let qj = ders[j].q_norm().ok_or(Error::ZeroReactiveNormalizer { i, j, der: j })?;
            let w = b[(i, j)] / ders[i].kappa;
            de[(r, ND * i + 1)] -= w / qi;
            de[(r, ND * j + 1)] += w / qj;
        }
    }
    Ok(de)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemMatrices {
    pub n_ders: usize,
    pub a_d: DMatrix<f64>,
    pub b_d: DMatrix<f64>,
    pub e_d: DMatrix<f64>,
    pub delta_a: DMatrix<f64>,
    pub delta_e: DMatrix<f64>,
    /// `dA_D` evaluated at the maximal couplings.
    pub h_mat: DMatrix<f64>,
    /// `dE_D` evaluated at the maximal couplings.
    pub g_mat: DMatrix<f64>,
    pub lap_a: DMatrix<f64>,
    pub lap_b: DMatrix<f64>,
    pub m_diag: DMatrix<f64>,
    pub n_diag: DMatrix<f64>,
    pub q_star_inv: DMatrix<f64>,
    /// Block-diagonal disturbance weight, `diag(1/s_i^2)` repeated for p and q.
    pub s_bar_d: DMatrix<f64>,
}

pub fn aggregate(ders: &[DerParams], coupling: &CouplingSpec) -> Result<SystemMatrices> {
    let n = ders.len();
    if n == 0 {
        return Err(Error::Dimension("no DERs".into()));
    }
    if coupling.n_ders != n {
        return Err(Error::Dimension(format!("{n} DERs but coupling is for {}", coupling.n_ders)));
    }
    coupling.validate()?;
    for (i, p) in ders.iter().enumerate() {
        p.validate().map_err(|e| match e {
            Error::InvalidParameter { name, reason } => Error::InvalidParameter {
                name: format!("ders[{i}].{name}"),
                reason,
            },
            other => other,
        })?;
    }

    let mut a_d = DMatrix::zeros(NX * n, NX * n);
    let mut b_d = DMatrix::zeros(NX * n, NU * n);
    let mut e_d = DMatrix::zeros(NX * n, ND * n);
    let mut m_diag = DMatrix::zeros(n, n);
    let mut n_diag = DMatrix::zeros(n, n);
    let mut q_star_inv = DMatrix::zeros(n, n);
    let mut s_bar_d = DMatrix::zeros(ND * n, ND * n);
    for (i, p) in ders.iter().enumerate() {
        let (a, b, e) = build_der_matrices(p)?;
        a_d.view_mut((NX * i, NX * i), (NX, NX)).copy_from(&a);
        b_d.view_mut((NX * i, NU * i), (NX, NU)).copy_from(&b);
        e_d.view_mut((NX * i, ND * i), (NX, ND)).copy_from(&e);
        m_diag[(i, i)] = p.m;
        n_diag[(i, i)] = p.n;
        q_star_inv[(i, i)] = p.q_norm().map_or(0.0, |q| 1.0 / q);
        let w = 1.0 / (p.s_bar * p.s_bar);
        s_bar_d[(ND * i, ND * i)] = w;
        s_bar_d[(ND * i + 1, ND * i + 1)] = w;
    }

    Ok(SystemMatrices {
        n_ders: n,
        a_d,
        b_d,
        e_d,
        delta_a: uncertainty_a(ders, &coupling.a_live),
        delta_e: uncertainty_e(ders, &coupling.b_live)?,
        h_mat: uncertainty_a(ders, &coupling.a_max),
        g_mat: uncertainty_e(ders, &coupling.b_max)?,
        lap_a: laplacian(&coupling.a_live),
        lap_b: laplacian(&coupling.b_live),
        m_diag,
        n_diag,
        q_star_inv,
        s_bar_d,
    })
}

/// Structured secondary-control gain, one `[k_ω, k_Ω, k_v, k_e]` per DER.
#[derive(Debug, Clone, PartialEq)]
pub struct GainMatrix {
    pub blocks: Vec<[f64; 4]>,
}

impl GainMatrix {
    pub const NAMES: [&'static str; 4] = ["k_omega", "k_Omega", "k_v", "k_e"];

    /// The base scheme: no feedback.
    pub fn zero(n: usize) -> Self {
        GainMatrix { blocks: vec![[0.0; 4]; n] }
    }

    /// Gains are expected to be negative; `allow_nonnegative` lifts that check.
    pub fn from_blocks(blocks: Vec<[f64; 4]>, allow_nonnegative: bool) -> Result<Self> {
        for b in &blocks {
            for (name, &v) in Self::NAMES.iter().zip(b) {
                if !v.is_finite() {
                    return Err(invalid(name, format!("non-finite gain {v}")));
                }
                if !allow_nonnegative && v >= 0.0 {
                    return Err(Error::NonNegativeGain { name, value: v });
                }
            }
        }
        Ok(GainMatrix { blocks })
    }

    pub fn uniform(gains: [f64; 4], n: usize, allow_nonnegative: bool) -> Result<Self> {
        Self::from_blocks(vec![gains; n], allow_nonnegative)
    }

    pub fn n_ders(&self) -> usize {
        self.blocks.len()
    }

    /// Dense `2N x 4N` block-diagonal `K_D`.
    pub fn to_matrix(&self) -> DMatrix<f64> {
        let n = self.blocks.len();
        let mut k = DMatrix::zeros(NU * n, NX * n);
        for (i, g) in self.blocks.iter().enumerate() {
            k[(NU * i, NX * i + I_DOMEGA)] = g[0];
            k[(NU * i, NX * i + I_OMEGA)] = g[1];
            k[(NU * i + 1, NX * i + I_DV)] = g[2];
            k[(NU * i + 1, NX * i + I_E)] = g[3];
        }
        k
    }

    /// Largest entry-wise difference between any block and the first.
    pub fn block_spread(&self) -> f64 {
        let Some(first) = self.blocks.first() else { return 0.0 };
        self.blocks
            .iter()
            .flat_map(|b| b.iter().zip(first).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundsReport {
    /// `d' S_D d`; admissible when at most 1.
    pub disturbance_level: f64,
    pub disturbance_ok: bool,
    pub state_lhs: f64,
    pub state_rhs: f64,
    pub state_ok: bool,
    pub coupling_lhs: f64,
    pub coupling_rhs: f64,
    pub coupling_ok: bool,
}

impl BoundsReport {
    pub fn all_ok(&self) -> bool {
        self.disturbance_ok && self.state_ok && self.coupling_ok
    }
}

/// Evaluates the three quadratic bounds used by the robust design.
pub fn check_bounds(x: &DVector<f64>, d: &DVector<f64>, sys: &SystemMatrices, alpha: f64, beta: f64) -> Result<BoundsReport> {
    let n = sys.n_ders;
    if x.len() != NX * n || d.len() != ND * n {
        return Err(Error::Dimension(format!(
            "x has {} entries and d has {}, expected {} and {}",
            x.len(),
            d.len(),
            NX * n,
            ND * n
        )));
    }
    let le = |lhs: f64, rhs: f64| lhs <= rhs + 1e-12 * (1.0 + rhs.abs());
    let level = d.dot(&(&sys.s_bar_d * d));
    let state_lhs = (&sys.delta_a * x).norm_squared();
    let state_rhs = alpha * alpha * (&sys.h_mat * x).norm_squared();
    let coupling_lhs = (&sys.delta_e * d).norm_squared();
    let coupling_rhs = beta * beta * (&sys.g_mat * d).norm_squared();
    Ok(BoundsReport {
        disturbance_level: level,
        disturbance_ok: le(level, 1.0),
        state_lhs,
        state_rhs,
        state_ok: le(state_lhs, state_rhs),
        coupling_lhs,
        coupling_rhs,
        coupling_ok: le(coupling_lhs, coupling_rhs),
    })
}
