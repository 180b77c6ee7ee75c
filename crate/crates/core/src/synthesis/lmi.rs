//! Robust gain synthesis as a linear matrix inequality.
//!
//! With `W = kappa_y Y`, `Z = kappa_y L` and the disturbance normalised by the
//! capacity (`d = D d_n`, `S_D = D^-2`), the invariance condition with
//! multipliers `tau_v, tau_d, tau_h, tau_g` reads
//!
//! ```text
//! [ N      W H'   E_n    0      I      I    ]
//! [ H W   -g_a/t_h I 0   0      0      0    ]
//! [ E_n'   0     -t_d I  G_n'   0      0    ]  <= 0
//! [ 0      0      G_n   -g_b/t_g I 0    0    ]
//! [ I      0      0      0     -t_h I  0    ]
//! [ I      0      0      0      0     -t_g I]
//! ```
//!
//! with `N = A W + W A' + B Z + Z' B' + tau_v W`, `g_a = 1/alpha^2`,
//! `g_b = 1/beta^2`. Together with `L'L <= kappa_l I`,
//! `y_floor I <= Y <= y_cap I` and `g_a >= 1/alpha_bar^2`,
//! `g_b >= 1/beta_bar^2` this is linear in `(Y, L, g_a, g_b, kappa_l)` once
//! the multipliers are fixed. The gain is `K = L Y^-1` and the Lyapunov
//! matrix `P = (kappa_y Y)^-1`.

use nalgebra::{DMatrix, SymmetricEigen};

use super::sdp::{self, LmiProblem, SdpOptions, SdpStatus};
use crate::error::{invalid, Error, Result};
use crate::model::{GainMatrix, SystemMatrices, ND, NU, NX};

/// How `Y` and `L` are parameterised across DERs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockStructure {
    /// One 4x4 `Y` block and one 2x4 `L` block shared by all DERs.
    Shared,
    /// Independent blocks per DER.
    PerDer,
}

/// Fixed multipliers and scalings for one solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hyper {
    pub kappa_y: f64,
    pub tau_v: f64,
    pub tau_d: f64,
    pub tau_h: f64,
    pub tau_g: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisProblem {
    pub sys: SystemMatrices,
    pub hyper: Hyper,
    /// Objective weights on `(gamma_alpha, gamma_beta, kappa_l)`.
    pub weights: [f64; 3],
    pub alpha_bar: f64,
    pub beta_bar: f64,
    pub structure: BlockStructure,
    /// Lower bound on the eigenvalues of `Y`.
    pub y_floor: f64,
    /// Upper bound on the eigenvalues of `Y`.
    pub y_cap: f64,
    /// Capacity of each DER, used to normalise the disturbance.
    pub s_bar: Vec<f64>,
}

/// Margin on the strict scalar bounds.
pub const STRICT_MARGIN: f64 = 1e-10;
/// Residual eigenvalues above this fail verification.
pub const RESIDUAL_TOL: f64 = 1e-7;

impl SynthesisProblem {
    pub fn validate(&self) -> Result<()> {
        let h = &self.hyper;
        for (name, v) in [
            ("kappa_y", h.kappa_y),
            ("tau_v", h.tau_v),
            ("tau_d", h.tau_d),
            ("tau_h", h.tau_h),
            ("tau_g", h.tau_g),
            ("c1", self.weights[0]),
            ("c2", self.weights[1]),
            ("c3", self.weights[2]),
            ("alpha_bar", self.alpha_bar),
            ("beta_bar", self.beta_bar),
            ("y_floor", self.y_floor),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(invalid(name, format!("must be positive and finite, got {v}")));
            }
        }
        if !(self.y_cap > self.y_floor) {
            return Err(invalid("y_cap", "must exceed y_floor"));
        }
        if self.s_bar.len() != self.sys.n_ders {
            return Err(Error::Dimension("one capacity per DER is required".into()));
        }
        Ok(())
    }

    fn n(&self) -> usize {
        self.sys.n_ders
    }

    /// `D = diag(s_bar)` repeated for p and q.
    pub fn dist_scale(&self) -> DMatrix<f64> {
        DMatrix::from_fn(ND * self.n(), ND * self.n(), |r, c| if r == c { self.s_bar[r / ND] } else { 0.0 })
    }
}

/// Variable layout of the decision vector.
#[derive(Debug, Clone)]
pub struct Layout {
    n: usize,
    structure: BlockStructure,
}

const PER_TEMPLATE: usize = 10;

impl Layout {
    pub fn new(n: usize, structure: BlockStructure) -> Self {
        Layout { n, structure }
    }

    fn templates(&self) -> usize {
        match self.structure {
            BlockStructure::Shared => 1,
            BlockStructure::PerDer => self.n,
        }
    }

    fn base(&self, der: usize) -> usize {
        match self.structure {
            BlockStructure::Shared => 0,
            BlockStructure::PerDer => PER_TEMPLATE * der,
        }
    }

    pub fn n_vars(&self) -> usize {
        PER_TEMPLATE * self.templates() + 3
    }

    pub fn gamma_alpha(&self) -> usize {
        PER_TEMPLATE * self.templates()
    }

    pub fn gamma_beta(&self) -> usize {
        self.gamma_alpha() + 1
    }

    pub fn kappa_l(&self) -> usize {
        self.gamma_alpha() + 2
    }

    /// `(row, col, var)` of the upper triangle of `Y`.
    pub fn y_entries(&self) -> Vec<(usize, usize, usize)> {
        let mut out = Vec::new();
        for i in 0..self.n {
            let b = self.base(i);
            let o = NX * i;
            let pat = [(0, 0), (0, 1), (1, 1), (2, 2), (2, 3), (3, 3)];
            for (k, (r, c)) in pat.iter().enumerate() {
                out.push((o + r, o + c, b + k));
            }
        }
        out
    }

    /// `(row, col, var)` of the structured entries of `L`.
    pub fn l_entries(&self) -> Vec<(usize, usize, usize)> {
        let mut out = Vec::new();
        for i in 0..self.n {
            let b = self.base(i) + 6;
            out.push((NU * i, NX * i, b));
            out.push((NU * i, NX * i + 1, b + 1));
            out.push((NU * i + 1, NX * i + 2, b + 2));
            out.push((NU * i + 1, NX * i + 3, b + 3));
        }
        out
    }

    pub fn y_matrix(&self, v: &[f64]) -> DMatrix<f64> {
        let mut y = DMatrix::zeros(NX * self.n, NX * self.n);
        for (r, c, k) in self.y_entries() {
            y[(r, c)] = v[k];
            y[(c, r)] = v[k];
        }
        y
    }

    pub fn l_matrix(&self, v: &[f64]) -> DMatrix<f64> {
        let mut l = DMatrix::zeros(NU * self.n, NX * self.n);
        for (r, c, k) in self.l_entries() {
            l[(r, c)] = v[k];
        }
        l
    }
}

fn place(block: &mut sdp::LmiBlock, var: Option<usize>, r0: usize, c0: usize, m: &DMatrix<f64>) {
    for c in 0..m.ncols() {
        for r in 0..m.nrows() {
            let v = m[(r, c)];
            if v == 0.0 {
                continue;
            }
            let (rr, cc) = (r0 + r, c0 + c);
            // diagonal blocks carry symmetric data; take each pair once
            if r0 == c0 && rr > cc {
                continue;
            }
            match var {
                Some(k) => block.add(k, rr, cc, v),
                None => block.add_const(rr, cc, v),
            }
        }
    }
}

fn unit_sym(dim: usize, r: usize, c: usize) -> DMatrix<f64> {
    let mut e = DMatrix::zeros(dim, dim);
    e[(r, c)] = 1.0;
    e[(c, r)] = 1.0;
    e
}

/// Builds the affine constraint set for one hyperparameter point.
pub fn assemble_lmi(p: &SynthesisProblem) -> Result<(LmiProblem, Layout)> {
    p.validate()?;
    let n = p.n();
    let nx = NX * n;
    let nd = ND * n;
    let h = p.hyper;
    let lay = Layout::new(n, p.structure);
    let mut prob = LmiProblem::new(lay.n_vars());
    prob.objective[lay.gamma_alpha()] = p.weights[0];
    prob.objective[lay.gamma_beta()] = p.weights[1];
    prob.objective[lay.kappa_l()] = p.weights[2];

    let a = &p.sys.a_d;
    let b = &p.sys.b_d;
    let dscale = p.dist_scale();
    let en = &p.sys.e_d * &dscale;
    let gn = &p.sys.g_mat * &dscale;
    let ht = p.sys.h_mat.transpose();

    let (ox, oh, od, og, ohh, ogg) = (0, nx, 2 * nx, 2 * nx + nd, 3 * nx + nd, 4 * nx + nd);
    let dim = 5 * nx + nd;
    let ident = |k: usize| DMatrix::<f64>::identity(k, k);
    {
        let blk = prob.add_block("invariance", dim);
        for (r, c, k) in lay.y_entries() {
            let e = unit_sym(nx, r, c);
            let nterm = (a * &e + &e * a.transpose() + &e * h.tau_v) * h.kappa_y;
            place(blk, Some(k), ox, ox, &nterm);
            place(blk, Some(k), ox, oh, &(&e * &ht * h.kappa_y));
        }
        for (r, c, k) in lay.l_entries() {
            let mut e = DMatrix::zeros(NU * n, nx);
            e[(r, c)] = 1.0;
            let bz = b * &e * h.kappa_y;
            place(blk, Some(k), ox, ox, &(&bz + bz.transpose()));
        }
        place(blk, Some(lay.gamma_alpha()), oh, oh, &(ident(nx) * (-1.0 / h.tau_h)));
        place(blk, None, ox, od, &en);
        place(blk, None, od, od, &(ident(nd) * -h.tau_d));
        place(blk, None, od, og, &gn.transpose());
        place(blk, Some(lay.gamma_beta()), og, og, &(ident(nx) * (-1.0 / h.tau_g)));
        place(blk, None, ox, ohh, &ident(nx));
        place(blk, None, ox, ogg, &ident(nx));
        place(blk, None, ohh, ohh, &(ident(nx) * -h.tau_h));
        place(blk, None, ogg, ogg, &(ident(nx) * -h.tau_g));
    }
    {
        let blk = prob.add_block("gain_bound", nx + NU * n);
        place(blk, Some(lay.kappa_l()), 0, 0, &(ident(nx) * -1.0));
        place(blk, None, nx, nx, &(ident(NU * n) * -1.0));
        for (r, c, k) in lay.l_entries() {
            blk.add(k, nx + r, c, 1.0);
        }
    }
    {
        let blk = prob.add_block("y_floor", nx);
        place(blk, None, 0, 0, &(ident(nx) * p.y_floor));
        for (r, c, k) in lay.y_entries() {
            blk.add(k, r, c, -1.0);
        }
    }
    {
        let blk = prob.add_block("y_cap", nx);
        place(blk, None, 0, 0, &(ident(nx) * -p.y_cap));
        for (r, c, k) in lay.y_entries() {
            blk.add(k, r, c, 1.0);
        }
    }
    prob.add_scalar(
        "alpha_bound",
        1.0 / (p.alpha_bar * p.alpha_bar) + STRICT_MARGIN,
        &[(lay.gamma_alpha(), -1.0)],
    );
    prob.add_scalar(
        "beta_bound",
        1.0 / (p.beta_bar * p.beta_bar) + STRICT_MARGIN,
        &[(lay.gamma_beta(), -1.0)],
    );
    Ok((prob, lay))
}

/// Largest eigenvalue of each constraint, re-assembled from the matrices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Residuals {
    pub invariance: f64,
    pub gain_bound: f64,
    pub y_floor: f64,
    pub y_cap: f64,
    pub alpha_bound: f64,
    pub beta_bound: f64,
}

impl Residuals {
    pub fn max(&self) -> f64 {
        [
            self.invariance,
            self.gain_bound,
            self.y_floor,
            self.y_cap,
            self.alpha_bound,
            self.beta_bound,
        ]
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn named(&self) -> [(&'static str, f64); 6] {
        [
            ("invariance", self.invariance),
            ("gain_bound", self.gain_bound),
            ("y_floor", self.y_floor),
            ("y_cap", self.y_cap),
            ("alpha_bound", self.alpha_bound),
            ("beta_bound", self.beta_bound),
        ]
    }
}

fn max_eig(m: DMatrix<f64>) -> f64 {
    let m = (&m + m.transpose()) * 0.5;
    SymmetricEigen::new(m).eigenvalues.max()
}

/// Substitutes a candidate into the constraint matrices, built directly from
/// the system data, and returns the largest eigenvalue of each.
pub fn verify(p: &SynthesisProblem, y: &DMatrix<f64>, l: &DMatrix<f64>, gamma_alpha: f64, gamma_beta: f64, kappa_l: f64) -> Residuals {
    let n = p.n();
    let nx = NX * n;
    let nd = ND * n;
    let h = p.hyper;
    let w = y * h.kappa_y;
    let z = l * h.kappa_y;
    let a = &p.sys.a_d;
    let b = &p.sys.b_d;
    let dscale = p.dist_scale();
    let en = &p.sys.e_d * &dscale;
    let gn = &p.sys.g_mat * &dscale;
    let hm = &p.sys.h_mat;

    let dim = 5 * nx + nd;
    let mut big = DMatrix::zeros(dim, dim);
    let nblk = a * &w + &w * a.transpose() + b * &z + z.transpose() * b.transpose() + &w * h.tau_v;
    let w_ht = &w * hm.transpose();
    let (ox, oh, od, og, ohh, ogg) = (0, nx, 2 * nx, 2 * nx + nd, 3 * nx + nd, 4 * nx + nd);
    let mut put = |r0: usize, c0: usize, m: &DMatrix<f64>| {
        big.view_mut((r0, c0), m.shape()).copy_from(m);
        if r0 != c0 {
            big.view_mut((c0, r0), (m.ncols(), m.nrows())).copy_from(&m.transpose());
        }
    };
    let eye = |k: usize| DMatrix::<f64>::identity(k, k);
    put(ox, ox, &nblk);
    put(ox, oh, &w_ht);
    put(oh, oh, &(eye(nx) * (-gamma_alpha / h.tau_h)));
    put(ox, od, &en);
    put(od, od, &(eye(nd) * -h.tau_d));
    put(od, og, &gn.transpose());
    put(og, og, &(eye(nx) * (-gamma_beta / h.tau_g)));
    put(ox, ohh, &eye(nx));
    put(ox, ogg, &eye(nx));
    put(ohh, ohh, &(eye(nx) * -h.tau_h));
    put(ogg, ogg, &(eye(nx) * -h.tau_g));

    let nu = NU * n;
    let mut gb = DMatrix::zeros(nx + nu, nx + nu);
    gb.view_mut((0, 0), (nx, nx)).copy_from(&(eye(nx) * -kappa_l));
    gb.view_mut((nx, 0), (nu, nx)).copy_from(l);
    gb.view_mut((0, nx), (nx, nu)).copy_from(&l.transpose());
    gb.view_mut((nx, nx), (nu, nu)).copy_from(&(eye(nu) * -1.0));

    Residuals {
        invariance: max_eig(big),
        gain_bound: max_eig(gb),
        y_floor: max_eig(eye(nx) * p.y_floor - y),
        y_cap: max_eig(y - eye(nx) * p.y_cap),
        alpha_bound: 1.0 / (p.alpha_bar * p.alpha_bar) + STRICT_MARGIN - gamma_alpha,
        beta_bound: 1.0 / (p.beta_bar * p.beta_bar) + STRICT_MARGIN - gamma_beta,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisResult {
    pub hyper: Hyper,
    pub y: DMatrix<f64>,
    pub l: DMatrix<f64>,
    pub gamma_alpha: f64,
    pub gamma_beta: f64,
    pub kappa_l: f64,
    pub k_gain: GainMatrix,
    pub p_lyap: DMatrix<f64>,
    pub alpha: f64,
    pub beta: f64,
    pub objective: f64,
    pub residuals: Residuals,
    pub iterations: usize,
}

impl SynthesisResult {
    pub fn p_norm(&self) -> f64 {
        SymmetricEigen::new(self.p_lyap.clone()).eigenvalues.amax()
    }

    pub fn certificate(&self) -> Certificate {
        Certificate {
            hyper: self.hyper,
            k_gain: self.k_gain.clone(),
            p_lyap: self.p_lyap.clone(),
            alpha: self.alpha,
            beta: self.beta,
        }
    }
}

/// The part of a synthesis result the analysis checks consume; this is what
/// gets persisted in a gain file.
#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    pub hyper: Hyper,
    pub k_gain: GainMatrix,
    pub p_lyap: DMatrix<f64>,
    pub alpha: f64,
    pub beta: f64,
}

/// Largest magnitude allowed outside the gain sparsity pattern.
pub const OFF_PATTERN_TOL: f64 = 1e-10;

/// `K = L Y^-1`, checked for conditioning and structure.
pub fn recover_gain(y: &DMatrix<f64>, l: &DMatrix<f64>) -> Result<GainMatrix> {
    let n = y.nrows() / NX;
    let eig = SymmetricEigen::new(y.clone()).eigenvalues;
    let (lo, hi) = (eig.min(), eig.max());
    if !(lo > 0.0) {
        return Err(Error::IllConditioned(f64::INFINITY));
    }
    let cond = hi / lo;
    if cond > 1e12 {
        return Err(Error::IllConditioned(cond));
    }
    let yinv = y.clone().cholesky().ok_or(Error::IllConditioned(cond))?.inverse();
    let k = l * yinv;
    let mut blocks = Vec::with_capacity(n);
    let scale = k.amax().max(1.0);
    for i in 0..n {
        for r in 0..NU {
            for c in 0..NX * n {
                let in_pattern = c / NX == i && (c % NX) / 2 == r;
                if !in_pattern && k[(NU * i + r, c)].abs() > OFF_PATTERN_TOL * scale {
                    return Err(Error::Solver(format!(
                        "gain entry ({}, {c}) = {:e} lies outside the block pattern",
                        NU * i + r,
                        k[(NU * i + r, c)]
                    )));
                }
            }
        }
        blocks.push([
            k[(NU * i, NX * i)],
            k[(NU * i, NX * i + 1)],
            k[(NU * i + 1, NX * i + 2)],
            k[(NU * i + 1, NX * i + 3)],
        ]);
    }
    let gain = GainMatrix::from_blocks(blocks, true)?;
    for (name, v) in GainMatrix::NAMES.iter().zip(&gain.blocks[0]) {
        if *v >= 0.0 {
            log::debug!("recovered {name} = {v:.4} is non-negative");
        }
    }
    Ok(gain)
}

/// Outcome of one hyperparameter point.
#[derive(Debug, Clone, PartialEq)]
pub enum PointOutcome {
    Feasible(Box<SynthesisResult>),
    Infeasible(String),
}

/// Solves one point and verifies the answer independently.
pub fn solve_point(p: &SynthesisProblem, opts: &SdpOptions) -> Result<PointOutcome> {
    let (mut prob, lay) = assemble_lmi(p)?;
    let sol = sdp::solve(&mut prob, opts);
    match sol.status {
        SdpStatus::Optimal => {}
        SdpStatus::Infeasible => return Ok(PointOutcome::Infeasible("infeasibility certificate".into())),
        other => {
            return Ok(PointOutcome::Infeasible(format!(
                "solver stopped with {other:?} after {} iterations (gap {:.2e}, infeasibilities {:.2e}/{:.2e})",
                sol.iterations, sol.rel_gap, sol.primal_infeas, sol.dual_infeas
            )))
        }
    }
    let v = &sol.y;
    let y = lay.y_matrix(v);
    let l = lay.l_matrix(v);
    let (ga, gb, kl) = (v[lay.gamma_alpha()], v[lay.gamma_beta()], v[lay.kappa_l()]);
    let residuals = verify(p, &y, &l, ga, gb, kl);
    if residuals.max() > RESIDUAL_TOL {
        return Ok(PointOutcome::Infeasible(format!(
            "verification failed: largest residual eigenvalue {:.3e}",
            residuals.max()
        )));
    }
    let k_gain = match recover_gain(&y, &l) {
        Ok(k) => k,
        Err(e) => return Ok(PointOutcome::Infeasible(e.to_string())),
    };
    let p_lyap = (&y * p.hyper.kappa_y)
        .cholesky()
        .ok_or(Error::IllConditioned(f64::INFINITY))?
        .inverse();
    Ok(PointOutcome::Feasible(Box::new(SynthesisResult {
        hyper: p.hyper,
        alpha: 1.0 / ga.sqrt(),
        beta: 1.0 / gb.sqrt(),
        y,
        l,
        gamma_alpha: ga,
        gamma_beta: gb,
        kappa_l: kl,
        k_gain,
        p_lyap,
        objective: sol.objective,
        residuals,
        iterations: sol.iterations,
    })))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::aggregate;
    use crate::presets;

    fn problem(kappa_y: f64) -> SynthesisProblem {
        let (ders, c) = presets::five_der_system();
        SynthesisProblem {
            sys: aggregate(&ders, &c).unwrap(),
            hyper: Hyper {
                kappa_y,
                tau_v: 1.0,
                tau_d: 1.0,
                tau_h: 0.1,
                tau_g: 0.1,
            },
            weights: [1.0; 3],
            alpha_bar: 1.0,
            beta_bar: 1.0,
            structure: BlockStructure::Shared,
            y_floor: 1e-2,
            y_cap: 1.0,
            s_bar: ders.iter().map(|d| d.s_bar).collect(),
        }
    }

    #[test]
    fn affine_form_matches_direct_assembly() {
        let p = problem(100.0);
        let (mut prob, lay) = assemble_lmi(&p).unwrap();
        let v: Vec<f64> = (0..lay.n_vars()).map(|i| 0.1 + 0.37 * i as f64).collect();
        let eig = prob.max_eigenvalues(&v);
        let r = verify(
            &p,
            &lay.y_matrix(&v),
            &lay.l_matrix(&v),
            v[lay.gamma_alpha()],
            v[lay.gamma_beta()],
            v[lay.kappa_l()],
        );
        let named = r.named();
        for (k, (name, val)) in named.iter().enumerate() {
            assert!((eig[k] - val).abs() < 1e-8 * (1.0 + val.abs()), "{name}: {} vs {val}", eig[k]);
        }
        // coefficients survive finalisation
        let _ = sdp::solve(&mut prob, &SdpOptions { max_iter: 0, ..Default::default() });
        assert_eq!(prob.max_eigenvalues(&v), eig);
    }

    #[test]
    fn rejects_nonpositive_multipliers() {
        let mut p = problem(100.0);
        p.hyper.tau_h = 0.0;
        assert!(assemble_lmi(&p).is_err());
        let mut p = problem(100.0);
        p.alpha_bar = 0.0;
        assert!(assemble_lmi(&p).is_err());
    }

    #[test]
    fn gain_round_trip() {
        let k0 = GainMatrix::uniform([-0.4, -1.2, -0.3, -2.0], 5, false).unwrap();
        let mut y = DMatrix::zeros(20, 20);
        for i in 0..5 {
            let o = 4 * i;
            y[(o, o)] = 0.8;
            y[(o, o + 1)] = 0.1;
            y[(o + 1, o)] = 0.1;
            y[(o + 1, o + 1)] = 0.5;
            y[(o + 2, o + 2)] = 0.3;
            y[(o + 2, o + 3)] = -0.05;
            y[(o + 3, o + 2)] = -0.05;
            y[(o + 3, o + 3)] = 0.9;
        }
        let l = k0.to_matrix() * &y;
        let k = recover_gain(&y, &l).unwrap();
        for (a, b) in k.blocks.iter().flatten().zip(k0.blocks.iter().flatten()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn singular_y_refused() {
        let y = DMatrix::<f64>::from_diagonal_element(4, 4, 1.0) - DMatrix::from_element(4, 4, 0.25);
        assert!(matches!(recover_gain(&y, &DMatrix::zeros(2, 4)), Err(Error::IllConditioned(_))));
    }

    #[test]
    fn reference_point_is_feasible() {
        let p = problem(1000.0);
        let PointOutcome::Feasible(r) = solve_point(&p, &SdpOptions::default()).unwrap() else {
            panic!("expected feasible")
        };
        assert!(r.residuals.max() <= RESIDUAL_TOL);
        assert!(r.alpha > 0.0 && r.alpha <= 1.0);
        assert!(r.beta > 0.0 && r.beta <= 1.0);
        assert!(r.k_gain.block_spread() < 1e-8);
    }
}
