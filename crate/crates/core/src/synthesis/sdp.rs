//! Small dense primal-dual interior-point solver for linear matrix
//! inequalities.
//!
//! Problems are stated as
//!
//! ```text
//! minimise    c' y
//! subject to  F_b(y) = F_b0 + sum_i y_i F_bi  <= 0   for every block b
//! ```
//!
//! which is the dual standard form `max b'y, S = C - sum y_i A_i >= 0` with
//! `C = -F_0`, `A_i = F_i`, `b = -c`. The solver is an infeasible-start
//! path-following method with Nesterov-Todd scaling and a Mehrotra
//! predictor-corrector step.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};

/// Symmetric sparse matrix stored with both triangles explicit.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseSym {
    pub entries: Vec<(usize, usize, f64)>,
}

impl SparseSym {
    fn from_dense(m: &DMatrix<f64>) -> Self {
        let mut entries = Vec::new();
        for c in 0..m.ncols() {
            for r in 0..m.nrows() {
                let v = m[(r, c)];
                if v != 0.0 {
                    entries.push((r, c, v));
                }
            }
        }
        SparseSym { entries }
    }

    fn dot(&self, x: &DMatrix<f64>) -> f64 {
        self.entries.iter().map(|&(r, c, v)| v * x[(r, c)]).sum()
    }

    fn axpy_into(&self, a: f64, out: &mut DMatrix<f64>) {
        for &(r, c, v) in &self.entries {
            out[(r, c)] += a * v;
        }
    }

    fn frobenius(&self) -> f64 {
        self.entries.iter().map(|e| e.2 * e.2).sum::<f64>().sqrt()
    }
}

/// One symmetric affine block `F0 + sum_i y_i F_i`, constrained `<= 0`.
#[derive(Debug, Clone)]
pub struct LmiBlock {
    pub name: String,
    pub dim: usize,
    pub constant: DMatrix<f64>,
    /// Dense accumulators per variable while building.
    dense: Vec<Option<DMatrix<f64>>>,
    /// Finalised coefficients, one per variable (possibly empty).
    coeffs: Vec<SparseSym>,
}

impl LmiBlock {
    pub fn new(name: impl Into<String>, dim: usize, n_vars: usize) -> Self {
        LmiBlock {
            name: name.into(),
            dim,
            constant: DMatrix::zeros(dim, dim),
            dense: vec![None; n_vars],
            coeffs: Vec::new(),
        }
    }

    /// Adds `v` at `(r, c)` and `(c, r)` of the constant term (once if `r == c`).
    pub fn add_const(&mut self, r: usize, c: usize, v: f64) {
        self.constant[(r, c)] += v;
        if r != c {
            self.constant[(c, r)] += v;
        }
    }

    /// Adds `v * y_var` at `(r, c)` and `(c, r)`.
    pub fn add(&mut self, var: usize, r: usize, c: usize, v: f64) {
        let dim = self.dim;
        let m = self.dense[var].get_or_insert_with(|| DMatrix::zeros(dim, dim));
        m[(r, c)] += v;
        if r != c {
            m[(c, r)] += v;
        }
    }

    /// Coefficient matrix of `var` (dense copy; for diagnostics and tests).
    pub fn coefficient(&self, var: usize) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        if let Some(s) = self.coeffs.get(var) {
            s.axpy_into(1.0, &mut m);
        } else if let Some(Some(d)) = self.dense.get(var) {
            m.copy_from(d);
        }
        m
    }

    fn finalize(&mut self) {
        if self.coeffs.is_empty() {
            self.coeffs = self
                .dense
                .iter()
                .map(|d| d.as_ref().map(SparseSym::from_dense).unwrap_or_default())
                .collect();
            self.dense.clear();
        }
    }

    /// `F(y)` evaluated densely.
    pub fn evaluate(&self, y: &[f64]) -> DMatrix<f64> {
        let mut m = self.constant.clone();
        for (i, &yi) in y.iter().enumerate() {
            if yi == 0.0 {
                continue;
            }
            if let Some(s) = self.coeffs.get(i) {
                s.axpy_into(yi, &mut m);
            } else if let Some(Some(d)) = self.dense.get(i) {
                m += d * yi;
            }
        }
        m
    }
}

#[derive(Debug, Clone)]
pub struct LmiProblem {
    pub n_vars: usize,
    pub objective: Vec<f64>,
    pub blocks: Vec<LmiBlock>,
}

impl LmiProblem {
    pub fn new(n_vars: usize) -> Self {
        LmiProblem {
            n_vars,
            objective: vec![0.0; n_vars],
            blocks: Vec::new(),
        }
    }

    pub fn add_block(&mut self, name: impl Into<String>, dim: usize) -> &mut LmiBlock {
        self.blocks.push(LmiBlock::new(name, dim, self.n_vars));
        self.blocks.last_mut().expect("just pushed")
    }

    /// Scalar constraint `const + sum coeffs <= 0`.
    pub fn add_scalar(&mut self, name: impl Into<String>, constant: f64, terms: &[(usize, f64)]) {
        let b = self.add_block(name, 1);
        b.add_const(0, 0, constant);
        for &(v, c) in terms {
            b.add(v, 0, 0, c);
        }
    }

    /// Largest eigenvalue of each block at `y`.
    pub fn max_eigenvalues(&self, y: &[f64]) -> Vec<f64> {
        self.blocks
            .iter()
            .map(|b| {
                let m = b.evaluate(y);
                let m = (&m + m.transpose()) * 0.5;
                SymmetricEigen::new(m).eigenvalues.max()
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SdpOptions {
    pub max_iter: usize,
    pub gap_tol: f64,
    pub feas_tol: f64,
    pub step_fraction: f64,
}

impl Default for SdpOptions {
    fn default() -> Self {
        SdpOptions {
            max_iter: 100,
            gap_tol: 1e-7,
            feas_tol: 1e-8,
            step_fraction: 0.98,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SdpStatus {
    Optimal,
    /// No `y` satisfies the constraints; a certificate was found.
    Infeasible,
    /// The objective is unbounded below.
    Unbounded,
    MaxIterations,
    NumericalFailure,
}

#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub status: SdpStatus,
    pub y: Vec<f64>,
    /// `c' y`.
    pub objective: f64,
    pub iterations: usize,
    pub rel_gap: f64,
    pub primal_infeas: f64,
    pub dual_infeas: f64,
    /// Multipliers, one per block.
    pub multipliers: Vec<DMatrix<f64>>,
}

struct Scaling {
    g: DMatrix<f64>,
    g_inv: DMatrix<f64>,
    w: DMatrix<f64>,
    d: DVector<f64>,
}

fn nt_scaling(x: &DMatrix<f64>, s: &DMatrix<f64>) -> Option<Scaling> {
    let lx = Cholesky::new(x.clone())?.l();
    let ls = Cholesky::new(s.clone())?.l();
    let svd = (ls.transpose() * &lx).svd(true, true);
    let v = svd.v_t?.transpose();
    let d = svd.singular_values;
    if d.iter().any(|&v| !(v > 0.0)) {
        return None;
    }
    let inv_sqrt = DMatrix::from_diagonal(&d.map(|v| 1.0 / v.sqrt()));
    let sqrt = DMatrix::from_diagonal(&d.map(f64::sqrt));
    let g = &lx * &v * inv_sqrt;
    let lx_inv = lx.solve_lower_triangular(&DMatrix::identity(x.nrows(), x.nrows()))?;
    let g_inv = sqrt * v.transpose() * lx_inv;
    let w = &g * g.transpose();
    Some(Scaling { g, g_inv, w, d })
}

/// Largest `a` with `x + a dx >= 0`, or infinity.
fn max_step(x: &DMatrix<f64>, dx: &DMatrix<f64>) -> f64 {
    let Some(ch) = Cholesky::new(x.clone()) else { return 0.0 };
    let l = ch.l();
    let Some(t) = l.solve_lower_triangular(dx) else { return 0.0 };
    let Some(m) = l.solve_lower_triangular(&t.transpose()) else { return 0.0 };
    let m = (&m + m.transpose()) * 0.5;
    let lmin = SymmetricEigen::new(m).eigenvalues.min();
    if lmin >= 0.0 {
        f64::INFINITY
    } else {
        -1.0 / lmin
    }
}

fn inner(a: &[DMatrix<f64>], b: &[DMatrix<f64>]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.dot(y)).sum()
}

struct Data<'a> {
    blocks: &'a [LmiBlock],
    c: Vec<DMatrix<f64>>,
    b: DVector<f64>,
}

impl Data<'_> {
    fn a_op(&self, x: &[DMatrix<f64>]) -> DVector<f64> {
        DVector::from_fn(self.b.len(), |i, _| {
            self.blocks.iter().zip(x).map(|(blk, xb)| blk.coeffs[i].dot(xb)).sum()
        })
    }

    fn a_adj(&self, y: &DVector<f64>) -> Vec<DMatrix<f64>> {
        self.blocks
            .iter()
            .map(|blk| {
                let mut m = DMatrix::zeros(blk.dim, blk.dim);
                for (i, &yi) in y.iter().enumerate() {
                    if yi != 0.0 {
                        blk.coeffs[i].axpy_into(yi, &mut m);
                    }
                }
                m
            })
            .collect()
    }

    /// Schur complement `M_ij = sum_b <A_bi, W_b A_bj W_b>`.
    fn schur(&self, w: &[DMatrix<f64>]) -> DMatrix<f64> {
        let m = self.b.len();
        let mut out = DMatrix::zeros(m, m);
        for (blk, wb) in self.blocks.iter().zip(w) {
            for i in 0..m {
                let ai = &blk.coeffs[i].entries;
                if ai.is_empty() {
                    continue;
                }
                for j in i..m {
                    let aj = &blk.coeffs[j].entries;
                    if aj.is_empty() {
                        continue;
                    }
                    let mut acc = 0.0;
                    for &(a, bb, u) in ai {
                        for &(c, d, v) in aj {
                            acc += u * v * wb[(bb, c)] * wb[(d, a)];
                        }
                    }
                    out[(i, j)] += acc;
                }
            }
        }
        for i in 0..m {
            for j in 0..i {
                out[(i, j)] = out[(j, i)];
            }
        }
        out
    }
}

enum Factor {
    Chol(Cholesky<f64, nalgebra::Dyn>),
    Lu(nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>),
}

impl Factor {
    fn new(m: DMatrix<f64>) -> Option<Self> {
        if let Some(c) = Cholesky::new(m.clone()) {
            return Some(Factor::Chol(c));
        }
        let scale = m.diagonal().amax().max(1.0);
        let mut reg = m.clone();
        for i in 0..reg.nrows() {
            reg[(i, i)] += 1e-13 * scale;
        }
        if let Some(c) = Cholesky::new(reg) {
            return Some(Factor::Chol(c));
        }
        let lu = m.lu();
        if lu.is_invertible() {
            Some(Factor::Lu(lu))
        } else {
            None
        }
    }

    fn solve(&self, r: &DVector<f64>) -> Option<DVector<f64>> {
        match self {
            Factor::Chol(c) => Some(c.solve(r)),
            Factor::Lu(l) => l.solve(r),
        }
    }
}

pub fn solve(problem: &mut LmiProblem, opts: &SdpOptions) -> SdpSolution {
    for b in &mut problem.blocks {
        b.finalize();
    }
    let problem = &*problem;
    let m = problem.n_vars;
    let data = Data {
        blocks: &problem.blocks,
        c: problem.blocks.iter().map(|b| -&b.constant).collect(),
        b: DVector::from_iterator(m, problem.objective.iter().map(|v| -v)),
    };
    let n_tot: usize = problem.blocks.iter().map(|b| b.dim).sum();
    let nf = n_tot as f64;
    let norm_c = data.c.iter().map(|c| c.norm_squared()).sum::<f64>().sqrt();
    let norm_b = data.b.norm();
    let a_norms: Vec<f64> = (0..m)
        .map(|i| problem.blocks.iter().map(|b| b.coeffs[i].frobenius().powi(2)).sum::<f64>().sqrt())
        .collect();

    let xi0 = (0..m)
        .map(|i| (1.0 + data.b[i].abs()) / (1.0 + a_norms[i]))
        .fold(nf.sqrt().max(10.0_f64), f64::max);
    let eta0 = a_norms.iter().copied().fold(nf.sqrt().max(10.0_f64).max(norm_c), f64::max);
    let mut x: Vec<DMatrix<f64>> = problem.blocks.iter().map(|b| DMatrix::identity(b.dim, b.dim) * xi0).collect();
    let mut s: Vec<DMatrix<f64>> = problem.blocks.iter().map(|b| DMatrix::identity(b.dim, b.dim) * eta0).collect();
    let mut y = DVector::zeros(m);

    let mut sol = SdpSolution {
        status: SdpStatus::MaxIterations,
        y: y.as_slice().to_vec(),
        objective: 0.0,
        iterations: 0,
        rel_gap: f64::INFINITY,
        primal_infeas: f64::INFINITY,
        dual_infeas: f64::INFINITY,
        multipliers: x.clone(),
    };

    for iter in 0..=opts.max_iter {
        let ax = data.a_op(&x);
        let r_p = &data.b - &ax;
        let aty = data.a_adj(&y);
        let r_d: Vec<DMatrix<f64>> = (0..x.len()).map(|k| &data.c[k] - &s[k] - &aty[k]).collect();
        let pobj = inner(&data.c, &x);
        let dobj = data.b.dot(&y);
        let mu = inner(&x, &s) / nf;
        let rel_gap = (pobj - dobj).abs().max(mu * nf) / (1.0 + pobj.abs() + dobj.abs());
        let pinf = r_p.norm() / (1.0 + norm_b);
        let dinf = r_d.iter().map(|r| r.norm_squared()).sum::<f64>().sqrt() / (1.0 + norm_c);

        sol.y = y.as_slice().to_vec();
        sol.objective = -dobj;
        sol.iterations = iter;
        sol.rel_gap = rel_gap;
        sol.primal_infeas = pinf;
        sol.dual_infeas = dinf;
        sol.multipliers = x.clone();

        log::trace!("sdp it {iter}: pobj {pobj:.6e} dobj {dobj:.6e} gap {rel_gap:.2e} pinf {pinf:.2e} dinf {dinf:.2e}");
        if rel_gap <= opts.gap_tol && pinf <= opts.feas_tol && dinf <= opts.feas_tol {
            sol.status = SdpStatus::Optimal;
            return sol;
        }
        // certificate of an empty feasible set: X >= 0, A(X) ~ 0, <C, X> < 0
        if pobj < 0.0 && ax.norm() / -pobj < opts.feas_tol {
            sol.status = SdpStatus::Infeasible;
            return sol;
        }
        if dobj > 0.0 {
            let ray: f64 = aty.iter().zip(&s).map(|(a, sb)| (a + sb).norm_squared()).sum::<f64>().sqrt();
            if ray / dobj < opts.feas_tol && dinf > 0.0 && dobj > 1e10 * (1.0 + norm_c) {
                sol.status = SdpStatus::Unbounded;
                return sol;
            }
        }
        if iter == opts.max_iter {
            break;
        }

        let Some(sc): Option<Vec<Scaling>> = x.iter().zip(&s).map(|(xb, sb)| nt_scaling(xb, sb)).collect() else {
            sol.status = SdpStatus::NumericalFailure;
            return sol;
        };
        let w: Vec<DMatrix<f64>> = sc.iter().map(|c| c.w.clone()).collect();
        let Some(fac) = Factor::new(data.schur(&w)) else {
            sol.status = SdpStatus::NumericalFailure;
            return sol;
        };
        let wrdw: Vec<DMatrix<f64>> = (0..x.len()).map(|k| &w[k] * &r_d[k] * &w[k]).collect();

        let direction = |rhat: &[DMatrix<f64>]| -> Option<(DVector<f64>, Vec<DMatrix<f64>>, Vec<DMatrix<f64>>)> {
            let rc: Vec<DMatrix<f64>> = sc
                .iter()
                .zip(rhat)
                .map(|(c, r)| {
                    let mut t = r.clone();
                    for i in 0..t.nrows() {
                        for j in 0..t.ncols() {
                            t[(i, j)] /= c.d[i] + c.d[j];
                        }
                    }
                    &c.g * t * c.g.transpose()
                })
                .collect();
            let tmp: Vec<DMatrix<f64>> = (0..x.len()).map(|k| &rc[k] - &wrdw[k]).collect();
            let rhs = &r_p - data.a_op(&tmp);
            let dy = fac.solve(&rhs)?;
            let atdy = data.a_adj(&dy);
            let ds: Vec<DMatrix<f64>> = (0..x.len()).map(|k| &r_d[k] - &atdy[k]).collect();
            let dx: Vec<DMatrix<f64>> = (0..x.len())
                .map(|k| {
                    let m = &rc[k] - &w[k] * &ds[k] * &w[k];
                    (&m + m.transpose()) * 0.5
                })
                .collect();
            Some((dy, dx, ds))
        };
        let steps = |dx: &[DMatrix<f64>], ds: &[DMatrix<f64>]| {
            let ap = x.iter().zip(dx).map(|(a, b)| max_step(a, b)).fold(f64::INFINITY, f64::min);
            let ad = s.iter().zip(ds).map(|(a, b)| max_step(a, b)).fold(f64::INFINITY, f64::min);
            (ap, ad)
        };

        // predictor
        let r_aff: Vec<DMatrix<f64>> = sc.iter().map(|c| DMatrix::from_diagonal(&c.d.map(|v| -2.0 * v * v))).collect();
        let Some((_, dxa, dsa)) = direction(&r_aff) else {
            sol.status = SdpStatus::NumericalFailure;
            return sol;
        };
        let (ap, ad) = steps(&dxa, &dsa);
        let (ap, ad) = (ap.min(1.0), ad.min(1.0));
        let mu_aff = (0..x.len())
            .map(|k| (&x[k] + &dxa[k] * ap).dot(&(&s[k] + &dsa[k] * ad)))
            .sum::<f64>()
            / nf;
        let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);

        // corrector
        let r_cor: Vec<DMatrix<f64>> = sc
            .iter()
            .enumerate()
            .map(|(k, c)| {
                let xh = &c.g_inv * &dxa[k] * c.g_inv.transpose();
                let sh = c.g.transpose() * &dsa[k] * &c.g;
                let mut r = -(&xh * &sh + &sh * &xh);
                for i in 0..r.nrows() {
                    r[(i, i)] += 2.0 * sigma * mu - 2.0 * c.d[i] * c.d[i];
                }
                r
            })
            .collect();
        let Some((dy, dx, ds)) = direction(&r_cor) else {
            sol.status = SdpStatus::NumericalFailure;
            return sol;
        };
        let (ap, ad) = steps(&dx, &ds);
        let ap = (opts.step_fraction * ap).min(1.0);
        let ad = (opts.step_fraction * ad).min(1.0);
        for k in 0..x.len() {
            x[k] += &dx[k] * ap;
            s[k] += &ds[k] * ad;
            x[k] = (&x[k] + x[k].transpose()) * 0.5;
            s[k] = (&s[k] + s[k].transpose()) * 0.5;
        }
        y += dy * ad;
    }
    sol
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_two() {
        // minimise t subject to [[t, 1], [1, t]] >= 0
        let mut p = LmiProblem::new(1);
        p.objective[0] = 1.0;
        let b = p.add_block("psd", 2);
        b.add_const(0, 1, -1.0);
        b.add(0, 0, 0, -1.0);
        b.add(0, 1, 1, -1.0);
        let s = solve(&mut p, &SdpOptions::default());
        assert_eq!(s.status, SdpStatus::Optimal);
        assert!((s.y[0] - 1.0).abs() < 1e-6, "t = {}", s.y[0]);
    }

    #[test]
    fn linear_program_as_scalar_blocks() {
        // minimise x + 2y subject to x >= 1, y >= 2, x + y >= 4
        let mut p = LmiProblem::new(2);
        p.objective = vec![1.0, 2.0];
        p.add_scalar("x", 1.0, &[(0, -1.0)]);
        p.add_scalar("y", 2.0, &[(1, -1.0)]);
        p.add_scalar("sum", 4.0, &[(0, -1.0), (1, -1.0)]);
        let s = solve(&mut p, &SdpOptions::default());
        assert_eq!(s.status, SdpStatus::Optimal);
        assert!((s.objective - 6.0).abs() < 1e-6);
        assert!((s.y[0] - 2.0).abs() < 1e-5);
    }

    #[test]
    fn detects_infeasibility() {
        // t <= -1 and t >= 1
        let mut p = LmiProblem::new(1);
        p.objective[0] = 1.0;
        p.add_scalar("upper", 1.0, &[(0, 1.0)]);
        p.add_scalar("lower", 1.0, &[(0, -1.0)]);
        let s = solve(&mut p, &SdpOptions::default());
        assert_eq!(s.status, SdpStatus::Infeasible);
    }

    #[test]
    fn max_step_of_identity() {
        let x = DMatrix::<f64>::identity(3, 3);
        assert!((max_step(&x, &(-&x * 2.0)) - 0.5).abs() < 1e-12);
        assert_eq!(max_step(&x, &x), f64::INFINITY);
    }
}
