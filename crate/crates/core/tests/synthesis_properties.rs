use dapi_core::model::{aggregate, NU, NX};
use dapi_core::presets;
use dapi_core::synthesis::lmi::{BlockStructure, Hyper, PointOutcome, SynthesisProblem, SynthesisResult};
use dapi_core::synthesis::sdp::{solve, LmiProblem, SdpOptions, SdpStatus};
use dapi_core::synthesis::solve_point;
use dapi_core::DMatrix;
use nalgebra::SymmetricEigen;
use proptest::prelude::*;

fn problem() -> SynthesisProblem {
    let (ders, c) = presets::five_der_system();
    SynthesisProblem {
        sys: aggregate(&ders, &c).unwrap(),
        hyper: Hyper {
            kappa_y: 1000.0,
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

fn feasible(p: &SynthesisProblem) -> Option<SynthesisResult> {
    match solve_point(p, &SdpOptions::default()).unwrap() {
        PointOutcome::Feasible(r) => Some(*r),
        PointOutcome::Infeasible(_) => None,
    }
}

#[test]
fn two_by_two_toy_optimum() {
    let mut p = LmiProblem::new(1);
    p.objective[0] = 1.0;
    let b = p.add_block("psd", 2);
    b.add_const(0, 1, -1.0);
    b.add(0, 0, 0, -1.0);
    b.add(0, 1, 1, -1.0);
    let s = solve(&mut p, &SdpOptions::default());
    assert_eq!(s.status, SdpStatus::Optimal);
    assert!((s.y[0] - 1.0).abs() < 1e-6);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    /// `min t  s.t.  M - t I <= 0` is the largest eigenvalue of `M`.
    #[test]
    fn smallest_upper_bound_is_largest_eigenvalue(entries in prop::collection::vec(-2.0..2.0f64, 10)) {
        let mut m = DMatrix::zeros(4, 4);
        let mut it = entries.iter();
        for r in 0..4 {
            for c in r..4 {
                let v = *it.next().unwrap();
                m[(r, c)] = v;
                m[(c, r)] = v;
            }
        }
        let mut p = LmiProblem::new(1);
        p.objective[0] = 1.0;
        let b = p.add_block("bound", 4);
        for r in 0..4 {
            for c in r..4 {
                b.add_const(r, c, m[(r, c)]);
            }
            b.add(0, r, r, -1.0);
        }
        let s = solve(&mut p, &SdpOptions::default());
        prop_assert_eq!(s.status, SdpStatus::Optimal);
        let lmax = SymmetricEigen::new(m).eigenvalues.max();
        prop_assert!((s.y[0] - lmax).abs() < 1e-6, "{} vs {lmax}", s.y[0]);
    }
}

/// Rebuilds the invariance matrix from `(W, Z)` and confirms
/// `M <= 1e-7 I` with a Cholesky factorisation of `1e-7 I - M`.
#[test]
fn certificate_rechecked_by_cholesky() {
    let p = problem();
    let r = feasible(&p).expect("reference point is feasible");
    let n = 5;
    let (nx, nd) = (NX * n, 2 * n);
    let h = p.hyper;
    let w = &r.y * h.kappa_y;
    let z = &r.l * h.kappa_y;
    let a = &p.sys.a_d;
    let b = &p.sys.b_d;
    let d = p.dist_scale();
    let en = &p.sys.e_d * &d;
    let gn = &p.sys.g_mat * &d;
    let hm = &p.sys.h_mat;
    let dim = 5 * nx + nd;
    let mut m = DMatrix::zeros(dim, dim);
    let mut put = |r0: usize, c0: usize, blk: &DMatrix<f64>| {
        m.view_mut((r0, c0), blk.shape()).copy_from(blk);
        if r0 != c0 {
            m.view_mut((c0, r0), (blk.ncols(), blk.nrows())).copy_from(&blk.transpose());
        }
    };
    let eye = |k: usize| DMatrix::<f64>::identity(k, k);
    let nblk = a * &w + &w * a.transpose() + b * &z + z.transpose() * b.transpose() + &w * h.tau_v;
    put(0, 0, &nblk);
    put(0, nx, &(&w * hm.transpose()));
    put(nx, nx, &(eye(nx) * (-r.gamma_alpha / h.tau_h)));
    put(0, 2 * nx, &en);
    put(2 * nx, 2 * nx, &(eye(nd) * -h.tau_d));
    put(2 * nx, 2 * nx + nd, &gn.transpose());
    put(2 * nx + nd, 2 * nx + nd, &(eye(nx) * (-r.gamma_beta / h.tau_g)));
    put(0, 3 * nx + nd, &eye(nx));
    put(0, 4 * nx + nd, &eye(nx));
    put(3 * nx + nd, 3 * nx + nd, &(eye(nx) * -h.tau_h));
    put(4 * nx + nd, 4 * nx + nd, &(eye(nx) * -h.tau_g));
    assert!((eye(dim) * 1e-7 - &m).cholesky().is_some());

    let gain_blk = DMatrix::from_fn(nx + NU * n, nx + NU * n, |i, j| {
        if i < nx && j < nx {
            if i == j { -r.kappa_l } else { 0.0 }
        } else if i >= nx && j >= nx {
            if i == j { -1.0 } else { 0.0 }
        } else if i >= nx {
            r.l[(i - nx, j)]
        } else {
            r.l[(j - nx, i)]
        }
    });
    assert!((eye(nx + NU * n) * 1e-7 - gain_blk).cholesky().is_some());
    assert!((&r.y - eye(nx) * (p.y_floor - 1e-7)).cholesky().is_some());
    assert!(r.alpha > 0.0 && r.alpha <= p.alpha_bar);
    assert!(r.beta > 0.0 && r.beta <= p.beta_bar);
}

#[test]
fn per_der_blocks_close_under_recovery() {
    let mut p = problem();
    p.structure = BlockStructure::PerDer;
    let r = feasible(&p).expect("feasible");
    let k = &r.l * r.y.clone().try_inverse().unwrap();
    let scale = k.amax().max(1.0);
    for row in 0..k.nrows() {
        for col in 0..k.ncols() {
            let der = row / NU;
            let in_pattern = col / NX == der && (col % NX) / 2 == row % NU;
            if !in_pattern {
                assert!(k[(row, col)].abs() < 1e-10 * scale, "K[{row}][{col}] = {:e}", k[(row, col)]);
            }
        }
    }
    assert!(r.k_gain.block_spread() < 1e-8);
}

#[test]
fn relaxing_alpha_bar_never_raises_the_objective() {
    let mut objs = Vec::new();
    for ab in [0.4, 0.7, 1.0, 2.0] {
        let mut p = problem();
        p.alpha_bar = ab;
        objs.push(feasible(&p).map(|r| r.objective));
    }
    let mut last = f64::INFINITY;
    for o in objs.into_iter().flatten() {
        assert!(o <= last + 1e-6 * last.abs().max(1.0), "{o} after {last}");
        last = o;
    }
}

#[test]
fn tighter_disturbance_ball_stays_feasible() {
    let p = problem();
    assert!(feasible(&p).is_some());
    for s in [2.0f64, 4.0] {
        let mut q = problem();
        // S_D scales as 1 / s_bar^2
        q.s_bar.iter_mut().for_each(|v| *v /= s.sqrt());
        assert!(feasible(&q).is_some(), "infeasible at S scale {s}");
    }
}
