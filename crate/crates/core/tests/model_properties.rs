use dapi_core::model::{
    aggregate, build_der_matrices, component_count, laplacian, CouplingSpec, DerParams, I_DOMEGA, I_DV, I_E, I_OMEGA, NX,
};
use dapi_core::{DMatrix, DVector};
use nalgebra::SymmetricEigen;
use proptest::prelude::*;

fn der_strategy() -> impl Strategy<Value = DerParams> {
    (
        1e-5..1e-3f64,
        1e-5..1e-3f64,
        0.005..0.2f64,
        0.2..5.0f64,
        0.2..5.0f64,
        0.0..2.0f64,
        1e3..2e4f64,
    )
        .prop_map(|(m, n, tau_c, k, kappa, xi, s)| DerParams {
            m,
            n,
            tau_c,
            k,
            kappa,
            xi,
            p_star: 0.0,
            q_star: 0.0,
            omega_star: 2.0 * std::f64::consts::PI * 60.0,
            v_star: 170.0,
            s_bar: s,
            q_rating: Some(s),
        })
}

/// Random DER set, link subset of the complete graph and positive couplings.
fn system_strategy() -> impl Strategy<Value = (Vec<DerParams>, CouplingSpec)> {
    (2usize..7).prop_flat_map(|n| {
        let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
        let np = pairs.len();
        (
            prop::collection::vec(der_strategy(), n),
            prop::collection::vec(any::<bool>(), np),
            prop::collection::vec(0.1..3.0f64, np),
            prop::collection::vec(0.1..3.0f64, np),
        )
            .prop_map(move |(ders, on, wa, wb)| {
                let links: Vec<(usize, usize)> = pairs.iter().zip(&on).filter(|p| *p.1).map(|p| *p.0).collect();
                let e = CouplingSpec::fundamental(n, &links).unwrap();
                let mut a = DMatrix::zeros(n, n);
                let mut b = DMatrix::zeros(n, n);
                for (l, &(i, j)) in pairs.iter().enumerate() {
                    if on[l] {
                        a[(i, j)] = wa[l];
                        a[(j, i)] = wa[l];
                        b[(i, j)] = wb[l];
                        b[(j, i)] = wb[l];
                    }
                }
                (ders, CouplingSpec::new(e, a, b).unwrap())
            })
    })
}

fn in_pattern_a(r: usize, c: usize) -> bool {
    matches!(
        (r, c),
        (I_DOMEGA, I_DOMEGA) | (I_DOMEGA, I_OMEGA) | (I_OMEGA, I_DOMEGA) | (I_DV, I_DV) | (I_DV, I_E) | (I_E, I_DV)
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn laplacian_rows_sum_to_zero((ders, c) in system_strategy()) {
        let sys = aggregate(&ders, &c).unwrap();
        for l in [&sys.lap_a, &sys.lap_b] {
            for r in 0..l.nrows() {
                prop_assert!(l.row(r).sum().abs() < 1e-12);
            }
        }
    }

    #[test]
    fn omega_rows_of_delta_a_match_laplacian((ders, c) in system_strategy(), seed in any::<u64>()) {
        let sys = aggregate(&ders, &c).unwrap();
        let n = ders.len();
        let mut s = seed;
        let x = DVector::from_fn(NX * n, |_, _| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        });
        let omega = DVector::from_fn(n, |i, _| x[NX * i + I_OMEGA]);
        let lo = laplacian(&c.a_live) * omega;
        let dax = &sys.delta_a * &x;
        for i in 0..n {
            let expect = -lo[i] / ders[i].k;
            prop_assert!((dax[NX * i + I_OMEGA] - expect).abs() < 1e-12 * (1.0 + expect.abs()));
            for r in [I_DOMEGA, I_DV, I_E] {
                prop_assert_eq!(dax[NX * i + r], 0.0);
            }
        }
    }

    #[test]
    fn zero_eigenvalues_count_components((ders, c) in system_strategy()) {
        let sys = aggregate(&ders, &c).unwrap();
        let ev = SymmetricEigen::new(sys.lap_a.clone()).eigenvalues;
        let zeros = ev.iter().filter(|v| v.abs() < 1e-9).count();
        prop_assert_eq!(zeros, component_count(&c.e_fund));
    }

    #[test]
    fn per_der_sparsity(p in der_strategy()) {
        let (a, b, e) = build_der_matrices(&p).unwrap();
        for r in 0..4 {
            for col in 0..4 {
                if !in_pattern_a(r, col) {
                    prop_assert_eq!(a[(r, col)], 0.0);
                }
            }
            for col in 0..2 {
                let b_on = (r == I_DOMEGA && col == 0) || (r == I_DV && col == 1);
                if !b_on {
                    prop_assert_eq!(b[(r, col)], 0.0);
                }
                if !b_on {
                    prop_assert_eq!(e[(r, col)], 0.0);
                }
            }
        }
    }

    #[test]
    fn doubling_tau_c_halves_its_entries(p in der_strategy()) {
        let mut q = p.clone();
        q.tau_c *= 2.0;
        let (a1, b1, e1) = build_der_matrices(&p).unwrap();
        let (a2, b2, e2) = build_der_matrices(&q).unwrap();
        for r in [I_DOMEGA, I_DV] {
            for c in 0..4 {
                prop_assert!((a2[(r, c)] - 0.5 * a1[(r, c)]).abs() <= 1e-15 * a1[(r, c)].abs());
            }
            for c in 0..2 {
                prop_assert!((b2[(r, c)] - 0.5 * b1[(r, c)]).abs() <= 1e-15 * b1[(r, c)].abs());
                prop_assert!((e2[(r, c)] - 0.5 * e1[(r, c)]).abs() <= 1e-15 * e1[(r, c)].abs());
            }
        }
        for r in [I_OMEGA, I_E] {
            for c in 0..4 {
                prop_assert_eq!(a2[(r, c)], a1[(r, c)]);
            }
        }
    }
}

#[test]
fn reference_entries_by_hand() {
    let p = dapi_core::presets::der(2);
    let (a, b, e) = build_der_matrices(&p).unwrap();
    let t = p.tau_c;
    assert_eq!(a[(I_DOMEGA, I_DOMEGA)], -1.0 / t);
    assert_eq!(a[(I_DOMEGA, I_OMEGA)], 1.0 / t);
    assert_eq!(a[(I_OMEGA, I_DOMEGA)], -1.0 / p.k);
    assert_eq!(a[(I_DV, I_DV)], -1.0 / t);
    assert_eq!(a[(I_DV, I_E)], 1.0 / t);
    assert_eq!(a[(I_E, I_DV)], -p.xi / p.kappa);
    assert_eq!(b[(I_DOMEGA, 0)], 1.0 / t);
    assert_eq!(b[(I_DV, 1)], 1.0 / t);
    assert_eq!(e[(I_DOMEGA, 0)], -p.m / t);
    assert_eq!(e[(I_DV, 1)], -p.n / t);
    // DER 3 droops half as hard as DER 1
    assert_eq!(dapi_core::presets::der(0).m, 2.0 * p.m);
}
