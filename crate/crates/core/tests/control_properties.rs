use dapi_core::control::{
    apply_attack, control_inputs, dapi_consensus_terms, feedback, state_derivative, AttackEvent, AttackKind, AttackTarget,
};
use dapi_core::model::{aggregate, GainMatrix, ND, NX};
use dapi_core::network::electrical_powers;
use dapi_core::presets;
use dapi_core::sim::{run, Event, EventKind, Scenario, Signal};
use dapi_core::{CouplingSpec, DMatrix, DVector, DerState, Disturbance, GridTopology, LoadBus};
use proptest::prelude::*;

fn vec_strategy(n: usize, scale: f64) -> impl Strategy<Value = DVector<f64>> {
    prop::collection::vec(-scale..scale, n).prop_map(DVector::from_vec)
}

fn gain_strategy(n: usize) -> impl Strategy<Value = GainMatrix> {
    prop::collection::vec(prop::array::uniform4(-3.0..3.0f64), n).prop_map(|b| GainMatrix::from_blocks(b, true).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn feedback_matches_dense_product(x in vec_strategy(20, 10.0), k in gain_strategy(5)) {
        let du = feedback(&x, &k);
        let dense = k.to_matrix() * &x;
        for i in 0..du.len() {
            prop_assert!((du[i] - dense[i]).abs() <= 1e-12 * (1.0 + dense[i].abs()));
        }
    }

    /// Base DAPI (K = 0, no attack) against a term-by-term transcription of
    /// the droop, consensus and voltage-integrator laws.
    #[test]
    fn base_vector_field_term_by_term(x in vec_strategy(20, 1.0), d in vec_strategy(10, 2000.0)) {
        let (ders, c) = presets::five_der_system();
        let sys = aggregate(&ders, &c).unwrap();
        let k = GainMatrix::zero(5);
        let u = control_inputs(&x, &k, true);
        let dx = state_derivative(&x, &d, &u, &sys, &ders);
        for i in 0..5 {
            let p = &ders[i];
            let (dw, om, dv, e) = (x[4 * i], x[4 * i + 1], x[4 * i + 2], x[4 * i + 3]);
            let (dp, dq) = (d[2 * i], d[2 * i + 1]);
            let mut cons_a = 0.0;
            let mut cons_b = 0.0;
            for j in 0..5 {
                cons_a += c.a_live[(i, j)] * (om - x[4 * j + 1]);
                cons_b += c.b_live[(i, j)] * (dq / p.q_rating.unwrap() - d[2 * j + 1] / ders[j].q_rating.unwrap());
            }
            let expect = [
                (-dw + om - p.m * dp) / p.tau_c,
                (-dw - cons_a) / p.k,
                (-dv + e - p.n * dq) / p.tau_c,
                (-p.xi * dv - cons_b) / p.kappa,
            ];
            for (r, v) in expect.iter().enumerate() {
                prop_assert!((dx[4 * i + r] - v).abs() <= 1e-12 * (1.0 + v.abs()), "der {i} row {r}: {} vs {v}", dx[4 * i + r]);
            }
        }
        // the standalone consensus routine agrees with the stacked field
        let states: Vec<DerState> = (0..5).map(|i| DerState { delta: 0.0, d_omega: x[4 * i], omega_c: x[4 * i + 1], d_v: x[4 * i + 2], e_c: x[4 * i + 3] }).collect();
        let dist: Vec<Disturbance> = (0..5).map(|i| Disturbance { d_p: d[2 * i], d_q: d[2 * i + 1] }).collect();
        let terms = dapi_consensus_terms(&states, &dist, &c, &ders).unwrap();
        for i in 0..5 {
            prop_assert!((terms[i].0 - dx[4 * i + 1]).abs() <= 1e-12 * (1.0 + dx[4 * i + 1].abs()));
            prop_assert!((terms[i].1 - dx[4 * i + 3]).abs() <= 1e-12 * (1.0 + dx[4 * i + 3].abs()));
        }
    }

    #[test]
    fn attacks_stay_inside_the_fundamental_pattern(
        kind in 0u8..3,
        picks in prop::collection::vec(0usize..5, 1..4),
        offset in prop::option::of(0.0..3.0f64),
    ) {
        let (_, c) = presets::five_der_system();
        let g = presets::five_der_grid();
        let (kind, targets) = match kind {
            0 => (AttackKind::ConfidentialityIsland, AttackTarget::Ders(picks.clone())),
            1 => (AttackKind::Fdi { a_offset: offset, b_offset: offset }, AttackTarget::Links(picks.iter().map(|&l| presets::LINKS[l]).collect())),
            _ => (AttackKind::Dos { keep_voltage: false }, AttackTarget::Links(picks.iter().map(|&l| presets::LINKS[l]).collect())),
        };
        let ev = AttackEvent { t_start: 10.0, kind, targets };
        let (c2, _) = apply_attack(&c, &g, &ev, 10.0).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                if c.e_fund[(i, j)] == 0.0 {
                    prop_assert_eq!(c2.a_live[(i, j)], 0.0);
                    prop_assert_eq!(c2.b_live[(i, j)], 0.0);
                }
            }
        }
        prop_assert_eq!(&c2.e_fund, &c.e_fund);
    }

    #[test]
    fn dos_leaves_power_flow_untouched(
        links in prop::collection::vec(0usize..5, 1..5),
        ang in prop::collection::vec(-0.01..0.01f64, 5),
    ) {
        let (ders, c) = presets::five_der_system();
        let mut g = presets::five_der_grid();
        for (i, l) in g.loads.iter_mut().enumerate() {
            l.p = presets::LOAD_P_W[i];
            l.q = presets::LOAD_Q_VAR[i];
        }
        let ev = AttackEvent {
            t_start: 0.0,
            kind: AttackKind::Dos { keep_voltage: false },
            targets: AttackTarget::Links(links.iter().map(|&l| presets::LINKS[l]).collect()),
        };
        let (_, g2) = apply_attack(&c, &g, &ev, 0.0).unwrap();
        let s: Vec<DerState> = ang.iter().map(|&a| DerState { delta: a, ..Default::default() }).collect();
        prop_assert_eq!(electrical_powers(&s, &ders, &g), electrical_powers(&s, &ders, &g2));
    }
}

fn three_der_scenario(perm: [usize; 3]) -> Scenario {
    // DER k of the permuted system is DER perm[k] of the original
    let base: Vec<_> = [0, 2, 4].iter().map(|&i| presets::der(i)).collect();
    let ders: Vec<_> = perm.iter().map(|&p| base[p].clone()).collect();
    let inv = |orig: usize| perm.iter().position(|&p| p == orig).unwrap();
    let lines = [(inv(0), inv(1)), (inv(1), inv(2))];
    let e = CouplingSpec::fundamental(3, &lines).unwrap();
    let mut a = DMatrix::zeros(3, 3);
    let mut b = DMatrix::zeros(3, 3);
    for (&(i, j), (wa, wb)) in lines.iter().zip([(1.0, 0.5), (2.0, 1.5)]) {
        a[(i, j)] = wa;
        a[(j, i)] = wa;
        b[(i, j)] = wb;
        b[(j, i)] = wb;
    }
    let coupling = CouplingSpec::new(e, a, b).unwrap();
    let mut grid = GridTopology::from_lines(3, &lines, 0.7).unwrap();
    let loads = [(1500.0, 700.0), (2500.0, 900.0), (800.0, 300.0)];
    grid.loads = (0..3).map(|k| LoadBus::local(format!("L{k}"), k, 0.0, 0.0)).collect();
    let gains = [[-0.4, 2.0, -0.1, 1.0], [-0.3, 1.5, -0.2, 0.8], [-0.5, 2.5, -0.3, 1.2]];
    let gain = GainMatrix::from_blocks(perm.iter().map(|&p| gains[p]).collect(), true).unwrap();
    let events = (0..3)
        .map(|k| Event {
            t: 0.0,
            kind: EventKind::LoadStep { bus: k, p: loads[perm[k]].0, q: loads[perm[k]].1 },
        })
        .chain(std::iter::once(Event {
            t: 0.3,
            kind: EventKind::Attack {
                kind: AttackKind::Dos { keep_voltage: false },
                targets: AttackTarget::Links(vec![lines[0]]),
            },
        }))
        .collect();
    Scenario {
        name: "perm".into(),
        ders,
        coupling,
        grid,
        events,
        horizon: 0.6,
        dt: 1e-3,
        gain,
        dapi_enabled: true,
        seed: 0,
    }
}

#[test]
fn permutation_equivariance() {
    let id = run(&three_der_scenario([0, 1, 2])).unwrap();
    for perm in [[2, 0, 1], [1, 0, 2], [2, 1, 0]] {
        let pl = run(&three_der_scenario(perm)).unwrap();
        assert_eq!(pl.len(), id.len());
        for k in 0..id.len() {
            for s in Signal::ALL {
                for (slot, &orig) in perm.iter().enumerate() {
                    let a = id.get(k, s, orig);
                    let b = pl.get(k, s, slot);
                    assert!((a - b).abs() <= 1e-10 * (1.0 + a.abs()), "{s:?} t={} der {orig}: {a} vs {b}", id.times[k]);
                }
            }
        }
    }
}

#[test]
fn dimensions_of_stacked_field() {
    let (ders, c) = presets::five_der_system();
    let sys = aggregate(&ders, &c).unwrap();
    let x = DVector::zeros(NX * 5);
    let d = DVector::zeros(ND * 5);
    let u = control_inputs(&x, &GainMatrix::zero(5), true);
    assert_eq!(state_derivative(&x, &d, &u, &sys, &ders), DVector::zeros(NX * 5));
}
