//! The five-DER, three-microgrid reference network and its attack scenarios.
//!
//! Microgrids: MG1 = {DER1, DER2}, MG2 = {DER3, DER4}, MG3 = {DER5}. Indices
//! in code are zero-based.

use std::f64::consts::PI;

use crate::control::{AttackKind, AttackTarget};
use crate::model::{CouplingSpec, DerParams, GainMatrix};
use crate::network::{GridTopology, LoadBus};
use crate::sim::{Event, EventKind, Scenario};

/// Links shared by the communication graph and the electrical network.
pub const LINKS: [(usize, usize); 5] = [(0, 1), (2, 3), (1, 2), (3, 4), (4, 0)];
pub const MICROGRIDS: [&[usize]; 3] = [&[0, 1], &[2, 3], &[4]];

pub const FREQ_DROOP: [f64; 5] = [1e-4, 1e-4, 5e-5, 1e-4, 1e-4];
pub const VOLT_DROOP: [f64; 5] = [2e-4, 2e-4, 1e-4, 2e-4, 2e-4];
pub const CAPACITY_VA: [f64; 5] = [5000.0, 5000.0, 10000.0, 5000.0, 5000.0];
pub const LOAD_P_W: [f64; 5] = [2500.0, 1500.0, 3000.0, 2000.0, 2000.0];
pub const LOAD_Q_VAR: [f64; 5] = [1200.0, 800.0, 1500.0, 1000.0, 900.0];
pub const LINE_SUSCEPTANCE_S: f64 = 0.7;

pub const EVENT_TIME_S: f64 = 10.0;
pub const HORIZON_S: f64 = 20.0;
pub const DT_S: f64 = 1e-3;

/// Connective-strength bounds reported for the reference design.
pub const REFERENCE_ALPHA: f64 = 0.1186;
pub const REFERENCE_BETA: f64 = 0.9880;

pub fn der(i: usize) -> DerParams {
    DerParams {
        m: FREQ_DROOP[i],
        n: VOLT_DROOP[i],
        tau_c: 1.0 / (2.0 * PI * 5.0),
        k: 1.0,
        kappa: 1.0,
        xi: 1.0,
        p_star: 0.0,
        q_star: 0.0,
        omega_star: 2.0 * PI * 60.0,
        v_star: 120.0 * 2f64.sqrt(),
        s_bar: CAPACITY_VA[i],
        q_rating: Some(CAPACITY_VA[i]),
    }
}

pub fn five_der_system() -> (Vec<DerParams>, CouplingSpec) {
    let ders = (0..5).map(der).collect();
    let e = CouplingSpec::fundamental(5, &LINKS).expect("static topology");
    let coupling = CouplingSpec::uniform(e, 1.0, 1.0).expect("static topology");
    (ders, coupling)
}

/// Electrical network with one local load bus per DER, all loads at zero.
pub fn five_der_grid() -> GridTopology {
    let mut g = GridTopology::from_lines(5, &LINKS, LINE_SUSCEPTANCE_S).expect("static topology");
    g.loads = (0..5).map(|i| LoadBus::local(format!("L{}", i + 1), i, 0.0, 0.0)).collect();
    g
}

fn load_steps() -> Vec<Event> {
    (0..5)
        .map(|bus| Event {
            t: 0.0,
            kind: EventKind::LoadStep {
                bus,
                p: LOAD_P_W[bus],
                q: LOAD_Q_VAR[bus],
            },
        })
        .collect()
}

/// Attack events of scenario `which` (1, 2 or 3).
pub fn attack_events(which: u8) -> Vec<Event> {
    match which {
        1 => vec![Event {
            t: EVENT_TIME_S,
            kind: EventKind::Attack {
                kind: AttackKind::ConfidentialityIsland,
                targets: AttackTarget::Ders(MICROGRIDS[1].to_vec()),
            },
        }],
        2 => {
            let cut = vec![(2, 3), (4, 0)];
            vec![
                Event {
                    t: EVENT_TIME_S,
                    kind: EventKind::LineCut(cut.clone()),
                },
                Event {
                    t: EVENT_TIME_S,
                    kind: EventKind::Attack {
                        kind: AttackKind::Fdi { a_offset: None, b_offset: None },
                        targets: AttackTarget::Links(cut),
                    },
                },
            ]
        }
        3 => vec![
            Event {
                t: EVENT_TIME_S,
                kind: EventKind::Attack {
                    kind: AttackKind::Dos { keep_voltage: false },
                    targets: AttackTarget::Links(vec![(0, 1)]),
                },
            },
            Event {
                t: EVENT_TIME_S + 2.0,
                kind: EventKind::LineCut(vec![(1, 2), (4, 0)]),
            },
        ],
        _ => panic!("scenario must be 1, 2 or 3"),
    }
}

/// Loads step on at t = 0, then the scenario's attack sequence.
pub fn scenario(which: u8, gain: GainMatrix) -> Scenario {
    let (ders, coupling) = five_der_system();
    let mut events = load_steps();
    events.extend(attack_events(which));
    Scenario {
        name: format!("scenario{which}"),
        ders,
        coupling,
        grid: five_der_grid(),
        events,
        horizon: HORIZON_S,
        dt: DT_S,
        gain,
        dapi_enabled: true,
        seed: 0,
    }
}

/// Load steps only; no attacks.
pub fn load_step_scenario(gain: GainMatrix) -> Scenario {
    let mut sc = scenario(1, gain);
    sc.name = "load_step".into();
    sc.events = load_steps();
    sc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{aggregate, component_count};
    use nalgebra::SymmetricEigen;

    #[test]
    fn reference_network_is_connected() {
        let (ders, c) = five_der_system();
        let sys = aggregate(&ders, &c).unwrap();
        let ev = SymmetricEigen::new(sys.lap_a.clone()).eigenvalues;
        assert_eq!(ev.iter().filter(|v| v.abs() < 1e-9).count(), 1);
        assert_eq!(component_count(&c.e_fund), 1);
        assert_eq!(c.links().len(), 5);
    }

    #[test]
    fn scenarios_validate() {
        for s in 1..=3 {
            scenario(s, GainMatrix::zero(5)).validate().unwrap();
        }
    }
}
