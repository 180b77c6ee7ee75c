//! Fixed-step RK4 scenario runner.
//!
//! Records are taken on the uniform grid `t_k = k dt`. Events falling strictly
//! inside a step split it, so every RK4 stage sees one configuration. The
//! disturbance stored at an event instant is the post-event one.

use std::fmt::Write as _;
use std::io::{Read, Write};

use nalgebra::DVector;

use crate::control::{apply_attack, control_inputs, state_derivative, AttackEvent, AttackKind, AttackTarget};
use crate::error::{Error, Result};
use crate::model::{aggregate, CouplingSpec, DerParams, GainMatrix, SystemMatrices, I_E, I_OMEGA, ND, NX};
use crate::network::{apply_physical_island, electrical_powers, DerState, GridTopology};

#[derive(Debug, Clone, PartialEq)]
pub enum EventKind {
    /// Sets the demand of load bus `bus`.
    LoadStep { bus: usize, p: f64, q: f64 },
    Attack { kind: AttackKind, targets: AttackTarget },
    /// Opens electrical lines without touching communication.
    LineCut(Vec<(usize, usize)>),
    /// Turns the secondary layer on or off.
    Dapi(bool),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub t: f64,
    pub kind: EventKind,
}

impl Event {
    pub fn describe(&self) -> String {
        let links = |l: &[(usize, usize)]| {
            l.iter().map(|(i, j)| format!("{}-{}", i + 1, j + 1)).collect::<Vec<_>>().join(",")
        };
        let target = |t: &AttackTarget| match t {
            AttackTarget::Ders(d) => format!("ders={}", d.iter().map(|i| (i + 1).to_string()).collect::<Vec<_>>().join(",")),
            AttackTarget::Links(l) => format!("links={}", links(l)),
        };
        match &self.kind {
            EventKind::LoadStep { bus, p, q } => format!("load_step bus={} p={p} q={q}", bus + 1),
            EventKind::Attack { kind, targets } => {
                let k = match kind {
                    AttackKind::ConfidentialityIsland => "confidentiality_island".to_string(),
                    AttackKind::Fdi { a_offset, b_offset } => format!(
                        "fdi a_offset={} b_offset={}",
                        a_offset.map_or("nominal".into(), |v| v.to_string()),
                        b_offset.map_or("nominal".into(), |v| v.to_string())
                    ),
                    AttackKind::Dos { keep_voltage } => format!("dos keep_voltage={keep_voltage}"),
                };
                format!("{k} {}", target(targets))
            }
            EventKind::LineCut(l) => format!("line_cut links={}", links(l)),
            EventKind::Dapi(on) => format!("dapi enabled={on}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub ders: Vec<DerParams>,
    pub coupling: CouplingSpec,
    pub grid: GridTopology,
    pub events: Vec<Event>,
    pub horizon: f64,
    pub dt: f64,
    pub gain: GainMatrix,
    pub dapi_enabled: bool,
    pub seed: u64,
}

/// One constant configuration of the network between two event instants.
#[derive(Debug, Clone, PartialEq)]
pub struct Configuration {
    pub t_start: f64,
    pub coupling: CouplingSpec,
    pub grid: GridTopology,
    pub dapi_enabled: bool,
}

impl Configuration {
    pub fn system(&self, ders: &[DerParams]) -> Result<SystemMatrices> {
        aggregate(ders, &self.coupling)
    }
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        let n = self.ders.len();
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::Scenario(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.horizon > 0.0) {
            return Err(Error::Scenario(format!("horizon must be positive, got {}", self.horizon)));
        }
        let steps = self.horizon / self.dt;
        if (steps - steps.round()).abs() > 1e-6 {
            return Err(Error::Scenario(format!(
                "horizon {} is not a whole number of steps of {}",
                self.horizon, self.dt
            )));
        }
        if self.coupling.n_ders != n || self.grid.n_buses() != n || self.gain.n_ders() != n {
            return Err(Error::Dimension(format!(
                "{n} DERs, coupling for {}, grid with {} buses, gain for {}",
                self.coupling.n_ders,
                self.grid.n_buses(),
                self.gain.n_ders()
            )));
        }
        self.grid.validate()?;
        let mut last = f64::NEG_INFINITY;
        for e in &self.events {
            if e.t < last {
                return Err(Error::Scenario("events are not time-ordered".into()));
            }
            if e.t < 0.0 || e.t > self.horizon {
                return Err(Error::Scenario(format!("event at t = {} outside [0, {}]", e.t, self.horizon)));
            }
            if let EventKind::LoadStep { bus, .. } = e.kind {
                if bus >= self.grid.loads.len() {
                    return Err(Error::UnknownTarget(format!("load bus {}", bus + 1)));
                }
            }
            last = e.t;
        }
        Ok(())
    }

    fn steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }

    /// Replays the event list without integrating, returning every distinct
    /// configuration in time order. Events at the same instant are merged.
    pub fn configurations(&self) -> Result<Vec<Configuration>> {
        self.validate()?;
        let mut cur = Configuration {
            t_start: 0.0,
            coupling: self.coupling.clone(),
            grid: self.grid.clone(),
            dapi_enabled: self.dapi_enabled,
        };
        let mut out: Vec<Configuration> = Vec::new();
        for e in &self.events {
            if e.t > cur.t_start {
                out.push(cur.clone());
                cur.t_start = e.t;
            }
            apply_event(&mut cur, e)?;
        }
        out.push(cur);
        Ok(out)
    }
}

fn apply_event(cfg: &mut Configuration, e: &Event) -> Result<()> {
    match &e.kind {
        EventKind::LoadStep { bus, p, q } => {
            let l = cfg
                .grid
                .loads
                .get_mut(*bus)
                .ok_or_else(|| Error::UnknownTarget(format!("load bus {}", bus + 1)))?;
            l.p = *p;
            l.q = *q;
        }
        EventKind::Attack { kind, targets } => {
            let ev = AttackEvent {
                t_start: e.t,
                kind: kind.clone(),
                targets: targets.clone(),
            };
            let (c, g) = apply_attack(&cfg.coupling, &cfg.grid, &ev, e.t)?;
            cfg.coupling = c;
            cfg.grid = g;
        }
        EventKind::LineCut(lines) => cfg.grid = apply_physical_island(&cfg.grid, lines)?,
        EventKind::Dapi(on) => cfg.dapi_enabled = *on,
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Signal {
    Delta,
    DOmega,
    OmegaC,
    DV,
    EC,
    DP,
    DQ,
    UOmega,
    UV,
}

impl Signal {
    pub const ALL: [Signal; 9] = [
        Signal::Delta,
        Signal::DOmega,
        Signal::OmegaC,
        Signal::DV,
        Signal::EC,
        Signal::DP,
        Signal::DQ,
        Signal::UOmega,
        Signal::UV,
    ];

    pub fn column(self) -> &'static str {
        match self {
            Signal::Delta => "delta",
            Signal::DOmega => "domega",
            Signal::OmegaC => "Omega",
            Signal::DV => "dV",
            Signal::EC => "e",
            Signal::DP => "dp",
            Signal::DQ => "dq",
            Signal::UOmega => "u_omega",
            Signal::UV => "u_v",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventMarker {
    pub t: f64,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryLog {
    pub n_ders: usize,
    pub times: Vec<f64>,
    /// `data[k][s * n + i]` for record `k`, signal `s`, DER `i`.
    data: Vec<Vec<f64>>,
    pub events: Vec<EventMarker>,
    pub clamp_count: usize,
}

impl TrajectoryLog {
    fn new(n: usize) -> Self {
        TrajectoryLog {
            n_ders: n,
            times: Vec::new(),
            data: Vec::new(),
            events: Vec::new(),
            clamp_count: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn get(&self, k: usize, s: Signal, i: usize) -> f64 {
        self.data[k][s.index() * self.n_ders + i]
    }

    pub fn series(&self, s: Signal, i: usize) -> Vec<f64> {
        (0..self.len()).map(|k| self.get(k, s, i)).collect()
    }

    /// Stacked `[dω, Ω, dV, e]` at record `k`.
    pub fn state(&self, k: usize) -> DVector<f64> {
        let n = self.n_ders;
        DVector::from_fn(NX * n, |r, _| {
            let i = r / NX;
            let s = [Signal::DOmega, Signal::OmegaC, Signal::DV, Signal::EC][r % NX];
            self.get(k, s, i)
        })
    }

    /// Stacked `[dp, dq]` at record `k`.
    pub fn disturbance(&self, k: usize) -> DVector<f64> {
        let n = self.n_ders;
        DVector::from_fn(ND * n, |r, _| {
            let s = if r % ND == 0 { Signal::DP } else { Signal::DQ };
            self.get(k, s, r / ND)
        })
    }

    pub fn terminal_state(&self) -> Vec<f64> {
        self.data.last().cloned().unwrap_or_default()
    }

    pub fn header(&self) -> Vec<String> {
        let mut h = vec!["t".to_string()];
        for i in 0..self.n_ders {
            for s in Signal::ALL {
                h.push(format!("der{}_{}", i + 1, s.column()));
            }
        }
        h
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(self.header())?;
        let n = self.n_ders;
        for (k, t) in self.times.iter().enumerate() {
            let mut row = Vec::with_capacity(1 + 9 * n);
            row.push(t.to_string());
            for i in 0..n {
                for s in Signal::ALL {
                    row.push(self.get(k, s, i).to_string());
                }
            }
            wr.write_record(&row)?;
        }
        wr.flush()?;
        Ok(())
    }

    /// Parses a log written by [`TrajectoryLog::write_csv`]. Event markers
    /// and clamp counts are not part of the CSV.
    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let header: Vec<String> = rd.headers()?.iter().map(str::to_string).collect();
        if header.first().map(String::as_str) != Some("t") || !(header.len() - 1).is_multiple_of(9) || header.len() < 10 {
            return Err(Error::Scenario("malformed trajectory header".into()));
        }
        let n = (header.len() - 1) / 9;
        let mut log = TrajectoryLog::new(n);
        if header != log.header() {
            return Err(Error::Scenario("trajectory columns are not in the expected order".into()));
        }
        for rec in rd.records() {
            let rec = rec?;
            let vals: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
            let vals = vals.map_err(|e| Error::Scenario(format!("bad number in trajectory: {e}")))?;
            if vals.len() != header.len() {
                return Err(Error::Scenario("ragged trajectory row".into()));
            }
            log.times.push(vals[0]);
            let mut row = vec![0.0; 9 * n];
            for i in 0..n {
                for (si, s) in Signal::ALL.iter().enumerate() {
                    row[s.index() * n + i] = vals[1 + 9 * i + si];
                }
            }
            log.data.push(row);
        }
        Ok(log)
    }

    /// Event sidecar as plain text, one event per line.
    pub fn events_text(&self) -> String {
        let mut s = String::new();
        for e in &self.events {
            let _ = writeln!(s, "t={} {}", e.t, e.label);
        }
        let _ = writeln!(s, "clamp_count={}", self.clamp_count);
        s
    }
}

struct Dynamics<'a> {
    ders: &'a [DerParams],
    gain: &'a GainMatrix,
    sys: SystemMatrices,
    cfg: Configuration,
}

impl Dynamics<'_> {
    fn new<'a>(ders: &'a [DerParams], gain: &'a GainMatrix, cfg: Configuration) -> Result<Dynamics<'a>> {
        Ok(Dynamics {
            sys: cfg.system(ders)?,
            ders,
            gain,
            cfg,
        })
    }

    fn split(&self, y: &DVector<f64>) -> (DVector<f64>, Vec<DerState>) {
        let n = self.ders.len();
        let x = y.rows(0, NX * n).into_owned();
        let states = (0..n)
            .map(|i| DerState {
                delta: y[NX * n + i],
                d_omega: x[NX * i],
                omega_c: x[NX * i + 1],
                d_v: x[NX * i + 2],
                e_c: x[NX * i + 3],
            })
            .collect();
        (x, states)
    }

    /// Returns `(dy/dt, d, u, clamped)`.
    fn eval(&self, y: &DVector<f64>) -> (DVector<f64>, DVector<f64>, Vec<crate::control::ControlInput>, usize) {
        let n = self.ders.len();
        let (x, states) = self.split(y);
        let flow = electrical_powers(&states, self.ders, &self.cfg.grid);
        let d = DVector::from_fn(ND * n, |r, _| {
            let f = flow.disturbances[r / ND];
            if r % ND == 0 {
                f.d_p
            } else {
                f.d_q
            }
        });
        let u = control_inputs(&x, self.gain, self.cfg.dapi_enabled);
        let mut dx = state_derivative(&x, &d, &u, &self.sys, self.ders);
        if !self.cfg.dapi_enabled {
            for i in 0..n {
                dx[NX * i + I_OMEGA] = 0.0;
                dx[NX * i + I_E] = 0.0;
            }
        }
        let mut dy = DVector::zeros(y.len());
        dy.rows_mut(0, NX * n).copy_from(&dx);
        for i in 0..n {
            dy[NX * n + i] = x[NX * i];
        }
        (dy, d, u, flow.clamped)
    }

    fn rk4(&self, y: &DVector<f64>, h: f64) -> DVector<f64> {
        let k1 = self.eval(y).0;
        let k2 = self.eval(&(y + &k1 * (h / 2.0))).0;
        let k3 = self.eval(&(y + &k2 * (h / 2.0))).0;
        let k4 = self.eval(&(y + &k3 * h)).0;
        y + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
    }
}

/// Integrates the scenario from the zero state.
pub fn run(sc: &Scenario) -> Result<TrajectoryLog> {
    let configs = sc.configurations()?;
    let n = sc.ders.len();
    let steps = sc.steps();
    let tol = 1e-9 * sc.dt;
    let mut log = TrajectoryLog::new(n);
    let mut y = DVector::zeros(5 * n);
    let mut next_cfg = 1;
    let mut dyn_ = Dynamics::new(&sc.ders, &sc.gain, configs[0].clone())?;
    let mut ev_idx = 0;
    let mut warned = false;

    let mark = |log: &mut TrajectoryLog, ev_idx: &mut usize, upto: f64| {
        while *ev_idx < sc.events.len() && sc.events[*ev_idx].t <= upto + tol {
            let e = &sc.events[*ev_idx];
            log::info!("{}: t = {} {}", sc.name, e.t, e.describe());
            log.events.push(EventMarker { t: e.t, label: e.describe() });
            *ev_idx += 1;
        }
    };

    let mut t: f64 = 0.0;
    for k in 0..=steps {
        let tk = k as f64 * sc.dt;
        // configuration switches landing on this grid point
        while next_cfg < configs.len() && configs[next_cfg].t_start <= tk + tol {
            dyn_ = Dynamics::new(&sc.ders, &sc.gain, configs[next_cfg].clone())?;
            next_cfg += 1;
        }
        mark(&mut log, &mut ev_idx, tk);

        let (_, d, u, clamped) = dyn_.eval(&y);
        if clamped > 0 && !warned {
            log::warn!("{}: power deviation clamped to capacity at t = {tk}", sc.name);
            warned = true;
        }
        log.clamp_count += clamped;
        let mut row = vec![0.0; 9 * n];
        for i in 0..n {
            let vals = [
                y[NX * n + i],
                y[NX * i],
                y[NX * i + 1],
                y[NX * i + 2],
                y[NX * i + 3],
                d[ND * i],
                d[ND * i + 1],
                u[i].u_omega,
                u[i].u_v,
            ];
            for (s, v) in Signal::ALL.iter().zip(vals) {
                row[s.index() * n + i] = v;
            }
        }
        log.times.push(tk);
        log.data.push(row);

        if !y.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite { t: tk, log: Box::new(log) });
        }
        if k == steps {
            break;
        }

        let t_end = (k + 1) as f64 * sc.dt;
        t = t.max(tk);
        while next_cfg < configs.len() && configs[next_cfg].t_start < t_end - tol {
            let ts = configs[next_cfg].t_start;
            y = dyn_.rk4(&y, ts - t);
            t = ts;
            dyn_ = Dynamics::new(&sc.ders, &sc.gain, configs[next_cfg].clone())?;
            next_cfg += 1;
            mark(&mut log, &mut ev_idx, ts);
        }
        y = dyn_.rk4(&y, t_end - t);
        t = t_end;
    }
    if log.clamp_count > 0 {
        log::warn!("{}: {} clamped power samples", sc.name, log.clamp_count);
    }
    Ok(log)
}

/// Runs the scenario with `K = 0` and with `gain`, everything else equal.
pub fn run_comparison(sc: &Scenario, gain: &GainMatrix) -> Result<(TrajectoryLog, TrajectoryLog)> {
    let mut base = sc.clone();
    base.gain = GainMatrix::zero(sc.ders.len());
    let mut prop = sc.clone();
    prop.gain = gain.clone();
    let (a, b) = rayon::join(|| run(&base), || run(&prop));
    Ok((a?, b?))
}

/// Index of the first record at or after `t`.
pub fn record_index(log: &TrajectoryLog, t: f64, dt: f64) -> usize {
    let tol = 1e-9 * dt;
    log.times.partition_point(|&tk| tk < t - tol)
}
