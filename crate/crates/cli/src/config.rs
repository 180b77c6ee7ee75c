//! TOML scenario and synthesis configuration.
//!
//! DER, bus and link indices in files are 1-based. Every physical quantity
//! carries its unit in the field name.

use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use dapi_core::analysis::{ConnectiveOptions, EllipsoidOptions, Window};
use dapi_core::control::{AttackKind, AttackTarget};
use dapi_core::model::{CouplingSpec, DerParams, GainMatrix};
use dapi_core::sim::{Event, EventKind, Scenario};
use dapi_core::synthesis::{BlockStructure, SearchGrid, SynthesisTemplate};
use dapi_core::{aggregate, DMatrix, GridTopology, LoadBus};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub name: String,
    pub ders: Vec<DerConfig>,
    pub coupling: CouplingConfig,
    pub grid: GridConfig,
    #[serde(default)]
    pub events: Vec<EventConfig>,
    #[serde(default)]
    pub synthesis: SynthesisConfig,
    #[serde(default)]
    pub sim: SimConfig,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DerConfig {
    pub m_rad_per_s_per_w: f64,
    pub n_v_per_var: f64,
    pub tau_c_s: f64,
    pub k_s: f64,
    pub kappa_s: f64,
    pub xi: f64,
    #[serde(default)]
    pub p_star_w: f64,
    #[serde(default)]
    pub q_star_var: f64,
    pub omega_star_rad_per_s: f64,
    pub v_star_v: f64,
    pub s_bar_va: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_rating_var: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingConfig {
    /// Fundamental communication links.
    pub links: Vec<[usize; 2]>,
    /// Design (and initial live) frequency coupling per link.
    pub a: Vec<f64>,
    /// Design (and initial live) voltage coupling per link.
    pub b: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub lines: Vec<[usize; 2]>,
    pub line_susceptance_s: Vec<f64>,
    #[serde(default)]
    pub loads: Vec<LoadConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadConfig {
    pub name: String,
    /// DERs sharing this load.
    pub ders: Vec<usize>,
    /// Relative share weights; equal split when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    #[serde(default)]
    pub p_w: f64,
    #[serde(default)]
    pub q_var: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventType {
    LoadStep,
    Attack,
    LineCut,
    Dapi,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackType {
    ConfidentialityIsland,
    Fdi,
    Dos,
}

/// One scheduled event. Which optional fields are allowed depends on `kind`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventConfig {
    pub t_s: f64,
    pub kind: EventType,
    /// Load name (`load_step`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub load: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_w: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_var: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attack: Option<AttackType>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ders: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub links: Option<Vec<[usize; 2]>>,
    /// Injected frequency coupling (`fdi`); nominal when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a_offset: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b_offset: Option<f64>,
    /// `dos` only: leave voltage couplings intact.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub keep_voltage: Option<bool>,
    /// `dapi` only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub enabled: Option<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StructureConfig {
    Shared,
    PerDer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthesisConfig {
    pub kappa_y: Vec<f64>,
    pub tau_v: Vec<f64>,
    /// Tied to `tau_v` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau_d: Option<Vec<f64>>,
    pub tau_h: Vec<f64>,
    pub tau_g: Vec<f64>,
    pub weights: [f64; 3],
    pub alpha_bar: f64,
    pub beta_bar: f64,
    pub structure: StructureConfig,
    pub y_floor: f64,
    pub y_cap: f64,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        let g = SearchGrid::default();
        SynthesisConfig {
            kappa_y: g.kappa_y,
            tau_v: g.tau_v,
            tau_d: g.tau_d,
            tau_h: g.tau_h,
            tau_g: g.tau_g,
            weights: [1.0; 3],
            alpha_bar: 1.0,
            beta_bar: 1.0,
            structure: StructureConfig::Shared,
            y_floor: 1e-2,
            y_cap: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub dt_s: f64,
    pub horizon_s: f64,
    pub seed: u64,
    pub dapi_enabled: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            dt_s: 1e-3,
            horizon_s: 20.0,
            seed: 0,
            dapi_enabled: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowConfig {
    pub label: String,
    pub t_begin_s: f64,
    pub t_end_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisConfig {
    /// Metric windows; the whole horizon when empty.
    pub windows: Vec<WindowConfig>,
    pub ellipsoid_trials: usize,
    pub ellipsoid_horizon_s: f64,
    pub ellipsoid_hold_s: f64,
    pub connective_samples: usize,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        let e = EllipsoidOptions::default();
        AnalysisConfig {
            windows: Vec::new(),
            ellipsoid_trials: e.trials,
            ellipsoid_horizon_s: e.horizon,
            ellipsoid_hold_s: e.hold,
            connective_samples: ConnectiveOptions::default().samples,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub directory: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { directory: "out".into() }
    }
}

fn zero_based(i: usize, n: usize, what: &str) -> Result<usize> {
    ensure!(i >= 1 && i <= n, "{what} index {i} is outside 1..={n}");
    Ok(i - 1)
}

fn zero_based_links(links: &[[usize; 2]], n: usize, what: &str) -> Result<Vec<(usize, usize)>> {
    links
        .iter()
        .map(|&[i, j]| Ok((zero_based(i, n, what)?, zero_based(j, n, what)?)))
        .collect()
}

fn one_based_links(links: &[(usize, usize)]) -> Vec<[usize; 2]> {
    links.iter().map(|&(i, j)| [i + 1, j + 1]).collect()
}

impl Config {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let cfg: Config = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        cfg.validate().with_context(|| format!("validating {}", path.display()))?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn n(&self) -> usize {
        self.ders.len()
    }

    /// Checks everything that can be checked without solving or simulating.
    pub fn validate(&self) -> Result<()> {
        ensure!(!self.name.is_empty(), "name must not be empty");
        ensure!(
            self.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-'),
            "name `{}` may only use ASCII letters, digits, `_` and `-`",
            self.name
        );
        ensure!(!self.ders.is_empty(), "at least one DER is required");
        self.ders()?;
        self.coupling()?;
        self.grid()?;
        let s = &self.synthesis;
        for (name, grid) in [("kappa_y", &s.kappa_y), ("tau_v", &s.tau_v), ("tau_h", &s.tau_h), ("tau_g", &s.tau_g)] {
            ensure!(!grid.is_empty(), "synthesis.{name} must not be empty");
            ensure!(grid.iter().all(|v| v.is_finite() && *v > 0.0), "synthesis.{name} entries must be positive");
        }
        if let Some(td) = &s.tau_d {
            ensure!(!td.is_empty() && td.iter().all(|v| v.is_finite() && *v > 0.0), "synthesis.tau_d entries must be positive");
        }
        ensure!(s.alpha_bar.is_finite() && s.alpha_bar > 0.0, "synthesis.alpha_bar must be positive");
        ensure!(s.beta_bar.is_finite() && s.beta_bar > 0.0, "synthesis.beta_bar must be positive");
        ensure!(s.weights.iter().all(|w| w.is_finite() && *w >= 0.0), "synthesis.weights must be non-negative");
        ensure!(s.y_floor > 0.0 && s.y_floor < s.y_cap, "need 0 < synthesis.y_floor < synthesis.y_cap");
        let a = &self.analysis;
        ensure!(a.ellipsoid_trials > 0, "analysis.ellipsoid_trials must be positive");
        ensure!(a.ellipsoid_horizon_s > 0.0 && a.ellipsoid_hold_s > 0.0, "ellipsoid horizon and hold must be positive");
        for w in &a.windows {
            ensure!(
                w.t_begin_s >= 0.0 && w.t_end_s > w.t_begin_s && w.t_end_s <= self.sim.horizon_s,
                "window `{}` must satisfy 0 <= begin < end <= horizon",
                w.label
            );
        }
        self.scenario(GainMatrix::zero(self.n()))?.validate()?;
        Ok(())
    }

    pub fn ders(&self) -> Result<Vec<DerParams>> {
        self.ders
            .iter()
            .enumerate()
            .map(|(i, d)| {
                let p = DerParams {
                    m: d.m_rad_per_s_per_w,
                    n: d.n_v_per_var,
                    tau_c: d.tau_c_s,
                    k: d.k_s,
                    kappa: d.kappa_s,
                    xi: d.xi,
                    p_star: d.p_star_w,
                    q_star: d.q_star_var,
                    omega_star: d.omega_star_rad_per_s,
                    v_star: d.v_star_v,
                    s_bar: d.s_bar_va,
                    q_rating: d.q_rating_var,
                };
                p.validate().with_context(|| format!("DER {}", i + 1))?;
                Ok(p)
            })
            .collect()
    }

    pub fn coupling(&self) -> Result<CouplingSpec> {
        let n = self.n();
        let c = &self.coupling;
        ensure!(
            c.a.len() == c.links.len() && c.b.len() == c.links.len(),
            "coupling.a and coupling.b need one entry per link"
        );
        let links = zero_based_links(&c.links, n, "coupling link")?;
        let e = CouplingSpec::fundamental(n, &links)?;
        let mut a = DMatrix::zeros(n, n);
        let mut b = DMatrix::zeros(n, n);
        for (l, &(i, j)) in links.iter().enumerate() {
            a[(i, j)] = c.a[l];
            a[(j, i)] = c.a[l];
            b[(i, j)] = c.b[l];
            b[(j, i)] = c.b[l];
        }
        Ok(CouplingSpec::new(e, a, b)?)
    }

    pub fn grid(&self) -> Result<GridTopology> {
        let n = self.n();
        let g = &self.grid;
        ensure!(g.line_susceptance_s.len() == g.lines.len(), "grid.line_susceptance_s needs one entry per line");
        let lines = zero_based_links(&g.lines, n, "grid line")?;
        let mut grid = GridTopology::from_lines(n, &lines, 1.0)?;
        for (&(i, j), &b) in lines.iter().zip(&g.line_susceptance_s) {
            ensure!(b.is_finite() && b > 0.0, "line {}-{} susceptance must be positive", i + 1, j + 1);
            grid.susceptance[(i, j)] = b;
            grid.susceptance[(j, i)] = b;
        }
        grid.loads = g
            .loads
            .iter()
            .map(|l| {
                ensure!(!l.ders.is_empty(), "load `{}` is attached to no DER", l.name);
                let weights = l.weights.clone().unwrap_or_else(|| vec![1.0; l.ders.len()]);
                ensure!(weights.len() == l.ders.len(), "load `{}` needs one weight per DER", l.name);
                let attach = l
                    .ders
                    .iter()
                    .zip(weights)
                    .map(|(&d, w)| Ok((zero_based(d, n, "load DER")?, w)))
                    .collect::<Result<Vec<_>>>()?;
                Ok(LoadBus {
                    name: l.name.clone(),
                    attach,
                    p: l.p_w,
                    q: l.q_var,
                })
            })
            .collect::<Result<_>>()?;
        grid.validate()?;
        Ok(grid)
    }

    pub fn events(&self) -> Result<Vec<Event>> {
        let n = self.n();
        self.events
            .iter()
            .enumerate()
            .map(|(k, e)| self.event(e, n).with_context(|| format!("event {} (t = {} s)", k + 1, e.t_s)))
            .collect()
    }

    fn event(&self, e: &EventConfig, n: usize) -> Result<Event> {
        let mut allowed: Vec<&str> = Vec::new();
        let kind = match e.kind {
            EventType::LoadStep => {
                allowed.extend(["load", "p_w", "q_var"]);
                let name = e.load.as_deref().context("load_step needs `load`")?;
                let bus = self
                    .grid
                    .loads
                    .iter()
                    .position(|l| l.name == name)
                    .with_context(|| format!("no load named `{name}`"))?;
                EventKind::LoadStep {
                    bus,
                    p: e.p_w.context("load_step needs `p_w`")?,
                    q: e.q_var.context("load_step needs `q_var`")?,
                }
            }
            EventType::Attack => {
                allowed.extend(["attack", "ders", "links", "a_offset", "b_offset", "keep_voltage"]);
                let targets = match (&e.ders, &e.links) {
                    (Some(d), None) => {
                        AttackTarget::Ders(d.iter().map(|&i| zero_based(i, n, "attack DER")).collect::<Result<_>>()?)
                    }
                    (None, Some(l)) => AttackTarget::Links(zero_based_links(l, n, "attack link")?),
                    _ => bail!("attack needs exactly one of `ders` or `links`"),
                };
                let kind = match e.attack.context("attack needs `attack`")? {
                    AttackType::ConfidentialityIsland => {
                        ensure!(e.a_offset.is_none() && e.b_offset.is_none() && e.keep_voltage.is_none(), "confidentiality_island takes no options");
                        AttackKind::ConfidentialityIsland
                    }
                    AttackType::Fdi => {
                        ensure!(e.keep_voltage.is_none(), "`keep_voltage` applies to dos only");
                        AttackKind::Fdi {
                            a_offset: e.a_offset,
                            b_offset: e.b_offset,
                        }
                    }
                    AttackType::Dos => {
                        ensure!(e.a_offset.is_none() && e.b_offset.is_none(), "offsets apply to fdi only");
                        AttackKind::Dos {
                            keep_voltage: e.keep_voltage.unwrap_or(false),
                        }
                    }
                };
                EventKind::Attack { kind, targets }
            }
            EventType::LineCut => {
                allowed.push("links");
                EventKind::LineCut(zero_based_links(e.links.as_deref().context("line_cut needs `links`")?, n, "cut line")?)
            }
            EventType::Dapi => {
                allowed.push("enabled");
                EventKind::Dapi(e.enabled.context("dapi needs `enabled`")?)
            }
        };
        let present = [
            ("load", e.load.is_some()),
            ("p_w", e.p_w.is_some()),
            ("q_var", e.q_var.is_some()),
            ("attack", e.attack.is_some()),
            ("ders", e.ders.is_some()),
            ("links", e.links.is_some()),
            ("a_offset", e.a_offset.is_some()),
            ("b_offset", e.b_offset.is_some()),
            ("keep_voltage", e.keep_voltage.is_some()),
            ("enabled", e.enabled.is_some()),
        ];
        for (field, set) in present {
            ensure!(!set || allowed.contains(&field), "`{field}` does not apply to this event kind");
        }
        Ok(Event { t: e.t_s, kind })
    }

    pub fn scenario(&self, gain: GainMatrix) -> Result<Scenario> {
        Ok(Scenario {
            name: self.name.clone(),
            ders: self.ders()?,
            coupling: self.coupling()?,
            grid: self.grid()?,
            events: self.events()?,
            horizon: self.sim.horizon_s,
            dt: self.sim.dt_s,
            gain,
            dapi_enabled: self.sim.dapi_enabled,
            seed: self.sim.seed,
        })
    }

    pub fn search_grid(&self) -> SearchGrid {
        let s = &self.synthesis;
        SearchGrid {
            kappa_y: s.kappa_y.clone(),
            tau_v: s.tau_v.clone(),
            tau_d: s.tau_d.clone(),
            tau_h: s.tau_h.clone(),
            tau_g: s.tau_g.clone(),
        }
    }

    pub fn template(&self) -> Result<SynthesisTemplate> {
        let ders = self.ders()?;
        let s = &self.synthesis;
        let mut t = SynthesisTemplate::new(aggregate(&ders, &self.coupling()?)?, &ders);
        t.weights = s.weights;
        t.alpha_bar = s.alpha_bar;
        t.beta_bar = s.beta_bar;
        t.structure = match s.structure {
            StructureConfig::Shared => BlockStructure::Shared,
            StructureConfig::PerDer => BlockStructure::PerDer,
        };
        t.y_floor = s.y_floor;
        t.y_cap = s.y_cap;
        Ok(t)
    }

    pub fn windows(&self) -> Vec<Window> {
        if self.analysis.windows.is_empty() {
            return vec![Window::new("Full", 0.0, self.sim.horizon_s)];
        }
        self.analysis.windows.iter().map(|w| Window::new(w.label.clone(), w.t_begin_s, w.t_end_s)).collect()
    }

    pub fn ellipsoid_options(&self, seed: u64) -> EllipsoidOptions {
        EllipsoidOptions {
            trials: self.analysis.ellipsoid_trials,
            horizon: self.analysis.ellipsoid_horizon_s,
            hold: self.analysis.ellipsoid_hold_s,
            seed,
            ..Default::default()
        }
    }

    pub fn connective_options(&self, seed: u64) -> ConnectiveOptions {
        ConnectiveOptions {
            samples: self.analysis.connective_samples,
            seed,
            ..Default::default()
        }
    }

    /// Builds a config that reproduces `sc`. Loads are named after the grid's
    /// load buses, so load-step events must reference existing buses.
    pub fn from_scenario(sc: &Scenario) -> Result<Self> {
        let n = sc.ders.len();
        let links = sc.coupling.links();
        let mut lines = Vec::new();
        let mut susceptance = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if sc.grid.island_mask[(i, j)] > 0.0 && sc.grid.susceptance[(i, j)] > 0.0 {
                    lines.push((i, j));
                    susceptance.push(sc.grid.susceptance[(i, j)]);
                }
            }
        }
        let events = sc
            .events
            .iter()
            .map(|e| {
                let mut c = EventConfig {
                    t_s: e.t,
                    kind: EventType::Dapi,
                    load: None,
                    p_w: None,
                    q_var: None,
                    attack: None,
                    ders: None,
                    links: None,
                    a_offset: None,
                    b_offset: None,
                    keep_voltage: None,
                    enabled: None,
                };
                match &e.kind {
                    EventKind::LoadStep { bus, p, q } => {
                        c.kind = EventType::LoadStep;
                        c.load = Some(sc.grid.loads.get(*bus).context("load step on a missing bus")?.name.clone());
                        c.p_w = Some(*p);
                        c.q_var = Some(*q);
                    }
                    EventKind::Attack { kind, targets } => {
                        c.kind = EventType::Attack;
                        match targets {
                            AttackTarget::Ders(d) => c.ders = Some(d.iter().map(|i| i + 1).collect()),
                            AttackTarget::Links(l) => c.links = Some(one_based_links(l)),
                        }
                        c.attack = Some(match kind {
                            AttackKind::ConfidentialityIsland => AttackType::ConfidentialityIsland,
                            AttackKind::Fdi { a_offset, b_offset } => {
                                c.a_offset = *a_offset;
                                c.b_offset = *b_offset;
                                AttackType::Fdi
                            }
                            AttackKind::Dos { keep_voltage } => {
                                c.keep_voltage = Some(*keep_voltage);
                                AttackType::Dos
                            }
                        });
                    }
                    EventKind::LineCut(l) => {
                        c.kind = EventType::LineCut;
                        c.links = Some(one_based_links(l));
                    }
                    EventKind::Dapi(on) => c.enabled = Some(*on),
                }
                Ok(c)
            })
            .collect::<Result<_>>()?;
        Ok(Config {
            name: sc.name.clone(),
            ders: sc
                .ders
                .iter()
                .map(|d| DerConfig {
                    m_rad_per_s_per_w: d.m,
                    n_v_per_var: d.n,
                    tau_c_s: d.tau_c,
                    k_s: d.k,
                    kappa_s: d.kappa,
                    xi: d.xi,
                    p_star_w: d.p_star,
                    q_star_var: d.q_star,
                    omega_star_rad_per_s: d.omega_star,
                    v_star_v: d.v_star,
                    s_bar_va: d.s_bar,
                    q_rating_var: d.q_rating,
                })
                .collect(),
            coupling: CouplingConfig {
                links: one_based_links(&links),
                a: links.iter().map(|&(i, j)| sc.coupling.a_max[(i, j)]).collect(),
                b: links.iter().map(|&(i, j)| sc.coupling.b_live[(i, j)]).collect(),
            },
            grid: GridConfig {
                lines: one_based_links(&lines),
                line_susceptance_s: susceptance,
                loads: sc
                    .grid
                    .loads
                    .iter()
                    .map(|l| LoadConfig {
                        name: l.name.clone(),
                        ders: l.attach.iter().map(|a| a.0 + 1).collect(),
                        weights: Some(l.attach.iter().map(|a| a.1).collect()),
                        p_w: l.p,
                        q_var: l.q,
                    })
                    .collect(),
            },
            events,
            synthesis: SynthesisConfig::default(),
            sim: SimConfig {
                dt_s: sc.dt,
                horizon_s: sc.horizon,
                seed: sc.seed,
                dapi_enabled: sc.dapi_enabled,
            },
            analysis: AnalysisConfig::default(),
            output: OutputConfig::default(),
        })
    }
}
