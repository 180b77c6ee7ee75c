use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context};
use dapi_core::analysis::{
    connective_stability_check, dissipativity_check, ellipsoid_containment, sharing_groups, window_metrics, MetricsReport,
};
use dapi_core::model::GainMatrix;
use dapi_core::sim::{run, TrajectoryLog};
use dapi_core::synthesis::sdp::SdpOptions;
use dapi_core::synthesis::{search_hyperparameters, Certificate, PointOutcome};
use dapi_core::{aggregate, Error as CoreError};

use crate::config::Config;
use crate::gains::GainFile;

/// Failure classes, one per non-zero exit status.
#[derive(Debug)]
pub enum Failure {
    /// An analysis verdict failed.
    Verdict(String),
    /// No grid point admitted a certificate.
    Infeasible(String),
    /// Bad configuration, missing or malformed inputs, dimension errors.
    Input(anyhow::Error),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Verdict(_) => 1,
            Failure::Infeasible(_) => 2,
            Failure::Input(_) => 3,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Verdict(s) => write!(f, "analysis failed: {s}"),
            Failure::Infeasible(s) => write!(f, "synthesis infeasible:\n{s}"),
            Failure::Input(e) => write!(f, "{e:#}"),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        match e.downcast_ref::<CoreError>() {
            Some(CoreError::Infeasible(s)) => Failure::Infeasible(s.clone()),
            Some(CoreError::NonFinite { t, .. }) => Failure::Verdict(format!("simulation diverged at t = {t} s")),
            _ => Failure::Input(e),
        }
    }
}

impl From<CoreError> for Failure {
    fn from(e: CoreError) -> Self {
        Failure::from(anyhow::Error::from(e))
    }
}

pub type Outcome = std::result::Result<(), Failure>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Scheme {
    Base,
    Proposed,
}

impl Scheme {
    pub fn label(self) -> &'static str {
        match self {
            Scheme::Base => "base",
            Scheme::Proposed => "proposed",
        }
    }
}

/// Overrides shared by the commands.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub dt: Option<f64>,
    pub seed: Option<u64>,
}

impl Overrides {
    fn apply(&self, cfg: &mut Config) -> anyhow::Result<PathBuf> {
        if let Some(dt) = self.dt {
            ensure!(dt.is_finite() && dt > 0.0, "--dt must be positive");
            cfg.sim.dt_s = dt;
        }
        if let Some(seed) = self.seed {
            cfg.sim.seed = seed;
        }
        let out = self.out.clone().unwrap_or_else(|| PathBuf::from(&cfg.output.directory));
        fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
        Ok(out)
    }
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> anyhow::Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn load_gains(path: &Path, cfg: &Config) -> anyhow::Result<Certificate> {
    let cert = GainFile::load(path)?;
    ensure!(
        cert.k_gain.n_ders() == cfg.n(),
        "gain file is for {} DERs but the config has {}",
        cert.k_gain.n_ders(),
        cfg.n()
    );
    Ok(cert)
}

pub fn trajectory_path(out: &Path, name: &str, scheme: Scheme) -> PathBuf {
    out.join(format!("{name}_{}.csv", scheme.label()))
}

pub fn synthesize(config: &Path, ov: &Overrides) -> Outcome {
    let mut cfg = Config::load(config)?;
    let out = ov.apply(&mut cfg)?;
    let template = cfg.template()?;
    let report = search_hyperparameters(&template, &cfg.search_grid(), &SdpOptions::default())?;
    let best = &report.best;

    let mut text = String::new();
    let _ = writeln!(text, "synthesis report: {}", cfg.name);
    let _ = writeln!(text, "grid points: {}", report.points.len());
    for (k, p) in report.points.iter().enumerate() {
        let h = p.hyper;
        let mark = if k == report.best_index { "*" } else { " " };
        let status = match &p.outcome {
            PointOutcome::Feasible(r) => format!("feasible  |P| {:.6e}  objective {:.6}", r.p_norm(), r.objective),
            PointOutcome::Infeasible(why) => format!("infeasible  {why}"),
        };
        let _ = writeln!(
            text,
            "{mark} kappa_y {:<7} tau_v {:<5} tau_d {:<5} tau_h {:<5} tau_g {:<5} {status}",
            h.kappa_y, h.tau_v, h.tau_d, h.tau_h, h.tau_g
        );
    }
    let _ = writeln!(text, "alpha {:.6}", best.alpha);
    let _ = writeln!(text, "beta {:.6}", best.beta);
    let _ = writeln!(text, "|P| {:.6e}", best.p_norm());
    let _ = writeln!(text, "max LMI residual eigenvalue {:.3e}", best.residuals.max());
    for (i, b) in best.k_gain.blocks.iter().enumerate() {
        let _ = writeln!(text, "DER {} K = {:?}", i + 1, b);
    }

    let gains = GainFile::from_certificate(&best.certificate()).to_toml()?;
    write(&out.join(format!("{}_gains.toml", cfg.name)), gains)?;
    write(&out.join(format!("{}_synthesis.txt", cfg.name)), &text)?;
    print!("{text}");
    Ok(())
}

pub fn simulate(config: &Path, gains: Option<&Path>, scheme: Option<Scheme>, ov: &Overrides) -> Outcome {
    let mut cfg = Config::load(config)?;
    let out = ov.apply(&mut cfg)?;
    let cert = gains.map(|g| load_gains(g, &cfg)).transpose()?;
    let legs = match (scheme, &cert) {
        (Some(Scheme::Proposed), None) => {
            return Err(Failure::Input(anyhow::anyhow!("--scheme proposed needs --gains")));
        }
        (Some(s), _) => vec![s],
        (None, Some(_)) => vec![Scheme::Base, Scheme::Proposed],
        (None, None) => vec![Scheme::Base],
    };
    for leg in legs {
        let gain = match leg {
            Scheme::Base => GainMatrix::zero(cfg.n()),
            Scheme::Proposed => cert.as_ref().unwrap().k_gain.clone(),
        };
        let log = run(&cfg.scenario(gain)?)?;
        let path = trajectory_path(&out, &cfg.name, leg);
        let mut buf = Vec::new();
        log.write_csv(&mut buf)?;
        write(&path, buf)?;
        write(&path.with_extension("events.txt"), log.events_text())?;
        println!("{}: {} records, {} clamp events -> {}", leg.label(), log.len(), log.clamp_count, path.display());
    }
    Ok(())
}

fn read_log(path: &Path, cfg: &Config) -> anyhow::Result<TrajectoryLog> {
    let f = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let log = TrajectoryLog::read_csv(f).with_context(|| format!("reading {}", path.display()))?;
    ensure!(log.n_ders == cfg.n(), "{} has {} DERs but the config has {}", path.display(), log.n_ders, cfg.n());
    ensure!(log.len() >= 2, "{} has fewer than two records", path.display());
    Ok(log)
}

/// Sampling step of a log, checked against the configured horizon.
fn log_dt(log: &TrajectoryLog, cfg: &Config) -> anyhow::Result<f64> {
    let dt = log.times[1] - log.times[0];
    let end = *log.times.last().unwrap();
    if (end - cfg.sim.horizon_s).abs() > 0.5 * dt {
        bail!("trajectory ends at {end} s but the configured horizon is {} s", cfg.sim.horizon_s);
    }
    Ok(dt)
}

pub struct AnalyzeInputs<'a> {
    pub config: &'a Path,
    pub gains: &'a Path,
    pub base: Option<&'a Path>,
    pub proposed: Option<&'a Path>,
}

pub fn analyze(inp: &AnalyzeInputs, ov: &Overrides) -> Outcome {
    let mut cfg = Config::load(inp.config)?;
    let out = ov.apply(&mut cfg)?;
    let cert = load_gains(inp.gains, &cfg)?;
    let seed = cfg.sim.seed;
    let ders = cfg.ders()?;
    let coupling = cfg.coupling()?;
    let resolve = |given: Option<&Path>, scheme| given.map(Path::to_path_buf).unwrap_or_else(|| trajectory_path(&out, &cfg.name, scheme));
    let base_path = resolve(inp.base, Scheme::Base);
    let prop_path = resolve(inp.proposed, Scheme::Proposed);
    let base = base_path.exists().then(|| read_log(&base_path, &cfg)).transpose()?;
    let prop = prop_path.exists().then(|| read_log(&prop_path, &cfg)).transpose()?;
    if base.is_none() && prop.is_none() {
        return Err(Failure::Input(anyhow::anyhow!(
            "no trajectories found ({} or {}); run `simulate` first",
            base_path.display(),
            prop_path.display()
        )));
    }

    let mut text = String::new();
    let mut failures = Vec::new();
    let _ = writeln!(text, "analysis report: {}", cfg.name);

    let conn = connective_stability_check(&ders, &coupling, &cert.k_gain, cert.alpha, &cfg.connective_options(seed))?;
    let ok = conn.stable() && conn.zero_modes_match();
    let _ = writeln!(
        text,
        "connective stability: {} ({} corners{}, worst non-structural Re {:.6}, zero modes {})",
        verdict(ok),
        conn.corners.len(),
        if conn.exhaustive { "" } else { ", sampled, not exhaustive" },
        conn.worst_real,
        if conn.zero_modes_match() { "match" } else { "MISMATCH" }
    );
    if !ok {
        failures.push("connective stability");
    }

    let sys = aggregate(&ders, &coupling)?;
    let ell = ellipsoid_containment(&cert.p_lyap, &sys, &cert.k_gain, cert.alpha, cert.beta, &cfg.ellipsoid_options(seed))?;
    let _ = writeln!(
        text,
        "invariant ellipsoid: {} (sup V {:.6} over {} trials, limit {})",
        verdict(ell.passed()),
        ell.max_v,
        ell.trials.len(),
        1.0 + ell.tolerance
    );
    if !ell.passed() {
        failures.push("invariant ellipsoid");
    }

    if let Some(log) = &prop {
        let mut sc = cfg.scenario(cert.k_gain.clone())?;
        sc.dt = log_dt(log, &cfg)?;
        let d = dissipativity_check(log, &sc, &cert)?;
        let _ = writeln!(
            text,
            "dissipativity: {} (max relative violation {:.3e} at t = {} s, {} segments, {} skipped)",
            verdict(d.passed()),
            d.max_violation,
            d.worst_t,
            d.segments.len(),
            d.skipped_segments
        );
        if !d.passed() {
            failures.push("dissipativity");
        }
    } else {
        let _ = writeln!(text, "dissipativity: not run (no proposed trajectory)");
    }

    let groups = sharing_groups(cfg.scenario(GainMatrix::zero(cfg.n()))?.configurations()?.last().unwrap());
    let mut reports = Vec::new();
    for (scheme, log) in [(Scheme::Base, &base), (Scheme::Proposed, &prop)] {
        let Some(log) = log else { continue };
        log_dt(log, &cfg)?;
        let windows = cfg
            .windows()
            .iter()
            .map(|w| window_metrics(log, &ders, &groups, w))
            .collect::<dapi_core::Result<Vec<_>>>()?;
        reports.push(MetricsReport {
            scheme: scheme.label().into(),
            windows,
        });
    }
    let _ = writeln!(text, "metrics (window, scheme, freq Ro, freq Re, volt Ro, volt Re, P sharing, Q sharing):");
    for r in &reports {
        for w in &r.windows {
            let _ = writeln!(
                text,
                "  {:<16} {:<9} {:.4e} {:.4e} {:.4e} {:.4e} {:.3e} {:.3e}",
                w.window.label, r.scheme, w.freq.loss_ro, w.freq.loss_re, w.volt.loss_ro, w.volt.loss_re, w.sharing_p, w.sharing_q
            );
        }
    }
    if let [b, p] = reports.as_slice() {
        let ((bf, bv), (pf, pv)) = (b.average(), p.average());
        let _ = writeln!(
            text,
            "average deltas (proposed - base): freq Ro {:+.4e} freq Re {:+.4e} volt Ro {:+.4e} volt Re {:+.4e}",
            pf.loss_ro - bf.loss_ro,
            pf.loss_re - bf.loss_re,
            pv.loss_ro - bv.loss_ro,
            pv.loss_re - bv.loss_re
        );
    }
    let mut csv = Vec::new();
    MetricsReport::write_csv(&reports, &mut csv)?;
    write(&out.join(format!("{}_metrics.csv", cfg.name)), csv)?;
    let _ = writeln!(text, "verdict: {}", if failures.is_empty() { "PASS".to_string() } else { format!("FAIL ({})", failures.join(", ")) });
    write(&out.join(format!("{}_analysis.txt", cfg.name)), &text)?;
    print!("{text}");
    if failures.is_empty() {
        Ok(())
    } else {
        Err(Failure::Verdict(failures.join(", ")))
    }
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

pub fn report(out: &Path) -> Outcome {
    let summary = crate::report::bundle(out)?;
    print!("{summary}");
    if summary.contains("verdict: FAIL") {
        return Err(Failure::Verdict("at least one analysis report failed".into()));
    }
    Ok(())
}
