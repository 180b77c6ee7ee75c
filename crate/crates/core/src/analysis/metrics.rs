//! Robustness and resilience losses and power-sharing residuals.

use std::io::Write;

use crate::error::{invalid, Result};
use crate::model::{components, DerParams};
use crate::sim::{record_index, Configuration, Signal, TrajectoryLog};

#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub label: String,
    pub t_begin: f64,
    pub t_end: f64,
}

impl Window {
    pub fn new(label: impl Into<String>, t_begin: f64, t_end: f64) -> Self {
        Window {
            label: label.into(),
            t_begin,
            t_end,
        }
    }
}

/// Supremum (`loss_ro`) and time-averaged (`loss_re`) relative deviation.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SignalLoss {
    pub loss_ro: f64,
    pub loss_re: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowMetrics {
    pub window: Window,
    pub freq: SignalLoss,
    pub volt: SignalLoss,
    pub sharing_p: f64,
    pub sharing_q: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub scheme: String,
    pub windows: Vec<WindowMetrics>,
}

impl MetricsReport {
    /// Mean over windows of every loss.
    pub fn average(&self) -> (SignalLoss, SignalLoss) {
        let n = self.windows.len().max(1) as f64;
        let mut f = SignalLoss::default();
        let mut v = SignalLoss::default();
        for w in &self.windows {
            f.loss_ro += w.freq.loss_ro / n;
            f.loss_re += w.freq.loss_re / n;
            v.loss_ro += w.volt.loss_ro / n;
            v.loss_re += w.volt.loss_re / n;
        }
        (f, v)
    }

    /// Rows `window,signal,scheme,loss_ro,loss_re`, followed by the averages.
    pub fn write_csv_rows<W: Write>(&self, wtr: &mut csv::Writer<W>) -> Result<()> {
        let mut row = |label: &str, signal: &str, l: SignalLoss| {
            wtr.write_record([
                label.to_string(),
                signal.to_string(),
                self.scheme.clone(),
                format!("{:.9e}", l.loss_ro),
                format!("{:.9e}", l.loss_re),
            ])
        };
        for w in &self.windows {
            row(&w.window.label, "frequency", w.freq)?;
            row(&w.window.label, "voltage", w.volt)?;
        }
        let (f, v) = self.average();
        row("Average", "frequency", f)?;
        row("Average", "voltage", v)?;
        Ok(())
    }

    pub fn write_csv<W: Write>(reports: &[MetricsReport], w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["window", "signal", "scheme", "loss_ro", "loss_re"])?;
        for r in reports {
            r.write_csv_rows(&mut wtr)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

fn window_range(log: &TrajectoryLog, w: &Window) -> Result<(usize, usize)> {
    if !(w.t_end > w.t_begin) {
        return Err(invalid("window", format!("'{}' is empty", w.label)));
    }
    let dt = if log.len() > 1 { log.times[1] - log.times[0] } else { 1.0 };
    let i0 = record_index(log, w.t_begin, dt);
    let i1 = record_index(log, w.t_end, dt).min(log.len().saturating_sub(1));
    if i1 <= i0 {
        return Err(invalid("window", format!("'{}' holds fewer than two samples", w.label)));
    }
    Ok((i0, i1))
}

/// Losses of `nominal + dev(t)` against `nominal` over samples `times`.
pub fn relative_losses(times: &[f64], dev: &[f64], nominal: f64) -> SignalLoss {
    let r: Vec<f64> = dev.iter().map(|d| d.abs() / (nominal + d).abs()).collect();
    let sup = r.iter().copied().fold(0.0, f64::max);
    let mut integral = 0.0;
    for k in 1..r.len() {
        integral += 0.5 * (r[k] + r[k - 1]) * (times[k] - times[k - 1]);
    }
    let span = times[times.len() - 1] - times[0];
    SignalLoss {
        loss_ro: sup,
        loss_re: integral / span,
    }
}

/// Worst DER's frequency and voltage losses over one window.
pub fn loss_metrics(log: &TrajectoryLog, ders: &[DerParams], w: &Window) -> Result<(SignalLoss, SignalLoss)> {
    let (i0, i1) = window_range(log, w)?;
    let times = &log.times[i0..=i1];
    let mut f = SignalLoss::default();
    let mut v = SignalLoss::default();
    for (i, d) in ders.iter().enumerate() {
        let dw: Vec<f64> = (i0..=i1).map(|k| log.get(k, Signal::DOmega, i)).collect();
        let dv: Vec<f64> = (i0..=i1).map(|k| log.get(k, Signal::DV, i)).collect();
        let lf = relative_losses(times, &dw, d.omega_star);
        let lv = relative_losses(times, &dv, d.v_star);
        f.loss_ro = f.loss_ro.max(lf.loss_ro);
        f.loss_re = f.loss_re.max(lf.loss_re);
        v.loss_ro = v.loss_ro.max(lv.loss_ro);
        v.loss_re = v.loss_re.max(lv.loss_re);
    }
    Ok((f, v))
}

/// DER groups expected to share power: connected through frequency couplings
/// and within the same electrical island.
pub fn sharing_groups(cfg: &Configuration) -> Vec<Vec<usize>> {
    let comm = components(&cfg.coupling.a_live);
    let elec = cfg.grid.islands();
    let mut keys: Vec<(usize, usize)> = Vec::new();
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for i in 0..comm.len() {
        let key = (comm[i], elec[i]);
        match keys.iter().position(|k| *k == key) {
            Some(g) => groups[g].push(i),
            None => {
                keys.push(key);
                groups.push(vec![i]);
            }
        }
    }
    groups
}

/// Steady-state sharing residuals over the last 10 % of `w`: the largest
/// pairwise `|m_i P_i - m_j P_j|` within a group over `max |m_i P_i|`, and the
/// same for `n_i Q_i`.
pub fn sharing_residuals(log: &TrajectoryLog, ders: &[DerParams], groups: &[Vec<usize>], w: &Window) -> Result<(f64, f64)> {
    let (i0, i1) = window_range(log, w)?;
    let tail_start = w.t_end - 0.1 * (w.t_end - w.t_begin);
    let dt = log.times[1] - log.times[0];
    let j0 = record_index(log, tail_start, dt).max(i0);
    let mut res = [0.0f64; 2];
    for k in j0..=i1 {
        for (slot, sig) in [(0, Signal::DP), (1, Signal::DQ)] {
            let w_of = |i: usize| {
                let d = &ders[i];
                if slot == 0 {
                    d.m * (d.p_star + log.get(k, sig, i))
                } else {
                    d.n * (d.q_star + log.get(k, sig, i))
                }
            };
            let scale = (0..ders.len()).map(|i| w_of(i).abs()).fold(0.0, f64::max);
            if scale == 0.0 {
                continue;
            }
            for g in groups {
                for (a, &i) in g.iter().enumerate() {
                    for &j in &g[a + 1..] {
                        res[slot] = res[slot].max((w_of(i) - w_of(j)).abs() / scale);
                    }
                }
            }
        }
    }
    Ok((res[0], res[1]))
}

/// Losses and sharing residuals of one window.
pub fn window_metrics(log: &TrajectoryLog, ders: &[DerParams], groups: &[Vec<usize>], w: &Window) -> Result<WindowMetrics> {
    let (freq, volt) = loss_metrics(log, ders, w)?;
    let (sharing_p, sharing_q) = sharing_residuals(log, ders, groups, w)?;
    Ok(WindowMetrics {
        window: w.clone(),
        freq,
        volt,
        sharing_p,
        sharing_q,
    })
}
