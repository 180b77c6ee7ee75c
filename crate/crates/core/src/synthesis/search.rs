//! Grid search over the fixed multipliers and the ellipsoid scaling.

use rayon::prelude::*;

use super::lmi::{solve_point, BlockStructure, Hyper, PointOutcome, SynthesisProblem, SynthesisResult};
use super::sdp::SdpOptions;
use crate::error::{invalid, Error, Result};
use crate::model::{DerParams, GainMatrix, SystemMatrices};

#[derive(Debug, Clone, PartialEq)]
pub struct SearchGrid {
    pub kappa_y: Vec<f64>,
    pub tau_v: Vec<f64>,
    /// `None` ties the disturbance multiplier to `tau_v`.
    pub tau_d: Option<Vec<f64>>,
    pub tau_h: Vec<f64>,
    pub tau_g: Vec<f64>,
}

impl Default for SearchGrid {
    fn default() -> Self {
        SearchGrid {
            kappa_y: vec![10.0, 30.0, 100.0, 300.0, 1000.0],
            tau_v: vec![0.5, 1.0],
            tau_d: None,
            tau_h: vec![0.1, 1.0],
            tau_g: vec![0.1, 1.0],
        }
    }
}

impl SearchGrid {
    /// All points in lexicographic order `(kappa_y, tau_v, tau_d, tau_h, tau_g)`.
    pub fn points(&self) -> Vec<Hyper> {
        let mut out = Vec::new();
        for &kappa_y in &self.kappa_y {
            for &tau_v in &self.tau_v {
                let tds = self.tau_d.clone().unwrap_or_else(|| vec![tau_v]);
                for &tau_d in &tds {
                    for &tau_h in &self.tau_h {
                        for &tau_g in &self.tau_g {
                            out.push(Hyper {
                                kappa_y,
                                tau_v,
                                tau_d,
                                tau_h,
                                tau_g,
                            });
                        }
                    }
                }
            }
        }
        out
    }
}

/// Everything except the multipliers.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisTemplate {
    pub sys: SystemMatrices,
    pub weights: [f64; 3],
    pub alpha_bar: f64,
    pub beta_bar: f64,
    pub structure: BlockStructure,
    pub y_floor: f64,
    pub y_cap: f64,
    pub s_bar: Vec<f64>,
}

impl SynthesisTemplate {
    pub fn new(sys: SystemMatrices, ders: &[DerParams]) -> Self {
        SynthesisTemplate {
            sys,
            weights: [1.0; 3],
            alpha_bar: 1.0,
            beta_bar: 1.0,
            structure: BlockStructure::Shared,
            y_floor: 1e-2,
            y_cap: 1.0,
            s_bar: ders.iter().map(|d| d.s_bar).collect(),
        }
    }

    pub fn at(&self, hyper: Hyper) -> SynthesisProblem {
        SynthesisProblem {
            sys: self.sys.clone(),
            hyper,
            weights: self.weights,
            alpha_bar: self.alpha_bar,
            beta_bar: self.beta_bar,
            structure: self.structure,
            y_floor: self.y_floor,
            y_cap: self.y_cap,
            s_bar: self.s_bar.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridPoint {
    pub hyper: Hyper,
    pub outcome: PointOutcome,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchReport {
    pub best: SynthesisResult,
    pub best_index: usize,
    pub points: Vec<GridPoint>,
    /// Grid indices at which the incumbent improved, in scan order.
    pub improvements: Vec<usize>,
}

/// Relative tolerance under which two `||P||` values count as equal.
pub const P_NORM_TIE: f64 = 1e-6;

fn better(a: &SynthesisResult, b: &SynthesisResult) -> bool {
    let (pa, pb) = (a.p_norm(), b.p_norm());
    if pa < pb * (1.0 - P_NORM_TIE) {
        return true;
    }
    if pa > pb * (1.0 + P_NORM_TIE) {
        return false;
    }
    a.objective < b.objective - 1e-9 * (1.0 + b.objective.abs())
}

/// Solves every grid point (in parallel) and keeps the feasible result with
/// the smallest `||P||`, then the smallest objective, then the earliest point.
pub fn search_hyperparameters(template: &SynthesisTemplate, grid: &SearchGrid, opts: &SdpOptions) -> Result<SearchReport> {
    let hypers = grid.points();
    if hypers.is_empty() {
        return Err(invalid("grid", "every axis needs at least one value"));
    }
    for h in &hypers {
        if h.tau_d > h.tau_v {
            log::warn!(
                "tau_d = {} exceeds tau_v = {}; the ellipsoid is then not guaranteed invariant",
                h.tau_d,
                h.tau_v
            );
        }
    }
    let outcomes: Vec<Result<PointOutcome>> = hypers.par_iter().map(|h| solve_point(&template.at(*h), opts)).collect();
    let mut points = Vec::with_capacity(hypers.len());
    for (h, o) in hypers.iter().zip(outcomes) {
        points.push(GridPoint { hyper: *h, outcome: o? });
    }

    let mut best: Option<usize> = None;
    let mut improvements = Vec::new();
    for (i, p) in points.iter().enumerate() {
        let PointOutcome::Feasible(r) = &p.outcome else { continue };
        let take = match best {
            None => true,
            Some(b) => match &points[b].outcome {
                PointOutcome::Feasible(rb) => better(r, rb),
                PointOutcome::Infeasible(_) => unreachable!(),
            },
        };
        if take {
            best = Some(i);
            improvements.push(i);
        }
    }
    let Some(bi) = best else {
        let diag = points
            .iter()
            .map(|p| match &p.outcome {
                PointOutcome::Infeasible(why) => format!(
                    "kappa_y={} tau_v={} tau_d={} tau_h={} tau_g={}: {why}",
                    p.hyper.kappa_y, p.hyper.tau_v, p.hyper.tau_d, p.hyper.tau_h, p.hyper.tau_g
                ),
                PointOutcome::Feasible(_) => unreachable!(),
            })
            .collect::<Vec<_>>()
            .join("\n");
        return Err(Error::Infeasible(diag));
    };
    let PointOutcome::Feasible(r) = &points[bi].outcome else { unreachable!() };
    for (name, v) in GainMatrix::NAMES.iter().zip(&r.k_gain.blocks[0]) {
        if *v >= 0.0 {
            log::warn!("selected gain has non-negative {name} = {v:.4}");
        }
    }
    Ok(SearchReport {
        best: (**r).clone(),
        best_index: bi,
        improvements,
        points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::aggregate;
    use crate::presets;

    fn template() -> SynthesisTemplate {
        let (ders, c) = presets::five_der_system();
        SynthesisTemplate::new(aggregate(&ders, &c).unwrap(), &ders)
    }

    fn single(k: f64) -> SearchGrid {
        SearchGrid {
            kappa_y: vec![k],
            tau_v: vec![1.0],
            tau_d: None,
            tau_h: vec![0.1],
            tau_g: vec![0.1],
        }
    }

    #[test]
    fn singleton_grid_equals_single_solve() {
        let t = template();
        let rep = search_hyperparameters(&t, &single(300.0), &SdpOptions::default()).unwrap();
        let PointOutcome::Feasible(r) = solve_point(&t.at(single(300.0).points()[0]), &SdpOptions::default()).unwrap() else {
            panic!()
        };
        assert_eq!(rep.best, *r);
    }

    #[test]
    fn picks_the_feasible_point() {
        let t = template();
        let mut g = single(1.0);
        g.kappa_y = vec![1e-3, 300.0];
        let rep = search_hyperparameters(&t, &g, &SdpOptions::default()).unwrap();
        assert!(matches!(rep.points[0].outcome, PointOutcome::Infeasible(_)));
        assert_eq!(rep.best_index, 1);
    }

    #[test]
    fn all_infeasible_reports_every_point() {
        let t = template();
        let mut g = single(1e-3);
        g.tau_h = vec![0.1, 1.0];
        match search_hyperparameters(&t, &g, &SdpOptions::default()) {
            Err(Error::Infeasible(d)) => assert_eq!(d.lines().count(), 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn grid_order_is_lexicographic() {
        let g = SearchGrid::default();
        let p = g.points();
        assert_eq!(p.len(), 40);
        assert_eq!(p[0].kappa_y, 10.0);
        assert_eq!(p[1].tau_g, 1.0);
        assert_eq!(p[39].kappa_y, 1000.0);
        assert!(p.iter().all(|h| h.tau_d == h.tau_v));
    }
}
