//! Connective stability: the closed loop must be stable for every
//! interconnection obtained by switching fundamental links on or off.

use nalgebra::{Complex, DMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::eigenvalues;
use crate::error::{invalid, Result};
use crate::model::{component_count, uncertainty_a, CouplingSpec, DerParams, GainMatrix, NX};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConnectiveOptions {
    /// Largest link count enumerated exhaustively.
    pub max_exhaustive_links: usize,
    /// Corners drawn when the link count exceeds the budget.
    pub samples: usize,
    pub seed: u64,
    /// Magnitude below which an eigenvalue is counted as a zero mode.
    pub zero_tol: f64,
}

impl Default for ConnectiveOptions {
    fn default() -> Self {
        ConnectiveOptions {
            max_exhaustive_links: 20,
            samples: 4096,
            seed: 0,
            zero_tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CornerResult {
    /// Bit `l` set when link `l` of `CouplingSpec::links()` is live.
    pub mask: u64,
    /// Largest real part once the predicted zero modes are removed.
    pub worst_real: f64,
    /// Eigenvalues with magnitude below `zero_tol`.
    pub zero_modes: usize,
    /// Zero modes implied by the gains and the corner's graph, when the gains
    /// make that count structural.
    pub predicted_zero_modes: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConnectiveReport {
    pub corners: Vec<CornerResult>,
    /// False when corners were sampled instead of enumerated.
    pub exhaustive: bool,
    pub worst_real: f64,
    pub worst_mask: u64,
}

impl ConnectiveReport {
    pub fn stable(&self) -> bool {
        self.worst_real < 0.0
    }

    /// True when every corner's zero-mode count equals its prediction.
    pub fn zero_modes_match(&self) -> bool {
        self.corners.iter().all(|c| c.predicted_zero_modes == Some(c.zero_modes))
    }
}

/// Nullity of the 2x2 `[[k_v - 1, 1 + k_e], [-xi, 0]]` voltage block.
fn voltage_nullity(g: &[f64; 4], xi: f64) -> usize {
    let m = [[g[2] - 1.0, 1.0 + g[3]], [-xi, 0.0]];
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    if det != 0.0 {
        0
    } else if m.iter().flatten().any(|v| *v != 0.0) {
        1
    } else {
        2
    }
}

/// Structural zero-mode count of the closed loop for frequency couplings `a`.
///
/// The frequency part is singular exactly when
/// `diag(1 + k_Omega) + diag(1 - k_omega) L_a` is; that nullity is graph
/// structural when every `1 + k_Omega` vanishes (component count) or when
/// every ratio `(1 + k_Omega) / (1 - k_omega)` is positive (none). Other gain
/// mixes return `None`.
pub fn predicted_zero_modes(ders: &[DerParams], gain: &GainMatrix, a: &DMatrix<f64>) -> Option<usize> {
    let n = ders.len();
    let c: Vec<f64> = gain.blocks.iter().map(|g| 1.0 + g[1]).collect();
    let h: Vec<f64> = gain.blocks.iter().map(|g| 1.0 - g[0]).collect();
    let freq = if c.iter().all(|&v| v == 0.0) {
        if h.iter().all(|&v| v != 0.0) {
            component_count(a)
        } else if h.iter().all(|&v| v == 0.0) {
            n + component_count(a)
        } else {
            return None;
        }
    } else if (0..n).all(|i| c[i] != 0.0 && (h[i] == 0.0 || c[i] / h[i] > 0.0)) {
        // h_i = 0 pins Omega_i to zero; elsewhere the matrix is a positive
        // diagonal shift of a scaled Laplacian
        0
    } else {
        return None;
    };
    let volt: usize = ders.iter().zip(&gain.blocks).map(|(d, g)| voltage_nullity(g, d.xi)).sum();
    Some(freq + volt)
}

fn corner_coupling(coupling: &CouplingSpec, links: &[(usize, usize)], mask: u64, alpha: f64) -> DMatrix<f64> {
    let n = coupling.n_ders;
    let mut a = DMatrix::zeros(n, n);
    for (l, &(i, j)) in links.iter().enumerate() {
        if mask >> l & 1 == 1 {
            a[(i, j)] = alpha * coupling.a_max[(i, j)];
            a[(j, i)] = alpha * coupling.a_max[(j, i)];
        }
    }
    a
}

fn evaluate_corner(
    base: &DMatrix<f64>,
    ders: &[DerParams],
    gain: &GainMatrix,
    a: &DMatrix<f64>,
    mask: u64,
    zero_tol: f64,
) -> Result<CornerResult> {
    let acl = base + uncertainty_a(ders, a);
    let mut ev: Vec<Complex<f64>> = eigenvalues(&acl)?;
    let predicted = predicted_zero_modes(ders, gain, a);
    let zero_modes = ev.iter().filter(|z| z.norm() < zero_tol).count();
    // drop the structurally predicted count of smallest-magnitude eigenvalues
    ev.sort_by(|x, y| x.norm().total_cmp(&y.norm()));
    let skip = predicted.unwrap_or(zero_modes);
    let worst_real = ev[skip.min(ev.len())..].iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
    Ok(CornerResult {
        mask,
        worst_real,
        zero_modes,
        predicted_zero_modes: predicted,
    })
}

/// Checks `A_D + B_D K_D + dA_D(E)` for every corner `E` generated by the
/// fundamental links, with the live couplings scaled by `alpha`.
///
/// Only frequency couplings enter the state matrix; voltage couplings act
/// through the disturbance channel and do not change the corner spectra.
pub fn connective_stability_check(
    ders: &[DerParams],
    coupling: &CouplingSpec,
    gain: &GainMatrix,
    alpha: f64,
    opts: &ConnectiveOptions,
) -> Result<ConnectiveReport> {
    if !(alpha >= 0.0) || !alpha.is_finite() {
        return Err(invalid("alpha", format!("must be non-negative, got {alpha}")));
    }
    let sys = crate::model::aggregate(ders, coupling)?;
    if gain.n_ders() != ders.len() {
        return Err(crate::error::Error::Dimension("gain and DER counts differ".into()));
    }
    let base = &sys.a_d + &sys.b_d * gain.to_matrix();
    let links = coupling.links();
    let nl = links.len();
    let (masks, exhaustive): (Vec<u64>, bool) = if nl <= opts.max_exhaustive_links.min(63) {
        ((0..1u64 << nl).collect(), true)
    } else {
        log::warn!("{nl} links exceed the enumeration budget; sampling {} corners", opts.samples);
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let full = if nl >= 64 { u64::MAX } else { (1u64 << nl) - 1 };
        let mut m = vec![0, full];
        m.extend((0..opts.samples.saturating_sub(2)).map(|_| rng.gen::<u64>() & full));
        (m, false)
    };
    let corners: Vec<CornerResult> = masks
        .par_iter()
        .map(|&mask| {
            let a = corner_coupling(coupling, &links, mask, alpha);
            evaluate_corner(&base, ders, gain, &a, mask, opts.zero_tol)
        })
        .collect::<Result<_>>()?;
    let (worst_real, worst_mask) = corners
        .iter()
        .fold((f64::NEG_INFINITY, 0), |acc, c| if c.worst_real > acc.0 { (c.worst_real, c.mask) } else { acc });
    debug_assert_eq!(base.nrows(), NX * ders.len());
    Ok(ConnectiveReport {
        corners,
        exhaustive,
        worst_real,
        worst_mask,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;

    #[test]
    fn decoupled_corner_matches_per_der_blocks() {
        let (ders, c) = presets::five_der_system();
        let k = GainMatrix::uniform([-0.45, 6.7, -0.11, 3.7], 5, true).unwrap();
        let rep = connective_stability_check(&ders, &c, &k, 1.0, &Default::default()).unwrap();
        let mut worst = f64::NEG_INFINITY;
        for (i, d) in ders.iter().enumerate() {
            let (a, b, _) = crate::model::build_der_matrices(d).unwrap();
            let kb = nalgebra::Matrix2x4::new(k.blocks[i][0], k.blocks[i][1], 0.0, 0.0, 0.0, 0.0, k.blocks[i][2], k.blocks[i][3]);
            for z in eigenvalues(&nalgebra::DMatrix::from_column_slice(4, 4, (a + b * kb).as_slice())).unwrap() {
                worst = worst.max(z.re);
            }
        }
        let off = rep.corners.iter().find(|c| c.mask == 0).unwrap();
        assert!((off.worst_real - worst).abs() < 1e-9);
        assert!(rep.exhaustive);
        assert_eq!(rep.corners.len(), 32);
    }

    #[test]
    fn voltage_nullity_cases() {
        assert_eq!(voltage_nullity(&[0.0; 4], 1.0), 0);
        assert_eq!(voltage_nullity(&[0.0, 0.0, 0.0, -1.0], 1.0), 1);
        assert_eq!(voltage_nullity(&[0.0; 4], 0.0), 1);
        assert_eq!(voltage_nullity(&[0.0, 0.0, 1.0, -1.0], 0.0), 2);
    }

    #[test]
    fn zero_omega_gain_exposes_consensus_modes() {
        let (ders, c) = presets::five_der_system();
        let k = GainMatrix::uniform([-0.5, -1.0, -0.5, -0.5], 5, true).unwrap();
        let rep = connective_stability_check(&ders, &c, &k, 1.0, &Default::default()).unwrap();
        assert!(rep.zero_modes_match());
        let full = rep.corners.iter().find(|c| c.mask == 31).unwrap();
        assert_eq!(full.zero_modes, 1);
        let off = rep.corners.iter().find(|c| c.mask == 0).unwrap();
        assert_eq!(off.zero_modes, 5);
        assert!(rep.worst_real < 0.0);
    }

    #[test]
    fn sampling_flagged_over_budget() {
        let (ders, c) = presets::five_der_system();
        let opts = ConnectiveOptions {
            max_exhaustive_links: 3,
            samples: 10,
            ..Default::default()
        };
        let rep = connective_stability_check(&ders, &c, &GainMatrix::zero(5), 1.0, &opts).unwrap();
        assert!(!rep.exhaustive);
        assert_eq!(rep.corners.len(), 10);
    }
}
