//! Gain files: the synthesized feedback plus the data the analysis checks need.

use std::path::Path;

use anyhow::{ensure, Context, Result};
use dapi_core::model::{GainMatrix, NX};
use dapi_core::synthesis::{Certificate, Hyper};
use dapi_core::DMatrix;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainFile {
    pub n_ders: usize,
    pub alpha: f64,
    pub beta: f64,
    pub multipliers: Multipliers,
    /// One block per DER.
    pub blocks: Vec<GainBlock>,
    /// Lyapunov matrix, row by row.
    pub p_lyap: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Multipliers {
    pub kappa_y: f64,
    pub tau_v: f64,
    pub tau_d: f64,
    pub tau_h: f64,
    pub tau_g: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainBlock {
    pub k_omega: f64,
    #[serde(rename = "k_Omega")]
    pub k_omega_c: f64,
    pub k_v: f64,
    pub k_e: f64,
}

impl GainFile {
    pub fn from_certificate(c: &Certificate) -> Self {
        let h = c.hyper;
        GainFile {
            n_ders: c.k_gain.n_ders(),
            alpha: c.alpha,
            beta: c.beta,
            multipliers: Multipliers {
                kappa_y: h.kappa_y,
                tau_v: h.tau_v,
                tau_d: h.tau_d,
                tau_h: h.tau_h,
                tau_g: h.tau_g,
            },
            blocks: c
                .k_gain
                .blocks
                .iter()
                .map(|b| GainBlock {
                    k_omega: b[0],
                    k_omega_c: b[1],
                    k_v: b[2],
                    k_e: b[3],
                })
                .collect(),
            p_lyap: c.p_lyap.row_iter().map(|r| r.iter().copied().collect()).collect(),
        }
    }

    pub fn certificate(&self) -> Result<Certificate> {
        let n = self.n_ders;
        ensure!(n > 0, "gain file has no DERs");
        ensure!(self.blocks.len() == n, "gain file declares {n} DERs but has {} blocks", self.blocks.len());
        let dim = NX * n;
        ensure!(
            self.p_lyap.len() == dim && self.p_lyap.iter().all(|r| r.len() == dim),
            "p_lyap must be {dim} x {dim}"
        );
        let p = DMatrix::from_fn(dim, dim, |i, j| self.p_lyap[i][j]);
        ensure!((&p - p.transpose()).amax() <= 1e-9 * p.amax(), "p_lyap is not symmetric");
        ensure!(p.clone().cholesky().is_some(), "p_lyap is not positive definite");
        ensure!(self.alpha > 0.0 && self.beta > 0.0, "alpha and beta must be positive");
        let blocks = self.blocks.iter().map(|b| [b.k_omega, b.k_omega_c, b.k_v, b.k_e]).collect();
        let m = self.multipliers;
        Ok(Certificate {
            hyper: Hyper {
                kappa_y: m.kappa_y,
                tau_v: m.tau_v,
                tau_d: m.tau_d,
                tau_h: m.tau_h,
                tau_g: m.tau_g,
            },
            k_gain: GainMatrix::from_blocks(blocks, true)?,
            p_lyap: p,
            alpha: self.alpha,
            beta: self.beta,
        })
    }

    pub fn load(path: &Path) -> Result<Certificate> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let file: GainFile = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        file.certificate().with_context(|| format!("checking {}", path.display()))
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }
}
