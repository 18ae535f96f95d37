//! MMSE channel estimation for both layers.
//!
//! All covariance algebra is per column: `M x M` blocks on the access layer,
//! `N x N` blocks on the fronthaul. The Kronecker-structured operators over
//! all columns are block diagonal and never materialized.
//!
//! Pilot observations follow `Y = H P^{1/2} X + noise` with a unitary pilot
//! matrix `X`. Despreading with `X^H` and dividing column `u` by `sqrt(p_u)`
//! yields `h_u + w_u` with `w_u ~ CN(0, sigma^2 / p_u I)`, to which the
//! per-column MMSE filter `Q (Q + s I)^{-1}`, `s = sigma^2 / p_u`, is applied.

use num_complex::Complex64;

use crate::channel::CovarianceSet;
use crate::error::{Error, Result};
use crate::linalg::{unitarity_defect, CMatrix, HermitianEigen};
use crate::sysmodel::LinkBudget;

/// Largest tolerated deviation of `X X^H` from the identity.
pub const PILOT_UNITARITY_TOL: f64 = 1e-10;

/// Estimate and error covariance of one column.
#[derive(Debug, Clone)]
pub struct ColumnCovariances {
    pub estimate: CMatrix,
    pub error: CMatrix,
}

fn mmse_split(prior: &CMatrix, p_pilot_rx: f64, noise: f64) -> Result<ColumnCovariances> {
    if !(p_pilot_rx >= 0.0) || !(noise >= 0.0) {
        return Err(Error::Domain(format!(
            "pilot power {p_pilot_rx} and noise {noise} must be nonnegative"
        )));
    }
    let n = prior.nrows();
    if noise == 0.0 && p_pilot_rx > 0.0 {
        return Ok(ColumnCovariances { estimate: prior.clone(), error: CMatrix::zeros(n, n) });
    }
    if p_pilot_rx == 0.0 {
        return Ok(ColumnCovariances { estimate: CMatrix::zeros(n, n), error: prior.clone() });
    }
    let s = noise / p_pilot_rx;
    let shifted = prior + CMatrix::identity(n, n).scale(s);
    // (Q + sI)^{-1} Q solved directly; Q (Q + sI)^{-1} Q is then a product
    let solved = shifted
        .lu()
        .solve(prior)
        .ok_or_else(|| Error::Degenerate("singular MMSE system".into()))?;
    let estimate = crate::linalg::hermitize(&(prior * solved));
    let error = crate::linalg::hermitize(&(prior - &estimate));
    Ok(ColumnCovariances { estimate, error })
}

/// `Psi_hat = R (s I + R)^{-1} R`, `Psi_err = R - Psi_hat` for one access column.
pub fn access_cov(corr: &CMatrix, p_pilot_rx: f64, noise: f64) -> Result<ColumnCovariances> {
    mmse_split(corr, p_pilot_rx, noise)
}

/// Same split for one fronthaul column with scatter prior `zeta^2 R_b`.
pub fn fronthaul_cov(
    corr: &CMatrix,
    zeta: f64,
    p_pilot_rx: f64,
    noise: f64,
) -> Result<ColumnCovariances> {
    mmse_split(&corr.scale(zeta * zeta), p_pilot_rx, noise)
}

/// Estimate-covariance eigenvalues `q^2 / (q + s)` for prior eigenvalues `q`.
pub fn estimate_spectrum(prior_eigs: &[f64], p_pilot_rx: f64, noise: f64) -> Vec<f64> {
    if noise == 0.0 && p_pilot_rx > 0.0 {
        return prior_eigs.to_vec();
    }
    if p_pilot_rx == 0.0 {
        return vec![0.0; prior_eigs.len()];
    }
    let s = noise / p_pilot_rx;
    prior_eigs.iter().map(|&q| q * q / (q + s)).collect()
}

/// Per-column covariances of every access stream and fronthaul stream.
#[derive(Debug, Clone)]
pub struct EstimateCovariances {
    pub access: Vec<ColumnCovariances>,
    pub fronthaul: Vec<ColumnCovariances>,
}

impl EstimateCovariances {
    pub fn new(covs: &CovarianceSet, budget: &LinkBudget) -> Result<Self> {
        let access = budget
            .p_rx_access_pilot
            .iter()
            .map(|&p| access_cov(covs.access_true(), p, budget.noise_access))
            .collect::<Result<_>>()?;
        let fronthaul = budget
            .p_rx_fronthaul_pilot
            .iter()
            .map(|&p| fronthaul_cov(covs.bbu.matrix(), covs.zeta, p, budget.noise_fronthaul))
            .collect::<Result<_>>()?;
        Ok(Self { access, fronthaul })
    }
}

fn check_pilots(pilots: &CMatrix, streams: usize) -> Result<()> {
    if pilots.nrows() != streams || pilots.ncols() != streams {
        return Err(Error::Contract(format!(
            "pilot matrix is {}x{}, expected {streams}x{streams}",
            pilots.nrows(),
            pilots.ncols()
        )));
    }
    let defect = unitarity_defect(pilots);
    if defect > PILOT_UNITARITY_TOL {
        return Err(Error::Contract(format!("pilot matrix not unitary (defect {defect:e})")));
    }
    Ok(())
}

/// Per-column MMSE filter applied to despread pilot observations.
fn filter_columns(
    obs: &CMatrix,
    pilots: &CMatrix,
    prior: &HermitianEigen,
    prior_scale: f64,
    p_pilot_rx: &[f64],
    noise: f64,
) -> Result<CMatrix> {
    check_pilots(pilots, p_pilot_rx.len())?;
    if obs.ncols() != p_pilot_rx.len() {
        return Err(Error::Contract(format!(
            "observation has {} pilot slots, expected {}",
            obs.ncols(),
            p_pilot_rx.len()
        )));
    }
    let despread = obs * pilots.adjoint();
    let mut est = CMatrix::zeros(obs.nrows(), obs.ncols());
    for (u, &p) in p_pilot_rx.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        let z = despread.column(u) / Complex64::new(p.sqrt(), 0.0);
        let col = if noise == 0.0 {
            z
        } else {
            let s = noise / p;
            // V diag(q / (q + s)) V^H z, applied without forming the filter
            let mut w = prior.vectors.adjoint() * z;
            for (wi, &q) in w.iter_mut().zip(&prior.values) {
                let q = prior_scale * q;
                *wi *= if q + s > 0.0 { q / (q + s) } else { 0.0 };
            }
            &prior.vectors * w
        };
        est.set_column(u, &col);
    }
    Ok(est)
}

/// MMSE estimate of one RRU's serving channel from its `M x U_r` pilot block.
pub fn mmse_estimate_access(
    obs: &CMatrix,
    pilots: &CMatrix,
    corr: &HermitianEigen,
    p_pilot_rx: &[f64],
    noise: f64,
) -> Result<CMatrix> {
    filter_columns(obs, pilots, corr, 1.0, p_pilot_rx, noise)
}

/// MMSE estimate of the fronthaul channel from the `N x K` pilot block with
/// the known LoS contribution already removed; returns `nu H_d + scatter estimate`.
pub fn mmse_estimate_fronthaul(
    obs_without_los: &CMatrix,
    pilots: &CMatrix,
    corr: &HermitianEigen,
    nu: f64,
    zeta: f64,
    h_det: &CMatrix,
    p_pilot_rx: &[f64],
    noise: f64,
) -> Result<CMatrix> {
    let scatter = if zeta == 0.0 {
        check_pilots(pilots, p_pilot_rx.len())?;
        CMatrix::zeros(h_det.nrows(), h_det.ncols())
    } else {
        filter_columns(obs_without_los, pilots, corr, zeta * zeta, p_pilot_rx, noise)?
    };
    Ok(h_det.scale(nu) + scatter)
}
