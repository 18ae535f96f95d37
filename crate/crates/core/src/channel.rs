//! Channel statistics and sampling for both layers.
//!
//! Access links (UD to RRU) are correlated Rayleigh, `H = R^{1/2} G`. The
//! fronthaul (RRU to BBU) is Rician, `H = nu H_d + zeta R_b^{1/2} G`, where the
//! LoS part `H_d` holds one steering column per forwarded stream.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{complex_gaussian_matrix, CMatrix, HermitianEigen};
use crate::sysmodel::{SystemConfig, Topology};

/// Candidate BBU array orientations, evenly spaced over `[0, pi)`.
pub const ORIENTATION_STEPS: usize = 128;

/// Spatial frequency `sin(azimuth - broadside)` of a half-wavelength ULA,
/// reduced to the circle of circumference 2 on which aliasing happens.
fn spatial_gap(a: f64, b: f64) -> f64 {
    let d = (a - b).abs() % 2.0;
    d.min(2.0 - d)
}

/// Broadside azimuth of the BBU array for RRUs at `azimuths`.
///
/// A linear array cannot tell mirrored directions apart, so a fixed
/// orientation can give two RRUs the same LoS column. The array is turned to
/// the grid orientation that maximizes the smallest spatial-frequency gap
/// between RRUs; ties go to the smallest angle.
pub fn bbu_orientation(azimuths: &[f64]) -> f64 {
    let score = |delta: f64| -> f64 {
        let f: Vec<f64> = azimuths.iter().map(|a| (a - delta).sin()).collect();
        let mut worst = f64::INFINITY;
        for i in 0..f.len() {
            for j in (i + 1)..f.len() {
                worst = worst.min(spatial_gap(f[i], f[j]));
            }
        }
        worst
    };
    let mut best = (0.0, f64::NEG_INFINITY);
    for i in 0..ORIENTATION_STEPS {
        let delta = PI * i as f64 / ORIENTATION_STEPS as f64;
        let s = score(delta);
        if s > best.1 {
            best = (delta, s);
        }
    }
    best.0
}

/// Exponential correlation `rho^|m-n|` with its eigendecomposition cached.
#[derive(Debug, Clone)]
pub struct CorrelationMatrix {
    rho: f64,
    matrix: CMatrix,
    eigen: HermitianEigen,
    sqrt: CMatrix,
}

impl CorrelationMatrix {
    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn size(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn eigen(&self) -> &HermitianEigen {
        &self.eigen
    }

    /// Hermitian square root, `S S^H = R`.
    pub fn sqrt(&self) -> &CMatrix {
        &self.sqrt
    }

    pub fn trace(&self) -> f64 {
        self.matrix.diagonal().iter().map(|c| c.re).sum()
    }
}

pub fn exp_correlation(size: usize, rho: f64) -> Result<CorrelationMatrix> {
    if size == 0 {
        return Err(Error::Domain("correlation matrix of size 0".into()));
    }
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::Domain(format!("correlation rho = {rho} not in [0, 1)")));
    }
    let matrix = CMatrix::from_fn(size, size, |m, n| {
        Complex64::new(rho.powi(m.abs_diff(n) as i32), 0.0)
    });
    let eigen = HermitianEigen::new(&matrix);
    let sqrt = eigen.sqrt();
    Ok(CorrelationMatrix { rho, matrix, eigen, sqrt })
}

/// `(nu, zeta)` for a Rician factor in dB; `+inf` gives pure LoS.
pub fn rician_weights(k_rice_db: f64) -> (f64, f64) {
    if k_rice_db == f64::INFINITY {
        return (1.0, 0.0);
    }
    let kappa = 10f64.powf(k_rice_db / 10.0);
    ((kappa / (1.0 + kappa)).sqrt(), (1.0 / (1.0 + kappa)).sqrt())
}

/// Half-wavelength ULA steering columns `exp(i pi n sin theta_k)`.
pub fn steering_matrix(n: usize, thetas: &[f64]) -> CMatrix {
    CMatrix::from_fn(n, thetas.len(), |row, col| {
        Complex64::from_polar(1.0, PI * row as f64 * thetas[col].sin())
    })
}

/// LoS matrix of the fronthaul: stream `k` gets the steering column of the
/// RRU hosting it, seen from the BBU.
pub fn los_matrix(n: usize, topo: &Topology) -> CMatrix {
    let map = &topo.ud_to_rru;
    let azimuths: Vec<f64> = (0..map.num_rrus()).map(|r| topo.rru_azimuth(r)).collect();
    let broadside = bbu_orientation(&azimuths);
    let thetas: Vec<f64> = (0..map.num_uds()).map(|k| azimuths[map.rru_of(k)] - broadside).collect();
    steering_matrix(n, &thetas)
}

/// Second-order statistics shared by the rate engine and the link simulator.
///
/// One exponential correlation serves every RRU array (the same `M` and `rho`
/// everywhere); interfering links use the receiving RRU's matrix.
#[derive(Debug, Clone)]
pub struct CovarianceSet {
    pub access: CorrelationMatrix,
    pub bbu: CorrelationMatrix,
    pub h_det: CMatrix,
    pub nu: f64,
    pub zeta: f64,
}

impl CovarianceSet {
    pub fn new(cfg: &SystemConfig, topo: &Topology) -> Result<Self> {
        cfg.validate()?;
        topo.check_against(cfg)?;
        let (nu, zeta) = rician_weights(cfg.rician_db);
        Ok(Self {
            access: exp_correlation(cfg.rru_antennas, cfg.correlation_rho)?,
            bbu: exp_correlation(cfg.bbu_antennas, cfg.correlation_rho)?,
            h_det: los_matrix(cfg.bbu_antennas, topo),
            nu,
            zeta,
        })
    }

    /// Covariance of one access column.
    pub fn access_true(&self) -> &CMatrix {
        self.access.matrix()
    }

    /// Covariance of one scattered fronthaul column, `zeta^2 R_b`.
    pub fn fronthaul_true(&self) -> CMatrix {
        self.bbu.matrix().scale(self.zeta * self.zeta)
    }
}

/// All access channels of one coherence block.
///
/// `per_rru[r]` is `M x K`: column `k` is the channel from UD `k` to RRU `r`,
/// serving when `k` belongs to `r` and interfering otherwise.
#[derive(Debug, Clone, PartialEq)]
pub struct AccessChannelSet {
    pub per_rru: Vec<CMatrix>,
}

impl AccessChannelSet {
    /// `H_r`, the `M x U_r` serving block.
    pub fn serving(&self, topo: &Topology, r: usize) -> CMatrix {
        let cols = topo.ud_to_rru.uds_of(r);
        self.per_rru[r].columns(cols.start, cols.len()).into_owned()
    }

    /// `H_{r/r'}`, the `M x U_{r'}` block from RRU `r'`'s UDs into RRU `r`.
    pub fn interfering(&self, topo: &Topology, r: usize, r_src: usize) -> CMatrix {
        let cols = topo.ud_to_rru.uds_of(r_src);
        self.per_rru[r].columns(cols.start, cols.len()).into_owned()
    }
}

pub fn sample_access<R: Rng + ?Sized>(
    num_rrus: usize,
    num_uds: usize,
    corr: &CorrelationMatrix,
    rng: &mut R,
) -> AccessChannelSet {
    let m = corr.size();
    let per_rru = (0..num_rrus)
        .map(|_| corr.sqrt() * complex_gaussian_matrix(rng, m, num_uds))
        .collect();
    AccessChannelSet { per_rru }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FronthaulChannel {
    pub h_det: CMatrix,
    pub h_scatter: CMatrix,
    pub nu: f64,
    pub zeta: f64,
}

impl FronthaulChannel {
    pub fn combined(&self) -> CMatrix {
        self.h_det.scale(self.nu) + self.h_scatter.scale(self.zeta)
    }
}

pub fn sample_fronthaul<R: Rng + ?Sized>(
    h_det: &CMatrix,
    nu: f64,
    zeta: f64,
    corr: &CorrelationMatrix,
    rng: &mut R,
) -> FronthaulChannel {
    let g = complex_gaussian_matrix(rng, corr.size(), h_det.ncols());
    FronthaulChannel { h_det: h_det.clone(), h_scatter: corr.sqrt() * g, nu, zeta }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{rel_frobenius, trace};
    use crate::sysmodel::place_topology;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn correlation_examples() {
        let c = exp_correlation(4, 0.0).unwrap();
        assert_eq!(c.matrix(), &CMatrix::identity(4, 4));
        let c = exp_correlation(3, 0.1).unwrap();
        assert_relative_eq!(c.matrix()[(0, 2)].re, 0.01, epsilon = 1e-15);
        let c = exp_correlation(2, 0.5).unwrap();
        let mut ev = c.eigen().values.clone();
        ev.sort_by(f64::total_cmp);
        assert_relative_eq!(ev[0], 0.5, epsilon = 1e-12);
        assert_relative_eq!(ev[1], 1.5, epsilon = 1e-12);
        assert!(matches!(exp_correlation(3, 1.0), Err(Error::Domain(_))));
        assert!(exp_correlation(0, 0.1).is_err());
    }

    #[test]
    fn rician_examples() {
        let (nu, zeta) = rician_weights(10.0);
        assert_relative_eq!(nu, 0.95346, epsilon = 1e-5);
        assert_relative_eq!(zeta, 0.30151, epsilon = 1e-5);
        assert_eq!(rician_weights(f64::NEG_INFINITY), (0.0, 1.0));
        let (nu, zeta) = rician_weights(0.0);
        assert_relative_eq!(nu, 0.5f64.sqrt(), epsilon = 1e-15);
        assert_relative_eq!(zeta, 0.5f64.sqrt(), epsilon = 1e-15);
        assert_eq!(rician_weights(f64::INFINITY), (1.0, 0.0));
    }

    #[test]
    fn steering_examples() {
        let h = steering_matrix(4, &[0.0]);
        assert!(h.iter().all(|c| (c - Complex64::new(1.0, 0.0)).norm() < 1e-15));
        let h = steering_matrix(2, &[0.3, -0.9]);
        let inner = (h.column(0).adjoint() * h.column(1))[(0, 0)].norm();
        assert!(inner < 2.0 - 1e-6);
    }

    #[test]
    fn orientation_separates_mirrored_sites() {
        // x-axis broadside would alias the two RRUs mirrored across the y axis
        let az = [PI / 4.0, 3.0 * PI / 4.0];
        let d = bbu_orientation(&az);
        assert!(spatial_gap((az[0] - d).sin(), (az[1] - d).sin()) > 0.99);
        assert_eq!(bbu_orientation(&[0.3]), 0.0);
        assert!(spatial_gap(0.99, -0.99) < 0.03);
    }

    #[test]
    fn los_columns_are_distinct_across_rrus() {
        for r in [2, 3, 4, 6, 8] {
            let cfg = SystemConfig::default().with_counts(r, r).unwrap();
            let topo = place_topology(&cfg, 0).unwrap();
            let h = los_matrix(128, &topo);
            assert_relative_eq!(trace(&(&h * h.adjoint())).re, (128 * r) as f64, epsilon = 1e-9);
            for a in 0..r {
                for b in (a + 1)..r {
                    let inner = (h.column(a).adjoint() * h.column(b))[(0, 0)].norm();
                    assert!(inner < 0.5 * 128.0, "R={r} columns {a},{b} overlap: {inner}");
                }
            }
        }
    }

    #[test]
    fn kronecker_trace_identity() {
        let c = exp_correlation(32, 0.1).unwrap();
        for u in [1usize, 2, 3] {
            assert_relative_eq!(u as f64 * c.trace(), (u * 32) as f64, epsilon = 1e-12);
        }
    }

    #[test]
    fn access_samples_have_target_covariance() {
        let corr = exp_correlation(8, 0.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let trials = 10_000;
        let mut acc = CMatrix::zeros(8, 8);
        for _ in 0..trials {
            let set = sample_access(1, 1, &corr, &mut rng);
            let h = set.per_rru[0].column(0).into_owned();
            acc += &h * h.adjoint();
        }
        acc /= Complex64::new(trials as f64, 0.0);
        assert!(rel_frobenius(&acc, corr.matrix()) < 0.03);
    }

    #[test]
    fn white_access_entries_have_unit_variance() {
        let corr = exp_correlation(4, 0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let set = sample_access(4, 700, &corr, &mut rng);
        let n: usize = set.per_rru.iter().map(|h| h.len()).sum();
        let var: f64 = set.per_rru.iter().flat_map(|h| h.iter()).map(|c| c.norm_sqr()).sum::<f64>()
            / n as f64;
        assert!((var - 1.0).abs() < 0.03, "variance {var}");
        let other = sample_access(4, 700, &corr, &mut ChaCha8Rng::seed_from_u64(13));
        assert_ne!(set, other);
    }

    #[test]
    fn fronthaul_mean_and_scatter_covariance() {
        let corr = exp_correlation(6, 0.3).unwrap();
        let h_det = steering_matrix(6, &[0.2, 1.1]);
        let (nu, zeta) = rician_weights(3.0);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let trials = 10_000;
        let mut mean = CMatrix::zeros(6, 2);
        let mut cov = CMatrix::zeros(6, 6);
        for _ in 0..trials {
            let f = sample_fronthaul(&h_det, nu, zeta, &corr, &mut rng);
            let h = f.combined();
            mean += &h;
            let s = (&h - h_det.scale(nu)).column(0).into_owned();
            cov += &s * s.adjoint();
        }
        let inv = Complex64::new(1.0 / trials as f64, 0.0);
        assert!(rel_frobenius(&(mean * inv), &h_det.scale(nu)) < 0.03);
        assert!(rel_frobenius(&(cov * inv), &corr.matrix().scale(zeta * zeta)) < 0.03);

        let f = sample_fronthaul(&h_det, 1.0, 0.0, &corr, &mut rng);
        assert_eq!(f.combined(), h_det);
    }

    proptest! {
        #[test]
        fn sqrt_colors_exactly(size in 1usize..40, rho in 0.0f64..0.99) {
            let c = exp_correlation(size, rho).unwrap();
            let s = c.sqrt();
            prop_assert!(rel_frobenius(&(s * s.adjoint()), c.matrix()) < 1e-10);
            prop_assert!(c.eigen().values.iter().all(|&v| v >= 0.0));
        }

        #[test]
        fn rician_weights_are_normalized(db in -40.0f64..40.0) {
            let (nu, zeta) = rician_weights(db);
            prop_assert!((nu * nu + zeta * zeta - 1.0).abs() < 1e-12);
        }

        #[test]
        fn los_trace_is_exact(n in 1usize..64, thetas in prop::collection::vec(-3.2f64..3.2, 1..8)) {
            let h = steering_matrix(n, &thetas);
            let t = trace(&(&h * h.adjoint()));
            prop_assert!((t.re - (n * thetas.len()) as f64).abs() < 1e-9 * (n * thetas.len()) as f64);
        }
    }
}
