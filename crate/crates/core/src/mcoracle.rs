//! Brute-force link simulator used as ground truth for the closed form.
//!
//! Each realization draws every channel, runs both pilot phases through the
//! MMSE estimators, forms matched-filter combiners and then pushes unit
//! symbols and unit noise vectors through the physical chain
//! (access channel, RRU combiner, amplification, fronthaul, BBU combiner).
//! The chain is linear, so the detector output of UD `k*` decomposes exactly
//! into per-symbol coefficients and a noise map. Nothing here reads a
//! closed-form quantity.

use nalgebra::DVector;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;

use crate::channel::{
    exp_correlation, los_matrix, rician_weights, sample_access, sample_fronthaul, AccessChannelSet,
    CorrelationMatrix, FronthaulChannel,
};
use crate::closedrate::{Method, RateReport};
use crate::error::{Error, Result};
use crate::estimation::{mmse_estimate_access, mmse_estimate_fronthaul};
use crate::linalg::{complex_gaussian, complex_gaussian_matrix, dft_matrix, CMatrix};
use crate::rng::{stream_rng, substream_path, Domain};
use crate::sysmodel::{build_link_budget, LinkBudget, Phase, PowerSharingVector, SystemConfig, Topology};

/// Relative tolerance between the injected and the composite decomposition.
pub const DECOMPOSITION_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub access: AccessChannelSet,
    pub fronthaul: FronthaulChannel,
    /// Per RRU, `M x U_r` estimate of the serving channel.
    pub access_estimate: Vec<CMatrix>,
    /// `N x K` estimate of the fronthaul channel.
    pub fronthaul_estimate: CMatrix,
    pub amplification: Vec<f64>,
}

impl ChannelRealization {
    /// `W_r = H_hat_r^H`.
    pub fn access_combiner(&self, r: usize) -> CMatrix {
        self.access_estimate[r].adjoint()
    }

    /// `W_b = H_hat_b^H`.
    pub fn fronthaul_combiner(&self) -> CMatrix {
        self.fronthaul_estimate.adjoint()
    }
}

/// Instantaneous powers at one detector output, grouped by symbol origin.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct DetectorTerms {
    /// Everything carried by the UD's own symbol.
    pub desired: f64,
    /// Symbols of the other UDs of the same RRU.
    pub inter_stream: f64,
    /// Symbols of UDs served by other RRUs.
    pub inter_rru: f64,
    pub noise: f64,
    /// Total output power from the composite linear map.
    pub total: f64,
}

impl DetectorTerms {
    pub fn interference_noise(&self) -> f64 {
        self.inter_stream + self.inter_rru + self.noise
    }

    pub fn sinr(&self) -> f64 {
        self.desired / self.interference_noise()
    }
}

/// Everything the simulator needs that does not change between realizations.
#[derive(Debug, Clone)]
pub struct LinkSimulator {
    topo: Topology,
    budget: LinkBudget,
    access_corr: CorrelationMatrix,
    bbu_corr: CorrelationMatrix,
    h_det: CMatrix,
    nu: f64,
    zeta: f64,
    lambda_b: f64,
    lambda_a: Vec<f64>,
    access_pilots: Vec<CMatrix>,
    fronthaul_pilots: CMatrix,
}

impl LinkSimulator {
    pub fn new(cfg: &SystemConfig, topo: &Topology, eta: &PowerSharingVector) -> Result<Self> {
        let budget = build_link_budget(cfg, topo, eta)?;
        Self::from_budget(cfg, topo, budget)
    }

    /// Simulator over an explicit budget, e.g. with a noise term switched off.
    pub fn from_budget(cfg: &SystemConfig, topo: &Topology, budget: LinkBudget) -> Result<Self> {
        cfg.validate()?;
        topo.check_against(cfg)?;
        let access_corr = exp_correlation(cfg.rru_antennas, cfg.correlation_rho)?;
        let bbu_corr = exp_correlation(cfg.bbu_antennas, cfg.correlation_rho)?;
        let h_det = los_matrix(cfg.bbu_antennas, topo);
        let (nu, zeta) = rician_weights(cfg.rician_db);
        let k = cfg.num_uds as f64;
        // combiner normalizations from the true-channel second moments
        let per_column: f64 = bbu_corr.matrix().diagonal().iter().map(|c| c.re).sum();
        let los_energy: f64 = h_det.iter().map(|c| c.norm_sqr()).sum();
        let lambda_b = k / (nu * nu * los_energy + k * zeta * zeta * per_column);
        let access_energy: f64 = access_corr.matrix().diagonal().iter().map(|c| c.re).sum();
        let lambda_a = (0..cfg.num_uds).map(|_| 1.0 / access_energy).collect();
        Ok(Self {
            topo: topo.clone(),
            budget,
            access_pilots: cfg.uds_per_rru.iter().map(|&u| dft_matrix(u)).collect(),
            fronthaul_pilots: dft_matrix(cfg.num_uds),
            access_corr,
            bbu_corr,
            h_det,
            nu,
            zeta,
            lambda_b,
            lambda_a,
        })
    }

    pub fn budget(&self) -> &LinkBudget {
        &self.budget
    }

    fn num_uds(&self) -> usize {
        self.topo.ud_to_rru.num_uds()
    }

    fn num_rrus(&self) -> usize {
        self.topo.ud_to_rru.num_rrus()
    }

    /// Draws channels, runs both pilot phases and estimates.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<ChannelRealization> {
        let map = &self.topo.ud_to_rru;
        let b = &self.budget;
        let access = sample_access(self.num_rrus(), self.num_uds(), &self.access_corr, rng);
        let fronthaul = sample_fronthaul(&self.h_det, self.nu, self.zeta, &self.bbu_corr, rng);

        // access pilots: each RRU hears only its own UDs
        let mut access_estimate = Vec::with_capacity(self.num_rrus());
        for r in 0..self.num_rrus() {
            let cols = map.uds_of(r);
            let powers: Vec<f64> = cols.clone().map(|k| b.p_rx_access_pilot[k]).collect();
            let h = access.serving(&self.topo, r);
            let noise = complex_gaussian_matrix(rng, h.nrows(), cols.len()).scale(b.noise_access.sqrt());
            let obs = scale_columns(&h, &powers) * &self.access_pilots[r] + noise;
            access_estimate.push(mmse_estimate_access(
                &obs,
                &self.access_pilots[r],
                self.access_corr.eigen(),
                &powers,
                b.noise_access,
            )?);
        }

        let g = fronthaul.combined();
        let noise = complex_gaussian_matrix(rng, g.nrows(), g.ncols()).scale(b.noise_fronthaul.sqrt());
        let received = scale_columns(&g, &b.p_rx_fronthaul_pilot) * &self.fronthaul_pilots + noise;
        let los = scale_columns(&self.h_det.scale(self.nu), &b.p_rx_fronthaul_pilot) * &self.fronthaul_pilots;
        let fronthaul_estimate = mmse_estimate_fronthaul(
            &(received - los),
            &self.fronthaul_pilots,
            self.bbu_corr.eigen(),
            self.nu,
            self.zeta,
            &self.h_det,
            &b.p_rx_fronthaul_pilot,
            b.noise_fronthaul,
        )?;

        Ok(ChannelRealization {
            access,
            fronthaul,
            access_estimate,
            fronthaul_estimate,
            amplification: (0..self.num_uds()).map(|k| b.amplification(k)).collect(),
        })
    }

    /// Runs the data chain on a batch of inputs (one column each) and returns
    /// the `K x B` detector outputs.
    pub fn propagate(
        &self,
        real: &ChannelRealization,
        symbols: &CMatrix,
        access_noise: &[CMatrix],
        bbu_noise: &CMatrix,
    ) -> CMatrix {
        let map = &self.topo.ud_to_rru;
        let b = &self.budget;
        let batch = symbols.ncols();
        let k_total = self.num_uds();
        let mut forwarded = CMatrix::zeros(k_total, batch);
        for r in 0..self.num_rrus() {
            let powers: Vec<f64> = (0..k_total).map(|j| b.rx_at_rru(r, j, Phase::Data)).collect();
            let received = scale_columns(&real.access.per_rru[r], &powers) * symbols + &access_noise[r];
            let combined = real.access_combiner(r) * received;
            for (row, k) in map.uds_of(r).enumerate() {
                let gain = (self.lambda_a[k] * real.amplification[k] * b.p_rx_fronthaul_data[k]).sqrt();
                forwarded.set_row(k, &(combined.row(row) * Complex64::new(gain, 0.0)));
            }
        }
        let at_bbu = real.fronthaul.combined() * forwarded + bbu_noise;
        (real.fronthaul_combiner() * at_bbu).scale(self.lambda_b.sqrt())
    }

    /// Per-detector decomposition of one realization.
    ///
    /// Symbol coefficients and noise maps come from injecting unit inputs
    /// through [`propagate`](Self::propagate); the total is recomputed from
    /// the composite matrices and the two must agree to [`DECOMPOSITION_TOL`].
    pub fn decompose(&self, real: &ChannelRealization) -> Result<Vec<DetectorTerms>> {
        let map = &self.topo.ud_to_rru;
        let b = &self.budget;
        let k_total = self.num_uds();
        let m = self.access_corr.size();
        let n = self.bbu_corr.size();
        let r_total = self.num_rrus();
        let batch = k_total + r_total * m + n;

        let mut symbols = CMatrix::zeros(k_total, batch);
        let mut access_noise = vec![CMatrix::zeros(m, batch); r_total];
        let mut bbu_noise = CMatrix::zeros(n, batch);
        let one = Complex64::new(1.0, 0.0);
        for j in 0..k_total {
            symbols[(j, j)] = one;
        }
        for (r, noise) in access_noise.iter_mut().enumerate() {
            for i in 0..m {
                noise[(i, k_total + r * m + i)] = one;
            }
        }
        for i in 0..n {
            bbu_noise[(i, k_total + r_total * m + i)] = one;
        }
        let out = self.propagate(real, &symbols, &access_noise, &bbu_noise);

        let composite = self.composite(real);
        let mut terms = Vec::with_capacity(k_total);
        for star in 0..k_total {
            let r_star = map.rru_of(star);
            let mut t = DetectorTerms::default();
            for j in 0..k_total {
                let p = out[(star, j)].norm_sqr();
                if j == star {
                    t.desired = p;
                } else if map.rru_of(j) == r_star {
                    t.inter_stream += p;
                } else {
                    t.inter_rru += p;
                }
            }
            let access_map: f64 = (k_total..k_total + r_total * m).map(|c| out[(star, c)].norm_sqr()).sum();
            let bbu_map: f64 = (k_total + r_total * m..batch).map(|c| out[(star, c)].norm_sqr()).sum();
            t.noise = b.noise_access * access_map + b.noise_fronthaul * bbu_map;
            t.total = composite[star];
            let parts = t.desired + t.inter_stream + t.inter_rru + t.noise;
            if (parts - t.total).abs() > DECOMPOSITION_TOL * t.total.max(f64::MIN_POSITIVE) {
                return Err(Error::Contract(format!(
                    "detector {} decomposition mismatch: {parts} vs {}",
                    star + 1,
                    t.total
                )));
            }
            terms.push(t);
        }
        Ok(terms)
    }

    /// Total output power per detector from `T = B E` and the noise maps.
    fn composite(&self, real: &ChannelRealization) -> Vec<f64> {
        let map = &self.topo.ud_to_rru;
        let b = &self.budget;
        let k_total = self.num_uds();
        let g_hat = &real.fronthaul_estimate;
        let scale: Vec<f64> = (0..k_total)
            .map(|k| (self.lambda_a[k] * real.amplification[k] * b.p_rx_fronthaul_data[k]).sqrt())
            .collect();
        let fronthaul_map =
            scale_columns(&(g_hat.adjoint() * real.fronthaul.combined()), &vec![self.lambda_b; k_total]);
        let mut access_map = CMatrix::zeros(k_total, k_total);
        for k in 0..k_total {
            let r = map.rru_of(k);
            let h_hat = real.access_estimate[r].column(k - map.uds_of(r).start);
            for j in 0..k_total {
                let p = b.rx_at_rru(r, j, Phase::Data).sqrt();
                let v = (h_hat.adjoint() * real.access.per_rru[r].column(j))[(0, 0)];
                access_map[(k, j)] = v * Complex64::new(p * scale[k], 0.0);
            }
        }
        let t = &fronthaul_map * &access_map;
        (0..k_total)
            .map(|star| {
                let symbol_power: f64 = t.row(star).iter().map(|c| c.norm_sqr()).sum();
                let mut access_noise = 0.0;
                for r in 0..self.num_rrus() {
                    let mut v = DVector::<Complex64>::zeros(self.access_corr.size());
                    for k in map.uds_of(r) {
                        let h_hat = real.access_estimate[r].column(k - map.uds_of(r).start);
                        v += h_hat * (fronthaul_map[(star, k)] * scale[k]).conj();
                    }
                    access_noise += v.norm_squared();
                }
                let bbu_noise = self.lambda_b * g_hat.column(star).norm_squared();
                symbol_power + b.noise_access * access_noise + b.noise_fronthaul * bbu_noise
            })
            .collect()
    }

    pub fn simulate_once<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
    ) -> Result<(ChannelRealization, Vec<DetectorTerms>)> {
        let real = self.sample(rng)?;
        let terms = self.decompose(&real)?;
        Ok((real, terms))
    }
}

/// `A diag(sqrt(p))`.
fn scale_columns(a: &CMatrix, powers: &[f64]) -> CMatrix {
    let mut out = a.clone();
    for (j, &p) in powers.iter().enumerate() {
        out.column_mut(j).scale_mut(p.sqrt());
    }
    out
}

pub fn simulate_once<R: Rng + ?Sized>(
    cfg: &SystemConfig,
    topo: &Topology,
    eta: &PowerSharingVector,
    rng: &mut R,
) -> Result<(ChannelRealization, Vec<DetectorTerms>)> {
    LinkSimulator::new(cfg, topo, eta)?.simulate_once(rng)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalRate {
    pub realizations: usize,
    /// `samples[i][k]`: detector terms of UD `k` in realization `i`.
    pub samples: Vec<Vec<DetectorTerms>>,
    /// Mean of `log2(1 + sinr)` per UD and its standard error.
    pub per_ud_rate: Vec<f64>,
    pub per_ud_stderr: Vec<f64>,
    pub sum_rate: f64,
    pub sum_rate_stderr: f64,
    pub per_ud_mean_desired: Vec<f64>,
    pub per_ud_mean_in: Vec<f64>,
    /// `log2(1 + E{desired} / E{interference + noise})` per UD.
    pub per_ud_ratio_rate: Vec<f64>,
    pub ratio_sum_rate: f64,
}

impl EmpiricalRate {
    pub fn from_samples(samples: Vec<Vec<DetectorTerms>>) -> Result<Self> {
        let n = samples.len();
        if n < 2 {
            return Err(Error::Contract(format!("need at least 2 realizations, got {n}")));
        }
        let k_total = samples[0].len();
        let nf = n as f64;
        let mut per_ud_rate = vec![0.0; k_total];
        let mut per_ud_sq = vec![0.0; k_total];
        let mut mean_desired = vec![0.0; k_total];
        let mut mean_in = vec![0.0; k_total];
        let mut sums = Vec::with_capacity(n);
        for row in &samples {
            let mut total = 0.0;
            for (k, t) in row.iter().enumerate() {
                let c = (1.0 + t.sinr()).log2();
                per_ud_rate[k] += c;
                per_ud_sq[k] += c * c;
                mean_desired[k] += t.desired;
                mean_in[k] += t.interference_noise();
                total += c;
            }
            sums.push(total);
        }
        let stderr = |sum: f64, sq: f64| -> f64 {
            let mean = sum / nf;
            let var = ((sq - nf * mean * mean) / (nf - 1.0)).max(0.0);
            (var / nf).sqrt()
        };
        let per_ud_stderr: Vec<f64> = (0..k_total).map(|k| stderr(per_ud_rate[k], per_ud_sq[k])).collect();
        let sum_total: f64 = sums.iter().sum();
        let sum_sq: f64 = sums.iter().map(|s| s * s).sum();
        let sum_rate_stderr = stderr(sum_total, sum_sq);
        for k in 0..k_total {
            per_ud_rate[k] /= nf;
            mean_desired[k] /= nf;
            mean_in[k] /= nf;
        }
        let per_ud_ratio_rate: Vec<f64> =
            (0..k_total).map(|k| (1.0 + mean_desired[k] / mean_in[k]).log2()).collect();
        Ok(Self {
            realizations: n,
            samples,
            sum_rate: per_ud_rate.iter().sum(),
            per_ud_rate,
            per_ud_stderr,
            sum_rate_stderr,
            ratio_sum_rate: per_ud_ratio_rate.iter().sum(),
            per_ud_ratio_rate,
            per_ud_mean_desired: mean_desired,
            per_ud_mean_in: mean_in,
        })
    }

    /// Ratio-of-means view in the closed-form report layout.
    pub fn to_report(&self) -> RateReport {
        RateReport {
            per_ud_sinr: (0..self.per_ud_mean_desired.len())
                .map(|k| self.per_ud_mean_desired[k] / self.per_ud_mean_in[k])
                .collect(),
            per_ud_signal_power: self.per_ud_mean_desired.clone(),
            per_ud_in_power: self.per_ud_mean_in.clone(),
            per_ud_rate: self.per_ud_rate.clone(),
            sum_rate: self.sum_rate,
            method: Method::MonteCarlo,
            breakdown: Vec::new(),
        }
    }
}

/// Ergodic rate over `n` realizations; realization `i` draws from its own
/// substream of `seed`, so the result does not depend on thread count.
pub fn ergodic_rate(
    cfg: &SystemConfig,
    topo: &Topology,
    eta: &PowerSharingVector,
    n: usize,
    seed: u64,
) -> Result<EmpiricalRate> {
    LinkSimulator::new(cfg, topo, eta)?.ergodic_rate(n, seed)
}

impl LinkSimulator {
    pub fn ergodic_rate(&self, n: usize, seed: u64) -> Result<EmpiricalRate> {
        if n < 2 {
            return Err(Error::Contract(format!("need at least 2 realizations, got {n}")));
        }
        let samples = (0..n as u64)
            .into_par_iter()
            .map(|i| {
                let mut rng = stream_rng(seed, Domain::Realization, i);
                self.simulate_once(&mut rng).map(|(_, terms)| terms)
            })
            .collect::<Result<Vec<_>>>()?;
        EmpiricalRate::from_samples(samples)
    }
}

/// Concentration statistics at one vector length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LemmaRow {
    pub n: usize,
    /// Mean of `|x^H y| / N`, `x, y ~ CN(0, c I)`.
    pub inner_product: f64,
    /// Mean of `|x^H x / N - c|`.
    pub norm_deviation: f64,
    /// Mean of `|(x^H A x)^2 - (Tr A / N)^2|`, `x ~ CN(0, I / N)`.
    pub quadratic_form: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LemmaReport {
    pub rows: Vec<LemmaRow>,
    /// `(M = N, E log2(1 + X/Y) - log2(1 + E X / E Y))`.
    pub ratio_gaps: Vec<(usize, f64)>,
}

/// Correlation used for the quadratic-form check.
pub const LEMMA_RHO: f64 = 0.1;

/// `y = A x` for `A_{mn} = rho^|m-n|` via one forward and one backward pass.
fn apply_exp_correlation(x: &[Complex64], rho: f64) -> Vec<Complex64> {
    let n = x.len();
    let mut fwd = vec![Complex64::new(0.0, 0.0); n];
    let mut bwd = vec![Complex64::new(0.0, 0.0); n];
    for i in 0..n {
        fwd[i] = x[i] + if i > 0 { fwd[i - 1] * rho } else { Complex64::new(0.0, 0.0) };
    }
    for i in (0..n).rev() {
        bwd[i] = x[i] + if i + 1 < n { bwd[i + 1] * rho } else { Complex64::new(0.0, 0.0) };
    }
    (0..n).map(|i| fwd[i] + bwd[i] - x[i]).collect()
}

/// Numerical checks of the three concentration results the closed form rests on.
///
/// `c` scales the Lemma-2 vectors; `ratio_sizes` lists the `M = N` values of
/// the ratio-of-expectations check.
pub fn check_lemmas(
    n_grid: &[usize],
    ratio_sizes: &[usize],
    trials: usize,
    c: f64,
    seed: u64,
) -> Result<LemmaReport> {
    if trials == 0 || n_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Contract("N grid must be ascending and trials positive".into()));
    }
    let rows = n_grid
        .iter()
        .enumerate()
        .map(|(gi, &n)| {
            let per_trial: Vec<(f64, f64, f64)> = (0..trials as u64)
                .into_par_iter()
                .map(|t| {
                    let mut rng = stream_rng(substream_path(seed, Domain::Lemma, &[1, gi as u64]), Domain::Lemma, t);
                    let sc = c.sqrt();
                    let x: Vec<Complex64> = (0..n).map(|_| complex_gaussian(&mut rng) * sc).collect();
                    let y: Vec<Complex64> = (0..n).map(|_| complex_gaussian(&mut rng) * sc).collect();
                    let inner: Complex64 = x.iter().zip(&y).map(|(a, b)| a.conj() * b).sum();
                    let norm: f64 = x.iter().map(|a| a.norm_sqr()).sum();
                    let z: Vec<Complex64> =
                        (0..n).map(|_| complex_gaussian(&mut rng) / (n as f64).sqrt()).collect();
                    let az = apply_exp_correlation(&z, LEMMA_RHO);
                    let quad: f64 = z.iter().zip(&az).map(|(a, b)| (a.conj() * b).re).sum();
                    // Tr A = N for unit diagonal
                    let target = 1.0;
                    (inner.norm() / n as f64, (norm / n as f64 - c).abs(), (quad * quad - target).abs())
                })
                .collect();
            let tf = trials as f64;
            LemmaRow {
                n,
                inner_product: per_trial.iter().map(|v| v.0).sum::<f64>() / tf,
                norm_deviation: per_trial.iter().map(|v| v.1).sum::<f64>() / tf,
                quadratic_form: per_trial.iter().map(|v| v.2).sum::<f64>() / tf,
            }
        })
        .collect();

    let ratio_gaps = ratio_sizes
        .iter()
        .enumerate()
        .map(|(gi, &m)| {
            let logs: Vec<f64> = (0..trials as u64)
                .into_par_iter()
                .map(|t| {
                    let mut rng = stream_rng(substream_path(seed, Domain::Lemma, &[2, gi as u64]), Domain::Lemma, t);
                    let x: f64 = (0..m).map(|_| -> f64 { Exp1.sample(&mut rng) }).sum();
                    let y: f64 = (0..m).map(|_| -> f64 { Exp1.sample(&mut rng) }).sum();
                    // X and Y are exchangeable when both sum M terms; averaging
                    // the swapped pair keeps the estimator unbiased
                    0.5 * ((1.0 + x / y).log2() + (1.0 + y / x).log2())
                })
                .collect();
            let mean = logs.iter().sum::<f64>() / trials as f64;
            (m, mean - (1.0f64 + 1.0).log2())
        })
        .collect();

    Ok(LemmaReport { rows, ratio_gaps })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sysmodel::place_topology;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn scaled_sim(seed: u64) -> LinkSimulator {
        let cfg = SystemConfig::scaled();
        let topo = place_topology(&cfg, seed).unwrap();
        LinkSimulator::new(&cfg, &topo, &PowerSharingVector::uniform(cfg.num_uds, 0.5).unwrap()).unwrap()
    }

    #[test]
    fn decomposition_matches_random_excitation() {
        let sim = scaled_sim(0);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let real = sim.sample(&mut rng).unwrap();
        let terms = sim.decompose(&real).unwrap();
        let b = sim.budget();
        let batch = 20_000;
        let symbols = complex_gaussian_matrix(&mut rng, 4, batch);
        let access: Vec<CMatrix> = (0..2)
            .map(|_| complex_gaussian_matrix(&mut rng, 16, batch).scale(b.noise_access.sqrt()))
            .collect();
        let bbu = complex_gaussian_matrix(&mut rng, 32, batch).scale(b.noise_fronthaul.sqrt());
        let out = sim.propagate(&real, &symbols, &access, &bbu);
        for (k, t) in terms.iter().enumerate() {
            let power = out.row(k).iter().map(|c| c.norm_sqr()).sum::<f64>() / batch as f64;
            assert_relative_eq!(power, t.total, max_relative = 0.04);
        }
    }

    #[test]
    fn noise_free_chain_has_no_noise_term() {
        let cfg = SystemConfig::scaled();
        let topo = place_topology(&cfg, 0).unwrap();
        let mut budget =
            build_link_budget(&cfg, &topo, &PowerSharingVector::uniform(4, 0.5).unwrap()).unwrap();
        budget.noise_access = 0.0;
        budget.noise_fronthaul = 0.0;
        let sim = LinkSimulator::from_budget(&cfg, &topo, budget).unwrap();
        let (real, terms) = sim.simulate_once(&mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert!(terms.iter().all(|t| t.noise == 0.0));
        // noiseless pilots recover the channels exactly
        let h = real.access.serving(&topo, 0);
        assert!(crate::linalg::rel_frobenius(&real.access_estimate[0], &h) < 1e-9);
    }

    #[test]
    fn desired_power_grows_with_array_size() {
        let mut means = Vec::new();
        for m in [8usize, 16, 32] {
            let mut cfg = SystemConfig::scaled();
            cfg.rru_antennas = m;
            let topo = place_topology(&cfg, 0).unwrap();
            let eta = PowerSharingVector::uniform(4, 0.5).unwrap();
            let rate = ergodic_rate(&cfg, &topo, &eta, 60, 2).unwrap();
            means.push(rate.per_ud_mean_desired.iter().sum::<f64>());
        }
        // lambda_k = 1/M normalizes the combiner, so the coherent part scales
        // like M^2 / M = M
        assert!(means[1] / means[0] > 1.6 && means[2] / means[1] > 1.6, "{means:?}");
    }

    #[test]
    fn empirical_rate_statistics() {
        let sim = scaled_sim(1);
        let rate = sim.ergodic_rate(50, 9).unwrap();
        let n = rate.realizations as f64;
        let sums: Vec<f64> = rate
            .samples
            .iter()
            .map(|row| row.iter().map(|t| (1.0 + t.sinr()).log2()).sum())
            .collect();
        let mean = sums.iter().sum::<f64>() / n;
        let var = sums.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert_relative_eq!(rate.sum_rate, mean, max_relative = 1e-12);
        assert_relative_eq!(rate.sum_rate_stderr, (var / n).sqrt(), max_relative = 1e-9);
        assert!(EmpiricalRate::from_samples(rate.samples[..1].to_vec()).is_err());
        let report = rate.to_report();
        assert_eq!(report.method, Method::MonteCarlo);
    }

    #[test]
    fn parallel_runs_are_reproducible() {
        let sim = scaled_sim(2);
        let a = sim.ergodic_rate(16, 3).unwrap();
        let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = single.install(|| sim.ergodic_rate(16, 3).unwrap());
        assert_eq!(a, b);
        assert_ne!(a.sum_rate, sim.ergodic_rate(16, 4).unwrap().sum_rate);
    }

    #[test]
    fn concentration_improves_with_length() {
        let report = check_lemmas(&[100, 10_000], &[8, 64], 100, 1.0, 0).unwrap();
        let (small, large) = (report.rows[0], report.rows[1]);
        assert!(large.inner_product < small.inner_product);
        assert!(large.norm_deviation < small.norm_deviation);
        assert!(large.quadratic_form < small.quadratic_form);
        assert!(large.quadratic_form < 0.02 && large.inner_product < 0.02 && large.norm_deviation < 0.02);
        assert!(report.ratio_gaps[1].1 < report.ratio_gaps[0].1);
        assert!(check_lemmas(&[10, 10], &[], 1, 1.0, 0).is_err());
    }

    #[test]
    fn exp_correlation_recursion_matches_dense_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x: Vec<Complex64> = (0..7).map(|_| complex_gaussian(&mut rng)).collect();
        let a = exp_correlation(7, 0.3).unwrap();
        let dense = a.matrix() * DVector::from_vec(x.clone());
        for (i, v) in apply_exp_correlation(&x, 0.3).iter().enumerate() {
            assert!((v - dense[i]).norm() < 1e-12);
        }
    }
}
