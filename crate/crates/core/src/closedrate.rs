//! Closed-form ergodic SINR and sum-rate.
//!
//! The detector output for UD `k*` is a sum over forwarding streams `k` (the
//! path through RRU `r_k` and fronthaul column `k`) and transmitted symbols
//! `j`. Access and fronthaul channels are independent and zero-mean cross
//! terms vanish, so the expected power splits into per-(k, j) products
//!
//! ```text
//! c_k P_{r_k, j} E|g_hat*^H g_k|^2 E|h_hat_k^H h_{r_k, j}|^2,
//! c_k = lambda_b lambda_k a_k P^{rd}_k,
//! ```
//!
//! plus forwarded access noise and BBU noise. Every expectation is a trace
//! of covariance products; they are evaluated in the eigenbases of the two
//! correlation matrices, so one evaluation costs `O(K^2 N)`.
//!
//! [`Variant::Derived`] (default) uses exact second and fourth moments and
//! counts every path carrying `s_{k*}` as signal, which is the classification
//! the link simulator measures. [`Variant::AsPrinted`] reproduces the
//! published large-array expressions term by term for comparison.

use crate::channel::CovarianceSet;
use crate::error::{Error, Result};
use crate::estimation::estimate_spectrum;
use crate::linalg::{trace_product, CMatrix, CVector};
use crate::sysmodel::{build_link_budget, LinkBudget, Phase, PowerSharingVector, SystemConfig, Topology};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Variant {
    #[default]
    Derived,
    AsPrinted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    ClosedForm,
    MonteCarlo,
}

/// Expected powers at the detector of one UD, split by origin.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PowerBreakdown {
    /// Own symbol through the own stream with the estimated fronthaul column.
    pub coherent: f64,
    /// Own symbol through the own stream's fronthaul estimation error.
    pub self_error: f64,
    /// Own symbol leaking through other streams.
    pub own_leakage: f64,
    /// Symbols of the other UDs of the same RRU.
    pub stream_interference: f64,
    /// Symbols of UDs served by other RRUs.
    pub rru_interference: f64,
    pub noise: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateReport {
    pub per_ud_signal_power: Vec<f64>,
    pub per_ud_in_power: Vec<f64>,
    pub per_ud_sinr: Vec<f64>,
    pub per_ud_rate: Vec<f64>,
    pub sum_rate: f64,
    pub method: Method,
    pub breakdown: Vec<PowerBreakdown>,
}

/// The expectation building blocks for one detector `k*`.
#[derive(Debug, Clone, PartialEq)]
pub struct UpsilonTerms {
    pub s1: f64,
    pub s2: f64,
    pub in1: f64,
    /// Indexed by stream `k`; zero at `k*`.
    pub in2: Vec<f64>,
    /// Indexed `[k][j]`; nonzero only for `j` served by a different RRU than `k`.
    pub in3: Vec<Vec<f64>>,
    pub in4: f64,
    pub lambda_fronthaul: f64,
    pub lambda_access: Vec<f64>,
    pub amplification: Vec<f64>,
}

/// `(TrPsi_hat)^2 + Tr(Psi_hat Psi_err)` for one access column, as published.
pub fn upsilon_s1(psi_hat: &CMatrix, psi_err: &CMatrix) -> f64 {
    let t: f64 = psi_hat.diagonal().iter().map(|c| c.re).sum();
    t * t + trace_product(psi_hat, psi_err).re
}

/// Exact `E|h_hat^H h|^2`: adds the `Tr(Psi_hat^2)` term dropped above.
pub fn access_fourth_moment(psi_hat: &CMatrix, psi_err: &CMatrix) -> f64 {
    upsilon_s1(psi_hat, psi_err) + trace_product(psi_hat, psi_hat).re
}

/// `(Tr{d d^H + Psi_hat})^2` for one fronthaul column with mean `d`.
pub fn upsilon_s2(mean: &CVector, psi_hat: &CMatrix) -> f64 {
    let t = mean.norm_squared() + psi_hat.diagonal().iter().map(|c| c.re).sum::<f64>();
    t * t
}

/// Exact `E||g_hat||^4` for `g_hat ~ CN(d, Psi_hat)`.
pub fn fronthaul_fourth_moment(mean: &CVector, psi_hat: &CMatrix) -> f64 {
    let quad = (mean.adjoint() * psi_hat * mean)[(0, 0)].re;
    upsilon_s2(mean, psi_hat) + trace_product(psi_hat, psi_hat).re + 2.0 * quad
}

/// `lambda_b` and per-UD `lambda_k` from the true-channel covariances.
pub fn lambda_factors(covs: &CovarianceSet, cfg: &SystemConfig) -> Result<(f64, Vec<f64>)> {
    let k = cfg.num_uds as f64;
    let los: f64 = covs.h_det.iter().map(|c| c.norm_sqr()).sum();
    let fronthaul_trace = covs.nu * covs.nu * los + k * covs.zeta * covs.zeta * covs.bbu.trace();
    let access_trace = covs.access.trace();
    if !(fronthaul_trace > 0.0) || !(access_trace > 0.0) {
        return Err(Error::Degenerate("zero channel covariance trace".into()));
    }
    let lambda_b = k / fronthaul_trace;
    // (Tr{I_U (x) R} / U)^{-1} = 1 / Tr R for every RRU
    let lambda_a = cfg.uds_per_rru.iter().flat_map(|&u| std::iter::repeat_n(1.0 / access_trace, u));
    Ok((lambda_b, lambda_a.collect()))
}

/// Per-stream access statistics: traces of `Psi_hat`, `Psi_hat^2`,
/// `Psi_hat R` and `Psi_hat Psi_err`.
#[derive(Debug, Clone, Copy)]
struct AccessStats {
    tr: f64,
    tr_sq: f64,
    tr_r: f64,
    tr_err: f64,
}

impl AccessStats {
    fn new(eigs: &[f64], p_pilot: f64, noise: f64) -> Self {
        let hat = estimate_spectrum(eigs, p_pilot, noise);
        let mut s = Self { tr: 0.0, tr_sq: 0.0, tr_r: 0.0, tr_err: 0.0 };
        for (&h, &mu) in hat.iter().zip(eigs) {
            s.tr += h;
            s.tr_sq += h * h;
            s.tr_r += h * mu;
            s.tr_err += h * (mu - h);
        }
        s
    }

    fn printed_s1(&self) -> f64 {
        self.tr * self.tr + self.tr_err
    }

    /// `E|h_hat^H h|^2`.
    fn exact_s1(&self) -> f64 {
        self.printed_s1() + self.tr_sq
    }
}

/// Precomputed geometry and spectra for repeated closed-form evaluation.
#[derive(Debug, Clone)]
pub struct RateModel {
    cfg: SystemConfig,
    topo: Topology,
    nu2: f64,
    access_eigs: Vec<f64>,
    /// Eigenvalues of `zeta^2 R_b`.
    scatter_eigs: Vec<f64>,
    /// `|u_i^H h_d,k|^2` in the eigenbasis of `R_b`, per stream.
    los_proj: Vec<Vec<f64>>,
    /// `|h_d,k^H h_d,l|^2`.
    los_gram: Vec<Vec<f64>>,
    los_norm2: Vec<f64>,
    lambda_b: f64,
    lambda_a: Vec<f64>,
}

/// Per-stream fronthaul estimate spectrum and derived scalars.
struct FronthaulStats {
    hat: Vec<f64>,
    tr_hat: f64,
}

impl RateModel {
    pub fn new(cfg: &SystemConfig, topo: &Topology) -> Result<Self> {
        let covs = CovarianceSet::new(cfg, topo)?;
        let (lambda_b, lambda_a) = lambda_factors(&covs, cfg)?;
        let zeta2 = covs.zeta * covs.zeta;
        let k = cfg.num_uds;
        let los_proj: Vec<Vec<f64>> =
            (0..k).map(|s| covs.bbu.eigen().projections(&covs.h_det.column(s).into_owned())).collect();
        let gram = covs.h_det.adjoint() * &covs.h_det;
        Ok(Self {
            cfg: cfg.clone(),
            topo: topo.clone(),
            nu2: covs.nu * covs.nu,
            access_eigs: covs.access.eigen().values.clone(),
            scatter_eigs: covs.bbu.eigen().values.iter().map(|v| zeta2 * v).collect(),
            los_gram: (0..k).map(|a| (0..k).map(|b| gram[(a, b)].norm_sqr()).collect()).collect(),
            los_norm2: (0..k).map(|s| gram[(s, s)].re).collect(),
            los_proj,
            lambda_b,
            lambda_a,
        })
    }

    pub fn config(&self) -> &SystemConfig {
        &self.cfg
    }

    pub fn topology(&self) -> &Topology {
        &self.topo
    }

    pub fn lambdas(&self) -> (f64, &[f64]) {
        (self.lambda_b, &self.lambda_a)
    }

    pub fn evaluate(&self, eta: &PowerSharingVector, variant: Variant) -> Result<RateReport> {
        let budget = build_link_budget(&self.cfg, &self.topo, eta)?;
        self.evaluate_budget(&budget, variant)
    }

    /// Sum-rate only; the DEA objective.
    pub fn sum_rate(&self, eta: &PowerSharingVector) -> Result<f64> {
        Ok(self.evaluate(eta, Variant::Derived)?.sum_rate)
    }

    fn fronthaul_stats(&self, budget: &LinkBudget) -> Vec<FronthaulStats> {
        budget
            .p_rx_fronthaul_pilot
            .iter()
            .map(|&p| {
                let hat = estimate_spectrum(&self.scatter_eigs, p, budget.noise_fronthaul);
                let tr_hat = hat.iter().sum();
                FronthaulStats { hat, tr_hat }
            })
            .collect()
    }

    /// `Tr{(D_k + Q)(D_* + Psi_hat_*)}` with `D = nu^2 h_d h_d^H`, `Q = zeta^2 R_b`.
    fn cross_gain(&self, star: usize, k: usize, fs: &FronthaulStats) -> f64 {
        let nu2 = self.nu2;
        let mut acc = nu2 * nu2 * self.los_gram[star][k];
        for i in 0..self.scatter_eigs.len() {
            let q = self.scatter_eigs[i];
            acc += nu2 * fs.hat[i] * self.los_proj[k][i] + nu2 * q * self.los_proj[star][i] + q * fs.hat[i];
        }
        acc
    }

    /// `(E||g_hat||^4, Tr{Psi_err (D + Psi_hat)})` for column `k`.
    fn self_gain(&self, k: usize, fs: &FronthaulStats) -> (f64, f64) {
        let nu2 = self.nu2;
        let mean = nu2 * self.los_norm2[k] + fs.tr_hat;
        let mut fourth = mean * mean;
        let mut err = 0.0;
        for i in 0..self.scatter_eigs.len() {
            let h = fs.hat[i];
            let e = self.scatter_eigs[i] - h;
            fourth += h * h + 2.0 * nu2 * h * self.los_proj[k][i];
            err += nu2 * e * self.los_proj[k][i] + e * h;
        }
        (fourth, err)
    }

    /// Υ terms for detector `star` under the chosen variant.
    pub fn upsilon_terms(&self, budget: &LinkBudget, star: usize, variant: Variant) -> UpsilonTerms {
        let access: Vec<AccessStats> = budget
            .p_rx_access_pilot
            .iter()
            .map(|&p| AccessStats::new(&self.access_eigs, p, budget.noise_access))
            .collect();
        let fronthaul = self.fronthaul_stats(budget);
        self.terms_from_stats(budget, star, variant, &access, &fronthaul)
    }

    fn terms_from_stats(
        &self,
        budget: &LinkBudget,
        star: usize,
        variant: Variant,
        access: &[AccessStats],
        fronthaul: &[FronthaulStats],
    ) -> UpsilonTerms {
        let map = &self.topo.ud_to_rru;
        let k_total = map.num_uds();
        let fs = &fronthaul[star];
        let exact = variant == Variant::Derived;
        let s1 = if exact { access[star].exact_s1() } else { access[star].printed_s1() };
        let (fourth, err_cross) = self.self_gain(star, fs);
        let printed_s2 = {
            let t = self.nu2 * self.los_norm2[star] + fs.tr_hat;
            t * t
        };
        let s2 = if exact { fourth } else { printed_s2 };
        let in1 = s1 * err_cross;
        let gain = |k: usize| -> f64 {
            if k == star && exact {
                fourth + err_cross
            } else {
                self.cross_gain(star, k, fs)
            }
        };
        let gains: Vec<f64> = (0..k_total).map(gain).collect();
        let mut in2 = vec![0.0; k_total];
        let mut in3 = vec![vec![0.0; k_total]; k_total];
        for k in 0..k_total {
            let a = &access[k];
            if k != star {
                in2[k] = if exact { a.exact_s1() } else { a.printed_s1() } * gains[k];
            }
            let r_k = map.rru_of(k);
            for j in 0..k_total {
                if map.rru_of(j) != r_k {
                    in3[k][j] = budget.rx_at_rru(r_k, j, Phase::Data) * a.tr_r * gains[k];
                }
            }
        }
        let noise_bbu = self.lambda_b * (self.nu2 * self.los_norm2[star] + fs.tr_hat) * budget.noise_fronthaul;
        let coef = |k: usize| {
            self.lambda_b * self.lambda_a[k] * budget.amplification(k) * budget.p_rx_fronthaul_data[k]
        };
        let in4 = if exact {
            (0..k_total).map(|k| coef(k) * budget.noise_access * access[k].tr * gains[k]).sum::<f64>() + noise_bbu
        } else {
            coef(star) * budget.noise_access * access[star].tr * self.cross_gain(star, star, fs) + noise_bbu
        };
        UpsilonTerms {
            s1,
            s2,
            in1,
            in2,
            in3,
            in4,
            lambda_fronthaul: self.lambda_b,
            lambda_access: self.lambda_a.clone(),
            amplification: (0..k_total).map(|k| budget.amplification(k)).collect(),
        }
    }

    fn breakdown(
        &self,
        budget: &LinkBudget,
        star: usize,
        variant: Variant,
        access: &[AccessStats],
        fronthaul: &[FronthaulStats],
    ) -> PowerBreakdown {
        let map = &self.topo.ud_to_rru;
        let k_total = map.num_uds();
        let t = self.terms_from_stats(budget, star, variant, access, fronthaul);
        let lb = self.lambda_b;
        let la = &self.lambda_a;
        let a = |k: usize| budget.amplification(k);
        let prd = |k: usize| budget.p_rx_fronthaul_data[k];
        let pud = |k: usize| budget.p_rx_access_data[k];
        let r_star = map.rru_of(star);
        let mut out = PowerBreakdown::default();

        match variant {
            Variant::AsPrinted => {
                let c_star = a(star) * lb * la[star] * prd(star) * pud(star);
                out.coherent = c_star * t.s1 * t.s2;
                out.self_error = c_star * t.in1;
                for k in 0..k_total {
                    if k == star {
                        continue;
                    }
                    let term = a(star) * lb * la[k] * prd(k) * pud(k) * t.in2[k];
                    if map.rru_of(k) == r_star {
                        out.stream_interference += term;
                    } else {
                        out.rru_interference += term;
                    }
                }
                for k in 0..k_total {
                    for j in 0..k_total {
                        out.rru_interference += lb * la[k] * prd(k) * t.in3[k][j];
                    }
                }
                out.noise = t.in4;
            }
            Variant::Derived => {
                let fs = &fronthaul[star];
                let (fourth, err_cross) = self.self_gain(star, fs);
                for k in 0..k_total {
                    let c_k = lb * la[k] * a(k) * prd(k);
                    let r_k = map.rru_of(k);
                    let g = if k == star { fourth + err_cross } else { self.cross_gain(star, k, fs) };
                    for j in 0..k_total {
                        let p = budget.rx_at_rru(r_k, j, Phase::Data);
                        let access_gain = if j == k { access[k].exact_s1() } else { access[k].tr_r };
                        let term = c_k * p * g * access_gain;
                        if j == star {
                            if k == star {
                                out.coherent += c_k * p * fourth * access_gain;
                                out.self_error += c_k * p * err_cross * access_gain;
                            } else {
                                out.own_leakage += term;
                            }
                        } else if map.rru_of(j) == r_star {
                            out.stream_interference += term;
                        } else {
                            out.rru_interference += term;
                        }
                    }
                }
                out.noise = t.in4;
            }
        }
        out
    }

    pub fn evaluate_budget(&self, budget: &LinkBudget, variant: Variant) -> Result<RateReport> {
        let k_total = self.topo.ud_to_rru.num_uds();
        if budget.p_rx_access_data.len() != k_total {
            return Err(Error::Contract("link budget does not match the model".into()));
        }
        let access: Vec<AccessStats> = budget
            .p_rx_access_pilot
            .iter()
            .map(|&p| AccessStats::new(&self.access_eigs, p, budget.noise_access))
            .collect();
        let fronthaul = self.fronthaul_stats(budget);
        let mut report = RateReport {
            per_ud_signal_power: Vec::with_capacity(k_total),
            per_ud_in_power: Vec::with_capacity(k_total),
            per_ud_sinr: Vec::with_capacity(k_total),
            per_ud_rate: Vec::with_capacity(k_total),
            sum_rate: 0.0,
            method: Method::ClosedForm,
            breakdown: Vec::with_capacity(k_total),
        };
        for star in 0..k_total {
            let b = self.breakdown(budget, star, variant, &access, &fronthaul);
            let (signal, inp) = match variant {
                Variant::Derived => (
                    b.coherent + b.self_error + b.own_leakage,
                    b.stream_interference + b.rru_interference + b.noise,
                ),
                Variant::AsPrinted => (
                    b.coherent,
                    b.self_error + b.stream_interference + b.rru_interference + b.noise,
                ),
            };
            if !(inp > 0.0) {
                return Err(Error::Degenerate(format!("interference-plus-noise of UD {} is {inp}", star + 1)));
            }
            let sinr = signal / inp;
            let rate = (1.0 + sinr).log2();
            report.per_ud_signal_power.push(signal);
            report.per_ud_in_power.push(inp);
            report.per_ud_sinr.push(sinr);
            report.per_ud_rate.push(rate);
            report.breakdown.push(b);
        }
        report.sum_rate = report.per_ud_rate.iter().sum();
        Ok(report)
    }
}

/// One-shot closed-form evaluation with the default variant.
pub fn sum_rate(cfg: &SystemConfig, topo: &Topology, eta: &PowerSharingVector) -> Result<RateReport> {
    RateModel::new(cfg, topo)?.evaluate(eta, Variant::Derived)
}
