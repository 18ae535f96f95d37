//! Sweep harness behind the `cran` binary: sweep specifications, CSV rows,
//! the headline comparison and the property-check suite.
//!
//! Sweep seed `s` fixes the topology, the optimizer streams and the
//! Monte-Carlo streams of its rows, so rows with different seeds never share
//! randomness.

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{exp_correlation, CovarianceSet};
use crate::closedrate::{lambda_factors, RateModel, Variant};
use crate::dea::{optimize, DeaParams, GenerationStats};
use crate::error::{Error, Result};
use crate::estimation::{access_cov, fronthaul_cov};
use crate::linalg::rel_frobenius;
use crate::mcoracle::{check_lemmas, LinkSimulator};
use crate::sysmodel::{place_topology, PowerSharingVector, SystemConfig, DEFAULT_GUARD};

/// Exact column order of every results file.
pub const CSV_HEADER: [&str; 7] = ["param", "value", "mode", "seed", "sum_rate", "stderr", "wall_ms"];

/// Gain over the all-0.5 baseline the headline run must reach, in percent.
pub const HEADLINE_MIN_GAIN_PERCENT: f64 = 20.0;

/// Default relative tolerance of the closed-form versus oracle check.
pub const ORACLE_TOLERANCE: f64 = 0.07;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    M,
    N,
    K,
    R,
    Rho,
    KRiceDb,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::M => "M",
            SweepParam::N => "N",
            SweepParam::K => "K",
            SweepParam::R => "R",
            SweepParam::Rho => "rho",
            SweepParam::KRiceDb => "k_rice_db",
        }
    }

    fn is_count(self) -> bool {
        matches!(self, SweepParam::M | SweepParam::N | SweepParam::K | SweepParam::R)
    }

    /// `base` with this parameter set to `value`. Changing `K` or `R`
    /// re-partitions the UDs most evenly.
    pub fn apply(self, base: &SystemConfig, value: f64) -> Result<SystemConfig> {
        let count = || -> Result<usize> {
            if value >= 1.0 && value.fract() == 0.0 && value <= u32::MAX as f64 {
                Ok(value as usize)
            } else {
                Err(Error::InvalidConfig(format!("{} needs a positive integer, got {value}", self.name())))
            }
        };
        let mut cfg = base.clone();
        match self {
            SweepParam::M => cfg.rru_antennas = count()?,
            SweepParam::N => cfg.bbu_antennas = count()?,
            SweepParam::K => cfg = base.with_counts(count()?, base.num_rrus)?,
            SweepParam::R => cfg = base.with_counts(base.num_uds, count()?)?,
            SweepParam::Rho => cfg.correlation_rho = value,
            SweepParam::KRiceDb => cfg.rician_db = value,
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim() {
            "M" => SweepParam::M,
            "N" => SweepParam::N,
            "K" => SweepParam::K,
            "R" => SweepParam::R,
            "rho" => SweepParam::Rho,
            "k_rice_db" => SweepParam::KRiceDb,
            other => {
                return Err(Error::InvalidConfig(format!(
                    "unknown sweep parameter `{other}` (expected M, N, K, R, rho or k_rice_db)"
                )))
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    ClosedNonopt,
    ClosedOpt,
    McNonopt,
    McOpt,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::ClosedNonopt, Mode::ClosedOpt, Mode::McNonopt, Mode::McOpt];

    pub fn name(self) -> &'static str {
        match self {
            Mode::ClosedNonopt => "closed_nonopt",
            Mode::ClosedOpt => "closed_opt",
            Mode::McNonopt => "mc_nonopt",
            Mode::McOpt => "mc_opt",
        }
    }

    pub fn optimized(self) -> bool {
        matches!(self, Mode::ClosedOpt | Mode::McOpt)
    }

    pub fn monte_carlo(self) -> bool {
        matches!(self, Mode::McNonopt | Mode::McOpt)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        Mode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown mode `{s}`")))
    }
}

fn list_items(text: &str) -> impl Iterator<Item = &str> {
    text.split(|c: char| c == ',' || c.is_whitespace()).filter(|s| !s.is_empty())
}

/// Strictly ascending, finite value list; count parameters must be integers.
pub fn parse_values(param: SweepParam, text: &str) -> Result<Vec<f64>> {
    let values = list_items(text)
        .map(|s| {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::InvalidConfig(format!("bad value `{s}`")))
        })
        .collect::<Result<Vec<_>>>()?;
    if values.is_empty() {
        return Err(Error::InvalidConfig("empty value list".into()));
    }
    if values.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidConfig("values must be strictly ascending".into()));
    }
    if param.is_count() && values.iter().any(|v| *v < 1.0 || v.fract() != 0.0) {
        return Err(Error::InvalidConfig(format!("{param} values must be positive integers")));
    }
    Ok(values)
}

/// Nonempty mode list without repeats, kept in the given order.
pub fn parse_modes(text: &str) -> Result<Vec<Mode>> {
    let mut modes = Vec::new();
    for item in list_items(text) {
        let mode: Mode = item.parse()?;
        if modes.contains(&mode) {
            return Err(Error::InvalidConfig(format!("mode `{mode}` listed twice")));
        }
        modes.push(mode);
    }
    if modes.is_empty() {
        return Err(Error::InvalidConfig("empty mode list".into()));
    }
    Ok(modes)
}

pub fn parse_seeds(text: &str) -> Result<Vec<u64>> {
    let mut seeds = Vec::new();
    for item in list_items(text) {
        let s: u64 = item.parse().map_err(|_| Error::InvalidConfig(format!("bad seed `{item}`")))?;
        if seeds.contains(&s) {
            return Err(Error::InvalidConfig(format!("seed {s} listed twice")));
        }
        seeds.push(s);
    }
    if seeds.is_empty() {
        return Err(Error::InvalidConfig("empty seed list".into()));
    }
    Ok(seeds)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub param: SweepParam,
    pub values: Vec<f64>,
    pub modes: Vec<Mode>,
    pub realizations: usize,
    pub seeds: Vec<u64>,
}

impl SweepSpec {
    /// Builds a spec from the textual CLI arguments.
    pub fn parse(param: &str, values: &str, modes: &str, seeds: &str, realizations: usize) -> Result<Self> {
        let param: SweepParam = param.parse()?;
        let spec = Self {
            param,
            values: parse_values(param, values)?,
            modes: parse_modes(modes)?,
            realizations,
            seeds: parse_seeds(seeds)?,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() || self.values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidConfig("values must be nonempty and strictly ascending".into()));
        }
        if self.modes.is_empty() || self.seeds.is_empty() {
            return Err(Error::InvalidConfig("modes and seeds must be nonempty".into()));
        }
        if self.modes.iter().any(|m| m.monte_carlo()) && self.realizations < 2 {
            return Err(Error::InvalidConfig("Monte-Carlo modes need at least 2 realizations".into()));
        }
        Ok(())
    }
}

/// Optimizer budget for the `*_opt` modes and the headline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerSettings {
    pub population: usize,
    pub generations: usize,
    /// Independent optimizer runs per point; the best is kept.
    pub restarts: usize,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        Self { population: 40, generations: 300, restarts: 4 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerOptimum {
    pub eta: PowerSharingVector,
    pub sum_rate: f64,
    /// Best-fitness trace of the winning run.
    pub history: Vec<GenerationStats>,
}

/// Maximizes the closed-form sum-rate over the power-sharing factors. Run `i`
/// uses optimizer seed `(seed, i)`; ties go to the earliest run.
pub fn optimize_power(model: &RateModel, settings: &OptimizerSettings, seed: u64) -> Result<PowerOptimum> {
    let k = model.config().num_uds;
    let objective = |genes: &[f64]| model.sum_rate(&PowerSharingVector::from_genes(genes, DEFAULT_GUARD)?);
    let mut best: Option<PowerOptimum> = None;
    for run in 0..settings.restarts.max(1) {
        let params = DeaParams::with_population(
            settings.population,
            settings.generations,
            crate::rng::substream_path(seed, crate::rng::Domain::Sweep, &[run as u64]),
        );
        let res = optimize(2 * k, objective, &params)?;
        if best.as_ref().is_none_or(|b| res.best.fitness > b.sum_rate) {
            best = Some(PowerOptimum {
                eta: PowerSharingVector::from_genes(&res.best.genes, DEFAULT_GUARD)?,
                sum_rate: res.best.fitness,
                history: res.history,
            });
        }
    }
    Ok(best.expect("at least one run"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub param: String,
    pub value: f64,
    pub mode: Mode,
    pub seed: u64,
    pub sum_rate: f64,
    /// Standard error of the Monte-Carlo sum-rate; empty for closed-form rows.
    pub stderr: Option<f64>,
    pub wall_ms: u64,
    #[serde(skip)]
    pub per_ud_rates: Vec<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunOptions {
    pub optimizer: OptimizerSettings,
    /// Record wall time; otherwise `wall_ms` is 0 and files are reproducible.
    pub timing: bool,
}

fn run_point(
    base: &SystemConfig,
    spec: &SweepSpec,
    value: f64,
    mode: Mode,
    seed: u64,
    opts: &RunOptions,
) -> Result<ResultRow> {
    let start = Instant::now();
    let cfg = spec.param.apply(base, value)?;
    let topo = place_topology(&cfg, seed)?;
    let model = RateModel::new(&cfg, &topo)?;
    let eta = if mode.optimized() {
        optimize_power(&model, &opts.optimizer, seed)?.eta
    } else {
        PowerSharingVector::uniform(cfg.num_uds, 0.5)?
    };
    let (sum_rate, stderr, per_ud_rates) = if mode.monte_carlo() {
        let mc = LinkSimulator::new(&cfg, &topo, &eta)?.ergodic_rate(spec.realizations, seed)?;
        (mc.sum_rate, Some(mc.sum_rate_stderr), mc.per_ud_rate)
    } else {
        let report = model.evaluate(&eta, Variant::Derived)?;
        (report.sum_rate, None, report.per_ud_rate)
    };
    Ok(ResultRow {
        param: spec.param.name().to_string(),
        value,
        mode,
        seed,
        sum_rate,
        stderr,
        wall_ms: if opts.timing { start.elapsed().as_millis() as u64 } else { 0 },
        per_ud_rates,
    })
}

/// Every (value, mode, seed) point, evaluated in parallel and returned in
/// that lexicographic order (modes in canonical order).
pub fn run_sweep(base: &SystemConfig, spec: &SweepSpec, opts: &RunOptions) -> Result<Vec<ResultRow>> {
    spec.validate()?;
    let mut modes = spec.modes.clone();
    modes.sort();
    let mut seeds = spec.seeds.clone();
    seeds.sort();
    let (modes, seeds) = (&modes, &seeds);
    let points: Vec<(f64, Mode, u64)> = spec
        .values
        .iter()
        .flat_map(|&v| modes.iter().flat_map(move |&m| seeds.iter().map(move |&s| (v, m, s))))
        .collect();
    points.into_par_iter().map(|(v, m, s)| run_point(base, spec, v, m, s, opts)).collect()
}

pub fn write_csv<W: Write>(rows: &[ResultRow], out: W) -> Result<()> {
    // the header is written explicitly so an empty sweep still has one
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(CSV_HEADER)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_csv_file(rows: &[ResultRow], path: impl AsRef<Path>) -> Result<()> {
    write_csv(rows, std::fs::File::create(path)?)
}

/// Reads a results file, checking the header and every row's invariants.
pub fn read_csv<R: Read>(input: R) -> Result<Vec<ResultRow>> {
    let mut rd = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header = rd.headers()?.clone();
    if header.iter().ne(CSV_HEADER) {
        return Err(Error::Parse { line: 1, msg: format!("unexpected header {:?}", header.iter().collect::<Vec<_>>()) });
    }
    let mut rows = Vec::new();
    for (i, rec) in rd.deserialize::<ResultRow>().enumerate() {
        let line = i + 2;
        let row = rec?;
        row.param.parse::<SweepParam>().map_err(|e| Error::Parse { line, msg: e.to_string() })?;
        let stderr_ok = match row.stderr {
            Some(s) => row.mode.monte_carlo() && s.is_finite() && s >= 0.0,
            None => !row.mode.monte_carlo(),
        };
        if !(row.value.is_finite() && row.sum_rate.is_finite() && row.sum_rate >= 0.0 && stderr_ok) {
            return Err(Error::Parse { line, msg: "row violates the results schema".into() });
        }
        rows.push(row);
    }
    Ok(rows)
}

pub fn read_csv_file(path: impl AsRef<Path>) -> Result<Vec<ResultRow>> {
    read_csv(std::fs::File::open(path)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadlineReport {
    pub baseline: f64,
    pub optimized: f64,
    pub gain_percent: f64,
    pub eta: PowerSharingVector,
}

impl HeadlineReport {
    pub fn passed(&self) -> bool {
        self.gain_percent >= HEADLINE_MIN_GAIN_PERCENT
    }
}

/// Optimized versus all-0.5 closed-form sum-rate on the topology of `seed`.
pub fn reproduce_headline(cfg: &SystemConfig, seed: u64, settings: &OptimizerSettings) -> Result<HeadlineReport> {
    let topo = place_topology(cfg, seed)?;
    let model = RateModel::new(cfg, &topo)?;
    let baseline = model.sum_rate(&PowerSharingVector::uniform(cfg.num_uds, 0.5)?)?;
    let opt = optimize_power(&model, settings, seed)?;
    if !(baseline > 0.0) {
        return Err(Error::Degenerate(format!("baseline sum-rate {baseline}")));
    }
    Ok(HeadlineReport {
        baseline,
        optimized: opt.sum_rate,
        gain_percent: 100.0 * (opt.sum_rate / baseline - 1.0),
        eta: opt.eta,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidateOptions {
    /// Fewer trials and realizations; same checks.
    pub quick: bool,
    pub oracle_tolerance: f64,
    pub seed: u64,
}

impl Default for ValidateOptions {
    fn default() -> Self {
        Self { quick: false, oracle_tolerance: ORACLE_TOLERANCE, seed: 0 }
    }
}

/// Worst relative error of `estimate + error = prior` over ten pilot powers
/// spanning 1e-16 to 1e2 W, both layers, at `cfg`.
pub fn covariance_identity_error(cfg: &SystemConfig) -> Result<f64> {
    let access = exp_correlation(cfg.rru_antennas, cfg.correlation_rho)?;
    let bbu = exp_correlation(cfg.bbu_antennas, cfg.correlation_rho)?;
    let (_, zeta) = crate::channel::rician_weights(cfg.rician_db);
    let noise = crate::sysmodel::noise_power_watts(cfg.noise_psd_dbm_hz, cfg.bandwidth_hz);
    let bbu_prior = bbu.matrix().scale(zeta * zeta);
    let mut worst: f64 = 0.0;
    for i in 0..10 {
        let p = 10f64.powf(-16.0 + 2.0 * i as f64);
        let a = access_cov(access.matrix(), p, noise)?;
        worst = worst.max(rel_frobenius(&(&a.estimate + &a.error), access.matrix()));
        let f = fronthaul_cov(bbu.matrix(), zeta, p, noise)?;
        worst = worst.max(rel_frobenius(&(&f.estimate + &f.error), &bbu_prior));
    }
    Ok(worst)
}

/// Largest deviation of `lambda_b N` and `lambda_k M` from 1 at `cfg`.
pub fn normalization_error(cfg: &SystemConfig, seed: u64) -> Result<f64> {
    let topo = place_topology(cfg, seed)?;
    let (lambda_b, lambda_a) = lambda_factors(&CovarianceSet::new(cfg, &topo)?, cfg)?;
    let mut worst = (lambda_b * cfg.bbu_antennas as f64 - 1.0).abs();
    for l in lambda_a {
        worst = worst.max((l * cfg.rru_antennas as f64 - 1.0).abs());
    }
    Ok(worst)
}

/// Closed form against the Monte-Carlo oracle at the scaled configuration:
/// `(closed, oracle ratio-of-means, oracle mean-of-logs)`.
pub fn oracle_comparison(realizations: usize, seed: u64) -> Result<(f64, f64, f64)> {
    let cfg = SystemConfig::scaled();
    let topo = place_topology(&cfg, seed)?;
    let eta = PowerSharingVector::uniform(cfg.num_uds, 0.5)?;
    let closed = RateModel::new(&cfg, &topo)?.sum_rate(&eta)?;
    let mc = LinkSimulator::new(&cfg, &topo, &eta)?.ergodic_rate(realizations, seed)?;
    Ok((closed, mc.ratio_sum_rate, mc.sum_rate))
}

/// Runs the property suite; each check reports independently.
pub fn validate(opts: &ValidateOptions) -> Result<Vec<CheckResult>> {
    let mut out = Vec::new();
    let defaults = SystemConfig::default();

    let err = covariance_identity_error(&defaults)?;
    out.push(CheckResult {
        name: "covariance identities",
        passed: err <= 1e-10,
        detail: format!("max relative error {err:.2e}"),
    });

    let err = normalization_error(&defaults, opts.seed)?;
    out.push(CheckResult {
        name: "combiner normalization",
        passed: err <= 1e-12,
        detail: format!("max |lambda * size - 1| = {err:.2e}"),
    });

    let trials = if opts.quick { 20 } else { 100 };
    let lemma = check_lemmas(&[10_000], &[], trials, 1.0, opts.seed)?;
    let row = lemma.rows[0];
    let dev = row.inner_product.max(row.norm_deviation).max(row.quadratic_form);
    out.push(CheckResult {
        name: "concentration at N = 1e4",
        passed: dev < 0.02,
        detail: format!(
            "inner {:.4}, norm {:.4}, quadratic {:.4}",
            row.inner_product, row.norm_deviation, row.quadratic_form
        ),
    });

    let ratio_trials = if opts.quick { 200 } else { 1000 };
    let gaps = check_lemmas(&[], &[8, 16, 32, 64], ratio_trials, 1.0, opts.seed)?.ratio_gaps;
    let shrinking = gaps.windows(2).all(|w| w[1].1 < w[0].1);
    out.push(CheckResult {
        name: "ratio-of-expectations gap",
        passed: shrinking,
        detail: gaps.iter().map(|(m, g)| format!("{m}:{g:.5}")).collect::<Vec<_>>().join(" "),
    });

    let realizations = if opts.quick { 200 } else { 400 };
    let (closed, ratio, logs) = oracle_comparison(realizations, opts.seed)?;
    let rel = (closed - ratio).abs() / ratio;
    out.push(CheckResult {
        name: "closed form vs oracle",
        passed: rel <= opts.oracle_tolerance,
        detail: format!(
            "closed {closed:.4}, oracle {ratio:.4} ({:.2}%), mean-of-logs {logs:.4} ({:+.2}%)",
            100.0 * rel,
            100.0 * (closed - logs) / logs
        ),
    });

    let params = DeaParams::with_population(40, 200, opts.seed);
    let res = optimize(20, |x| Ok(-x.iter().map(|v| (v - 0.3) * (v - 0.3)).sum::<f64>()), &params)?;
    let off = res.best.genes.iter().map(|g| (g - 0.3).abs()).fold(0.0, f64::max);
    out.push(CheckResult {
        name: "optimizer sphere benchmark",
        passed: off <= 0.01,
        detail: format!("max |gene - 0.3| = {off:.2e}"),
    });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn value_lists() {
        assert_eq!(parse_values(SweepParam::M, "16, 32 64").unwrap(), vec![16.0, 32.0, 64.0]);
        assert!(parse_values(SweepParam::M, "16.5").is_err());
        assert!(parse_values(SweepParam::Rho, "0.3,0.1").is_err());
        assert!(parse_values(SweepParam::Rho, "0.1,0.1").is_err());
        assert!(parse_values(SweepParam::Rho, "").is_err());
        assert!(parse_values(SweepParam::Rho, "nan").is_err());
        assert_eq!(parse_values(SweepParam::KRiceDb, "-5,0").unwrap(), vec![-5.0, 0.0]);
    }

    #[test]
    fn mode_lists() {
        assert_eq!(parse_modes("mc_opt,closed_nonopt").unwrap(), vec![Mode::McOpt, Mode::ClosedNonopt]);
        assert!(parse_modes("closed_opt closed_opt").is_err());
        assert!(parse_modes("closed").is_err());
        assert!(parse_modes(" , ").is_err());
        for m in Mode::ALL {
            assert_eq!(m.name().parse::<Mode>().unwrap(), m);
        }
    }

    #[test]
    fn parameter_application() {
        let base = SystemConfig::default();
        assert_eq!(SweepParam::K.apply(&base, 12.0).unwrap().uds_per_rru, vec![3, 3, 3, 3]);
        assert_eq!(SweepParam::R.apply(&base, 8.0).unwrap().uds_per_rru.len(), 8);
        assert_eq!(SweepParam::M.apply(&base, 64.0).unwrap().rru_antennas, 64);
        assert!(SweepParam::Rho.apply(&base, 1.0).is_err());
        assert!("Q".parse::<SweepParam>().is_err());
    }

    #[test]
    fn csv_round_trip() {
        let rows = vec![
            ResultRow {
                param: "M".into(),
                value: 16.0,
                mode: Mode::ClosedNonopt,
                seed: 3,
                sum_rate: 7.5,
                stderr: None,
                wall_ms: 0,
                per_ud_rates: vec![],
            },
            ResultRow {
                param: "M".into(),
                value: 16.0,
                mode: Mode::McOpt,
                seed: 3,
                sum_rate: 20.25,
                stderr: Some(0.125),
                wall_ms: 12,
                per_ud_rates: vec![],
            },
        ];
        let mut buf = Vec::new();
        write_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("param,value,mode,seed,sum_rate,stderr,wall_ms\n"));
        assert_eq!(read_csv(&buf[..]).unwrap(), rows);
    }

    #[test]
    fn csv_rejects_schema_violations() {
        assert!(read_csv("a,b\n1,2\n".as_bytes()).is_err());
        let h = "param,value,mode,seed,sum_rate,stderr,wall_ms\n";
        assert!(read_csv(format!("{h}M,16,closed_opt,0,-1,,0\n").as_bytes()).is_err());
        assert!(read_csv(format!("{h}M,16,mc_opt,0,1,,0\n").as_bytes()).is_err());
        assert!(read_csv(format!("{h}X,16,closed_opt,0,1,,0\n").as_bytes()).is_err());
        assert!(read_csv(format!("{h}M,16,closed_opt,0,1,,0\n").as_bytes()).is_ok());
    }

    #[test]
    fn sweep_count_and_order() {
        let spec = SweepSpec::parse("rho", "0.3,0.1,0.5", "closed_opt", "1", 2);
        assert!(spec.is_err());
        let spec = SweepSpec::parse("M", "16,24,32", "closed_nonopt,mc_nonopt", "5,2", 4).unwrap();
        let cfg = SystemConfig::scaled();
        let rows = run_sweep(&cfg, &spec, &RunOptions::default()).unwrap();
        assert_eq!(rows.len(), 12);
        let keys: Vec<(f64, Mode, u64)> = rows.iter().map(|r| (r.value, r.mode, r.seed)).collect();
        let mut sorted = keys.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(keys, sorted);
        assert!(rows.iter().all(|r| r.sum_rate >= 0.0 && r.wall_ms == 0));
        assert!(rows.iter().all(|r| r.stderr.is_some() == r.mode.monte_carlo()));
    }
}
