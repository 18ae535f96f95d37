//! System configuration, deployment geometry, power budgets and pathloss.
//!
//! Everything downstream (channel sampling, estimation, the closed-form rate
//! and the link simulator) consumes the [`LinkBudget`] produced here: per-UD
//! pilot/data transmit and receive powers on the access layer, per-stream
//! pilot/data powers on the fronthaul layer, and the two noise variances.

use std::collections::BTreeMap;
use std::f64::consts::SQRT_2;
use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::rng::{substream, Domain};

/// Default guard keeping power-sharing factors away from 0 and 1.
pub const DEFAULT_GUARD: f64 = 1e-3;

/// Minimum UD to serving-RRU distance used at placement, in meters.
pub const MIN_UD_DISTANCE_M: f64 = 1.0;

/// Half side of the square coverage area, in meters.
pub const COVERAGE_HALF_SIDE_M: f64 = 500.0 * SQRT_2;

#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig {
    pub bandwidth_hz: f64,
    pub num_uds: usize,
    pub num_rrus: usize,
    pub uds_per_rru: Vec<usize>,
    pub rru_antennas: usize,
    pub bbu_antennas: usize,
    pub correlation_rho: f64,
    pub rician_db: f64,
    pub receiver_efficiency: f64,
    pub noise_psd_dbm_hz: f64,
    pub p_ud_watts: f64,
    pub p_rru_watts: f64,
    pub f_access_hz: f64,
    pub f_fronthaul_ghz: f64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            bandwidth_hz: 10e6,
            num_uds: 10,
            num_rrus: 4,
            uds_per_rru: vec![2, 2, 3, 3],
            rru_antennas: 32,
            bbu_antennas: 128,
            correlation_rho: 0.1,
            rician_db: 10.0,
            receiver_efficiency: 0.1,
            noise_psd_dbm_hz: -174.0,
            p_ud_watts: 0.2,
            p_rru_watts: 10.0,
            f_access_hz: 3.4e9,
            f_fronthaul_ghz: 26.0,
        }
    }
}

const CONFIG_KEYS: [&str; 14] = [
    "bandwidth_hz",
    "num_uds",
    "num_rrus",
    "uds_per_rru",
    "rru_antennas",
    "bbu_antennas",
    "correlation_rho",
    "rician_db",
    "receiver_efficiency",
    "noise_psd_dbm_hz",
    "p_ud_watts",
    "p_rru_watts",
    "f_access_hz",
    "f_fronthaul_ghz",
];

impl SystemConfig {
    /// Reduced deployment used for oracle cross-checks: M=16, N=32, K=4 over
    /// two RRUs, everything else at defaults.
    pub fn scaled() -> Self {
        Self {
            num_uds: 4,
            num_rrus: 2,
            uds_per_rru: vec![2, 2],
            rru_antennas: 16,
            bbu_antennas: 32,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.num_rrus == 0 || self.num_uds == 0 {
            return bad("need at least one RRU and one UD".into());
        }
        if self.uds_per_rru.len() != self.num_rrus {
            return bad(format!(
                "uds_per_rru has {} entries but num_rrus = {}",
                self.uds_per_rru.len(),
                self.num_rrus
            ));
        }
        let total = self.uds_per_rru.iter().try_fold(0usize, |acc, &u| acc.checked_add(u));
        if total != Some(self.num_uds) {
            return bad(format!("sum of uds_per_rru differs from num_uds = {}", self.num_uds));
        }
        if let Some(r) = self.uds_per_rru.iter().position(|&u| u == 0) {
            return bad(format!("RRU {} serves no UDs", r + 1));
        }
        if let Some(r) = self.uds_per_rru.iter().position(|&u| u > self.rru_antennas) {
            return bad(format!(
                "RRU {} serves {} UDs with only {} antennas",
                r + 1,
                self.uds_per_rru[r],
                self.rru_antennas
            ));
        }
        if self.num_uds > self.bbu_antennas {
            return bad(format!("K = {} exceeds N = {}", self.num_uds, self.bbu_antennas));
        }
        if !(0.0..1.0).contains(&self.correlation_rho) {
            return bad(format!("correlation_rho = {} not in [0, 1)", self.correlation_rho));
        }
        for (name, v) in [
            ("bandwidth_hz", self.bandwidth_hz),
            ("p_ud_watts", self.p_ud_watts),
            ("p_rru_watts", self.p_rru_watts),
            ("f_access_hz", self.f_access_hz),
            ("f_fronthaul_ghz", self.f_fronthaul_ghz),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive and finite, got {v}"));
            }
        }
        if !(self.receiver_efficiency >= 0.0 && self.receiver_efficiency.is_finite()) {
            return bad(format!("receiver_efficiency = {}", self.receiver_efficiency));
        }
        if !self.noise_psd_dbm_hz.is_finite() {
            return bad("noise_psd_dbm_hz must be finite".into());
        }
        if self.rician_db.is_nan() {
            return bad("rician_db is NaN".into());
        }
        Ok(())
    }

    /// Parses the flat `key = value` format; absent keys keep their defaults.
    ///
    /// `uds_per_rru` accepts a comma- or whitespace-separated list. When it is
    /// absent the most-even partition of `num_uds` over `num_rrus` is used.
    pub fn parse(text: &str) -> Result<Self> {
        let mut seen: BTreeMap<&str, (usize, &str)> = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = match raw.find('#') {
                Some(p) => &raw[..p],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: line_no,
                msg: format!("expected `key = value`, got `{line}`"),
            })?;
            let key = key.trim();
            let value = value.trim();
            let Some(&known) = CONFIG_KEYS.iter().find(|&&k| k == key) else {
                return Err(Error::Parse { line: line_no, msg: format!("unknown key `{key}`") });
            };
            if seen.insert(known, (line_no, value)).is_some() {
                return Err(Error::Parse { line: line_no, msg: format!("duplicate key `{key}`") });
            }
        }

        let mut cfg = Self::default();
        let float = |key: &str, default: f64| -> Result<f64> {
            match seen.get(key) {
                None => Ok(default),
                Some(&(line, v)) => v.parse::<f64>().map_err(|e| Error::Parse {
                    line,
                    msg: format!("{key}: {e}"),
                }),
            }
        };
        let count = |key: &str| -> Result<Option<usize>> {
            match seen.get(key) {
                None => Ok(None),
                Some(&(line, v)) => v.parse::<usize>().map(Some).map_err(|e| Error::Parse {
                    line,
                    msg: format!("{key}: {e}"),
                }),
            }
        };

        cfg.bandwidth_hz = float("bandwidth_hz", cfg.bandwidth_hz)?;
        cfg.correlation_rho = float("correlation_rho", cfg.correlation_rho)?;
        cfg.rician_db = float("rician_db", cfg.rician_db)?;
        cfg.receiver_efficiency = float("receiver_efficiency", cfg.receiver_efficiency)?;
        cfg.noise_psd_dbm_hz = float("noise_psd_dbm_hz", cfg.noise_psd_dbm_hz)?;
        cfg.p_ud_watts = float("p_ud_watts", cfg.p_ud_watts)?;
        cfg.p_rru_watts = float("p_rru_watts", cfg.p_rru_watts)?;
        cfg.f_access_hz = float("f_access_hz", cfg.f_access_hz)?;
        cfg.f_fronthaul_ghz = float("f_fronthaul_ghz", cfg.f_fronthaul_ghz)?;
        if let Some(m) = count("rru_antennas")? {
            cfg.rru_antennas = m;
        }
        if let Some(n) = count("bbu_antennas")? {
            cfg.bbu_antennas = n;
        }

        let k = count("num_uds")?;
        let r = count("num_rrus")?;
        match seen.get("uds_per_rru") {
            Some(&(line, v)) => {
                let list = v
                    .split(|c: char| c == ',' || c.is_whitespace())
                    .filter(|s| !s.is_empty())
                    .map(|s| s.parse::<usize>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|e| Error::Parse { line, msg: format!("uds_per_rru: {e}") })?;
                let total = list.iter().try_fold(0usize, |acc, &u| acc.checked_add(u));
                cfg.num_uds = match (k, total) {
                    (Some(k), _) => k,
                    (None, Some(t)) => t,
                    (None, None) => return Err(Error::Parse { line, msg: "uds_per_rru: sum overflows".into() }),
                };
                cfg.num_rrus = r.unwrap_or(list.len());
                cfg.uds_per_rru = list;
            }
            None => {
                if k.is_some() || r.is_some() {
                    cfg.num_uds = k.unwrap_or(cfg.num_uds);
                    cfg.num_rrus = r.unwrap_or(cfg.num_rrus);
                    cfg.uds_per_rru = partition_uds(cfg.num_uds, cfg.num_rrus)?;
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Renders every key; `parse(to_config_string())` reproduces `self`.
    pub fn to_config_string(&self) -> String {
        let mut out = String::new();
        let list: Vec<String> = self.uds_per_rru.iter().map(|u| u.to_string()).collect();
        let _ = writeln!(out, "bandwidth_hz = {:?}", self.bandwidth_hz);
        let _ = writeln!(out, "num_uds = {}", self.num_uds);
        let _ = writeln!(out, "num_rrus = {}", self.num_rrus);
        let _ = writeln!(out, "uds_per_rru = {}", list.join(","));
        let _ = writeln!(out, "rru_antennas = {}", self.rru_antennas);
        let _ = writeln!(out, "bbu_antennas = {}", self.bbu_antennas);
        let _ = writeln!(out, "correlation_rho = {:?}", self.correlation_rho);
        let _ = writeln!(out, "rician_db = {:?}", self.rician_db);
        let _ = writeln!(out, "receiver_efficiency = {:?}", self.receiver_efficiency);
        let _ = writeln!(out, "noise_psd_dbm_hz = {:?}", self.noise_psd_dbm_hz);
        let _ = writeln!(out, "p_ud_watts = {:?}", self.p_ud_watts);
        let _ = writeln!(out, "p_rru_watts = {:?}", self.p_rru_watts);
        let _ = writeln!(out, "f_access_hz = {:?}", self.f_access_hz);
        let _ = writeln!(out, "f_fronthaul_ghz = {:?}", self.f_fronthaul_ghz);
        out
    }

    /// Same config with `num_uds`/`num_rrus` changed and the UDs re-partitioned.
    pub fn with_counts(&self, num_uds: usize, num_rrus: usize) -> Result<Self> {
        let mut cfg = self.clone();
        cfg.num_uds = num_uds;
        cfg.num_rrus = num_rrus;
        cfg.uds_per_rru = partition_uds(num_uds, num_rrus)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Most-even split of `k` UDs over `r` RRUs; the remainder goes to the
/// highest-indexed RRUs, so (10, 4) gives (2, 2, 3, 3).
pub fn partition_uds(k: usize, r: usize) -> Result<Vec<usize>> {
    if r == 0 || k < r {
        return Err(Error::InvalidConfig(format!("cannot split {k} UDs over {r} RRUs")));
    }
    let base = k / r;
    let extra = k % r;
    Ok((0..r).map(|i| if i >= r - extra { base + 1 } else { base }).collect())
}

/// Access-layer pathloss in dB; `f_c` in Hz.
pub fn pathloss_access(distance_m: f64, f_c_hz: f64) -> Result<f64> {
    if !(distance_m > 0.0) || !(f_c_hz > 0.0) {
        return Err(Error::Domain(format!(
            "access pathloss needs d > 0 and f_c > 0 (d = {distance_m}, f_c = {f_c_hz})"
        )));
    }
    Ok(-154.0 + 20.0 * f_c_hz.log10() + 20.0 * distance_m.log10())
}

/// mmWave fronthaul pathloss in dB; `f_mm` in GHz.
pub fn pathloss_fronthaul(distance_m: f64, f_mm_ghz: f64) -> Result<f64> {
    if !(distance_m > 0.0) || !(f_mm_ghz > 0.0) {
        return Err(Error::Domain(format!(
            "fronthaul pathloss needs d > 0 and f_mm > 0 (d = {distance_m}, f_mm = {f_mm_ghz})"
        )));
    }
    Ok(3.34 + 18.62 * f_mm_ghz.log10() + 22.0 * distance_m.log10())
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Noise power in W over `bandwidth_hz` for a PSD in dBm/Hz.
pub fn noise_power_watts(psd_dbm_hz: f64, bandwidth_hz: f64) -> f64 {
    let dbm = psd_dbm_hz + 10.0 * bandwidth_hz.log10();
    10f64.powf((dbm - 30.0) / 10.0)
}

/// Bijection between the global UD index `k` and `(r, u)` (all zero-based).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UdIndexMap {
    offsets: Vec<usize>,
    pairs: Vec<(usize, usize)>,
}

impl UdIndexMap {
    pub fn new(uds_per_rru: &[usize]) -> Self {
        let mut offsets = Vec::with_capacity(uds_per_rru.len());
        let mut pairs = Vec::new();
        let mut acc = 0;
        for (r, &u_r) in uds_per_rru.iter().enumerate() {
            offsets.push(acc);
            pairs.extend((0..u_r).map(|u| (r, u)));
            acc += u_r;
        }
        Self { offsets, pairs }
    }

    pub fn num_uds(&self) -> usize {
        self.pairs.len()
    }

    pub fn num_rrus(&self) -> usize {
        self.offsets.len()
    }

    /// `k -> (r, u)`.
    pub fn locate(&self, k: usize) -> (usize, usize) {
        self.pairs[k]
    }

    pub fn rru_of(&self, k: usize) -> usize {
        self.pairs[k].0
    }

    /// `(r, u) -> k`.
    pub fn index(&self, r: usize, u: usize) -> usize {
        self.offsets[r] + u
    }

    /// Global indices of the UDs served by RRU `r`.
    pub fn uds_of(&self, r: usize) -> std::ops::Range<usize> {
        let start = self.offsets[r];
        let end = self.offsets.get(r + 1).copied().unwrap_or(self.pairs.len());
        start..end
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Axis-aligned rectangle, used for RRU service subareas.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub min: Point,
    pub max: Point,
}

impl Rect {
    pub fn center(&self) -> Point {
        Point::new(0.5 * (self.min.x + self.max.x), 0.5 * (self.min.y + self.max.y))
    }

    pub fn contains(&self, p: &Point) -> bool {
        (self.min.x..=self.max.x).contains(&p.x) && (self.min.y..=self.max.y).contains(&p.y)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    pub bbu_position: Point,
    pub rru_positions: Vec<Point>,
    pub ud_positions: Vec<Point>,
    pub ud_to_rru: UdIndexMap,
}

impl Topology {
    /// Builds a topology from explicit coordinates; `ud_positions` follow the
    /// global index order.
    pub fn from_positions(
        uds_per_rru: &[usize],
        bbu: Point,
        rrus: Vec<Point>,
        uds: Vec<Point>,
    ) -> Result<Self> {
        let map = UdIndexMap::new(uds_per_rru);
        if rrus.len() != map.num_rrus() || uds.len() != map.num_uds() {
            return Err(Error::InvalidConfig(format!(
                "topology has {} RRUs / {} UDs, expected {} / {}",
                rrus.len(),
                uds.len(),
                map.num_rrus(),
                map.num_uds()
            )));
        }
        Ok(Self { bbu_position: bbu, rru_positions: rrus, ud_positions: uds, ud_to_rru: map })
    }

    pub fn check_against(&self, cfg: &SystemConfig) -> Result<()> {
        if self.ud_to_rru != UdIndexMap::new(&cfg.uds_per_rru) {
            return Err(Error::InvalidConfig("topology does not match uds_per_rru".into()));
        }
        Ok(())
    }

    /// Azimuth of RRU `r` as seen from the BBU, radians.
    pub fn rru_azimuth(&self, r: usize) -> f64 {
        let p = self.rru_positions[r];
        (p.y - self.bbu_position.y).atan2(p.x - self.bbu_position.x)
    }

    pub fn rru_distance(&self, r: usize) -> f64 {
        self.rru_positions[r].distance(&self.bbu_position)
    }

    /// Distance between UD `k` and RRU `r`.
    pub fn ud_distance(&self, k: usize, r: usize) -> f64 {
        self.ud_positions[k].distance(&self.rru_positions[r])
    }
}

/// RRU sites and their service subareas.
///
/// R = 4 uses the four quadrant centers at distance 500 m from the BBU. Any
/// other R splits the square into a rows x cols grid (rows the largest divisor
/// of R not exceeding sqrt(R)), row-major from the top-left; R = 8 becomes a
/// 4 x 2 grid. A cell whose center falls on the BBU gets its RRU moved to the
/// center of the cell's upper-right quarter.
pub fn rru_layout(num_rrus: usize) -> Vec<(Point, Rect)> {
    let h = COVERAGE_HALF_SIDE_M;
    if num_rrus == 4 {
        let a = 250.0 * SQRT_2;
        let quadrant = |sx: f64, sy: f64| Rect {
            min: Point::new(if sx > 0.0 { 0.0 } else { -h }, if sy > 0.0 { 0.0 } else { -h }),
            max: Point::new(if sx > 0.0 { h } else { 0.0 }, if sy > 0.0 { h } else { 0.0 }),
        };
        return [(1.0, 1.0), (1.0, -1.0), (-1.0, -1.0), (-1.0, 1.0)]
            .into_iter()
            .map(|(sx, sy)| (Point::new(sx * a, sy * a), quadrant(sx, sy)))
            .collect();
    }
    let rows = (1..=num_rrus).filter(|d| num_rrus.is_multiple_of(*d) && d * d <= num_rrus).max().unwrap_or(1);
    let cols = num_rrus / rows;
    let w = 2.0 * h / cols as f64;
    let ht = 2.0 * h / rows as f64;
    let mut out = Vec::with_capacity(num_rrus);
    for row in 0..rows {
        for col in 0..cols {
            let cell = Rect {
                min: Point::new(-h + col as f64 * w, h - (row + 1) as f64 * ht),
                max: Point::new(-h + (col + 1) as f64 * w, h - row as f64 * ht),
            };
            let mut site = cell.center();
            if site.distance(&Point::new(0.0, 0.0)) < MIN_UD_DISTANCE_M {
                site = Point::new(site.x + 0.25 * w, site.y + 0.25 * ht);
            }
            out.push((site, cell));
        }
    }
    out
}

/// Places RRUs per [`rru_layout`] and draws each RRU's UDs uniformly inside
/// its own subarea, at least [`MIN_UD_DISTANCE_M`] from the RRU.
pub fn place_topology(cfg: &SystemConfig, seed: u64) -> Result<Topology> {
    cfg.validate()?;
    let layout = rru_layout(cfg.num_rrus);
    let mut rng = ChaCha8Rng::seed_from_u64(substream(seed, Domain::Topology, 0));
    let mut uds = Vec::with_capacity(cfg.num_uds);
    for (r, &u_r) in cfg.uds_per_rru.iter().enumerate() {
        let (site, cell) = layout[r];
        for _ in 0..u_r {
            loop {
                let p = Point::new(
                    rng.random_range(cell.min.x..=cell.max.x),
                    rng.random_range(cell.min.y..=cell.max.y),
                );
                if p.distance(&site) >= MIN_UD_DISTANCE_M {
                    uds.push(p);
                    break;
                }
            }
        }
    }
    Topology::from_positions(
        &cfg.uds_per_rru,
        Point::new(0.0, 0.0),
        layout.into_iter().map(|(p, _)| p).collect(),
        uds,
    )
}

/// The 2K power-sharing factors: one per UD (pilot vs data) and one per
/// forwarding stream at the RRUs.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerSharingVector {
    eta_access: Vec<f64>,
    eta_fronthaul: Vec<f64>,
}

impl PowerSharingVector {
    /// Rejects values outside (0, 1); clamps the rest into `[guard, 1 - guard]`.
    pub fn new(eta_access: Vec<f64>, eta_fronthaul: Vec<f64>, guard: f64) -> Result<Self> {
        if eta_access.len() != eta_fronthaul.len() {
            return Err(Error::Contract(format!(
                "{} access factors vs {} fronthaul factors",
                eta_access.len(),
                eta_fronthaul.len()
            )));
        }
        let clamp = |v: f64| -> Result<f64> {
            if v > 0.0 && v < 1.0 {
                Ok(v.clamp(guard, 1.0 - guard))
            } else {
                Err(Error::Domain(format!("power-sharing factor {v} outside (0, 1)")))
            }
        };
        Ok(Self {
            eta_access: eta_access.into_iter().map(clamp).collect::<Result<_>>()?,
            eta_fronthaul: eta_fronthaul.into_iter().map(clamp).collect::<Result<_>>()?,
        })
    }

    pub fn uniform(num_uds: usize, value: f64) -> Result<Self> {
        Self::new(vec![value; num_uds], vec![value; num_uds], DEFAULT_GUARD)
    }

    /// Splits a flat `[access..., fronthaul...]` gene vector.
    pub fn from_genes(genes: &[f64], guard: f64) -> Result<Self> {
        if !genes.len().is_multiple_of(2) {
            return Err(Error::Contract(format!("odd gene count {}", genes.len())));
        }
        let (a, f) = genes.split_at(genes.len() / 2);
        Self::new(a.to_vec(), f.to_vec(), guard)
    }

    pub fn to_genes(&self) -> Vec<f64> {
        self.eta_access.iter().chain(&self.eta_fronthaul).copied().collect()
    }

    pub fn num_uds(&self) -> usize {
        self.eta_access.len()
    }

    pub fn access(&self) -> &[f64] {
        &self.eta_access
    }

    pub fn fronthaul(&self) -> &[f64] {
        &self.eta_fronthaul
    }
}

/// Transmit and receive powers of every link, all in W.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkBudget {
    /// UD pilot / data transmit power, per UD.
    pub p_tx_pilot: Vec<f64>,
    pub p_tx_data: Vec<f64>,
    /// Received-signal processing power, per RRU.
    pub p_sp: Vec<f64>,
    /// Forwarding-TA pilot / data transmit power, per stream.
    pub p_ta_pilot: Vec<f64>,
    pub p_ta_data: Vec<f64>,
    /// UD pilot / data power at the serving RRU.
    pub p_rx_access_pilot: Vec<f64>,
    pub p_rx_access_data: Vec<f64>,
    /// Stream pilot / data power at the BBU.
    pub p_rx_fronthaul_pilot: Vec<f64>,
    pub p_rx_fronthaul_data: Vec<f64>,
    /// Linear access gain from UD `k` to RRU `r`, indexed `[r][k]`.
    pub access_gain: Vec<Vec<f64>>,
    pub noise_access: f64,
    pub noise_fronthaul: f64,
}

/// Which part of a coherence block a power refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Pilot,
    Data,
}

impl LinkBudget {
    /// Power of UD `k` received at RRU `r`, serving or not.
    pub fn rx_at_rru(&self, r: usize, k: usize, phase: Phase) -> f64 {
        let tx = match phase {
            Phase::Pilot => self.p_tx_pilot[k],
            Phase::Data => self.p_tx_data[k],
        };
        tx * self.access_gain[r][k]
    }

    /// Amplification applied by the hosting RRU to stream `k`.
    pub fn amplification(&self, k: usize) -> f64 {
        1.0 / self.p_rx_access_data[k]
    }
}

pub fn build_link_budget(
    cfg: &SystemConfig,
    topo: &Topology,
    eta: &PowerSharingVector,
) -> Result<LinkBudget> {
    topo.check_against(cfg)?;
    let k_total = cfg.num_uds;
    if eta.num_uds() != k_total {
        return Err(Error::Contract(format!(
            "power-sharing vector covers {} UDs, config has {k_total}",
            eta.num_uds()
        )));
    }
    let map = &topo.ud_to_rru;

    let p_sp: Vec<f64> = cfg
        .uds_per_rru
        .iter()
        .map(|&u| cfg.receiver_efficiency * u as f64 * cfg.p_ud_watts)
        .collect();
    for (r, &sp) in p_sp.iter().enumerate() {
        if sp >= cfg.p_rru_watts {
            return Err(Error::InfeasibleBudget { rru: r + 1, p_sp: sp, p_rru: cfg.p_rru_watts });
        }
    }

    let p_tx_pilot: Vec<f64> = eta.access().iter().map(|e| e * cfg.p_ud_watts).collect();
    let p_tx_data: Vec<f64> = eta.access().iter().map(|e| (1.0 - e) * cfg.p_ud_watts).collect();

    let mut p_ta_pilot = Vec::with_capacity(k_total);
    let mut p_ta_data = Vec::with_capacity(k_total);
    for k in 0..k_total {
        let r = map.rru_of(k);
        let share = (cfg.p_rru_watts - p_sp[r]) / cfg.uds_per_rru[r] as f64;
        let e = eta.fronthaul()[k];
        p_ta_pilot.push(e * share);
        p_ta_data.push((1.0 - e) * share);
    }

    let mut access_gain = vec![vec![0.0; k_total]; cfg.num_rrus];
    for (r, row) in access_gain.iter_mut().enumerate() {
        for (k, g) in row.iter_mut().enumerate() {
            let d = topo.ud_distance(k, r).max(MIN_UD_DISTANCE_M);
            *g = db_to_linear(-pathloss_access(d, cfg.f_access_hz)?);
        }
    }
    let mut fronthaul_gain = Vec::with_capacity(k_total);
    for k in 0..k_total {
        let d = topo.rru_distance(map.rru_of(k));
        fronthaul_gain.push(db_to_linear(-pathloss_fronthaul(d, cfg.f_fronthaul_ghz)?));
    }

    let serving_gain = |k: usize| access_gain[map.rru_of(k)][k];
    let noise = noise_power_watts(cfg.noise_psd_dbm_hz, cfg.bandwidth_hz);
    Ok(LinkBudget {
        p_rx_access_pilot: (0..k_total).map(|k| p_tx_pilot[k] * serving_gain(k)).collect(),
        p_rx_access_data: (0..k_total).map(|k| p_tx_data[k] * serving_gain(k)).collect(),
        p_rx_fronthaul_pilot: (0..k_total).map(|k| p_ta_pilot[k] * fronthaul_gain[k]).collect(),
        p_rx_fronthaul_data: (0..k_total).map(|k| p_ta_data[k] * fronthaul_gain[k]).collect(),
        p_tx_pilot,
        p_tx_data,
        p_sp,
        p_ta_pilot,
        p_ta_data,
        access_gain,
        noise_access: noise,
        noise_fronthaul: noise,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn access_pathloss_values() {
        assert_relative_eq!(pathloss_access(1.0, 3.4e9).unwrap(), 36.6296, epsilon = 1e-3);
        assert_relative_eq!(pathloss_access(100.0, 3.4e9).unwrap(), 76.6296, epsilon = 1e-3);
        assert_relative_eq!(pathloss_access(500.0, 3.4e9).unwrap(), 90.6090, epsilon = 1e-3);
        assert!(matches!(pathloss_access(0.0, 3.4e9), Err(Error::Domain(_))));
        assert!(matches!(pathloss_access(10.0, -1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn fronthaul_pathloss_values() {
        assert_relative_eq!(pathloss_fronthaul(500.0, 26.0).unwrap(), 89.0636, epsilon = 1e-3);
        assert_relative_eq!(pathloss_fronthaul(1.0, 1.0).unwrap(), 3.34, epsilon = 1e-12);
        assert_relative_eq!(pathloss_fronthaul(100.0, 26.0).unwrap(), 73.6864, epsilon = 1e-3);
        assert!(pathloss_fronthaul(-5.0, 26.0).is_err());
    }

    #[test]
    fn noise_floor_at_ten_megahertz() {
        assert_relative_eq!(noise_power_watts(-174.0, 10e6), 3.981e-14, max_relative = 1e-3);
    }

    #[test]
    fn index_map_examples() {
        let map = UdIndexMap::new(&[2, 2, 3, 3]);
        assert_eq!(map.locate(0), (0, 0));
        assert_eq!(map.locate(4), (2, 0));
        assert_eq!(map.locate(9), (3, 2));
        assert_eq!(map.uds_of(2), 4..7);
    }

    #[test]
    fn default_partition_matches_table() {
        assert_eq!(partition_uds(10, 4).unwrap(), vec![2, 2, 3, 3]);
        assert_eq!(partition_uds(4, 2).unwrap(), vec![2, 2]);
        assert_eq!(partition_uds(10, 8).unwrap(), vec![1, 1, 1, 1, 1, 1, 2, 2]);
        assert!(partition_uds(3, 4).is_err());
    }

    #[test]
    fn paper_layout_for_four_rrus() {
        let cfg = SystemConfig::default();
        let topo = place_topology(&cfg, 7).unwrap();
        let a = 250.0 * SQRT_2;
        assert_relative_eq!(topo.rru_positions[0].x, a);
        assert_relative_eq!(topo.rru_positions[0].y, a);
        assert_relative_eq!(topo.rru_positions[2].x, -a);
        for r in 0..4 {
            assert_relative_eq!(topo.rru_distance(r), 500.0, epsilon = 1e-9);
        }
        let quadrants: Vec<(bool, bool)> =
            topo.rru_positions.iter().map(|p| (p.x > 0.0, p.y > 0.0)).collect();
        assert_eq!(quadrants, vec![(true, true), (true, false), (false, false), (false, true)]);
    }

    #[test]
    fn eight_rrus_use_four_by_two_grid() {
        let layout = rru_layout(8);
        assert_eq!(layout.len(), 8);
        let w = 2.0 * COVERAGE_HALF_SIDE_M / 4.0;
        for (site, cell) in &layout {
            assert_relative_eq!(cell.max.x - cell.min.x, w, epsilon = 1e-9);
            assert!(cell.contains(site));
        }
    }

    #[test]
    fn single_rru_site_is_off_the_bbu() {
        let (site, cell) = rru_layout(1)[0];
        assert!(site.distance(&Point::new(0.0, 0.0)) > 100.0);
        assert!(cell.contains(&site));
    }

    #[test]
    fn uds_stay_in_their_subarea() {
        for (r_count, seed) in [(4, 1), (8, 2), (2, 3)] {
            let cfg = SystemConfig::default().with_counts(16, r_count).unwrap();
            let topo = place_topology(&cfg, seed).unwrap();
            let layout = rru_layout(r_count);
            for k in 0..cfg.num_uds {
                let r = topo.ud_to_rru.rru_of(k);
                let p = topo.ud_positions[k];
                assert!(layout[r].1.contains(&p));
                assert!(p.x.abs() <= COVERAGE_HALF_SIDE_M && p.y.abs() <= COVERAGE_HALF_SIDE_M);
                assert!(topo.ud_distance(k, r) >= MIN_UD_DISTANCE_M);
            }
        }
    }

    #[test]
    fn budget_examples() {
        let cfg = SystemConfig::default();
        let topo = place_topology(&cfg, 1).unwrap();
        let eta = PowerSharingVector::uniform(10, 0.5).unwrap();
        let b = build_link_budget(&cfg, &topo, &eta).unwrap();
        assert_relative_eq!(b.p_tx_pilot[0], 0.1);
        assert_relative_eq!(b.p_tx_data[0], 0.1);
        assert_relative_eq!(b.p_sp[2], 0.06, epsilon = 1e-15);
        assert_relative_eq!(b.p_ta_pilot[4], 1.656_666_666_666_7, epsilon = 1e-9);
        assert_relative_eq!(b.p_ta_data[4], b.p_ta_pilot[4]);
        assert_relative_eq!(b.noise_access, 3.981e-14, max_relative = 1e-3);
    }

    #[test]
    fn infeasible_budget_is_reported() {
        let cfg = SystemConfig { receiver_efficiency: 30.0, ..SystemConfig::default() };
        let topo = place_topology(&cfg, 1).unwrap();
        let eta = PowerSharingVector::uniform(10, 0.5).unwrap();
        assert!(matches!(
            build_link_budget(&cfg, &topo, &eta),
            Err(Error::InfeasibleBudget { rru: 1, .. })
        ));
    }

    #[test]
    fn sharing_vector_rejects_and_clamps() {
        assert!(PowerSharingVector::uniform(3, 1.0).is_err());
        assert!(PowerSharingVector::uniform(3, 0.0).is_err());
        assert!(PowerSharingVector::uniform(3, f64::NAN).is_err());
        let v = PowerSharingVector::new(vec![1e-6, 0.5], vec![0.9999, 0.2], 1e-3).unwrap();
        assert_eq!(v.access(), &[1e-3, 0.5]);
        assert_eq!(v.fronthaul(), &[1.0 - 1e-3, 0.2]);
        assert_eq!(PowerSharingVector::from_genes(&v.to_genes(), 1e-3).unwrap(), v);
    }

    #[test]
    fn config_parse_defaults_and_overrides() {
        assert_eq!(SystemConfig::parse("").unwrap(), SystemConfig::default());
        let cfg = SystemConfig::parse("# scaled\nrru_antennas = 16\nnum_uds=4\nnum_rrus = 2 # two\n")
            .unwrap();
        assert_eq!(cfg.uds_per_rru, vec![2, 2]);
        assert_eq!(cfg.rru_antennas, 16);
        let cfg = SystemConfig::parse("uds_per_rru = 1, 2 3").unwrap();
        assert_eq!((cfg.num_uds, cfg.num_rrus), (6, 3));
    }

    #[test]
    fn config_parse_errors() {
        assert!(matches!(SystemConfig::parse("nonsense"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(SystemConfig::parse("\nfoo = 1"), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(SystemConfig::parse("num_uds = x"), Err(Error::Parse { .. })));
        assert!(matches!(
            SystemConfig::parse("num_uds = 3\nnum_uds = 4"),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(matches!(
            SystemConfig::parse("correlation_rho = 1.0"),
            Err(Error::InvalidConfig(_))
        ));
        assert!(matches!(
            SystemConfig::parse("uds_per_rru = 2,2\nnum_uds = 5"),
            Err(Error::InvalidConfig(_))
        ));
        assert!(SystemConfig::parse("bbu_antennas = 8").is_err());
        let huge = format!("uds_per_rru = {},2", usize::MAX);
        assert!(matches!(SystemConfig::parse(&huge), Err(Error::Parse { line: 1, .. })));
        let huge = format!("num_uds = 4\nuds_per_rru = {},2", usize::MAX);
        assert!(matches!(SystemConfig::parse(&huge), Err(Error::InvalidConfig(_))));
    }

    proptest! {
        #[test]
        fn pathloss_is_monotone(d in 1.0f64..5000.0, dd in 0.01f64..100.0,
                                f in 1e8f64..1e11, df in 1e6f64..1e9) {
            let a = pathloss_access(d, f).unwrap();
            prop_assert!(pathloss_access(d + dd, f).unwrap() > a);
            prop_assert!(pathloss_access(d, f + df).unwrap() > a);
            let g = f / 1e9;
            let b = pathloss_fronthaul(d, g).unwrap();
            prop_assert!(pathloss_fronthaul(d + dd, g).unwrap() > b);
            prop_assert!(pathloss_fronthaul(d, g + df / 1e9).unwrap() > b);
        }

        #[test]
        fn index_map_round_trips(sizes in prop::collection::vec(1usize..6, 1..8)) {
            let map = UdIndexMap::new(&sizes);
            prop_assert_eq!(map.num_uds(), sizes.iter().sum::<usize>());
            for k in 0..map.num_uds() {
                let (r, u) = map.locate(k);
                prop_assert!(u < sizes[r]);
                prop_assert_eq!(map.index(r, u), k);
            }
        }

        #[test]
        fn power_is_conserved(seed in 0u64..1000, etas in prop::collection::vec(0.001f64..0.999, 20)) {
            let cfg = SystemConfig::default();
            let topo = place_topology(&cfg, seed).unwrap();
            let eta = PowerSharingVector::from_genes(&etas, DEFAULT_GUARD).unwrap();
            let b = build_link_budget(&cfg, &topo, &eta).unwrap();
            for k in 0..10 {
                let total = b.p_tx_pilot[k] + b.p_tx_data[k];
                prop_assert!((total - cfg.p_ud_watts).abs() <= 1e-12 * cfg.p_ud_watts);
                prop_assert!(b.p_rx_access_data[k] <= b.p_tx_data[k]);
                prop_assert!(b.p_rx_fronthaul_data[k] <= b.p_ta_data[k]);
            }
            for r in 0..4 {
                let fwd: f64 = topo.ud_to_rru.uds_of(r).map(|k| b.p_ta_pilot[k] + b.p_ta_data[k]).sum();
                let total = b.p_sp[r] + fwd;
                prop_assert!((total - cfg.p_rru_watts).abs() <= 1e-12 * cfg.p_rru_watts);
            }
        }

        #[test]
        fn config_text_round_trips(m in 4usize..64, n_extra in 0usize..64, rho in 0.0f64..0.99,
                                   k in 1usize..12, r in 1usize..5, kdb in -20.0f64..30.0) {
            prop_assume!(k >= r);
            let mut cfg = SystemConfig::default().with_counts(k, r).unwrap();
            cfg.rru_antennas = m.max(k);
            cfg.bbu_antennas = k + n_extra;
            cfg.correlation_rho = rho;
            cfg.rician_db = kdb;
            prop_assert_eq!(SystemConfig::parse(&cfg.to_config_string()).unwrap(), cfg);
        }
    }
}
