//! Scenario description shared by the analytic, Monte Carlo and optimizer
//! paths.
//!
//! Everything in [`ScenarioConfig`] is strictly linear SI: watts, metres,
//! hertz, users per square metre. The JSON file layer ([`ScenarioFile`]) uses
//! mW, MHz and dB and converts on load.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(linear: f64) -> f64 {
    10.0 * linear.log10()
}

/// Sectored antenna: constant main-lobe gain over `theta_bw`, constant
/// side-lobe gain elsewhere. Gains are linear.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AntennaPattern {
    pub g_main: f64,
    pub g_side: f64,
    /// Main-lobe beamwidth in radians, in (0, 2π).
    pub theta_bw: f64,
}

/// One atom of the effective interferer-gain distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainAtom {
    pub gain: f64,
    pub prob: f64,
}

impl AntennaPattern {
    pub fn new(g_main: f64, g_side: f64, theta_bw: f64) -> Result<Self> {
        let antenna = Self {
            g_main,
            g_side,
            theta_bw,
        };
        let problems = antenna.violations();
        if problems.is_empty() {
            Ok(antenna)
        } else {
            Err(Error::InvalidArgument(problems.join("; ")))
        }
    }

    pub fn from_db(g_main_db: f64, g_side_db: f64, theta_bw: f64) -> Result<Self> {
        Self::new(db_to_linear(g_main_db), db_to_linear(g_side_db), theta_bw)
    }

    /// Gain of a perfectly aligned transmitter/receiver pair, `G·G`.
    pub fn aligned_gain(&self) -> f64 {
        self.g_main * self.g_main
    }

    /// Probability that a uniformly oriented beam covers a given direction.
    pub fn main_lobe_fraction(&self) -> f64 {
        self.theta_bw / (2.0 * PI)
    }

    fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.theta_bw > 0.0 && self.theta_bw < 2.0 * PI) {
            out.push(format!(
                "antenna beamwidth {} outside (0, 2π)",
                self.theta_bw
            ));
        }
        if !(self.g_side > 0.0 && self.g_side.is_finite()) {
            out.push("antenna side-lobe gain must be positive".into());
        }
        if !(self.g_main >= self.g_side && self.g_main.is_finite()) {
            out.push("antenna main-lobe gain must be at least the side-lobe gain".into());
        }
        out
    }
}

/// Three-point distribution of the combined gain seen from an interferer
/// whose beam direction is uniform on [0, 2π): `(G·G, G·g, g·g)`.
pub fn effective_gain_pmf(antenna: &AntennaPattern) -> Result<[GainAtom; 3]> {
    if !(antenna.theta_bw > 0.0 && antenna.theta_bw < 2.0 * PI) {
        return Err(Error::InvalidArgument(format!(
            "beamwidth {} outside (0, 2π)",
            antenna.theta_bw
        )));
    }
    let q = antenna.main_lobe_fraction();
    let (g, s) = (antenna.g_main, antenna.g_side);
    Ok([
        GainAtom {
            gain: g * g,
            prob: q * q,
        },
        GainAtom {
            gain: g * s,
            prob: 2.0 * q * (1.0 - q),
        },
        GainAtom {
            gain: s * s,
            prob: (1.0 - q) * (1.0 - q),
        },
    ])
}

/// Which path-loss exponent enters the interferer kernel of the analytic
/// STP integrals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterfererPathLoss {
    /// Every interferer uses the exponent of the desired link's state (LOS
    /// desired link: `alpha_l` for all interferers; NLOS: `alpha_n`).
    #[default]
    SharedExponent,
    /// Each interferer class uses its own exponent (LOS interferers
    /// `alpha_l`, NLOS interferers `alpha_n`).
    PerLink,
}

/// Full network description. Per-band quantities are vectors of length
/// `num_bands`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub num_bands: usize,
    /// Hz.
    pub bandwidth_per_band: Vec<f64>,
    /// D2D transmitter density per band, users/m².
    pub lambda_d: Vec<f64>,
    /// Cellular user density per band, users/m².
    pub lambda_c: Vec<f64>,
    /// Total cellular transmit power, W; each band gets `p_c_total / num_bands`.
    pub p_c_total: f64,
    /// Total D2D power budget, W.
    pub p_d_total: f64,
    /// Per-band D2D power ceiling, W.
    pub p_d_max: Vec<f64>,
    /// Per-device circuit power, W.
    pub p_cir: f64,
    /// Typical D2D link distance, m.
    pub r_d: Vec<f64>,
    /// Typical cellular uplink distance, m.
    pub r_c: Vec<f64>,
    /// Linear SINR thresholds.
    pub t_d: Vec<f64>,
    pub t_c: Vec<f64>,
    /// QoS floors on the successful transmission probability.
    pub theta_d: Vec<f64>,
    pub theta_c: Vec<f64>,
    /// Noise power, W.
    pub n0: f64,
    pub alpha_l: f64,
    pub alpha_n: f64,
    /// Blockage parameter, 1/m: a link of length r is LOS with probability exp(-beta r).
    pub beta: f64,
    pub nakagami_m: u32,
    pub antenna: AntennaPattern,
    #[serde(default)]
    pub interferer_pathloss: InterfererPathLoss,
}

/// Scalar view of one band of a scenario.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandParams {
    pub index: usize,
    pub bandwidth: f64,
    pub lambda_d: f64,
    pub lambda_c: f64,
    pub p_c: f64,
    pub p_d_max: f64,
    pub r_d: f64,
    pub r_c: f64,
    pub t_d: f64,
    pub t_c: f64,
    pub theta_d: f64,
    pub theta_c: f64,
}

pub const MAX_NAKAGAMI_M: u32 = 8;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<String>,
    pub warnings: Vec<String>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl ScenarioConfig {
    /// Default scenario: five 20 MHz bands, Rayleigh fading, 60 mW total D2D
    /// budget.
    pub fn baseline() -> Self {
        let m = 5;
        let v = |x: f64| vec![x; m];
        Self {
            num_bands: m,
            bandwidth_per_band: v(20e6),
            lambda_d: v(1e-4),
            lambda_c: v(1e-5),
            p_c_total: 0.325 * m as f64,
            p_d_total: 0.060,
            p_d_max: v(0.020),
            p_cir: 0.0,
            r_d: v(10.0),
            r_c: v(30.0),
            t_d: v(1.0),
            t_c: v(1.0),
            theta_d: v(0.95),
            theta_c: v(0.95),
            n0: 0.0,
            alpha_l: 2.0,
            alpha_n: 4.0,
            beta: 0.45,
            nakagami_m: 1,
            antenna: AntennaPattern {
                g_main: db_to_linear(10.0),
                g_side: db_to_linear(0.1),
                theta_bw: PI / 10.0,
            },
            interferer_pathloss: InterfererPathLoss::SharedExponent,
        }
    }

    /// Per-band cellular transmit power.
    pub fn p_c_band(&self) -> f64 {
        self.p_c_total / self.num_bands as f64
    }

    pub fn band(&self, i: usize) -> BandParams {
        BandParams {
            index: i,
            bandwidth: self.bandwidth_per_band[i],
            lambda_d: self.lambda_d[i],
            lambda_c: self.lambda_c[i],
            p_c: self.p_c_band(),
            p_d_max: self.p_d_max[i],
            r_d: self.r_d[i],
            r_c: self.r_c[i],
            t_d: self.t_d[i],
            t_c: self.t_c[i],
            theta_d: self.theta_d[i],
            theta_c: self.theta_c[i],
        }
    }

    /// Report every physical-consistency problem. Never fails; an empty
    /// `violations` list means the scenario is usable.
    pub fn validate(&self) -> ValidationReport {
        let mut report = ValidationReport::default();
        let v = &mut report.violations;
        let m = self.num_bands;
        if m < 1 {
            v.push("num_bands must be ≥ 1".into());
        }

        let per_band: [(&str, &Vec<f64>); 10] = [
            ("bandwidth_per_band", &self.bandwidth_per_band),
            ("lambda_d", &self.lambda_d),
            ("lambda_c", &self.lambda_c),
            ("p_d_max", &self.p_d_max),
            ("r_d", &self.r_d),
            ("r_c", &self.r_c),
            ("t_d", &self.t_d),
            ("t_c", &self.t_c),
            ("theta_d", &self.theta_d),
            ("theta_c", &self.theta_c),
        ];
        for (name, values) in per_band {
            if values.len() != m {
                v.push(format!(
                    "vector length mismatch: {name} has {} entries, num_bands is {m}",
                    values.len()
                ));
            }
            if values.iter().any(|x| !x.is_finite() || *x < 0.0) {
                v.push(format!("{name} must be finite and nonnegative"));
            }
        }
        for (name, values) in [("t_d", &self.t_d), ("t_c", &self.t_c)] {
            if values.iter().any(|x| *x <= 0.0) {
                v.push(format!("{name} thresholds must be > 0 (linear)"));
            }
        }
        for (name, values) in [("theta_d", &self.theta_d), ("theta_c", &self.theta_c)] {
            if values.iter().any(|x| *x > 1.0) {
                v.push(format!("{name} must lie in [0, 1]"));
            }
        }
        for (name, values) in [("r_d", &self.r_d), ("r_c", &self.r_c)] {
            if values.iter().any(|x| *x <= 0.0) {
                v.push(format!("{name} link distances must be > 0"));
            }
        }
        for (name, x) in [
            ("p_c_total", self.p_c_total),
            ("p_d_total", self.p_d_total),
            ("p_cir", self.p_cir),
            ("n0", self.n0),
            ("beta", self.beta),
        ] {
            if !x.is_finite() || x < 0.0 {
                v.push(format!("{name} must be finite and nonnegative"));
            }
        }
        if !(self.alpha_l.is_finite() && self.alpha_n.is_finite()) || self.alpha_l <= 0.0 {
            v.push("path-loss exponents must be finite and positive".into());
        }
        if self.nakagami_m < 1 || self.nakagami_m > MAX_NAKAGAMI_M {
            v.push(format!(
                "nakagami_m must be an integer in 1..={MAX_NAKAGAMI_M}"
            ));
        }
        v.extend(self.antenna.violations());

        if self.alpha_l < 2.0 || self.alpha_n < self.alpha_l {
            report
                .warnings
                .push("expected alpha_n ≥ alpha_l ≥ 2".into());
        }
        if self.alpha_l <= 2.0 {
            report.warnings.push(
                "alpha_l = 2: LOS interference integrals diverge in the infinite plane".into(),
            );
        }
        report
    }

    pub fn ensure_valid(&self) -> Result<()> {
        let report = self.validate();
        if report.is_valid() {
            Ok(())
        } else {
            Err(Error::InvalidScenario(report.violations.join("; ")))
        }
    }

    /// Band indices whose parameters are bitwise identical, grouped. Used by
    /// the optimizer's symmetrization step.
    pub fn identical_band_groups(&self) -> Vec<Vec<usize>> {
        let mut groups: Vec<Vec<usize>> = Vec::new();
        for i in 0..self.num_bands {
            let b = self.band(i);
            match groups.iter_mut().find(|g| {
                let o = self.band(g[0]);
                BandParams { index: i, ..o } == b
            }) {
                Some(g) => g.push(i),
                None => groups.push(vec![i]),
            }
        }
        groups
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    /// Parse the file-layer JSON (mW / MHz / dB) into a validated scenario.
    pub fn from_json(text: &str) -> Result<Self> {
        let file: ScenarioFile = serde_json::from_str(text)?;
        let cfg = file.resolve();
        cfg.ensure_valid()?;
        Ok(cfg)
    }

    pub fn to_file(&self) -> ScenarioFile {
        ScenarioFile::from_config(self)
    }
}

/// Per-band D2D transmit powers, W.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerVector(pub Vec<f64>);

impl PowerVector {
    pub fn new(p: Vec<f64>) -> Self {
        Self(p)
    }

    pub fn uniform(value: f64, bands: usize) -> Self {
        Self(vec![value; bands])
    }

    /// Even split of the budget, clipped to each band's ceiling.
    pub fn even_split(cfg: &ScenarioConfig) -> Self {
        let share = cfg.p_d_total / cfg.num_bands as f64;
        Self(cfg.p_d_max.iter().map(|&mx| share.min(mx)).collect())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn within_box(&self, cfg: &ScenarioConfig) -> bool {
        self.0.len() == cfg.num_bands
            && self
                .0
                .iter()
                .zip(&cfg.p_d_max)
                .all(|(&p, &mx)| (0.0..=mx).contains(&p))
    }

    pub fn within_budget(&self, cfg: &ScenarioConfig) -> bool {
        self.total() <= cfg.p_d_total
    }
}

/// A per-band value given either as one scalar (broadcast) or a full vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerBand<T> {
    Scalar(T),
    Vector(Vec<T>),
}

impl<T: Clone> PerBand<T> {
    fn expand<U: Clone>(&self, bands: usize, f: impl Fn(&T) -> U) -> Vec<U> {
        match self {
            PerBand::Scalar(x) => {
                let v = f(x);
                (0..bands).map(|_| v.clone()).collect()
            }
            PerBand::Vector(xs) => xs.iter().map(f).collect(),
        }
    }
}

impl<T: Clone + PartialEq> PerBand<T> {
    fn compact(values: Vec<T>) -> Self {
        match values.first() {
            Some(first) if values.iter().all(|v| v == first) => PerBand::Scalar(first.clone()),
            _ => PerBand::Vector(values),
        }
    }
}

/// A gain or threshold level. A bare number is read as dB; `{"linear": x}`
/// and `{"db": x}` are explicit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Level {
    Db(f64),
    Linear { linear: f64 },
    ExplicitDb { db: f64 },
}

impl Level {
    pub fn linear(self) -> f64 {
        match self {
            Level::Db(db) | Level::ExplicitDb { db } => db_to_linear(db),
            Level::Linear { linear } => linear,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AntennaFile {
    /// dB unless given as `{"linear": x}`.
    pub g_main: Level,
    pub g_side: Level,
    /// Radians.
    pub theta_bw: f64,
}

/// On-disk scenario: powers in mW, bandwidth in MHz, thresholds and gains in
/// dB, distances in m, densities in users/m².
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub num_bands: usize,
    pub bandwidth_per_band: PerBand<f64>,
    pub lambda_d: PerBand<f64>,
    pub lambda_c: PerBand<f64>,
    pub p_c_total: f64,
    pub p_d_total: f64,
    pub p_d_max: PerBand<f64>,
    #[serde(default)]
    pub p_cir: f64,
    pub r_d: PerBand<f64>,
    pub r_c: PerBand<f64>,
    pub t_d: PerBand<Level>,
    pub t_c: PerBand<Level>,
    pub theta_d: PerBand<f64>,
    pub theta_c: PerBand<f64>,
    #[serde(default)]
    pub n0: f64,
    pub alpha_l: f64,
    pub alpha_n: f64,
    pub beta: f64,
    pub nakagami_m: u32,
    pub antenna: AntennaFile,
    #[serde(default)]
    pub interferer_pathloss: InterfererPathLoss,
}

const MW: f64 = 1e-3;
const MHZ: f64 = 1e6;

impl ScenarioFile {
    /// Convert to SI. Vector lengths are not checked here; see
    /// [`ScenarioConfig::validate`].
    pub fn resolve(&self) -> ScenarioConfig {
        let m = self.num_bands;
        ScenarioConfig {
            num_bands: m,
            bandwidth_per_band: self.bandwidth_per_band.expand(m, |x| x * MHZ),
            lambda_d: self.lambda_d.expand(m, |x| *x),
            lambda_c: self.lambda_c.expand(m, |x| *x),
            p_c_total: self.p_c_total * MW,
            p_d_total: self.p_d_total * MW,
            p_d_max: self.p_d_max.expand(m, |x| x * MW),
            p_cir: self.p_cir * MW,
            r_d: self.r_d.expand(m, |x| *x),
            r_c: self.r_c.expand(m, |x| *x),
            t_d: self.t_d.expand(m, |l| l.linear()),
            t_c: self.t_c.expand(m, |l| l.linear()),
            theta_d: self.theta_d.expand(m, |x| *x),
            theta_c: self.theta_c.expand(m, |x| *x),
            n0: self.n0 * MW,
            alpha_l: self.alpha_l,
            alpha_n: self.alpha_n,
            beta: self.beta,
            nakagami_m: self.nakagami_m,
            antenna: AntennaPattern {
                g_main: self.antenna.g_main.linear(),
                g_side: self.antenna.g_side.linear(),
                theta_bw: self.antenna.theta_bw,
            },
            interferer_pathloss: self.interferer_pathloss,
        }
    }

    pub fn from_config(cfg: &ScenarioConfig) -> Self {
        let mw = |v: &[f64]| PerBand::compact(v.iter().map(|x| x / MW).collect());
        let db = |v: &[f64]| PerBand::compact(v.iter().map(|x| Level::Db(linear_to_db(*x))).collect());
        Self {
            num_bands: cfg.num_bands,
            bandwidth_per_band: PerBand::compact(
                cfg.bandwidth_per_band.iter().map(|x| x / MHZ).collect(),
            ),
            lambda_d: PerBand::compact(cfg.lambda_d.clone()),
            lambda_c: PerBand::compact(cfg.lambda_c.clone()),
            p_c_total: cfg.p_c_total / MW,
            p_d_total: cfg.p_d_total / MW,
            p_d_max: mw(&cfg.p_d_max),
            p_cir: cfg.p_cir / MW,
            r_d: PerBand::compact(cfg.r_d.clone()),
            r_c: PerBand::compact(cfg.r_c.clone()),
            t_d: db(&cfg.t_d),
            t_c: db(&cfg.t_c),
            theta_d: PerBand::compact(cfg.theta_d.clone()),
            theta_c: PerBand::compact(cfg.theta_c.clone()),
            n0: cfg.n0 / MW,
            alpha_l: cfg.alpha_l,
            alpha_n: cfg.alpha_n,
            beta: cfg.beta,
            nakagami_m: cfg.nakagami_m,
            antenna: AntennaFile {
                g_main: Level::Db(linear_to_db(cfg.antenna.g_main)),
                g_side: Level::Db(linear_to_db(cfg.antenna.g_side)),
                theta_bw: cfg.antenna.theta_bw,
            },
            interferer_pathloss: cfg.interferer_pathloss,
        }
    }
}
