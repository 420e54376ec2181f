//! One-parameter sweeps of the optimized energy efficiency.
//!
//! Each grid point rewrites one scenario parameter, re-optimizes the D2D
//! powers and records the achieved EE with the per-band STPs. The
//! `PDBand1` axis is the exception: it evaluates a fixed power vector in
//! which only band 1 varies.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::analytic::Receiver;
use crate::config::{PowerVector, ScenarioConfig};
use crate::error::{Error, Result};
use crate::metrics::evaluate_energy_efficiency;
use crate::montecarlo::{estimate_ee_with_bands, estimate_stp, Estimate, SimulationPlan};
use crate::optimizer::{check_feasibility, optimize_ee, OptimizerOptions};

/// Scenario parameter varied by a sweep. Library values are SI.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    /// Reference D2D density (band 1), users/m²; other bands keep their
    /// ratio to band 1.
    LambdaDRef,
    /// Reference cellular density (band 1), users/m².
    LambdaCRef,
    /// Circuit power per device, W.
    PCir,
    /// Total cellular transmit power, W.
    PC,
    /// D2D power in band 1, W, with the other bands at the even split.
    PDBand1,
    /// Main-lobe beamwidth, rad.
    ThetaBw,
    /// D2D link distance in every band, m.
    RD,
}

impl SweepAxis {
    pub const ALL: [SweepAxis; 7] = [
        SweepAxis::LambdaDRef,
        SweepAxis::LambdaCRef,
        SweepAxis::PCir,
        SweepAxis::PC,
        SweepAxis::PDBand1,
        SweepAxis::ThetaBw,
        SweepAxis::RD,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SweepAxis::LambdaDRef => "lambda_d_ref",
            SweepAxis::LambdaCRef => "lambda_c_ref",
            SweepAxis::PCir => "p_cir",
            SweepAxis::PC => "p_c",
            SweepAxis::PDBand1 => "p_d_band1",
            SweepAxis::ThetaBw => "theta_bw",
            SweepAxis::RD => "r_d",
        }
    }

    /// Whether grid values are powers (given in mW at the command line).
    pub fn is_power(self) -> bool {
        matches!(self, SweepAxis::PCir | SweepAxis::PC | SweepAxis::PDBand1)
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SweepAxis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        SweepAxis::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown sweep axis '{s}'")))
    }
}

fn rescale_profile(profile: &mut [f64], reference: f64) {
    let base = profile[0];
    for v in profile.iter_mut() {
        *v = if base > 0.0 { *v / base * reference } else { reference };
    }
}

/// Scenario with the axis parameter set to `value`.
pub fn apply_axis(cfg: &ScenarioConfig, axis: SweepAxis, value: f64) -> Result<ScenarioConfig> {
    let mut out = cfg.clone();
    match axis {
        SweepAxis::LambdaDRef => rescale_profile(&mut out.lambda_d, value),
        SweepAxis::LambdaCRef => rescale_profile(&mut out.lambda_c, value),
        SweepAxis::PCir => out.p_cir = value,
        SweepAxis::PC => out.p_c_total = value,
        SweepAxis::PDBand1 => {}
        SweepAxis::ThetaBw => out.antenna.theta_bw = value,
        SweepAxis::RD => out.r_d = vec![value; out.num_bands],
    }
    out.ensure_valid()?;
    Ok(out)
}

/// Power vector of the `PDBand1` axis: `value` in band 1, the even split
/// elsewhere.
pub fn band1_power_vector(cfg: &ScenarioConfig, value: f64) -> PowerVector {
    let mut p = PowerVector::even_split(cfg);
    p.0[0] = value;
    p
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SweepOptions {
    pub optimizer: OptimizerOptions,
    /// When set, EE and STPs are also estimated by simulation at the
    /// analytic operating point.
    pub monte_carlo: Option<SimulationPlan>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub axis_value: f64,
    pub ee: f64,
    pub stp_d: Vec<f64>,
    pub stp_c: Vec<f64>,
    pub feasible: bool,
    pub p: PowerVector,
    pub mc: Option<MonteCarloRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloRow {
    pub ee: Estimate,
    pub stp_d: Vec<Estimate>,
    pub stp_c: Vec<Estimate>,
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("sweep grid contains non-finite values".into()));
    }
    let up = grid.windows(2).all(|w| w[1] > w[0]);
    let down = grid.windows(2).all(|w| w[1] < w[0]);
    if !(up || down) {
        return Err(Error::InvalidArgument("sweep grid must be strictly monotone".into()));
    }
    Ok(())
}

fn sweep_point(cfg: &ScenarioConfig, axis: SweepAxis, value: f64, options: &SweepOptions) -> Result<SweepRow> {
    let point = apply_axis(cfg, axis, value)?;
    let analytic = options.optimizer.analytic;
    let (p, ee, report, feasible) = if axis == SweepAxis::PDBand1 {
        let p = band1_power_vector(&point, value);
        let report = check_feasibility(&point, &p, &analytic)?;
        let ee = evaluate_energy_efficiency(&point, &p, &analytic)?.ee;
        let feasible = report.is_feasible();
        (p, ee, report, feasible)
    } else {
        let out = optimize_ee(&point, &options.optimizer)?;
        (out.p_opt, out.ee_opt, out.constraint_slacks, out.feasible)
    };
    let mc = match options.monte_carlo {
        None => None,
        Some(plan) => {
            let (ee, stp_d) = estimate_ee_with_bands(&point, &p, &plan)?;
            let stp_c = (0..point.num_bands)
                .map(|i| estimate_stp(&point, &p, i, Receiver::Bs, &plan))
                .collect::<Result<Vec<_>>>()?;
            Some(MonteCarloRow { ee, stp_d, stp_c })
        }
    };
    Ok(SweepRow {
        axis_value: value,
        ee,
        stp_d: report.stp_d,
        stp_c: report.stp_c,
        feasible,
        p,
        mc,
    })
}

/// EE over a strictly monotone grid of axis values.
pub fn sweep_ee(cfg: &ScenarioConfig, axis: SweepAxis, grid: &[f64], options: &SweepOptions) -> Result<Vec<SweepRow>> {
    cfg.ensure_valid()?;
    check_grid(grid)?;
    grid.iter().map(|&v| sweep_point(cfg, axis, v, options)).collect()
}

/// `n` evenly spaced points from `from` to `to` inclusive.
pub fn linear_grid(from: f64, to: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![from],
        _ => (0..n)
            .map(|k| from + (to - from) * k as f64 / (n - 1) as f64)
            .collect(),
    }
}

/// `n` log-spaced points from `from` to `to` inclusive (both > 0).
pub fn log_grid(from: f64, to: f64, n: usize) -> Vec<f64> {
    linear_grid(from.ln(), to.ln(), n).into_iter().map(f64::exp).collect()
}

/// Number of sign changes in the successive differences of `values`,
/// ignoring exact ties.
pub fn sign_changes(values: &[f64]) -> usize {
    let signs: Vec<f64> = values
        .windows(2)
        .map(|w| w[1] - w[0])
        .filter(|d| *d != 0.0)
        .map(f64::signum)
        .collect();
    signs.windows(2).filter(|w| w[0] != w[1]).count()
}

pub fn strictly_decreasing(values: &[f64]) -> bool {
    values.windows(2).all(|w| w[1] < w[0])
}

/// Rises then falls: exactly one sign change, starting upward.
pub fn unimodal(values: &[f64]) -> bool {
    let first_up = values
        .windows(2)
        .map(|w| w[1] - w[0])
        .find(|d| *d != 0.0)
        .is_some_and(|d| d > 0.0);
    first_up && sign_changes(values) == 1
}
