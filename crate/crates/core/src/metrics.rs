//! Rate lower bound, average sum rate (ASR) and energy efficiency (EE).
//!
//! Per band, the D2D rate bound is `W log2(1 + T) P(SINR ≥ T)` and the ASR is
//! `λ_d` times that. The network EE is the summed ASR over the area power
//! consumption `Σ λ_d,i (P_d,i + 2 P_cir)`, in bit/J.

use serde::{Deserialize, Serialize};

use crate::analytic::{evaluate_stp, evaluate_stp_at_threshold, Receiver, StpMethod, StpResult};
use crate::config::{PowerVector, ScenarioConfig};
use crate::error::{Error, Result};

/// How the SINR threshold entering the rate bound is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateMode {
    /// Use the configured threshold.
    #[default]
    Fixed,
    /// Maximize `log2(1 + T) P(SINR ≥ T)` over `T`.
    Sup,
}

/// Analytic evaluation settings shared by metrics, optimizer and sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AnalyticOptions {
    pub method: StpMethod,
    pub rate_mode: RateMode,
}

/// Derived quantities of one band at a given D2D power.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandMetrics {
    pub band: usize,
    /// STP of the typical D2D receiver at the configured threshold.
    pub stp_d: StpResult,
    /// STP of the typical base station at the configured threshold.
    pub stp_c: StpResult,
    /// D2D rate lower bound, bit/s.
    pub rate_d: f64,
    /// Cellular rate lower bound, bit/s.
    pub rate_c: f64,
    /// D2D average sum rate, bit/s/m².
    pub asr_d: f64,
}

const LOG10_T_RANGE: (f64, f64) = (-3.0, 3.0);
const SUP_COARSE_POINTS: usize = 61;

/// `W log2(1 + T) stp(T)`, either at `t` or maximized over
/// `log10 T ∈ [-3, 3]` (coarse grid, then golden-section refinement to 1e-4
/// relative in `T`).
pub fn rate_lower_bound<F>(w: f64, t: f64, mut stp_at: F, mode: RateMode) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    if !(w > 0.0 && w.is_finite()) {
        return Err(Error::InvalidArgument(format!("bandwidth must be > 0 (got {w})")));
    }
    match mode {
        RateMode::Fixed => {
            if !(t > 0.0) {
                return Err(Error::InvalidArgument(format!("threshold must be > 0 (got {t})")));
            }
            Ok(w * t.ln_1p() / std::f64::consts::LN_2 * stp_at(t)?)
        }
        RateMode::Sup => {
            let mut objective = |x: f64| -> Result<f64> {
                let tt = 10f64.powf(x);
                Ok(tt.ln_1p() / std::f64::consts::LN_2 * stp_at(tt)?)
            };
            let (lo, hi) = LOG10_T_RANGE;
            let step = (hi - lo) / (SUP_COARSE_POINTS - 1) as f64;
            let mut best = (lo, f64::NEG_INFINITY);
            let mut best_idx = 0;
            for k in 0..SUP_COARSE_POINTS {
                let x = lo + step * k as f64;
                let v = objective(x)?;
                if v > best.1 {
                    best = (x, v);
                    best_idx = k;
                }
            }
            let mut a = lo + step * best_idx.saturating_sub(1) as f64;
            let mut b = (lo + step * (best_idx + 1) as f64).min(hi);
            let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
            let tol = (1.0 + 1e-4f64).log10();
            let mut c = b - inv_phi * (b - a);
            let mut d = a + inv_phi * (b - a);
            let mut fc = objective(c)?;
            let mut fd = objective(d)?;
            while b - a > tol {
                if fc >= fd {
                    b = d;
                    d = c;
                    fd = fc;
                    c = b - inv_phi * (b - a);
                    fc = objective(c)?;
                } else {
                    a = c;
                    c = d;
                    fc = fd;
                    d = a + inv_phi * (b - a);
                    fd = objective(d)?;
                }
            }
            let refined = fc.max(fd);
            Ok(w * refined.max(best.1))
        }
    }
}

fn check_powers(cfg: &ScenarioConfig, p: &PowerVector) -> Result<()> {
    if p.len() != cfg.num_bands {
        return Err(Error::InvalidArgument(format!(
            "power vector has {} entries, scenario has {} bands",
            p.len(),
            cfg.num_bands
        )));
    }
    if let Some(bad) = p.as_slice().iter().find(|x| !(**x >= 0.0 && x.is_finite())) {
        return Err(Error::InvalidArgument(format!("power {bad} is not a finite value ≥ 0")));
    }
    Ok(())
}

/// STPs, rates and ASR of one band.
pub fn band_metrics(
    cfg: &ScenarioConfig,
    p_d: f64,
    band: usize,
    options: &AnalyticOptions,
) -> Result<BandMetrics> {
    let b = cfg.band(band);
    let stp_d = evaluate_stp(cfg, p_d, band, Receiver::D2d, options.method)?;
    let stp_c = evaluate_stp(cfg, p_d, band, Receiver::Bs, options.method)?;
    let rate = |receiver: Receiver, t: f64, at_t: f64| {
        rate_lower_bound(
            b.bandwidth,
            t,
            |tt| {
                if options.rate_mode == RateMode::Fixed {
                    Ok(at_t)
                } else {
                    evaluate_stp_at_threshold(cfg, p_d, band, receiver, tt, options.method)
                        .map(|s| s.value)
                }
            },
            options.rate_mode,
        )
    };
    let rate_d = rate(Receiver::D2d, b.t_d, stp_d.value)?;
    let rate_c = rate(Receiver::Bs, b.t_c, stp_c.value)?;
    Ok(BandMetrics {
        band,
        stp_d,
        stp_c,
        rate_d,
        rate_c,
        asr_d: b.lambda_d * rate_d,
    })
}

/// Full EE breakdown.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyEfficiency {
    /// bit/J.
    pub ee: f64,
    /// Total D2D ASR, bit/s/m².
    pub total_asr: f64,
    /// Area power consumption, W/m².
    pub area_power: f64,
    pub bands: Vec<BandMetrics>,
}

/// `Σ_i λ_d,i (P_d,i + 2 P_cir)`.
pub fn area_power_consumption(cfg: &ScenarioConfig, p: &PowerVector) -> Result<f64> {
    check_powers(cfg, p)?;
    let denom: f64 = p
        .as_slice()
        .iter()
        .zip(&cfg.lambda_d)
        .map(|(&pd, &l)| l * (pd + 2.0 * cfg.p_cir))
        .sum();
    if denom > 0.0 {
        Ok(denom)
    } else {
        Err(Error::ZeroPowerConsumption)
    }
}

/// EE for externally supplied D2D STPs (one per band), with the fixed
/// configured thresholds.
pub fn energy_efficiency_from_stp(cfg: &ScenarioConfig, p: &PowerVector, stp_d: &[f64]) -> Result<f64> {
    let denom = area_power_consumption(cfg, p)?;
    if stp_d.len() != cfg.num_bands {
        return Err(Error::InvalidArgument(format!(
            "{} STP values for {} bands",
            stp_d.len(),
            cfg.num_bands
        )));
    }
    let numer: f64 = (0..cfg.num_bands)
        .map(|i| {
            let b = cfg.band(i);
            b.lambda_d * b.bandwidth * b.t_d.ln_1p() / std::f64::consts::LN_2 * stp_d[i]
        })
        .sum();
    Ok(numer / denom)
}

/// EE with per-band breakdown.
pub fn evaluate_energy_efficiency(
    cfg: &ScenarioConfig,
    p: &PowerVector,
    options: &AnalyticOptions,
) -> Result<EnergyEfficiency> {
    let area_power = area_power_consumption(cfg, p)?;
    let bands = p
        .as_slice()
        .iter()
        .enumerate()
        .map(|(i, &pd)| band_metrics(cfg, pd, i, options))
        .collect::<Result<Vec<_>>>()?;
    let total_asr: f64 = bands.iter().map(|b| b.asr_d).sum();
    Ok(EnergyEfficiency {
        ee: total_asr / area_power,
        total_asr,
        area_power,
        bands,
    })
}

/// EE in bit/J with the given analytic options.
pub fn energy_efficiency_with(cfg: &ScenarioConfig, p: &PowerVector, options: &AnalyticOptions) -> Result<f64> {
    evaluate_energy_efficiency(cfg, p, options).map(|e| e.ee)
}

/// EE in bit/J with default options (automatic STP method, fixed thresholds).
pub fn energy_efficiency(cfg: &ScenarioConfig, p: &PowerVector) -> Result<f64> {
    energy_efficiency_with(cfg, p, &AnalyticOptions::default())
}
