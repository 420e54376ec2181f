//! Monte Carlo estimates of STP and EE from explicit Poisson fields.
//!
//! Every realization scatters D2D and cellular interferers in a finite
//! window around the typical receiver; each interferer gets its own
//! blockage state (and hence its own path-loss exponent), fading draw and
//! antenna gain. The desired link has fixed length and aligned beams.
//!
//! Realization `k` of band `i` for receiver `who` draws from its own ChaCha
//! stream, so estimates do not depend on thread count or scheduling.

use std::io::Write;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::Receiver;
use crate::config::{PowerVector, ScenarioConfig};
use crate::error::{Error, Result};
use crate::metrics::area_power_consumption;
use crate::propagation::{FadingSampler, GainSampler, LinkSample};

/// Shape of the sampling window, centered on the typical receiver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Window {
    #[default]
    Disk,
    Square,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulationPlan {
    /// Window area, m².
    pub area: f64,
    pub realizations: usize,
    pub seed: u64,
    /// Interferers closer than this are placed at this distance, m.
    pub guard_radius: f64,
    pub window: Window,
}

impl Default for SimulationPlan {
    fn default() -> Self {
        Self {
            area: 3e6,
            realizations: 1000,
            seed: 0,
            guard_radius: 0.1,
            window: Window::Disk,
        }
    }
}

impl SimulationPlan {
    pub fn with_realizations(realizations: usize, seed: u64) -> Self {
        Self {
            realizations,
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.area > 0.0 && self.area.is_finite()) {
            return Err(Error::InvalidArgument(format!("window area must be > 0 (got {})", self.area)));
        }
        if self.realizations < 1 {
            return Err(Error::InvalidArgument("need at least one realization".into()));
        }
        if !(self.guard_radius >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "guard radius must be ≥ 0 (got {})",
                self.guard_radius
            )));
        }
        Ok(())
    }

    /// Disk radius (or square half-side) of the window, m.
    pub fn extent(&self) -> f64 {
        match self.window {
            Window::Disk => (self.area / std::f64::consts::PI).sqrt(),
            Window::Square => 0.5 * self.area.sqrt(),
        }
    }
}

/// Sample mean with a 95% normal-approximation half-width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub half_width_95: f64,
    pub n: usize,
}

const Z95: f64 = 1.96;

impl Estimate {
    /// Estimate of a Bernoulli probability from `successes` out of `n`.
    pub fn from_indicators(indicators: &[f64]) -> Self {
        let n = indicators.len();
        let mean = pairwise_sum(indicators) / n as f64;
        let half_width_95 = if n < 2 {
            1.0
        } else {
            let var = mean * (1.0 - mean) * n as f64 / (n as f64 - 1.0);
            Z95 * (var / n as f64).sqrt()
        };
        Self {
            mean,
            half_width_95,
            n,
        }
    }

    pub fn contains(&self, x: f64, slack: f64) -> bool {
        (x - self.mean).abs() <= self.half_width_95 + slack
    }
}

/// Order-fixed pairwise summation.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 16 {
        xs.iter().sum()
    } else {
        let (a, b) = xs.split_at(xs.len() / 2);
        pairwise_sum(a) + pairwise_sum(b)
    }
}

/// Draw the distances from the window center of a homogeneous PPP of
/// density `lambda` restricted to the window.
pub fn sample_ppp_distances<R: Rng + ?Sized>(lambda: f64, plan: &SimulationPlan, rng: &mut R) -> Result<Vec<f64>> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidArgument(format!("density must be ≥ 0 (got {lambda})")));
    }
    let mean = lambda * plan.area;
    if mean == 0.0 {
        return Ok(Vec::new());
    }
    let count = Poisson::new(mean)
        .map_err(|e| Error::Numeric(e.to_string()))?
        .sample(rng) as usize;
    let extent = plan.extent();
    let out = (0..count)
        .map(|_| {
            let r = match plan.window {
                Window::Disk => extent * rng.gen::<f64>().sqrt(),
                Window::Square => {
                    let x = extent * (2.0 * rng.gen::<f64>() - 1.0);
                    let y = extent * (2.0 * rng.gen::<f64>() - 1.0);
                    x.hypot(y)
                }
            };
            r.max(plan.guard_radius)
        })
        .collect();
    Ok(out)
}

/// Everything a single SINR draw needs, resolved once per band.
struct LinkBudget {
    p_desired: f64,
    r_desired: f64,
    threshold: f64,
    /// (density, transmit power) of the two interferer populations.
    sources: [(f64, f64); 2],
    aligned: f64,
    beta: f64,
    alpha_l: f64,
    alpha_n: f64,
    n0: f64,
    fading: FadingSampler,
    gains: GainSampler,
}

impl LinkBudget {
    fn new(cfg: &ScenarioConfig, p: &PowerVector, band: usize, who: Receiver) -> Result<Self> {
        if band >= cfg.num_bands {
            return Err(Error::InvalidArgument(format!("band {band} out of range")));
        }
        if p.len() != cfg.num_bands {
            return Err(Error::InvalidArgument(format!(
                "power vector has {} entries, scenario has {} bands",
                p.len(),
                cfg.num_bands
            )));
        }
        let b = cfg.band(band);
        let p_d = p.as_slice()[band];
        let d2d = (b.lambda_d, p_d);
        let cell = (b.lambda_c, b.p_c);
        let (p_desired, r_desired, threshold) = match who {
            Receiver::D2d => (p_d, b.r_d, b.t_d),
            Receiver::Bs => (b.p_c, b.r_c, b.t_c),
        };
        Ok(Self {
            p_desired,
            r_desired,
            threshold,
            sources: [d2d, cell],
            aligned: cfg.antenna.aligned_gain(),
            beta: cfg.beta,
            alpha_l: cfg.alpha_l,
            alpha_n: cfg.alpha_n,
            n0: cfg.n0,
            fading: FadingSampler::new(cfg.nakagami_m)?,
            gains: GainSampler::new(&cfg.antenna)?,
        })
    }

    fn sinr<R: Rng + ?Sized>(&self, plan: &SimulationPlan, rng: &mut R) -> Result<f64> {
        let is_los = rng.gen::<f64>() < (-self.beta * self.r_desired).exp();
        let alpha = if is_los { self.alpha_l } else { self.alpha_n };
        let h = self.fading.sample(rng);
        let signal = self.p_desired * self.aligned * h * self.r_desired.powf(-alpha);
        let mut interference = 0.0;
        for &(lambda, power) in &self.sources {
            for r in sample_ppp_distances(lambda, plan, rng)? {
                let link = LinkSample::draw(r, self.beta, &self.fading, &self.gains, rng);
                interference += link.power(power, self.alpha_l, self.alpha_n);
            }
        }
        if signal == 0.0 {
            return Ok(0.0);
        }
        Ok(signal / (interference + self.n0))
    }
}

fn realization_rng(seed: u64, band: usize, who: Receiver, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let who_bit = match who {
        Receiver::D2d => 0u64,
        Receiver::Bs => 1u64,
    };
    rng.set_stream(((band as u64) << 48) | (who_bit << 47) | index as u64);
    rng
}

/// One SINR realization at the typical D2D receiver of `band`.
pub fn realize_sinr_d2d<R: Rng + ?Sized>(
    cfg: &ScenarioConfig,
    p: &PowerVector,
    band: usize,
    plan: &SimulationPlan,
    rng: &mut R,
) -> Result<f64> {
    LinkBudget::new(cfg, p, band, Receiver::D2d)?.sinr(plan, rng)
}

/// One SINR realization at the typical base station of `band`.
pub fn realize_sinr_bs<R: Rng + ?Sized>(
    cfg: &ScenarioConfig,
    p: &PowerVector,
    band: usize,
    plan: &SimulationPlan,
    rng: &mut R,
) -> Result<f64> {
    LinkBudget::new(cfg, p, band, Receiver::Bs)?.sinr(plan, rng)
}

/// All SINR realizations of a plan, in realization order.
pub fn sample_sinr(
    cfg: &ScenarioConfig,
    p: &PowerVector,
    band: usize,
    who: Receiver,
    plan: &SimulationPlan,
) -> Result<Vec<f64>> {
    plan.validate()?;
    let budget = LinkBudget::new(cfg, p, band, who)?;
    (0..plan.realizations)
        .into_par_iter()
        .map(|k| {
            let mut rng = realization_rng(plan.seed, band, who, k);
            budget.sinr(plan, &mut rng)
        })
        .collect()
}

/// Empirical `P(SINR ≥ T)` with its 95% half-width.
pub fn estimate_stp(
    cfg: &ScenarioConfig,
    p: &PowerVector,
    band: usize,
    who: Receiver,
    plan: &SimulationPlan,
) -> Result<Estimate> {
    let threshold = LinkBudget::new(cfg, p, band, who)?.threshold;
    let indicators: Vec<f64> = sample_sinr(cfg, p, band, who, plan)?
        .into_iter()
        .map(|s| if s >= threshold { 1.0 } else { 0.0 })
        .collect();
    Ok(Estimate::from_indicators(&indicators))
}

/// Write `realization,sinr` rows for one band and receiver.
pub fn write_sinr_dump<W: Write>(
    cfg: &ScenarioConfig,
    p: &PowerVector,
    band: usize,
    who: Receiver,
    plan: &SimulationPlan,
    mut out: W,
) -> Result<()> {
    writeln!(out, "realization,sinr")?;
    for (k, s) in sample_sinr(cfg, p, band, who, plan)?.iter().enumerate() {
        writeln!(out, "{k},{s:e}")?;
    }
    Ok(())
}

/// Empirical EE: per-band STP estimates combined into the EE ratio. The
/// half-width follows from the per-band variances by the delta method (the
/// numerator is linear in the STPs).
pub fn estimate_ee(cfg: &ScenarioConfig, p: &PowerVector, plan: &SimulationPlan) -> Result<Estimate> {
    let (ee, _) = estimate_ee_with_bands(cfg, p, plan)?;
    Ok(ee)
}

/// As [`estimate_ee`], also returning the per-band D2D STP estimates.
pub fn estimate_ee_with_bands(
    cfg: &ScenarioConfig,
    p: &PowerVector,
    plan: &SimulationPlan,
) -> Result<(Estimate, Vec<Estimate>)> {
    let denom = area_power_consumption(cfg, p)?;
    let mut numer = 0.0;
    let mut var = 0.0;
    let mut bands = Vec::with_capacity(cfg.num_bands);
    for i in 0..cfg.num_bands {
        let b = cfg.band(i);
        let est = estimate_stp(cfg, p, i, Receiver::D2d, plan)?;
        let weight = b.lambda_d * b.bandwidth * (1.0 + b.t_d).log2() / denom;
        numer += weight * est.mean;
        var += (weight * est.half_width_95 / Z95).powi(2);
        bands.push(est);
    }
    Ok((
        Estimate {
            mean: numer,
            half_width_95: Z95 * var.sqrt(),
            n: plan.realizations,
        },
        bands,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::{stp_cellular, stp_d2d};
    use crate::metrics::energy_efficiency_from_stp;
    use approx::assert_relative_eq;
    use statrs::distribution::{ChiSquared, ContinuousCDF, Discrete, Poisson as PoissonDist};

    fn quiet(mut cfg: ScenarioConfig) -> ScenarioConfig {
        cfg.lambda_d = vec![0.0; cfg.num_bands];
        cfg.lambda_c = vec![0.0; cfg.num_bands];
        cfg
    }

    #[test]
    fn plan_validation() {
        assert!(SimulationPlan::default().validate().is_ok());
        let p = SimulationPlan {
            area: 0.0,
            ..SimulationPlan::default()
        };
        assert!(p.validate().is_err());
        let p = SimulationPlan {
            realizations: 0,
            ..SimulationPlan::default()
        };
        assert!(p.validate().is_err());
        assert_relative_eq!(SimulationPlan::default().extent(), 977.205, epsilon = 1e-3);
    }

    #[test]
    fn noise_only_link() {
        let mut cfg = quiet(ScenarioConfig::baseline());
        cfg.n0 = 1e-9;
        cfg.beta = 0.0; // always LOS
        cfg.nakagami_m = 1;
        let p = PowerVector::uniform(0.01, 5);
        let plan = SimulationPlan::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut rng2 = ChaCha8Rng::seed_from_u64(3);
        let s = realize_sinr_d2d(&cfg, &p, 0, &plan, &mut rng).unwrap();
        // replay the same draws: LOS uniform, then fading
        let _los: f64 = rng2.gen();
        let g = FadingSampler::new(1).unwrap().sample(&mut rng2);
        let expected = 0.01 * 100.0 * g * 10f64.powf(-2.0) / 1e-9;
        assert_relative_eq!(s, expected, max_relative = 1e-14);
    }

    #[test]
    fn mild_fading_noise_only_is_deterministic_ratio() {
        let mut cfg = quiet(ScenarioConfig::baseline());
        cfg.n0 = 1e-9;
        cfg.beta = 0.0;
        cfg.nakagami_m = 8;
        let p = PowerVector::uniform(0.01, 5);
        let plan = SimulationPlan::with_realizations(20_000, 1);
        let s = sample_sinr(&cfg, &p, 0, Receiver::D2d, &plan).unwrap();
        let mean = s.iter().sum::<f64>() / s.len() as f64;
        assert_relative_eq!(mean, 0.01 * 100.0 * 1e-2 / 1e-9, max_relative = 0.01);
    }

    #[test]
    fn tiny_threshold_always_succeeds() {
        let mut cfg = ScenarioConfig::baseline();
        cfg.t_d = vec![1e-300; 5];
        let p = PowerVector::even_split(&cfg);
        let est = estimate_stp(&cfg, &p, 0, Receiver::D2d, &SimulationPlan::with_realizations(200, 0)).unwrap();
        assert_eq!(est.mean, 1.0);
    }

    #[test]
    fn same_seed_same_result() {
        let cfg = ScenarioConfig::baseline();
        let p = PowerVector::even_split(&cfg);
        let plan = SimulationPlan::with_realizations(300, 42);
        let a = sample_sinr(&cfg, &p, 2, Receiver::Bs, &plan).unwrap();
        let b = sample_sinr(&cfg, &p, 2, Receiver::Bs, &plan).unwrap();
        assert_eq!(a, b);
        let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let c = single.install(|| sample_sinr(&cfg, &p, 2, Receiver::Bs, &plan).unwrap());
        assert_eq!(a, c);
        let other = SimulationPlan::with_realizations(300, 43);
        assert_ne!(a, sample_sinr(&cfg, &p, 2, Receiver::Bs, &other).unwrap());
    }

    #[test]
    fn power_scale_invariance() {
        let mut cfg = ScenarioConfig::baseline();
        let p = PowerVector::uniform(0.01, 5);
        let plan = SimulationPlan::with_realizations(200, 5);
        let a = sample_sinr(&cfg, &p, 0, Receiver::D2d, &plan).unwrap();
        cfg.p_c_total *= 2.0;
        let b = sample_sinr(&cfg, &PowerVector::uniform(0.02, 5), 0, Receiver::D2d, &plan).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_relative_eq!(x, y, max_relative = 1e-12);
        }
    }

    #[test]
    fn zero_d2d_power_removes_d2d_interference() {
        let mut cfg = ScenarioConfig::baseline();
        let plan = SimulationPlan::with_realizations(100, 9);
        let with_zero = sample_sinr(&cfg, &PowerVector::uniform(0.0, 5), 1, Receiver::Bs, &plan).unwrap();
        cfg.lambda_d = vec![0.0; 5];
        let without = sample_sinr(&cfg, &PowerVector::uniform(0.0, 5), 1, Receiver::Bs, &plan).unwrap();
        // same streams, but the D2D field consumes draws; compare distributions
        let mean = |v: &[f64]| v.iter().map(|s| s.ln()).sum::<f64>() / v.len() as f64;
        assert!((mean(&with_zero) - mean(&without)).abs() < 1.0);
        assert!(with_zero.iter().all(|s| *s > 0.0));
        assert_eq!(
            sample_sinr(&cfg, &PowerVector::uniform(0.0, 5), 1, Receiver::D2d, &plan).unwrap(),
            vec![0.0; 100]
        );
    }

    /// Counts of a PPP over the window follow Poisson(λ·area): chi-square
    /// goodness-of-fit at 1% significance.
    #[test]
    fn ppp_counts_are_poisson() {
        let lambda = 1e-5;
        let plan = SimulationPlan::default();
        let mean = lambda * plan.area;
        let n = 20_000;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let counts: Vec<usize> = (0..n)
            .map(|_| sample_ppp_distances(lambda, &plan, &mut rng).unwrap().len())
            .collect();
        let dist = PoissonDist::new(mean).unwrap();
        // bins: ≤ 20, 21..=39 individually, ≥ 40
        let edges: Vec<(u64, u64)> = std::iter::once((0, 20))
            .chain((21..40).map(|k| (k, k)))
            .chain(std::iter::once((40, 1000)))
            .collect();
        let mut stat = 0.0;
        for &(lo, hi) in &edges {
            let observed = counts.iter().filter(|&&c| (lo..=hi).contains(&(c as u64))).count() as f64;
            let prob: f64 = (lo..=hi).map(|k| dist.pmf(k)).sum();
            let expected = prob * n as f64;
            stat += (observed - expected).powi(2) / expected;
        }
        let dof = (edges.len() - 1) as f64;
        let critical = ChiSquared::new(dof).unwrap().inverse_cdf(0.99);
        assert!(stat < critical, "chi-square {stat} ≥ {critical}");
    }

    #[test]
    fn distances_respect_window_and_guard() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let plan = SimulationPlan {
            guard_radius: 50.0,
            ..SimulationPlan::default()
        };
        let d = sample_ppp_distances(1e-4, &plan, &mut rng).unwrap();
        assert!(d.iter().all(|&r| (50.0..=plan.extent()).contains(&r)));
        let plan = SimulationPlan {
            window: Window::Square,
            ..plan
        };
        let d = sample_ppp_distances(1e-4, &plan, &mut rng).unwrap();
        assert!(d.iter().all(|&r| r <= plan.extent() * 2f64.sqrt()));
    }

    #[test]
    fn forced_success_matches_metrics_arithmetic() {
        // a vanishing window holds no interferers and there is no noise,
        // so every realization succeeds
        let cfg = ScenarioConfig::baseline();
        let p = PowerVector::even_split(&cfg);
        let plan = SimulationPlan {
            area: 1e-9,
            realizations: 50,
            ..SimulationPlan::default()
        };
        let est = estimate_ee(&cfg, &p, &plan).unwrap();
        let exact = energy_efficiency_from_stp(&cfg, &p, &[1.0; 5]).unwrap();
        assert_relative_eq!(est.mean, exact, max_relative = 1e-14);
        assert_eq!(est.half_width_95, 0.0);
    }

    #[test]
    fn rayleigh_agrees_with_analytic() {
        let cfg = ScenarioConfig::baseline();
        let p = PowerVector::even_split(&cfg);
        let plan = SimulationPlan::with_realizations(4000, 7);
        let mc = estimate_stp(&cfg, &p, 0, Receiver::D2d, &plan).unwrap();
        let an = stp_d2d(&cfg, p.as_slice()[0], 0).unwrap().value;
        assert!(mc.contains(an, 0.03), "mc {mc:?} vs analytic {an}");
        let mc = estimate_stp(&cfg, &p, 0, Receiver::Bs, &plan).unwrap();
        let an = stp_cellular(&cfg, p.as_slice()[0], 0).unwrap().value;
        assert!(mc.contains(an, 0.03), "mc {mc:?} vs analytic {an}");
    }

    #[test]
    fn sinr_dump_has_one_row_per_realization() {
        let cfg = ScenarioConfig::baseline();
        let p = PowerVector::even_split(&cfg);
        let mut buf = Vec::new();
        write_sinr_dump(&cfg, &p, 0, Receiver::D2d, &SimulationPlan::with_realizations(7, 0), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 8);
        assert!(text.starts_with("realization,sinr\n0,"));
    }
}
