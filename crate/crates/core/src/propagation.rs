//! Blockage, path loss and small-scale fading shared by the analytic and
//! Monte Carlo paths.

use rand::Rng;
use rand_distr::{Distribution, Gamma};

use crate::config::{effective_gain_pmf, AntennaPattern, GainAtom};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LinkState {
    Los,
    Nlos,
}

impl LinkState {
    pub fn exponent(self, alpha_l: f64, alpha_n: f64) -> f64 {
        match self {
            LinkState::Los => alpha_l,
            LinkState::Nlos => alpha_n,
        }
    }
}

/// `exp(-beta r)`: probability that a link of length `r` is unobstructed.
pub fn los_probability(r: f64, beta: f64) -> Result<f64> {
    if !(r >= 0.0) || !(beta >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "los_probability needs r ≥ 0 and beta ≥ 0 (got r={r}, beta={beta})"
        )));
    }
    Ok((-beta * r).exp())
}

/// `1 - exp(-beta r)`, computed without cancellation for short links.
pub fn nlos_probability(r: f64, beta: f64) -> Result<f64> {
    los_probability(r, beta)?;
    Ok(-(-beta * r).exp_m1())
}

/// Probability of `state` for a link of length `r`.
pub fn state_probability(state: LinkState, r: f64, beta: f64) -> Result<f64> {
    match state {
        LinkState::Los => los_probability(r, beta),
        LinkState::Nlos => nlos_probability(r, beta),
    }
}

/// `P_t · G · g · r^(-alpha)`.
pub fn received_power(p_t: f64, g_combined: f64, g: f64, r: f64, alpha: f64) -> Result<f64> {
    if !(r > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "received_power needs r > 0 (got {r})"
        )));
    }
    Ok(p_t * g_combined * g * r.powf(-alpha))
}

/// Nakagami-m power gain, `Γ(m, 1/m)`: unit mean, variance `1/m`.
#[derive(Debug, Clone, Copy)]
pub struct FadingSampler {
    gamma: Gamma<f64>,
}

impl FadingSampler {
    pub fn new(m: u32) -> Result<Self> {
        if m < 1 {
            return Err(Error::InvalidArgument(format!(
                "Nakagami parameter must be ≥ 1 (got {m})"
            )));
        }
        let m = f64::from(m);
        let gamma = Gamma::new(m, 1.0 / m).map_err(|e| Error::Numeric(e.to_string()))?;
        Ok(Self { gamma })
    }

    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.gamma.sample(rng)
    }
}

pub fn sample_fading<R: Rng + ?Sized>(m: u32, rng: &mut R) -> Result<f64> {
    Ok(FadingSampler::new(m)?.sample(rng))
}

/// Draws the combined antenna gain of a randomly oriented interferer.
#[derive(Debug, Clone, Copy)]
pub struct GainSampler {
    atoms: [GainAtom; 3],
}

impl GainSampler {
    pub fn new(antenna: &AntennaPattern) -> Result<Self> {
        Ok(Self {
            atoms: effective_gain_pmf(antenna)?,
        })
    }

    pub fn atoms(&self) -> &[GainAtom; 3] {
        &self.atoms
    }

    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.gen();
        let [a, b, c] = self.atoms;
        if u < a.prob {
            a.gain
        } else if u < a.prob + b.prob {
            b.gain
        } else {
            c.gain
        }
    }
}

pub fn sample_interferer_gain<R: Rng + ?Sized>(antenna: &AntennaPattern, rng: &mut R) -> Result<f64> {
    Ok(GainSampler::new(antenna)?.sample(rng))
}

/// One realized link: geometry, blockage state, fading and antenna gain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkSample {
    pub distance: f64,
    pub is_los: bool,
    pub fading: f64,
    pub eff_gain: f64,
}

impl LinkSample {
    /// Draw blockage, fading and gain for a link of length `distance`.
    #[inline]
    pub fn draw<R: Rng + ?Sized>(
        distance: f64,
        beta: f64,
        fading: &FadingSampler,
        gain: &GainSampler,
        rng: &mut R,
    ) -> Self {
        let is_los = rng.gen::<f64>() < (-beta * distance).exp();
        Self {
            distance,
            is_los,
            fading: fading.sample(rng),
            eff_gain: gain.sample(rng),
        }
    }

    #[inline]
    pub fn exponent(&self, alpha_l: f64, alpha_n: f64) -> f64 {
        if self.is_los {
            alpha_l
        } else {
            alpha_n
        }
    }

    /// Received power from a transmitter of power `p_t` over this link.
    #[inline]
    pub fn power(&self, p_t: f64, alpha_l: f64, alpha_n: f64) -> f64 {
        p_t * self.eff_gain * self.fading * self.distance.powf(-self.exponent(alpha_l, alpha_n))
    }
}
