//! Numerical generator (𝒱(τ)[ρ] − ρ)/τ extrapolated to τ → 0.

use super::channel::Channel;
use super::propagator::Propagator;
use crate::error::{Error, Result};
use crate::linalg::{frobenius, CMat, C64};
use crate::model::{richardson, CycleSpec};
use crate::tolerance;

#[derive(Debug, Clone)]
pub struct GeneratorEstimate {
    /// Extrapolated ρ̇.
    pub rate: CMat,
    /// Largest entrywise extrapolation residual.
    pub residual: f64,
    pub divergent: bool,
    pub established: bool,
    /// (τ, (𝒱(τ)[ρ] − ρ)/τ) per sweep point.
    pub samples: Vec<(f64, CMat)>,
}

/// Finite-difference generator sample at a single τ.
pub fn generator_sample(cycle: &CycleSpec, rho: &CMat, tau: f64) -> Result<CMat> {
    let r = cycle.realize(tau)?;
    let ch = Channel::build(&r, Propagator::MeanValue)?;
    Ok((ch.apply(rho) - rho) / C64::from(tau))
}

pub fn generator_estimate(cycle: &CycleSpec, rho: &CMat, taus: &[f64]) -> Result<GeneratorEstimate> {
    if taus.len() < 3 || taus.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::InvalidArgument(
            "generator estimate needs ≥ 3 strictly decreasing τ values".into(),
        ));
    }
    let samples = taus
        .iter()
        .map(|&t| Ok((t, generator_sample(cycle, rho, t)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(extrapolate_samples(samples))
}

pub fn extrapolate_samples(samples: Vec<(f64, CMat)>) -> GeneratorEstimate {
    let taus: Vec<f64> = samples.iter().map(|s| s.0).collect();
    let (nr, nc) = samples[0].1.shape();
    let mut rate = CMat::zeros(nr, nc);
    let mut residual: f64 = 0.0;
    let scale = samples.iter().map(|s| frobenius(&s.1)).fold(0.0, f64::max);
    for i in 0..nr {
        for j in 0..nc {
            let re: Vec<f64> = samples.iter().map(|s| s.1[(i, j)].re).collect();
            let im: Vec<f64> = samples.iter().map(|s| s.1[(i, j)].im).collect();
            let er = richardson(&taus, &re);
            let ei = richardson(&taus, &im);
            rate[(i, j)] = C64::new(er.value, ei.value);
            residual = residual.max(er.residual).max(ei.residual);
        }
    }
    let norms: Vec<f64> = samples.iter().map(|s| frobenius(&s.1)).collect();
    let trend = richardson(&taus, &norms);
    let divergent = trend.divergent;
    let established = !divergent && residual <= tolerance::EXTRAPOLATION_REL * scale.max(1e-300);
    GeneratorEstimate {
        rate,
        residual,
        divergent,
        established,
        samples,
    }
}
