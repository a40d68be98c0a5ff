//! Coupling schedules ḡ(τ′) = c·τ′^a together with the switching profile g(t)
//! used inside a sub-step.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shape of g(t) on (0, τ′). Every profile is normalized so that its time
/// average over the sub-step equals ḡ.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SwitchingProfile {
    #[default]
    Constant,
    /// ḡ·(π/2)·sin(πt/τ′)
    SymmetricBump,
    /// Raised-cosine pulse of width τ′/10 centred in the sub-step.
    DeltaLike,
    /// 2ḡt/τ′, the simplest asymmetric switching.
    Ramp,
    /// Piecewise-constant samples on equal bins; rescaled to mean ḡ.
    Custom(Vec<f64>),
}

const DELTA_WIDTH_FRACTION: f64 = 0.1;

impl SwitchingProfile {
    /// Time reversal g(t) = g(τ′−t) holds for this profile.
    pub fn is_symmetric(&self) -> bool {
        match self {
            Self::Constant | Self::SymmetricBump | Self::DeltaLike => true,
            Self::Ramp => false,
            Self::Custom(s) => s
                .iter()
                .zip(s.iter().rev())
                .all(|(a, b)| (a - b).abs() <= 1e-14 * a.abs().max(b.abs()).max(1.0)),
        }
    }

    /// ∫₀^{u·τ′} g(t)dt / (ḡ τ′) for u ∈ [0,1]; equals 1 at u = 1.
    pub fn cumulative_fraction(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        match self {
            Self::Constant => u,
            Self::SymmetricBump => 0.5 * (1.0 - (PI * u).cos()),
            Self::Ramp => u * u,
            Self::DeltaLike => {
                let w = DELTA_WIDTH_FRACTION;
                let x = (u - 0.5).clamp(-w / 2.0, w / 2.0);
                0.5 + (x + w / (2.0 * PI) * (2.0 * PI * x / w).sin()) / w
            }
            Self::Custom(samples) => {
                let total: f64 = samples.iter().sum();
                let n = samples.len() as f64;
                let pos = u * n;
                let full = pos.floor() as usize;
                let mut acc: f64 = samples.iter().take(full).sum();
                if full < samples.len() {
                    acc += samples[full] * (pos - full as f64);
                }
                acc / total
            }
        }
    }

    /// g(u·τ′)/ḡ, the instantaneous shape.
    pub fn shape(&self, u: f64) -> f64 {
        match self {
            Self::Constant => 1.0,
            Self::SymmetricBump => 0.5 * PI * (PI * u).sin(),
            Self::Ramp => 2.0 * u,
            Self::DeltaLike => {
                let w = DELTA_WIDTH_FRACTION;
                let x = u - 0.5;
                if x.abs() > w / 2.0 {
                    0.0
                } else {
                    (1.0 + (2.0 * PI * x / w).cos()) / w
                }
            }
            Self::Custom(samples) => {
                let total: f64 = samples.iter().sum();
                let n = samples.len();
                let idx = ((u * n as f64).floor() as usize).min(n - 1);
                samples[idx] * n as f64 / total
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Self::Custom(samples) = self {
            if samples.is_empty() || samples.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidArgument(
                    "custom profile needs finite samples".into(),
                ));
            }
            let total: f64 = samples.iter().sum();
            if total.abs() < 1e-300 {
                return Err(Error::InvalidArgument(
                    "custom profile integrates to zero".into(),
                ));
            }
        }
        Ok(())
    }
}

/// ḡ(τ′) = amplitude·τ′^exponent with a switching profile.
///
/// `exponent = 0` is the weak regime (fixed ḡ); `exponent = −1` is the strong
/// regime in which τ′ḡ → amplitude.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingSchedule {
    pub amplitude: f64,
    #[serde(default)]
    pub exponent: f64,
    #[serde(default)]
    pub profile: SwitchingProfile,
}

impl CouplingSchedule {
    pub fn constant(amplitude: f64) -> Self {
        Self {
            amplitude,
            exponent: 0.0,
            profile: SwitchingProfile::Constant,
        }
    }

    /// τ′ḡ = amplitude for every τ′.
    pub fn strong(amplitude: f64) -> Self {
        Self {
            amplitude,
            exponent: -1.0,
            profile: SwitchingProfile::Constant,
        }
    }

    pub fn with_profile(mut self, profile: SwitchingProfile) -> Self {
        self.profile = profile;
        self
    }

    pub fn mean(&self, tau_sub: f64) -> f64 {
        self.amplitude * tau_sub.powf(self.exponent)
    }

    /// Instantaneous g(t) for t ∈ (0, τ′).
    pub fn at(&self, t: f64, tau_sub: f64) -> f64 {
        self.mean(tau_sub) * self.profile.shape(t / tau_sub)
    }

    /// Average of g over [t0, t1] ⊂ [0, τ′], exact for every profile.
    pub fn slice_mean(&self, t0: f64, t1: f64, tau_sub: f64) -> f64 {
        let f0 = self.profile.cumulative_fraction(t0 / tau_sub);
        let f1 = self.profile.cumulative_fraction(t1 / tau_sub);
        self.mean(tau_sub) * tau_sub * (f1 - f0) / (t1 - t0)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.amplitude.is_finite() || !self.exponent.is_finite() {
            return Err(Error::InvalidArgument("non-finite coupling schedule".into()));
        }
        self.profile.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quadrature_mean(s: &CouplingSchedule, tau: f64) -> f64 {
        let n = 20_000;
        let h = tau / n as f64;
        // Simpson's rule
        let mut acc = s.at(0.0, tau) + s.at(tau, tau);
        for k in 1..n {
            let w = if k % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * s.at(k as f64 * h, tau);
        }
        acc * h / 3.0 / tau
    }

    #[test]
    fn built_in_profiles_reproduce_the_mean_coupling() {
        for profile in [
            SwitchingProfile::Constant,
            SwitchingProfile::SymmetricBump,
            SwitchingProfile::Ramp,
            SwitchingProfile::DeltaLike,
        ] {
            for (c, a) in [(1.3, 0.0), (0.7, -1.0)] {
                let s = CouplingSchedule {
                    amplitude: c,
                    exponent: a,
                    profile: profile.clone(),
                };
                let tau: f64 = 0.05;
                let expected = c * tau.powf(a);
                let q = quadrature_mean(&s, tau);
                assert!(
                    ((q - expected) / expected).abs() < 1e-8,
                    "{profile:?}: {q} vs {expected}"
                );
                assert!((s.slice_mean(0.0, tau, tau) - expected).abs() < 1e-12 * expected.abs());
            }
        }
    }

    #[test]
    fn slice_means_match_quadrature() {
        let s = CouplingSchedule::constant(2.0).with_profile(SwitchingProfile::SymmetricBump);
        let tau = 0.3;
        let (t0, t1) = (0.05, 0.11);
        let n = 2000;
        let h = (t1 - t0) / n as f64;
        let q: f64 = (0..n).map(|k| s.at(t0 + (k as f64 + 0.5) * h, tau)).sum::<f64>() * h;
        assert!((s.slice_mean(t0, t1, tau) - q / (t1 - t0)).abs() < 1e-7);
    }

    #[test]
    fn custom_profile_is_normalized() {
        let s = CouplingSchedule::constant(3.0)
            .with_profile(SwitchingProfile::Custom(vec![1.0, 2.0, 5.0, 2.0]));
        assert!((s.slice_mean(0.0, 0.4, 0.4) - 3.0).abs() < 1e-14);
        assert!(!s.profile.is_symmetric());
        assert!(SwitchingProfile::Custom(vec![1.0, 2.0, 1.0]).is_symmetric());
        assert!(SwitchingProfile::Custom(vec![]).validate().is_err());
    }

    #[test]
    fn strong_regime_keeps_product_fixed() {
        let s = CouplingSchedule::strong(1.5);
        for tau in [0.1, 0.01, 0.001] {
            assert!((tau * s.mean(tau) - 1.5).abs() < 1e-12);
        }
    }
}
