//! Per-collision coherence multipliers in the strong-measurement regime.

use crate::linalg::{unitary_propagator, CMat, DensityMatrix, C64};

/// ⟨exp(−iτḡΔs·M/ħ)⟩ in the ancilla state.
pub fn zeno_factor(rho_m: &DensityMatrix, m: &CMat, delta_s: f64, tau_g: f64, hbar: f64) -> C64 {
    rho_m.expectation(&unitary_propagator(m, tau_g * delta_s, hbar))
}

/// Coherence multiplier after time t from the characteristic-function
/// magnitude |χ| of one collision of duration τ: exp[−(t/τ)(1 − |χ|)].
pub fn zeno_decay_curve(factor: C64, t: f64, tau: f64) -> f64 {
    (-(t / tau) * (1.0 - factor.norm())).exp()
}

/// Closed form for a Gaussian ancilla of standard deviation σ.
pub fn gaussian_zeno_curve(sigma: f64, delta_s: f64, t: f64, tau: f64, hbar: f64) -> f64 {
    let chi = (-(sigma * delta_s / hbar).powi(2) / 2.0).exp();
    (-(t / tau) * (1.0 - chi)).exp()
}

/// First non-vanishing order in σ: 1 − (σ²Δs²/2ħ²)(t/τ).
pub fn gaussian_zeno_first_order(sigma: f64, delta_s: f64, t: f64, tau: f64, hbar: f64) -> f64 {
    1.0 - (sigma * delta_s / hbar).powi(2) / 2.0 * (t / tau)
}

/// Coherence decay rate ω_D = (1 − |χ|)/τ.
pub fn zeno_rate(factor: C64, tau: f64) -> f64 {
    (1.0 - factor.norm()) / tau
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::ops;
    use crate::model::{AncillaOperator, GridSpec, PreparationFamily, TauLaw};

    #[test]
    fn trivial_factors() {
        let m = ops::diag(&[-1.0, 0.5, 2.0]);
        let rho = DensityMatrix::new(ops::diag(&[0.2, 0.5, 0.3])).unwrap();
        assert!((zeno_factor(&rho, &m, 0.0, 1.0, 1.0) - C64::from(1.0)).norm() < 1e-15);
        let eig = DensityMatrix::new(ops::projector(3, 2)).unwrap();
        let f = zeno_factor(&eig, &m, 1.5, 1.0, 1.0);
        assert!((f.norm() - 1.0).abs() < 1e-14);
        assert!((f - C64::from_polar(1.0, -3.0)).norm() < 1e-14);
    }

    #[test]
    fn gaussian_factor_matches_grid_sum_and_closed_form() {
        let prep = PreparationFamily::moment_gaussian(TauLaw::constant(0.0), TauLaw::constant(1.0), GridSpec::default());
        let r = prep.realize(1.0, 1.0).unwrap();
        let m = r.operator(&AncillaOperator::GridValue).unwrap();
        let f = zeno_factor(&r.state, &m, 2.0, 1.0, 1.0);
        let oracle: C64 = (0..m.nrows())
            .map(|k| r.state.matrix()[(k, k)] * C64::from_polar(1.0, -2.0 * m[(k, k)].re))
            .sum();
        assert!((f - oracle).norm() < 1e-13);
        assert!((f.norm() - (-2.0f64).exp()).abs() < 1e-10);
    }

    #[test]
    fn curve_limits() {
        assert_eq!(gaussian_zeno_curve(0.0, 2.0, 5.0, 0.1, 1.0), 1.0);
        let v = gaussian_zeno_curve(1.0, 1.0, 1.0, 1.0, 1.0);
        assert!((v - (-(1.0 - (-0.5f64).exp())).exp()).abs() < 1e-15);
        assert!((v - 0.6748).abs() < 1e-4);
        let a = gaussian_zeno_curve(0.3, 1.0, 0.5, 0.1, 1.0);
        let b = gaussian_zeno_curve(0.3, 1.0, 1.0, 0.1, 1.0);
        assert!(b < a);
    }
}
