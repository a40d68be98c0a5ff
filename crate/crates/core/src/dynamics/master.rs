//! Master-equation specs built from limit quantities, and a deterministic
//! integrator for them.

use crate::engine::EvolutionTrace;
use crate::error::{Error, Result};
use crate::linalg::{anticommutator, commutator, hermitian_part, CMat, DensityMatrix, C64, I};
use crate::model::{CycleSpec, LimitSet};

/// −(rate/ħ²)[A,[B,ρ]]
#[derive(Debug, Clone, PartialEq)]
pub struct Dissipator {
    pub a: CMat,
    pub b: CMat,
    pub rate: f64,
    pub label: String,
}

/// +(i·rate/ħ)[A, Bρ + ρB]
#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackTerm {
    pub a: CMat,
    pub b: CMat,
    pub rate: f64,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MasterEquationSpec {
    pub h_eff: CMat,
    pub dissipators: Vec<Dissipator>,
    pub feedback: Vec<FeedbackTerm>,
    pub hbar: f64,
}

pub fn hamiltonian_action(h: &CMat, rho: &CMat, hbar: f64) -> CMat {
    commutator(h, rho) * (-I / hbar)
}

pub fn dissipator_action(a: &CMat, b: &CMat, rho: &CMat, hbar: f64) -> CMat {
    commutator(a, &commutator(b, rho)) * C64::from(-1.0 / (hbar * hbar))
}

pub fn feedback_action(a: &CMat, b: &CMat, rho: &CMat, hbar: f64) -> CMat {
    commutator(a, &anticommutator(b, rho)) * (I / hbar)
}

impl MasterEquationSpec {
    pub fn hamiltonian(h: CMat, hbar: f64) -> Self {
        Self {
            h_eff: h,
            dissipators: Vec::new(),
            feedback: Vec::new(),
            hbar,
        }
    }

    pub fn dim(&self) -> usize {
        self.h_eff.nrows()
    }

    /// ρ̇ for the given ρ.
    pub fn action(&self, rho: &CMat) -> CMat {
        let mut out = hamiltonian_action(&self.h_eff, rho, self.hbar);
        for d in &self.dissipators {
            if d.rate != 0.0 {
                out += dissipator_action(&d.a, &d.b, rho, self.hbar) * C64::from(d.rate);
            }
        }
        for f in &self.feedback {
            if f.rate != 0.0 {
                out += feedback_action(&f.a, &f.b, rho, self.hbar) * C64::from(f.rate);
            }
        }
        out
    }

    /// Upper bound on the generator norm induced by the Frobenius norm of ρ,
    /// from ‖AρB‖_F ≤ ‖A‖₂‖ρ‖_F‖B‖₂.
    pub fn generator_norm(&self) -> f64 {
        let h = self.hbar;
        let mut n = 2.0 * spectral_norm(&self.h_eff) / h;
        for d in &self.dissipators {
            n += 4.0 * d.rate.abs() * spectral_norm(&d.a) * spectral_norm(&d.b) / (h * h);
        }
        for f in &self.feedback {
            n += 4.0 * f.rate.abs() * spectral_norm(&f.a) * spectral_norm(&f.b) / h;
        }
        n
    }

    pub fn max_dissipator_rate(&self) -> f64 {
        self.dissipators.iter().map(|d| d.rate.abs()).fold(0.0, f64::max)
    }
}

fn spectral_norm(a: &CMat) -> f64 {
    if a.nrows() == 0 {
        return 0.0;
    }
    a.clone().svd(false, false).singular_values.max()
}

/// Second-order generator of a p-sub-step cycle from its limits.
///
/// First order: S₀ + (1/p)ΣΞᵢSᵢ. Second order, for every ordered pair (i, j)
/// with weight wᵢⱼ = 1/(2p) in the same sub-step, 1/p when i's sub-step is
/// later than j's, 0 otherwise: a dissipator (Sᵢ, Sⱼ, 2wᵢⱼΓᵢⱼ) and a feedback
/// term (Sᵢ, Sⱼ, 2wᵢⱼM̃ᵢⱼ). Free ancilla motion adds −(2(2k−1)/p)M̃ᵢ₀Sᵢ for a
/// term in sub-step k (1-based). For p = 1 this is the single-collision
/// equation, for p = 2 the two-measurement equation with its ½Ξ₁ − M̃₁₀ and
/// ½Ξ₂ − 3M̃₂₀ coefficients.
pub fn build_master_equation(cycle: &CycleSpec, limits: &LimitSet) -> Result<MasterEquationSpec> {
    let div = limits.divergent_quantities();
    if !div.is_empty() {
        return Err(Error::Divergent(div.join(", ")));
    }
    if limits.n_terms() != cycle.n_terms() {
        return Err(Error::DimensionMismatch {
            context: "limit set vs cycle terms".into(),
            expected: cycle.n_terms(),
            found: limits.n_terms(),
        });
    }
    let p = cycle.n_substeps() as f64;
    let terms: Vec<(usize, &CMat)> = cycle.terms().map(|(k, t)| (k, &t.s_op)).collect();
    let xi = limits.xi_values();
    let gamma = limits.gamma_values();
    let mt = limits.mtilde_values();
    let mt0 = limits.mtilde0_values();
    let mut h = cycle.s0.clone();
    for (i, (k, s)) in terms.iter().enumerate() {
        let coef = xi[i] / p - 2.0 * (2.0 * (*k as f64 + 1.0) - 1.0) / p * mt0[i];
        h += *s * C64::from(coef);
    }
    let mut dissipators = Vec::new();
    let mut feedback = Vec::new();
    for (i, (ki, si)) in terms.iter().enumerate() {
        for (j, (kj, sj)) in terms.iter().enumerate() {
            let w = if ki == kj {
                0.5 / p
            } else if ki > kj {
                1.0 / p
            } else {
                continue;
            };
            dissipators.push(Dissipator {
                a: (*si).clone(),
                b: (*sj).clone(),
                rate: 2.0 * w * gamma[(i, j)],
                label: format!("Γ{i}{j}"),
            });
            if mt[(i, j)] != 0.0 {
                feedback.push(FeedbackTerm {
                    a: (*si).clone(),
                    b: (*sj).clone(),
                    rate: 2.0 * w * mt[(i, j)],
                    label: format!("M̃{i}{j}"),
                });
            }
        }
    }
    Ok(MasterEquationSpec {
        h_eff: hermitian_part(&h),
        dissipators,
        feedback,
        hbar: cycle.hbar,
    })
}

/// Classical RK4 integration of ρ̇ = spec(ρ) with symmetrization each step.
pub fn integrate_master(spec: &MasterEquationSpec, rho0: &DensityMatrix, t: f64, dt: f64) -> Result<EvolutionTrace> {
    if rho0.dim() != spec.dim() {
        return Err(Error::DimensionMismatch {
            context: "master equation vs state".into(),
            expected: spec.dim(),
            found: rho0.dim(),
        });
    }
    let bound = 0.1 / spec.generator_norm().max(1e-300);
    if !(dt > 0.0) || dt > bound {
        return Err(Error::StepSize { dt, bound });
    }
    let n = (t / dt).ceil().max(1.0) as usize;
    let h = t / n as f64;
    let half = C64::from(h / 2.0);
    let mut rho = rho0.matrix().clone();
    let mut states = Vec::with_capacity(n + 1);
    states.push(rho0.clone());
    for _ in 0..n {
        let k1 = spec.action(&rho);
        let k2 = spec.action(&(&rho + &k1 * half));
        let k3 = spec.action(&(&rho + &k2 * half));
        let k4 = spec.action(&(&rho + &k3 * C64::from(h)));
        rho += (k1 + k2 * C64::from(2.0) + k3 * C64::from(2.0) + k4) * C64::from(h / 6.0);
        rho = hermitian_part(&rho);
        states.push(DensityMatrix::with_tolerance(rho.clone(), 1e-8)?);
    }
    Ok(EvolutionTrace {
        times: (0..=n).map(|k| k as f64 * h).collect(),
        states,
        tau: h,
        n,
    })
}
