//! Declarative description of a collision cycle: system and ancilla
//! operators, coupling schedules and ancilla preparations.

mod limits;
mod preparation;
mod schedule;

pub use limits::{
    feedback_bound_holds, gram_matrix, limit_sample, limit_set, richardson, Extrapolation,
    LimitSample, LimitSet,
};
pub use preparation::{
    coherent_state, leakage, moment, AncillaFrame, AncillaOperator, GridSpec, PreparationFamily,
    PreparationKind, RealizedAncilla, TauLaw,
};
pub use schedule::{CouplingSchedule, SwitchingProfile};

use crate::error::{Error, Result};
use crate::linalg::{hermitian_deviation, max_abs, CMat, TensorLayout};
use crate::tolerance;

/// One term ḡ(t) S ⊗ M of a sub-step. `s_op` acts on the full system space.
#[derive(Debug, Clone, PartialEq)]
pub struct SubInteraction {
    pub s_op: CMat,
    pub ancilla: usize,
    pub m_op: AncillaOperator,
    pub schedule: CouplingSchedule,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AncillaSpec {
    pub preparation: PreparationFamily,
    /// Free ancilla Hamiltonian M₀.
    pub m0: AncillaOperator,
}

/// One collision: p equal sub-steps of duration τ′ = τ/p, each applying
/// S₀ + ΣM₀ + Σ ḡᵢ Sᵢ⊗Mᵢ on system ⊗ ancilla₀ ⊗ ancilla₁ ⊗ …
#[derive(Debug, Clone, PartialEq)]
pub struct CycleSpec {
    pub system_layout: TensorLayout,
    pub s0: CMat,
    pub ancillas: Vec<AncillaSpec>,
    pub substeps: Vec<Vec<SubInteraction>>,
    pub hbar: f64,
}

/// A sub-interaction evaluated at a particular τ.
#[derive(Debug, Clone)]
pub struct RealizedTerm {
    pub substep: usize,
    pub ancilla: usize,
    pub s: CMat,
    pub m: CMat,
    /// ḡ(τ′)
    pub g: f64,
    pub schedule: CouplingSchedule,
}

/// Every τ-dependent ingredient of one collision.
#[derive(Debug, Clone)]
pub struct RealizedCycle {
    pub tau: f64,
    pub tau_sub: f64,
    pub hbar: f64,
    pub s0: CMat,
    pub ancillas: Vec<RealizedAncilla>,
    pub m0: Vec<CMat>,
    pub terms: Vec<RealizedTerm>,
    pub n_substeps: usize,
}

impl RealizedCycle {
    pub fn system_dim(&self) -> usize {
        self.s0.nrows()
    }

    pub fn ancilla_dims(&self) -> Vec<usize> {
        self.ancillas.iter().map(|a| a.frame.dim()).collect()
    }

    pub fn terms_in(&self, substep: usize) -> impl Iterator<Item = &RealizedTerm> {
        self.terms.iter().filter(move |t| t.substep == substep)
    }
}

impl CycleSpec {
    /// Single-ancilla, single-sub-step cycle (the basic collision).
    pub fn single(
        s0: CMat,
        s: CMat,
        preparation: PreparationFamily,
        m: AncillaOperator,
        m0: AncillaOperator,
        schedule: CouplingSchedule,
        hbar: f64,
    ) -> Result<Self> {
        let spec = Self {
            system_layout: TensorLayout::single(s0.nrows()),
            s0,
            ancillas: vec![AncillaSpec { preparation, m0 }],
            substeps: vec![vec![SubInteraction {
                s_op: s,
                ancilla: 0,
                m_op: m,
                schedule,
            }]],
            hbar,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn n_substeps(&self) -> usize {
        self.substeps.len()
    }

    pub fn system_dim(&self) -> usize {
        self.system_layout.total_dim()
    }

    pub fn ancilla_dims(&self) -> Vec<usize> {
        self.ancillas.iter().map(|a| a.preparation.ancilla_dim()).collect()
    }

    pub fn tau_sub(&self, tau: f64) -> f64 {
        tau / self.n_substeps() as f64
    }

    /// All sub-interactions in declaration order with their sub-step index.
    pub fn terms(&self) -> impl Iterator<Item = (usize, &SubInteraction)> {
        self.substeps
            .iter()
            .enumerate()
            .flat_map(|(k, terms)| terms.iter().map(move |t| (k, t)))
    }

    pub fn n_terms(&self) -> usize {
        self.substeps.iter().map(Vec::len).sum()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.system_dim();
        if !(self.hbar > 0.0) || !self.hbar.is_finite() {
            return Err(Error::InvalidArgument(format!("ħ must be positive, got {}", self.hbar)));
        }
        check_hermitian(&self.s0, d, "S0")?;
        if self.substeps.is_empty() {
            return Err(Error::InvalidArgument("a cycle needs at least one sub-step".into()));
        }
        for (k, t) in self.terms() {
            check_hermitian(&t.s_op, d, &format!("S in sub-step {k}"))?;
            if t.ancilla >= self.ancillas.len() {
                return Err(Error::InvalidArgument(format!(
                    "sub-step {k} references ancilla {} but only {} are declared",
                    t.ancilla,
                    self.ancillas.len()
                )));
            }
            t.schedule.validate()?;
        }
        Ok(())
    }

    /// Realizes ancilla states and operators at cycle duration τ.
    pub fn realize(&self, tau: f64) -> Result<RealizedCycle> {
        self.validate()?;
        if !(tau > 0.0) || !tau.is_finite() {
            return Err(Error::InvalidArgument(format!("τ must be positive, got {tau}")));
        }
        let tau_sub = self.tau_sub(tau);
        let ancillas = self
            .ancillas
            .iter()
            .map(|a| a.preparation.realize(tau_sub, self.hbar))
            .collect::<Result<Vec<_>>>()?;
        let m0 = self
            .ancillas
            .iter()
            .zip(&ancillas)
            .enumerate()
            .map(|(i, (spec, r))| {
                let m = r.operator(&spec.m0)?;
                check_hermitian(&m, r.frame.dim(), &format!("M0 of ancilla {i}"))?;
                Ok(m)
            })
            .collect::<Result<Vec<_>>>()?;
        let terms = self
            .terms()
            .map(|(k, t)| {
                let r = &ancillas[t.ancilla];
                let m = r.operator(&t.m_op)?;
                check_hermitian(&m, r.frame.dim(), &format!("M in sub-step {k}"))?;
                let g = t.schedule.mean(tau_sub);
                if !g.is_finite() {
                    return Err(Error::NonFinite(format!("coupling in sub-step {k}")));
                }
                Ok(RealizedTerm {
                    substep: k,
                    ancilla: t.ancilla,
                    s: t.s_op.clone(),
                    m,
                    g,
                    schedule: t.schedule.clone(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(RealizedCycle {
            tau,
            tau_sub,
            hbar: self.hbar,
            s0: self.s0.clone(),
            ancillas,
            m0,
            terms,
            n_substeps: self.n_substeps(),
        })
    }
}

fn check_hermitian(m: &CMat, dim: usize, label: &str) -> Result<()> {
    if m.nrows() != dim || m.ncols() != dim {
        return Err(Error::DimensionMismatch {
            context: label.to_string(),
            expected: dim,
            found: m.nrows(),
        });
    }
    if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::NonFinite(label.to_string()));
    }
    let dev = hermitian_deviation(m);
    if dev > tolerance::HERMITIAN_REL * max_abs(m).max(1.0) {
        return Err(Error::NotHermitian {
            label: label.to_string(),
            deviation: dev,
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::ops;

    fn qubit_cycle() -> CycleSpec {
        CycleSpec::single(
            ops::pauli_z() * crate::linalg::C64::from(0.5),
            ops::pauli_x(),
            PreparationFamily::eigenstate(ops::pauli_z(), 1.0),
            AncillaOperator::Explicit(ops::pauli_z()),
            AncillaOperator::zero(2),
            CouplingSchedule::constant(1.0),
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn realize_evaluates_couplings_at_substep_time() {
        let mut c = qubit_cycle();
        let extra = c.substeps[0][0].clone();
        c.substeps.push(vec![SubInteraction {
            schedule: CouplingSchedule::strong(2.0),
            ..extra
        }]);
        let r = c.realize(0.2).unwrap();
        assert_eq!(r.tau_sub, 0.1);
        assert_eq!(r.terms.len(), 2);
        assert!((r.terms[1].g * 0.1 - 2.0).abs() < 1e-12);
        assert_eq!(r.terms[1].substep, 1);
    }

    #[test]
    fn validation_rejects_bad_references() {
        let mut c = qubit_cycle();
        c.substeps[0][0].ancilla = 3;
        assert!(c.validate().is_err());
        let mut c = qubit_cycle();
        c.substeps[0][0].s_op = ops::annihilation(2);
        assert!(matches!(c.validate(), Err(Error::NotHermitian { .. })));
        let mut c = qubit_cycle();
        c.hbar = 0.0;
        assert!(c.validate().is_err());
        assert!(qubit_cycle().realize(-1.0).is_err());
    }
}
