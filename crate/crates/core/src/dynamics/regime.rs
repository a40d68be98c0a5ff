//! Exact-unitarity predicate and regime classification.

use crate::error::Result;
use crate::linalg::{frobenius, hermitian_eigen, CMat, DensityMatrix, C64};
use crate::model::{limit_set, richardson, CycleSpec, LimitSet};
use crate::tolerance;

/// Outcome of the exact-unitarity predicate for one ancilla.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitarityWitness {
    pub passes: bool,
    /// max over coupling operators of ‖(M − m̄)Π_support‖
    pub support_deviation: f64,
    /// ‖(1 − P)M₀P‖ with P the common eigenspace
    pub invariance_deviation: f64,
    pub eigenvalues: Vec<f64>,
}

impl UnitarityWitness {
    pub fn violated_condition(&self) -> Option<&'static str> {
        if self.support_deviation > tolerance::EIGENSPACE {
            Some("support of the ancilla state spans several eigenvalues")
        } else if self.invariance_deviation > tolerance::EIGENSPACE {
            Some("free ancilla Hamiltonian leaves the eigenspace")
        } else {
            None
        }
    }
}

fn support_projector(rho: &CMat) -> CMat {
    let (vals, vecs) = hermitian_eigen(rho);
    let d = rho.nrows();
    let mut p = CMat::zeros(d, d);
    for (i, &l) in vals.iter().enumerate() {
        if l > tolerance::STRUCTURAL {
            let v = vecs.column(i);
            p += &v * v.adjoint();
        }
    }
    p
}

/// Support of ρ_m inside one common eigenspace of every `m_ops` entry and
/// that eigenspace invariant under `m0`.
pub fn check_exact_unitarity(rho_m: &DensityMatrix, m_ops: &[&CMat], m0: &CMat) -> UnitarityWitness {
    let d = rho_m.dim();
    let pi = support_projector(rho_m.matrix());
    let rank = pi.trace().re.round().max(1.0);
    let mut support_dev: f64 = 0.0;
    let mut means = Vec::with_capacity(m_ops.len());
    let mut spread = CMat::zeros(d, d);
    for m in m_ops {
        let mbar = (*m * &pi).trace().re / rank;
        let shifted = *m - CMat::identity(d, d) * C64::from(mbar);
        support_dev = support_dev.max(frobenius(&(&shifted * &pi)));
        spread += &shifted * &shifted;
        means.push(mbar);
    }
    // common eigenspace = kernel of Σ(M − m̄)²
    let (vals, vecs) = hermitian_eigen(&spread);
    let mut p = CMat::zeros(d, d);
    for (i, &l) in vals.iter().enumerate() {
        if l.abs() <= tolerance::EIGENSPACE {
            let v = vecs.column(i);
            p += &v * v.adjoint();
        }
    }
    let invariance_dev = frobenius(&((CMat::identity(d, d) - &p) * m0 * &p));
    UnitarityWitness {
        passes: support_dev <= tolerance::EIGENSPACE && invariance_dev <= tolerance::EIGENSPACE,
        support_deviation: support_dev,
        invariance_deviation: invariance_dev,
        eigenvalues: means,
    }
}

/// The predicate applied to every ancilla of a cycle at cycle duration τ.
pub fn check_cycle_unitarity(cycle: &CycleSpec, tau: f64) -> Result<Vec<UnitarityWitness>> {
    let r = cycle.realize(tau)?;
    Ok((0..r.ancillas.len())
        .map(|a| {
            let ms: Vec<&CMat> = r.terms.iter().filter(|t| t.ancilla == a && t.g != 0.0).map(|t| &t.m).collect();
            check_exact_unitarity(&r.ancillas[a].state, &ms, &r.m0[a])
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    ExactUnitary,
    EffectiveUnitary,
    FiniteDecoherence,
    Zeno,
    Undetermined,
}

/// One certified condition: the k-th moment ratio (τ′ḡ)^k⟨M^k⟩/τ′ of a term.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentCondition {
    pub term: usize,
    pub k: u32,
    pub limit: f64,
    pub residual: f64,
    pub vanishes: bool,
    pub divergent: bool,
    pub established: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegimeReport {
    pub regime: Regime,
    pub limits: LimitSet,
    pub unitarity: Vec<UnitarityWitness>,
    pub conditions: Vec<MomentCondition>,
    pub k_max: u32,
}

/// Power-law decay toward zero: |f| ∝ τ^s with s ≥ ½ and monotone in τ.
fn shrinks(e: &crate::model::Extrapolation, vals: &[f64]) -> bool {
    e.slope >= 0.5 && vals.windows(2).all(|w| w[1].abs() <= w[0].abs())
}

/// Classifies the τ → 0 behaviour of a cycle from its moment ratios.
pub fn classify_regime(cycle: &CycleSpec, taus: &[f64], k_max: u32) -> Result<RegimeReport> {
    let k_max = k_max.max(2);
    let limits = limit_set(cycle, taus)?;
    let unitarity = check_cycle_unitarity(cycle, *taus.last().expect("sweep is nonempty"))?;
    let realized = taus.iter().map(|&t| cycle.realize(t)).collect::<Result<Vec<_>>>()?;
    let n_terms = cycle.n_terms();
    let mut conditions = Vec::new();
    for i in 0..n_terms {
        let series: Vec<Vec<f64>> = realized
            .iter()
            .map(|r| {
                let t = &r.terms[i];
                let x = r.tau_sub * t.g;
                let rho = &r.ancillas[t.ancilla].state;
                let mut pow = CMat::identity(t.m.nrows(), t.m.ncols());
                let mut out = Vec::with_capacity(k_max as usize);
                for k in 1..=k_max {
                    pow = &pow * &t.m;
                    // (τ′ḡ)^k ⟨M^k⟩ / τ′
                    out.push(x.powi(k as i32) * rho.expectation(&pow).re / r.tau_sub);
                }
                out
            })
            .collect();
        let scale = series.iter().flatten().map(|v| v.abs()).fold(1.0, f64::max);
        for k in 2..=k_max {
            let vals: Vec<f64> = series.iter().map(|s| s[(k - 1) as usize]).collect();
            let e = richardson(taus, &vals);
            conditions.push(MomentCondition {
                term: i,
                k,
                limit: e.value,
                residual: e.residual,
                vanishes: !e.divergent && (shrinks(&e, &vals) || (e.established && e.value.abs() <= 1e-8 * scale)),
                divergent: e.divergent,
                established: e.established,
            });
        }
    }
    let regime = if !unitarity.is_empty() && unitarity.iter().all(|w| w.passes) {
        Regime::ExactUnitary
    } else if conditions.iter().any(|c| c.divergent) || limits.any_divergent() {
        Regime::Zeno
    } else if conditions.iter().all(|c| c.vanishes) {
        Regime::EffectiveUnitary
    } else if conditions.iter().filter(|c| c.k >= 3).all(|c| c.vanishes)
        && conditions.iter().filter(|c| c.k == 2).all(|c| c.established)
    {
        Regime::FiniteDecoherence
    } else {
        Regime::Undetermined
    };
    Ok(RegimeReport {
        regime,
        limits,
        unitarity,
        conditions,
        k_max,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::evolve;
    use crate::linalg::{ops, purity, CVec};
    use crate::model::{AncillaOperator, CouplingSchedule, GridSpec, PreparationFamily, TauLaw};

    fn qubit_state() -> DensityMatrix {
        let v = CVec::from_vec(vec![C64::new(0.6, 0.1), C64::new(0.3, -0.7)]);
        DensityMatrix::pure(&v).unwrap()
    }

    #[test]
    fn eigenstate_with_commuting_free_hamiltonian_passes() {
        let m = ops::diag(&[1.0, 1.0, 0.0]);
        let rho = DensityMatrix::new(ops::projector(3, 0)).unwrap();
        let mut m0 = CMat::zeros(3, 3);
        m0[(0, 1)] = C64::from(1.0);
        m0[(1, 0)] = C64::from(1.0);
        assert!(check_exact_unitarity(&rho, &[&m], &m0).passes);
    }

    #[test]
    fn shift_generator_breaks_invariance() {
        let m = ops::diag(&[-1.0, 0.0, 1.0]);
        let rho = DensityMatrix::new(ops::projector(3, 1)).unwrap();
        let shift = ops::position(3, 1.0);
        let w = check_exact_unitarity(&rho, &[&m], &shift);
        assert!(!w.passes);
        assert!(w.invariance_deviation > 0.1 && w.support_deviation < 1e-12);
        assert!(w.violated_condition().unwrap().contains("leaves"));
    }

    #[test]
    fn mixed_support_breaks_condition_one_and_purity() {
        let m = ops::diag(&[1.0, -1.0]);
        let rho_m = ops::diag(&[0.9, 0.1]);
        let w = check_exact_unitarity(&DensityMatrix::new(rho_m.clone()).unwrap(), &[&m], &CMat::zeros(2, 2));
        assert!(!w.passes && w.support_deviation > 0.1);
        let c = CycleSpec::single(
            ops::pauli_x() * C64::from(0.5),
            ops::pauli_z(),
            PreparationFamily::explicit(rho_m),
            AncillaOperator::Explicit(m),
            AncillaOperator::zero(2),
            CouplingSchedule::constant(1.0),
            1.0,
        )
        .unwrap();
        let tr = evolve(&qubit_state(), &c, 10.0, 100).unwrap();
        assert!(purity(tr.final_state()) < 1.0 - 1e-6);
    }

    fn gaussian_cycle(mean: TauLaw, var: TauLaw, schedule: CouplingSchedule) -> CycleSpec {
        CycleSpec::single(
            CMat::zeros(2, 2),
            ops::pauli_z(),
            PreparationFamily::moment_gaussian(mean, var, GridSpec::default()),
            AncillaOperator::GridValue,
            AncillaOperator::zero(64),
            schedule,
            1.0,
        )
        .unwrap()
    }

    const SWEEP: [f64; 3] = [0.1, 0.01, 0.001];

    #[test]
    fn weak_regime_with_fixed_moments_is_effectively_unitary() {
        let c = gaussian_cycle(TauLaw::constant(0.3), TauLaw::constant(0.5), CouplingSchedule::constant(1.0));
        let rep = classify_regime(&c, &SWEEP, 6).unwrap();
        assert_eq!(rep.regime, Regime::EffectiveUnitary);
        assert_eq!(rep.k_max, 6);
    }

    #[test]
    fn strong_regime_with_scaled_gaussian_is_finite_decoherence() {
        let (xi, gamma) = (0.4, 0.8);
        let c = gaussian_cycle(
            TauLaw::power(xi, 1.0),
            TauLaw::new(vec![(gamma, 1.0), (-xi * xi, 2.0)]),
            CouplingSchedule::strong(1.0),
        );
        let rep = classify_regime(&c, &SWEEP, 6).unwrap();
        assert_eq!(rep.regime, Regime::FiniteDecoherence);
        let k2 = rep.conditions.iter().find(|c| c.k == 2).unwrap();
        assert!((k2.limit - gamma).abs() < 1e-6);
    }

    #[test]
    fn strong_regime_with_fixed_moments_is_zeno() {
        let c = gaussian_cycle(TauLaw::constant(0.0), TauLaw::constant(1.0), CouplingSchedule::strong(1.0));
        assert_eq!(classify_regime(&c, &SWEEP, 6).unwrap().regime, Regime::Zeno);
    }

    #[test]
    fn eigenstate_cycle_is_exactly_unitary() {
        let m = ops::diag(&[2.0, -1.0]);
        let c = CycleSpec::single(
            ops::pauli_x(),
            ops::pauli_z(),
            PreparationFamily::eigenstate(m.clone(), 2.0),
            AncillaOperator::Explicit(m),
            AncillaOperator::zero(2),
            CouplingSchedule::strong(1.0),
            1.0,
        )
        .unwrap();
        assert_eq!(classify_regime(&c, &SWEEP, 4).unwrap().regime, Regime::ExactUnitary);
    }
}
