//! Joint-space Hamiltonians and sub-step propagators.
//!
//! The joint space is system ⊗ ancilla₀ ⊗ ancilla₁ ⊗ … in that order.

use crate::error::{Error, Result};
use crate::linalg::{kron_mat, unitary_propagator, CMat, TensorLayout, C64};
use crate::model::{CouplingSchedule, RealizedCycle};

pub fn joint_layout(r: &RealizedCycle) -> TensorLayout {
    let mut dims = vec![r.system_dim()];
    dims.extend(r.ancilla_dims());
    TensorLayout::new(dims).expect("realized dimensions are positive")
}

/// Identity-padded embedding of `m` on ancilla `a` within the ancilla block.
pub fn embed_ancilla(m: &CMat, a: usize, dims: &[usize]) -> CMat {
    let mut acc = CMat::identity(1, 1);
    for (k, &d) in dims.iter().enumerate() {
        acc = if k == a {
            kron_mat(&acc, m)
        } else {
            kron_mat(&acc, &CMat::identity(d, d))
        };
    }
    acc
}

/// S₀⊗I + I⊗ΣM₀ on the joint space.
pub fn free_hamiltonian(r: &RealizedCycle) -> CMat {
    let dims = r.ancilla_dims();
    let da: usize = dims.iter().product();
    let ds = r.system_dim();
    let mut h = kron_mat(&r.s0, &CMat::identity(da, da));
    for (a, m0) in r.m0.iter().enumerate() {
        h += kron_mat(&CMat::identity(ds, ds), &embed_ancilla(m0, a, &dims));
    }
    h
}

/// Σ cᵢ Sᵢ⊗Mᵢ over the terms of `substep`, with cᵢ = `coupling(term index)`.
pub fn interaction(r: &RealizedCycle, substep: usize, coupling: impl Fn(usize) -> f64) -> CMat {
    let dims = r.ancilla_dims();
    let da: usize = dims.iter().product();
    let d = r.system_dim() * da;
    let mut h = CMat::zeros(d, d);
    for (i, t) in r.terms.iter().enumerate() {
        if t.substep == substep {
            h += kron_mat(&t.s, &embed_ancilla(&t.m, t.ancilla, &dims)) * C64::from(coupling(i));
        }
    }
    h
}

/// Mean-value sub-step propagator exp(−iτ′(H₀ + Σḡᵢ Sᵢ⊗Mᵢ)/ħ).
pub fn substep_unitary(r: &RealizedCycle, substep: usize) -> CMat {
    let h = free_hamiltonian(r) + interaction(r, substep, |i| r.terms[i].g);
    unitary_propagator(&h, r.tau_sub, r.hbar)
}

/// Ordered product of K piecewise-constant exponentials, each slice using
/// the exact slice average of g(t).
pub fn stepped_substep_unitary(r: &RealizedCycle, substep: usize, slices: usize) -> Result<CMat> {
    if slices < 2 {
        return Err(Error::InvalidArgument("stepped propagator needs K ≥ 2 slices".into()));
    }
    let h0 = free_hamiltonian(r);
    let dt = r.tau_sub / slices as f64;
    let mut u = CMat::identity(h0.nrows(), h0.ncols());
    for k in 0..slices {
        let (t0, t1) = (k as f64 * dt, (k + 1) as f64 * dt);
        let h = &h0
            + interaction(r, substep, |i| {
                r.terms[i].schedule.slice_mean(t0, t1, r.tau_sub)
            });
        u = unitary_propagator(&h, dt, r.hbar) * u;
    }
    Ok(u)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Propagator {
    MeanValue,
    Stepped { slices: usize },
}

/// Full cycle unitary U_p ⋯ U_1.
pub fn cycle_unitary(r: &RealizedCycle, propagator: Propagator) -> Result<CMat> {
    let mut u: Option<CMat> = None;
    for k in 0..r.n_substeps {
        let uk = match propagator {
            Propagator::MeanValue => substep_unitary(r, k),
            Propagator::Stepped { slices } => stepped_substep_unitary(r, k, slices)?,
        };
        u = Some(match u {
            None => uk,
            Some(prev) => uk * prev,
        });
    }
    Ok(u.expect("cycles have at least one sub-step"))
}

/// J = ∫₀^τ′dt₁∫₀^{t₁}dt₂ (g(t₂) − g(t₁)) by the midpoint rule on `n` cells.
/// The second Magnus term of a sub-step is −(J/2ħ²)[H₀, H_I].
pub fn magnus_weight(schedule: &CouplingSchedule, tau_sub: f64, n: usize) -> f64 {
    let h = tau_sub / n as f64;
    let g: Vec<f64> = (0..n).map(|k| schedule.at((k as f64 + 0.5) * h, tau_sub)).collect();
    let mut acc = 0.0;
    let mut prefix = 0.0;
    for (k, &g1) in g.iter().enumerate() {
        // inner integral over t₂ < t₁, including the half cell at t₁
        let inner = prefix + 0.5 * h * g1 - (k as f64 + 0.5) * h * g1;
        acc += inner * h;
        prefix += g1 * h;
    }
    acc
}
