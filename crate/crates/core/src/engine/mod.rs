//! Exact repeated-collision dynamics.

mod channel;
mod generator;
mod propagator;

pub use channel::{joint_ancilla_state, kraus_by_outcome, purification_columns, Channel, ChannelRepr};
pub use generator::{extrapolate_samples, generator_estimate, generator_sample, GeneratorEstimate};
pub use propagator::{
    cycle_unitary, embed_ancilla, free_hamiltonian, interaction, joint_layout, magnus_weight,
    stepped_substep_unitary, substep_unitary, Propagator,
};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{hermitian_part, CMat, DensityMatrix, C64};
use crate::model::CycleSpec;
use crate::tolerance;

/// System states after every collision.
#[derive(Debug, Clone, PartialEq)]
pub struct EvolutionTrace {
    pub times: Vec<f64>,
    pub states: Vec<DensityMatrix>,
    pub tau: f64,
    pub n: usize,
}

impl EvolutionTrace {
    pub fn final_state(&self) -> &DensityMatrix {
        self.states.last().expect("traces hold the initial state")
    }

    /// ⟨O⟩(t) series.
    pub fn observable(&self, op: &CMat) -> Vec<C64> {
        self.states.iter().map(|s| s.expectation(op)).collect()
    }

    /// ρ_ij(t) series.
    pub fn element(&self, i: usize, j: usize) -> Vec<C64> {
        self.states.iter().map(|s| s.matrix()[(i, j)]).collect()
    }
}

fn check_dim(rho: &DensityMatrix, cycle: &CycleSpec) -> Result<()> {
    if rho.dim() != cycle.system_dim() {
        return Err(Error::DimensionMismatch {
            context: "system state vs cycle layout".into(),
            expected: cycle.system_dim(),
            found: rho.dim(),
        });
    }
    Ok(())
}

/// One application of the collision channel at cycle duration τ.
pub fn collide_once(rho: &DensityMatrix, cycle: &CycleSpec, tau: f64) -> Result<DensityMatrix> {
    check_dim(rho, cycle)?;
    let r = cycle.realize(tau)?;
    let ch = Channel::build(&r, Propagator::MeanValue)?;
    DensityMatrix::new(hermitian_part(&ch.apply(rho.matrix())))
}

/// Iterates a prebuilt channel n times, validating every state.
pub fn evolve_channel(rho0: &DensityMatrix, channel: &Channel, tau: f64, n: usize) -> Result<EvolutionTrace> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be at least 1".into()));
    }
    if channel.dim() != rho0.dim() {
        return Err(Error::DimensionMismatch {
            context: "system state vs channel".into(),
            expected: channel.dim(),
            found: rho0.dim(),
        });
    }
    let mut states = Vec::with_capacity(n + 1);
    states.push(rho0.clone());
    let mut rho = rho0.matrix().clone();
    for k in 1..=n {
        rho = hermitian_part(&channel.apply(&rho));
        let tol = tolerance::STRUCTURAL.max(k as f64 * tolerance::TRACE_DRIFT_PER_STEP);
        states.push(DensityMatrix::with_tolerance(rho.clone(), tol)?);
    }
    Ok(EvolutionTrace {
        times: (0..=n).map(|k| k as f64 * tau).collect(),
        states,
        tau,
        n,
    })
}

/// n collisions at τ = T/n. The channel is built once, so equal τ gives
/// bit-identical steps.
pub fn evolve(rho0: &DensityMatrix, cycle: &CycleSpec, t: f64, n: usize) -> Result<EvolutionTrace> {
    evolve_with(rho0, cycle, t, n, Propagator::MeanValue)
}

pub fn evolve_with(
    rho0: &DensityMatrix,
    cycle: &CycleSpec,
    t: f64,
    n: usize,
    propagator: Propagator,
) -> Result<EvolutionTrace> {
    check_dim(rho0, cycle)?;
    if n == 0 || !(t > 0.0) {
        return Err(Error::InvalidArgument("evolution needs n ≥ 1 and T > 0".into()));
    }
    let tau = t / n as f64;
    let r = cycle.realize(tau)?;
    let ch = Channel::build(&r, propagator)?;
    evolve_channel(rho0, &ch, tau, n)
}

/// Evolution of a bipartite system with two or more ancillae.
pub fn composite_evolve(rho0: &DensityMatrix, cycle: &CycleSpec, t: f64, n: usize) -> Result<EvolutionTrace> {
    if cycle.system_layout.len() < 2 || cycle.ancillas.len() < 2 {
        return Err(Error::InvalidArgument(
            "composite evolution needs at least two system factors and two ancillae".into(),
        ));
    }
    evolve(rho0, cycle, t, n)
}

/// Independent runs for each n, in parallel, returned in input order.
pub fn tau_sweep(rho0: &DensityMatrix, cycle: &CycleSpec, t: f64, ns: &[usize]) -> Result<Vec<EvolutionTrace>> {
    ns.par_iter().map(|&n| evolve(rho0, cycle, t, n)).collect()
}
