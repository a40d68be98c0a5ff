//! Analytic side of the model: regimes, master equations, Zeno analytics and
//! generator fitting.

mod fit;
mod master;
mod regime;
mod zeno;

pub use fit::{fit_generator, probe_states, Candidate, GeneratorFit};
pub use master::{
    build_master_equation, dissipator_action, feedback_action, hamiltonian_action,
    integrate_master, Dissipator, FeedbackTerm, MasterEquationSpec,
};
pub use regime::{
    check_cycle_unitarity, check_exact_unitarity, classify_regime, MomentCondition, Regime,
    RegimeReport, UnitarityWitness,
};
pub use zeno::{gaussian_zeno_curve, gaussian_zeno_first_order, zeno_decay_curve, zeno_factor, zeno_rate};
