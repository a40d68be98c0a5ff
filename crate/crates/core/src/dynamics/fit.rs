//! Least-squares identification of generator coefficients from sampled ρ̇.

use nalgebra::{DMatrix, DVector};

use super::master::{dissipator_action, feedback_action, hamiltonian_action};
use crate::error::{Error, Result};
use crate::linalg::CMat;

/// A candidate generator term: its name and its action on ρ.
pub struct Candidate {
    pub name: String,
    action: Box<dyn Fn(&CMat) -> CMat + Send + Sync>,
}

impl Candidate {
    pub fn new(name: impl Into<String>, action: impl Fn(&CMat) -> CMat + Send + Sync + 'static) -> Self {
        Self {
            name: name.into(),
            action: Box::new(action),
        }
    }

    /// −(i/ħ)[A, ρ]
    pub fn hamiltonian(name: impl Into<String>, a: CMat, hbar: f64) -> Self {
        Self::new(name, move |rho| hamiltonian_action(&a, rho, hbar))
    }

    /// −(1/ħ²)[A,[B,ρ]]
    pub fn dissipator(name: impl Into<String>, a: CMat, b: CMat, hbar: f64) -> Self {
        Self::new(name, move |rho| dissipator_action(&a, &b, rho, hbar))
    }

    /// −(1/ħ²)([A,[B,ρ]] + [B,[A,ρ]])
    pub fn symmetric_dissipator(name: impl Into<String>, a: CMat, b: CMat, hbar: f64) -> Self {
        Self::new(name, move |rho| dissipator_action(&a, &b, rho, hbar) + dissipator_action(&b, &a, rho, hbar))
    }

    /// (i/ħ)[A, Bρ + ρB]
    pub fn feedback(name: impl Into<String>, a: CMat, b: CMat, hbar: f64) -> Self {
        Self::new(name, move |rho| feedback_action(&a, &b, rho, hbar))
    }

    pub fn apply(&self, rho: &CMat) -> CMat {
        (self.action)(rho)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorFit {
    pub coefficients: Vec<(String, f64)>,
    /// ‖residual‖ / ‖target‖ over all samples
    pub relative_residual: f64,
}

impl GeneratorFit {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.coefficients.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }
}

/// Real coefficients c minimizing Σ‖ρ̇ − Σ cₖ Lₖ(ρ)‖² over the (ρ, ρ̇) samples.
pub fn fit_generator(samples: &[(CMat, CMat)], candidates: &[Candidate]) -> Result<GeneratorFit> {
    if samples.is_empty() || candidates.is_empty() {
        return Err(Error::InvalidArgument("fit needs samples and candidate terms".into()));
    }
    let per = samples[0].0.len();
    let rows = 2 * per * samples.len();
    let mut a = DMatrix::<f64>::zeros(rows, candidates.len());
    let mut b = DVector::<f64>::zeros(rows);
    for (s, (rho, rhodot)) in samples.iter().enumerate() {
        let base = 2 * per * s;
        for (k, z) in rhodot.iter().enumerate() {
            b[base + 2 * k] = z.re;
            b[base + 2 * k + 1] = z.im;
        }
        for (c, cand) in candidates.iter().enumerate() {
            let act = cand.apply(rho);
            for (k, z) in act.iter().enumerate() {
                a[(base + 2 * k, c)] = z.re;
                a[(base + 2 * k + 1, c)] = z.im;
            }
        }
    }
    let x = a
        .clone()
        .svd(true, true)
        .solve(&b, 1e-13)
        .map_err(|e| Error::InvalidArgument(format!("least squares failed: {e}")))?;
    let resid = (&a * &x - &b).norm();
    let norm = b.norm();
    Ok(GeneratorFit {
        coefficients: candidates.iter().map(|c| c.name.clone()).zip(x.iter().cloned()).collect(),
        relative_residual: if norm > 0.0 { resid / norm } else { resid },
    })
}

/// Deterministic probe states: random-looking mixed states of dimension d.
pub fn probe_states(dim: usize, count: usize) -> Vec<CMat> {
    use crate::linalg::C64;
    (0..count)
        .map(|s| {
            let a = CMat::from_fn(dim, dim, |i, j| {
                let u = (s * 31 + i * 7 + j * 13) as f64;
                C64::new((u * 0.37 + 0.1).sin(), (u * 0.71 + 0.3).cos())
            });
            let r = &a * a.adjoint();
            let tr = r.trace();
            r / tr
        })
        .collect()
}
