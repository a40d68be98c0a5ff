//! The single-collision channel ρ ↦ Tr_M{U(ρ⊗ρ_m)U†} in whichever
//! representation is cheapest to apply.

use super::propagator::{cycle_unitary, embed_ancilla, Propagator};
use crate::error::{Error, Result};
use crate::linalg::{
    commutator, hermitian_eigen, kron_mat, max_abs, unitary_propagator, unvectorize, vectorize,
    CMat, C64,
};
use crate::model::RealizedCycle;
use crate::tolerance;

#[derive(Debug, Clone)]
pub enum ChannelRepr {
    Kraus(Vec<CMat>),
    /// Column-stacking superoperator: vec(ρ′) = S·vec(ρ).
    Superoperator(CMat),
    /// ρ′ = Q (F ∘ Q†ρQ) Q† when every system operator commutes.
    Schur { basis: CMat, factors: CMat },
}

#[derive(Debug, Clone)]
pub struct Channel {
    dim: usize,
    repr: ChannelRepr,
}

/// √λ_a ψ_a columns for the nonzero spectrum of a state.
pub fn purification_columns(rho: &CMat) -> Vec<(f64, crate::linalg::CVec)> {
    let (vals, vecs) = hermitian_eigen(rho);
    vals.iter()
        .enumerate()
        .filter(|(_, &l)| l > tolerance::NEGLIGIBLE_WEIGHT)
        .map(|(i, &l)| (l, vecs.column(i).into_owned()))
        .collect()
}

/// Product state of all ancillae in declaration order.
pub fn joint_ancilla_state(r: &RealizedCycle) -> CMat {
    r.ancillas
        .iter()
        .fold(CMat::identity(1, 1), |acc, a| kron_mat(&acc, a.state.matrix()))
}

/// Kraus operators K_{b,a} = √λ_a (I⊗⟨b|) U (I⊗|ψ_a⟩) grouped by output
/// basis vector b. `basis` columns define the ancilla output basis; the
/// computational basis is used when absent.
pub fn kraus_by_outcome(
    u: &CMat,
    ancilla_state: &CMat,
    system_dim: usize,
    basis: Option<&CMat>,
) -> Vec<Vec<CMat>> {
    let da = ancilla_state.nrows();
    let purif = purification_columns(ancilla_state);
    let mut out = vec![Vec::with_capacity(purif.len()); da];
    for (lambda, psi) in &purif {
        // U (I ⊗ |ψ⟩): joint × system
        let mut embed = CMat::zeros(system_dim * da, system_dim);
        for s in 0..system_dim {
            for k in 0..da {
                embed[(s * da + k, s)] = psi[k];
            }
        }
        let mut block = u * embed * C64::from(lambda.sqrt());
        if let Some(b) = basis {
            // rotate ancilla index into the output basis: rows (s, k) → (s, b)
            let bd = b.adjoint();
            for s in 0..system_dim {
                let rows = block.rows(s * da, da).into_owned();
                block.rows_mut(s * da, da).copy_from(&(&bd * rows));
            }
        }
        for (b, slot) in out.iter_mut().enumerate() {
            let k = CMat::from_fn(system_dim, system_dim, |s, c| block[(s * da + b, c)]);
            slot.push(k);
        }
    }
    out
}

impl Channel {
    pub fn from_kraus(dim: usize, kraus: Vec<CMat>) -> Self {
        // Kraus application costs ~2·K·d³, a superoperator d⁴
        if 2 * kraus.len() > dim {
            let mut s = CMat::zeros(dim * dim, dim * dim);
            for k in &kraus {
                s += kron_mat(&k.conjugate(), k);
            }
            Self {
                dim,
                repr: ChannelRepr::Superoperator(s),
            }
        } else {
            Self {
                dim,
                repr: ChannelRepr::Kraus(kraus),
            }
        }
    }

    /// Builds the channel for a realized cycle. With mean-value propagation
    /// and mutually commuting system operators the cheaper joint-eigenbasis
    /// form is used.
    pub fn build(r: &RealizedCycle, propagator: Propagator) -> Result<Self> {
        if propagator == Propagator::MeanValue {
            if let Some(ch) = Self::try_schur(r)? {
                return Ok(ch);
            }
        }
        Self::build_general(r, propagator)
    }

    /// Kraus or superoperator form from the full joint unitary.
    pub fn build_general(r: &RealizedCycle, propagator: Propagator) -> Result<Self> {
        let u = cycle_unitary(r, propagator)?;
        let rho_a = joint_ancilla_state(r);
        let kraus: Vec<CMat> = kraus_by_outcome(&u, &rho_a, r.system_dim(), None)
            .into_iter()
            .flatten()
            .collect();
        Ok(Self::from_kraus(r.system_dim(), kraus))
    }

    /// Joint-eigenbasis construction; `None` when the system operators do
    /// not commute.
    pub fn try_schur(r: &RealizedCycle) -> Result<Option<Self>> {
        let mut ops: Vec<&CMat> = vec![&r.s0];
        ops.extend(r.terms.iter().map(|t| &t.s));
        let scale = ops.iter().map(|m| max_abs(m)).fold(1.0, f64::max);
        for i in 0..ops.len() {
            for j in i + 1..ops.len() {
                if max_abs(&commutator(ops[i], ops[j])) > tolerance::STRUCTURAL * scale * scale {
                    return Ok(None);
                }
            }
        }
        let d = r.system_dim();
        // a generic combination separates the joint eigenspaces
        let mut combo = CMat::zeros(d, d);
        for (k, m) in ops.iter().enumerate() {
            let c = 1.0 / (k as f64 + std::f64::consts::SQRT_2) + 0.1 * (k as f64).sqrt();
            combo += *m * C64::from(c);
        }
        let (_, q) = hermitian_eigen(&combo);
        let mut diag = Vec::with_capacity(ops.len());
        for m in &ops {
            let mq = *m * &q;
            let vals: Vec<f64> = (0..d).map(|a| (q.column(a).adjoint() * mq.column(a))[0].re).collect();
            let resid = (0..d)
                .map(|a| {
                    (mq.column(a) - q.column(a) * C64::from(vals[a]))
                        .iter()
                        .map(|z| z.norm())
                        .fold(0.0, f64::max)
                })
                .fold(0.0, f64::max);
            if resid > 1e-9 * scale {
                return Ok(None);
            }
            diag.push(vals);
        }
        let dims = r.ancilla_dims();
        let da: usize = dims.iter().product();
        let mut h_free = CMat::zeros(da, da);
        for (a, m0) in r.m0.iter().enumerate() {
            h_free += embed_ancilla(m0, a, &dims);
        }
        let embedded: Vec<CMat> = r
            .terms
            .iter()
            .map(|t| embed_ancilla(&t.m, t.ancilla, &dims))
            .collect();
        let rho_a = joint_ancilla_state(r);
        let purif = purification_columns(&rho_a);
        let root = CMat::from_columns(
            &purif
                .iter()
                .map(|(l, v)| v * C64::from(l.sqrt()))
                .collect::<Vec<_>>(),
        );
        // W_a = V_a·√ρ_m, cached by eigenvalue signature
        let mut cache: Vec<(Vec<f64>, CMat)> = Vec::new();
        let mut w: Vec<usize> = Vec::with_capacity(d);
        for a in 0..d {
            let sig: Vec<f64> = diag.iter().map(|v| v[a]).collect();
            if let Some(pos) = cache.iter().position(|(s, _)| {
                s.iter().zip(&sig).all(|(x, y)| (x - y).abs() <= 1e-13 * scale)
            }) {
                w.push(pos);
                continue;
            }
            let mut v = CMat::identity(da, da);
            for k in 0..r.n_substeps {
                let mut h = &h_free + CMat::identity(da, da) * C64::from(sig[0]);
                for (i, t) in r.terms.iter().enumerate() {
                    if t.substep == k {
                        h += &embedded[i] * C64::from(t.g * sig[i + 1]);
                    }
                }
                v = unitary_propagator(&h, r.tau_sub, r.hbar) * v;
            }
            cache.push((sig, v * &root));
            w.push(cache.len() - 1);
        }
        let mut factors = CMat::zeros(d, d);
        let nc = cache.len();
        let mut overlap = CMat::zeros(nc, nc);
        for x in 0..nc {
            for y in 0..nc {
                overlap[(x, y)] = cache[y]
                    .1
                    .iter()
                    .zip(cache[x].1.iter())
                    .map(|(b, a)| a * b.conj())
                    .sum();
            }
        }
        for a in 0..d {
            for b in 0..d {
                factors[(a, b)] = overlap[(w[a], w[b])];
            }
        }
        if factors.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite("channel factors".into()));
        }
        Ok(Some(Self {
            dim: d,
            repr: ChannelRepr::Schur { basis: q, factors },
        }))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn repr(&self) -> &ChannelRepr {
        &self.repr
    }

    pub fn is_schur(&self) -> bool {
        matches!(self.repr, ChannelRepr::Schur { .. })
    }

    pub fn apply(&self, rho: &CMat) -> CMat {
        match &self.repr {
            ChannelRepr::Kraus(ks) => {
                let mut out = CMat::zeros(self.dim, self.dim);
                for k in ks {
                    out += k * rho * k.adjoint();
                }
                out
            }
            ChannelRepr::Superoperator(s) => unvectorize(&(s * vectorize(rho)), self.dim),
            ChannelRepr::Schur { basis, factors } => {
                let t = basis.adjoint() * rho * basis;
                basis * t.component_mul(factors) * basis.adjoint()
            }
        }
    }
}
