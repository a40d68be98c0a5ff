//! Conditional dynamics: each collision ends with a projective readout of the
//! ancillae in a pointer basis, and the system is updated on the outcome.
//!
//! The update is the exact projection of U(ρ_c ⊗ ρ_m)U† onto the outcome, so
//! conditional states stay normalized and positive at any τ. The expanded
//! stochastic form is available separately as a small-τ cross-check.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::engine::{cycle_unitary, joint_ancilla_state, kraus_by_outcome, EvolutionTrace, Propagator};
use crate::error::{Error, Result};
use crate::linalg::{
    anticommutator, commutator, frobenius, hermitian_eigen, hermitian_part, max_abs, CMat, DensityMatrix, C64, I,
    ZERO,
};
use crate::model::{AncillaFrame, AncillaOperator, CycleSpec, RealizedCycle};
use crate::tolerance;

/// Readout basis of one ancilla.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum PointerBasis {
    /// Complementary to the coupling operator: x̂ for M = p̂ (and p̂ for x̂) on
    /// an oscillator, otherwise the discrete Fourier transform of M's
    /// eigenbasis.
    #[default]
    Conjugate,
    /// Eigenbasis of the given operator.
    Eigen(AncillaOperator),
    /// Columns are the basis vectors.
    Explicit(CMat),
}

/// Classical feedback H_FB = ḡ₂ χ̇ S₂ applied for one cycle after each readout.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackSpec {
    pub s2: CMat,
    pub g2: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FilterSpec {
    /// One entry per ancilla; missing entries use [`PointerBasis::Conjugate`].
    pub pointer: Vec<PointerBasis>,
    /// Term whose increments and current are recorded.
    pub record_term: usize,
    /// Normalization constant of the increment; defaults to τ′ḡ²⟨M²⟩.
    pub gamma: Option<f64>,
    pub feedback: Option<FeedbackSpec>,
}

/// Increment of one readout, already multiplied by √Γ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseIncrement {
    pub dw: C64,
    /// τ′ḡ⟨−(i/2)[M, ρ̃_m]⟩ₙ
    pub re: f64,
    /// τ′ḡ⟨½{M, ρ̃_m}⟩ₙ
    pub im: f64,
}

impl NoiseIncrement {
    fn from_ratio(z: C64, tg: f64) -> Self {
        // ⟨Mρ̃⟩ₙ = z: the commutator part is 2i·Im z, the anticommutator 2·Re z
        let (re, im) = (tg * z.im, tg * z.re);
        Self {
            dw: C64::new(re, im),
            re,
            im,
        }
    }

    pub const ZERO: Self = Self {
        dw: C64::new(0.0, 0.0),
        re: 0.0,
        im: 0.0,
    };
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementRecord {
    pub outcomes: Vec<usize>,
    pub probabilities: Vec<f64>,
    pub basis: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalTrajectory {
    pub times: Vec<f64>,
    pub record: MeasurementRecord,
    pub states: Vec<DensityMatrix>,
    pub increments: Vec<NoiseIncrement>,
    /// χ̇ per readout.
    pub current: Vec<f64>,
    /// ṁ_c per readout when [M₀, m̂] = f·ḡM holds for the pointer operator.
    pub input_output: Option<Vec<C64>>,
    pub seed: u64,
    pub stream: u64,
}

/// Everything about one readout that does not depend on the system state.
#[derive(Debug, Clone)]
pub struct ConditionalModel {
    tau: f64,
    tau_sub: f64,
    hbar: f64,
    s0: CMat,
    /// columns: joint pointer basis
    basis: CMat,
    basis_label: String,
    kraus: Vec<Vec<CMat>>,
    effects: Vec<CMat>,
    prior: Vec<f64>,
    increments: Vec<NoiseIncrement>,
    corrections: Vec<(C64, C64)>,
    record_s: CMat,
    record_g: f64,
    record_m2_spread: Vec<f64>,
    gamma: f64,
    io_factor: Option<C64>,
    feedback: Option<(Vec<f64>, CMat, f64)>,
}

fn dft(d: usize) -> CMat {
    let n = d as f64;
    CMat::from_fn(d, d, |j, k| {
        C64::from_polar(1.0 / n.sqrt(), 2.0 * std::f64::consts::PI * (j * k) as f64 / n)
    })
}

fn strip_scale(op: &AncillaOperator) -> &AncillaOperator {
    match op {
        AncillaOperator::Scaled(_, inner) => strip_scale(inner),
        other => other,
    }
}

/// Pointer basis and, when it is an operator eigenbasis, that operator.
fn resolve_basis(
    choice: &PointerBasis,
    frame: &AncillaFrame,
    m_op: Option<(&AncillaOperator, &CMat)>,
) -> Result<(CMat, Option<CMat>, String)> {
    let d = frame.dim();
    match choice {
        PointerBasis::Explicit(b) => {
            if b.nrows() != d || b.ncols() != d {
                return Err(Error::DimensionMismatch {
                    context: "pointer basis".into(),
                    expected: d,
                    found: b.nrows(),
                });
            }
            let dev = max_abs(&(b.adjoint() * b - CMat::identity(d, d)));
            if dev > tolerance::STRUCTURAL {
                return Err(Error::InvalidArgument(format!("pointer basis is not orthonormal ({dev:.2e})")));
            }
            Ok((b.clone(), None, "explicit".into()))
        }
        PointerBasis::Eigen(op) => {
            let m = frame.operator(op)?;
            let (_, v) = hermitian_eigen(&m);
            Ok((v, Some(m), "operator eigenbasis".into()))
        }
        PointerBasis::Conjugate => {
            let Some((sym, m)) = m_op else {
                return Ok((CMat::identity(d, d), None, "computational".into()));
            };
            if let AncillaFrame::Oscillator { .. } = frame {
                let conj = match strip_scale(sym) {
                    AncillaOperator::Momentum => Some((AncillaOperator::Position, "position")),
                    AncillaOperator::Position => Some((AncillaOperator::Momentum, "momentum")),
                    _ => None,
                };
                if let Some((c, name)) = conj {
                    let op = frame.operator(&c)?;
                    let (_, v) = hermitian_eigen(&op);
                    return Ok((v, Some(op), name.into()));
                }
            }
            let (_, q) = hermitian_eigen(m);
            Ok((q * dft(d), None, "Fourier-conjugate".into()))
        }
    }
}

impl ConditionalModel {
    pub fn new(cycle: &CycleSpec, tau: f64, spec: &FilterSpec) -> Result<Self> {
        let r = cycle.realize(tau)?;
        if spec.record_term >= r.terms.len() {
            return Err(Error::InvalidArgument(format!(
                "record term {} out of range ({} terms)",
                spec.record_term,
                r.terms.len()
            )));
        }
        let dims = r.ancilla_dims();
        let symbolic: Vec<(usize, &AncillaOperator)> = cycle.terms().map(|(_, t)| (t.ancilla, &t.m_op)).collect();
        let mut bases = Vec::with_capacity(dims.len());
        let mut pointer_ops = Vec::with_capacity(dims.len());
        let mut labels = Vec::new();
        for (a, anc) in r.ancillas.iter().enumerate() {
            let first = r.terms.iter().zip(&symbolic).find(|(t, _)| t.ancilla == a);
            let m_op = first.map(|(t, (_, sym))| (*sym, &t.m));
            let choice = spec.pointer.get(a).cloned().unwrap_or_default();
            let (b, op, label) = resolve_basis(&choice, &anc.frame, m_op)?;
            bases.push(b);
            pointer_ops.push(op);
            labels.push(label);
        }
        let basis = bases
            .iter()
            .fold(CMat::identity(1, 1), |acc, b| crate::linalg::kron_mat(&acc, b));
        let u = cycle_unitary(&r, Propagator::MeanValue)?;
        let ds = r.system_dim();
        let kraus = kraus_by_outcome(&u, &joint_ancilla_state(&r), ds, Some(&basis));
        let effects: Vec<CMat> = kraus
            .iter()
            .map(|ks| ks.iter().fold(CMat::zeros(ds, ds), |acc, k| acc + k.adjoint() * k))
            .collect();

        let rec = &r.terms[spec.record_term];
        let a = rec.ancilla;
        let stride: usize = dims[a + 1..].iter().product();
        let rho_m = r.ancillas[a].state.matrix();
        let m = &rec.m;
        let tg = r.tau_sub * rec.g;
        let m2 = m * m;
        let n_out = basis.ncols();
        let mut prior = Vec::with_capacity(n_out);
        let mut increments = Vec::with_capacity(n_out);
        let mut corrections = Vec::with_capacity(n_out);
        let mut spread = Vec::with_capacity(n_out);
        let joint_state = joint_ancilla_state(&r);
        for b in 0..n_out {
            let jx = basis.column(b);
            prior.push((jx.adjoint() * &joint_state * jx)[(0, 0)].re);
            let x = bases[a].column((b / stride) % dims[a]);
            let px = (x.adjoint() * rho_m * x)[(0, 0)].re;
            if px > 1e-300 {
                let ev = |op: &CMat| (x.adjoint() * op * x)[(0, 0)] / px;
                let mrm = ev(&(m * rho_m * m));
                increments.push(NoiseIncrement::from_ratio(ev(&(m * rho_m)), tg));
                corrections.push((ev(&(&m2 * rho_m)) - mrm, ev(&(rho_m * &m2)) - mrm));
                spread.push(tg * tg * mrm.re);
            } else {
                increments.push(NoiseIncrement::ZERO);
                corrections.push((ZERO, ZERO));
                spread.push(0.0);
            }
        }
        let gamma = match spec.gamma {
            Some(g) => g,
            None => r.tau_sub * rec.g * rec.g * r.ancillas[a].moment(&AncillaOperator::Explicit(m.clone()), 2)?,
        };
        let io_factor = pointer_ops[a].as_ref().and_then(|mhat| {
            let c = commutator(&r.m0[a], mhat);
            let gm = m * C64::from(rec.g);
            let denom = gm.iter().map(|z| z.norm_sqr()).sum::<f64>();
            if denom == 0.0 {
                return None;
            }
            let f = gm.iter().zip(c.iter()).map(|(x, y)| x.conj() * y).sum::<C64>() / denom;
            let resid = frobenius(&(&c - &gm * f));
            (resid <= tolerance::EIGENSPACE * frobenius(&c).max(1.0)).then_some(f)
        });
        let feedback = match &spec.feedback {
            Some(fb) => {
                if fb.s2.nrows() != ds {
                    return Err(Error::DimensionMismatch {
                        context: "feedback operator".into(),
                        expected: ds,
                        found: fb.s2.nrows(),
                    });
                }
                let (vals, vecs) = hermitian_eigen(&fb.s2);
                Some((vals, vecs, fb.g2))
            }
            None => None,
        };
        Ok(Self {
            tau: r.tau,
            tau_sub: r.tau_sub,
            hbar: r.hbar,
            s0: r.s0.clone(),
            basis,
            basis_label: labels.join(" ⊗ "),
            kraus,
            effects,
            prior,
            increments,
            corrections,
            record_s: rec.s.clone(),
            record_g: rec.g,
            record_m2_spread: spread,
            gamma,
            io_factor,
            feedback,
        })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn n_outcomes(&self) -> usize {
        self.effects.len()
    }

    pub fn basis(&self) -> &CMat {
        &self.basis
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn io_factor(&self) -> Option<C64> {
        self.io_factor
    }

    /// ⟨x|ρ_m|x⟩ per outcome, i.e. the outcome distribution at zero coupling.
    pub fn prior(&self) -> &[f64] {
        &self.prior
    }

    pub fn increment(&self, outcome: usize) -> NoiseIncrement {
        self.increments[outcome]
    }

    /// (⟨M²ρ̃ − Mρ̃M⟩ₙ, ⟨ρ̃M² − Mρ̃M⟩ₙ) per outcome.
    pub fn correction_terms(&self) -> &[(C64, C64)] {
        &self.corrections
    }

    /// Σₙ ⟨ρ_m⟩ₙ Re dWₙ.
    pub fn prior_mean_increment(&self) -> f64 {
        self.prior.iter().zip(&self.increments).map(|(p, w)| p * w.re).sum()
    }

    /// Exact outcome probabilities Tr(Eₙρ).
    pub fn probabilities(&self, rho: &CMat) -> Vec<f64> {
        self.effects
            .iter()
            .map(|e| (e * rho).trace().re.max(0.0))
            .collect()
    }

    /// Unnormalized post-readout system state and its probability.
    pub fn conditional_collide(&self, rho: &CMat, outcome: usize) -> Result<(CMat, f64)> {
        let ks = self.kraus.get(outcome).ok_or_else(|| {
            Error::InvalidArgument(format!("outcome {outcome} out of range ({})", self.kraus.len()))
        })?;
        let out = ks.iter().fold(CMat::zeros(rho.nrows(), rho.ncols()), |acc, k| acc + k * rho * k.adjoint());
        let p = out.trace().re;
        if p <= tolerance::NEGLIGIBLE_WEIGHT {
            return Err(Error::ZeroProbability(outcome));
        }
        Ok((out, p))
    }

    /// χ̇ = ħ Re dW / (2Γτ): ⟨S⟩_c plus the innovation scaled by ħ/(2√Γ)/τ.
    pub fn current(&self, outcome: usize) -> f64 {
        if self.gamma > 0.0 {
            self.hbar * self.increments[outcome].re / (2.0 * self.gamma * self.tau)
        } else {
            0.0
        }
    }

    fn feedback_unitary(&self, chi: f64) -> Option<CMat> {
        self.feedback.as_ref().map(|(vals, vecs, g2)| {
            let phases = CMat::from_diagonal(&nalgebra::DVector::from_iterator(
                vals.len(),
                vals.iter().map(|l| C64::from_polar(1.0, -g2 * chi * self.tau * l / self.hbar)),
            ));
            vecs * phases * vecs.adjoint()
        })
    }

    /// One readout drawn from the exact outcome distribution.
    pub fn step(&self, rho: &CMat, rng: &mut impl Rng) -> Result<(CMat, usize, f64)> {
        let probs = self.probabilities(rho);
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-8 {
            return Err(Error::InvalidState(format!("outcome probabilities sum to {total}")));
        }
        let u = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut pick = None;
        for (b, &p) in probs.iter().enumerate() {
            if p <= tolerance::NEGLIGIBLE_WEIGHT {
                continue;
            }
            pick = Some(b);
            acc += p;
            if u < acc {
                break;
            }
        }
        let b = pick.ok_or(Error::ZeroProbability(0))?;
        let (unnorm, p) = self.conditional_collide(rho, b)?;
        let mut next = hermitian_part(&(unnorm / C64::from(p)));
        if let Some(v) = self.feedback_unitary(self.current(b)) {
            next = hermitian_part(&(&v * next * v.adjoint()));
        }
        Ok((next, b, p))
    }

    /// The expanded filter update ρ_c + dρ_c for one outcome, for a
    /// single-term cycle: free and mean-field commutator, double commutator
    /// weighted by τ²ḡ²⟨Mρ̃M⟩ₙ, innovation term and the state-dependent
    /// corrections. Normalization is expanded to first order in Re dW, so
    /// terms quadratic in Re dW are absent.
    pub fn expanded_update(&self, rho: &CMat, outcome: usize) -> CMat {
        let h = self.hbar;
        let s = &self.record_s;
        let w = self.increments[outcome];
        let (c1, c2) = self.corrections[outcome];
        let tg = self.tau_sub * self.record_g;
        let tr = |m: &CMat| m.trace();
        let sr = anticommutator(s, rho);
        let s2 = s * s;
        let mmm = self.record_m2_spread[outcome];
        // ⟨[M,[M,ρ̃]]⟩ₙ = c1 + c2
        let dcomm = c1 + c2;
        let mut d = commutator(&(&self.s0 * C64::from(self.tau) + s * C64::from(w.im)), rho) * (-I / h);
        d -= commutator(s, &commutator(s, rho)) * C64::from(mmm / (2.0 * h * h));
        d += (&sr - rho * tr(&sr)) * C64::from(w.re / h);
        d -= (&s2 * rho * c1 + rho * &s2 * c2 - rho * (dcomm * tr(&(&s2 * rho)))) * C64::from(tg * tg / (2.0 * h * h));
        rho + d
    }
}

/// ρ ← e^{−iH_FB τ/ħ} ρ e^{iH_FB τ/ħ} with H_FB = ḡ₂ χ̇ S₂.
pub fn feedback_step(rho: &DensityMatrix, chi: f64, fb: &FeedbackSpec, tau: f64, hbar: f64) -> Result<DensityMatrix> {
    if !chi.is_finite() {
        return Err(Error::NonFinite("measurement current".into()));
    }
    let u = crate::linalg::unitary_propagator(&fb.s2, fb.g2 * chi * tau, hbar);
    DensityMatrix::new(hermitian_part(&(&u * rho.matrix() * u.adjoint())))
}

/// n readouts from ρ₀; the random stream is ChaCha8 keyed by (seed, stream).
pub fn sample_trajectory(
    model: &ConditionalModel,
    rho0: &DensityMatrix,
    n: usize,
    seed: u64,
    stream: u64,
) -> Result<ConditionalTrajectory> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let mut rho = rho0.matrix().clone();
    let mut states = Vec::with_capacity(n + 1);
    states.push(rho0.clone());
    let mut outcomes = Vec::with_capacity(n);
    let mut probabilities = Vec::with_capacity(n);
    let mut increments = Vec::with_capacity(n);
    let mut current = Vec::with_capacity(n);
    let mut io = model.io_factor.map(|_| Vec::with_capacity(n));
    for k in 0..n {
        let s_mean = (&model.record_s * &rho).trace().re;
        let (next, b, p) = model.step(&rho, &mut rng)?;
        let w = model.increments[b];
        if let (Some(f), Some(v)) = (model.io_factor, io.as_mut()) {
            v.push(C64::from(s_mean) - f * w.dw / (model.hbar * model.tau));
        }
        outcomes.push(b);
        probabilities.push(p);
        increments.push(w);
        current.push(model.current(b));
        rho = next;
        states.push(DensityMatrix::with_tolerance(
            rho.clone(),
            (tolerance::STRUCTURAL).max((k + 1) as f64 * 1e-12),
        )?);
    }
    Ok(ConditionalTrajectory {
        times: (0..=n).map(|k| k as f64 * model.tau).collect(),
        record: MeasurementRecord {
            outcomes,
            probabilities,
            basis: model.basis_label.clone(),
        },
        states,
        increments,
        current,
        input_output: io,
        seed,
        stream,
    })
}

/// Trajectories 0..n_traj in parallel, each on its own stream.
pub fn sample_ensemble(
    model: &ConditionalModel,
    rho0: &DensityMatrix,
    n: usize,
    n_traj: usize,
    seed: u64,
) -> Result<Vec<ConditionalTrajectory>> {
    (0..n_traj as u64)
        .into_par_iter()
        .map(|s| sample_trajectory(model, rho0, n, seed, s))
        .collect()
}

/// Pointwise mean of an ensemble with its Monte Carlo spread.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleAverage {
    pub trace: EvolutionTrace,
    /// σ̂ = ½√(d·Σ‖ρ_k − ρ̄‖²_F/(N−1)), a trace-norm scale for one trajectory.
    pub sigma: Vec<f64>,
    pub n_traj: usize,
}

impl EnsembleAverage {
    /// 3σ̂/√N at grid index k.
    pub fn band(&self, k: usize) -> f64 {
        3.0 * self.sigma[k] / (self.n_traj as f64).sqrt()
    }
}

/// Running mean and Σ‖ρ − ρ̄‖²_F per grid time (Welford, Chan combination).
#[derive(Clone)]
struct Moments {
    n: usize,
    mean: Vec<CMat>,
    m2: Vec<f64>,
}

impl Moments {
    fn new(len: usize, d: usize) -> Self {
        Self {
            n: 0,
            mean: vec![CMat::zeros(d, d); len],
            m2: vec![0.0; len],
        }
    }

    fn push(&mut self, states: &[DensityMatrix]) {
        self.n += 1;
        let w = C64::from(1.0 / self.n as f64);
        for (k, s) in states.iter().enumerate() {
            let delta = s.matrix() - &self.mean[k];
            self.mean[k] += &delta * w;
            let after = s.matrix() - &self.mean[k];
            self.m2[k] += delta.iter().zip(after.iter()).map(|(a, b)| (a.conj() * b).re).sum::<f64>();
        }
    }

    fn merge(&mut self, other: &Self) {
        if other.n == 0 {
            return;
        }
        let n = self.n + other.n;
        let (na, nb) = (self.n as f64, other.n as f64);
        for k in 0..self.mean.len() {
            let delta = &other.mean[k] - &self.mean[k];
            self.m2[k] += other.m2[k] + frobenius(&delta).powi(2) * na * nb / n as f64;
            self.mean[k] += delta * C64::from(nb / n as f64);
        }
        self.n = n;
    }

    fn finish(self, times: Vec<f64>, tau: f64) -> Result<EnsembleAverage> {
        let d = self.mean[0].nrows() as f64;
        let nt = self.n as f64;
        let sigma = self
            .m2
            .iter()
            .map(|q| if self.n > 1 { 0.5 * (d * q.max(0.0) / (nt - 1.0)).sqrt() } else { 0.0 })
            .collect();
        let states = self
            .mean
            .into_iter()
            .map(|m| DensityMatrix::with_tolerance(hermitian_part(&m), 1e-8))
            .collect::<Result<Vec<_>>>()?;
        let n = states.len() - 1;
        Ok(EnsembleAverage {
            trace: EvolutionTrace { times, states, tau, n },
            sigma,
            n_traj: self.n,
        })
    }
}

/// Mean state over trajectories sharing one time grid.
pub fn ensemble_average(trajs: &[ConditionalTrajectory]) -> Result<EnsembleAverage> {
    let first = trajs
        .first()
        .ok_or_else(|| Error::InvalidArgument("empty ensemble".into()))?;
    let len = first.states.len();
    let d = first.states[0].dim();
    let mut acc = Moments::new(len, d);
    for t in trajs {
        if t.states.len() != len || t.times != first.times || t.states[0].dim() != d {
            return Err(Error::InvalidArgument("trajectories do not share a time grid".into()));
        }
        acc.push(&t.states);
    }
    let tau = first.times.get(1).copied().unwrap_or(0.0);
    acc.finish(first.times.clone(), tau)
}

const CHUNK: usize = 64;

/// Streaming ensemble mean that keeps no trajectories. Chunks of fixed size
/// are reduced in parallel and combined in index order, so the result does
/// not depend on the thread count.
pub fn ensemble_mean(
    model: &ConditionalModel,
    rho0: &DensityMatrix,
    n: usize,
    n_traj: usize,
    seed: u64,
) -> Result<EnsembleAverage> {
    if n_traj == 0 {
        return Err(Error::InvalidArgument("empty ensemble".into()));
    }
    let d = rho0.dim();
    let chunks: Vec<Moments> = (0..n_traj.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut acc = Moments::new(n + 1, d);
            for s in (c * CHUNK)..((c + 1) * CHUNK).min(n_traj) {
                acc.push(&sample_trajectory(model, rho0, n, seed, s as u64)?.states);
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    let mut acc = Moments::new(n + 1, d);
    for c in &chunks {
        acc.merge(c);
    }
    let times = (0..=n).map(|k| k as f64 * model.tau).collect();
    acc.finish(times, model.tau)
}

/// Σₙ pₙ ρ_c(n): the outcome-averaged state after one readout.
pub fn outcome_average(model: &ConditionalModel, rho: &CMat) -> CMat {
    (0..model.n_outcomes()).fold(CMat::zeros(rho.nrows(), rho.ncols()), |acc, b| {
        match model.conditional_collide(rho, b) {
            Ok((s, _)) => acc + s,
            Err(_) => acc,
        }
    })
}

/// Convenience: the realized cycle's unconditional one-step map, for checks.
pub fn unconditional_step(r: &RealizedCycle, rho: &CMat) -> Result<CMat> {
    crate::engine::Channel::build(r, Propagator::MeanValue).map(|c| c.apply(rho))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::collide_once;
    use crate::linalg::{kron_mat, ops, unitary_propagator, CVec};
    use crate::model::{CouplingSchedule, GridSpec, PreparationFamily, TauLaw};

    fn qubit() -> DensityMatrix {
        let v = CVec::from_vec(vec![C64::new(0.6, 0.2), C64::new(0.5, -0.59)]);
        let n = v.norm();
        DensityMatrix::pure(&(v / C64::from(n))).unwrap()
    }

    /// σz coupled to the momentum of a Gaussian pointer of variance D/2τ.
    fn meter(d: f64, s0: CMat) -> CycleSpec {
        CycleSpec::single(
            s0,
            ops::pauli_z(),
            PreparationFamily::pure_gaussian(20, TauLaw::power(d, -1.0), TauLaw::constant(0.0), TauLaw::constant(0.0)),
            AncillaOperator::Momentum,
            AncillaOperator::zero(20),
            CouplingSchedule::strong(1.0),
            1.0,
        )
        .unwrap()
    }

    fn grid_meter() -> CycleSpec {
        CycleSpec::single(
            ops::pauli_x() * C64::from(0.3),
            ops::pauli_z(),
            PreparationFamily::moment_gaussian(TauLaw::constant(0.2), TauLaw::constant(0.5), GridSpec::Fixed { lo: -4.0, hi: 4.0, points: 16 }),
            AncillaOperator::GridValue,
            AncillaOperator::zero(16),
            CouplingSchedule::constant(1.5),
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn zero_coupling_reproduces_prior_and_free_evolution() {
        let mut c = meter(0.5, ops::pauli_x() * C64::from(0.7));
        c.substeps[0][0].schedule = CouplingSchedule::constant(0.0);
        let m = ConditionalModel::new(&c, 0.1, &FilterSpec::default()).unwrap();
        let u = unitary_propagator(&(ops::pauli_x() * C64::from(0.7)), 0.1, 1.0);
        let free = &u * qubit().matrix() * u.adjoint();
        for b in 0..m.n_outcomes() {
            let Ok((s, p)) = m.conditional_collide(qubit().matrix(), b) else {
                assert!(m.prior()[b] <= tolerance::NEGLIGIBLE_WEIGHT);
                continue;
            };
            assert!((p - m.prior()[b]).abs() < 1e-12);
            assert!(max_abs(&(s - &free * C64::from(p))) < 1e-12);
        }
    }

    #[test]
    fn outcome_average_reconstructs_the_unconditional_step() {
        let cycles = [meter(0.5, ops::pauli_x() * C64::from(0.4)), grid_meter()];
        for c in &cycles {
            let m = ConditionalModel::new(c, 0.05, &FilterSpec::default()).unwrap();
            let total: f64 = m.probabilities(qubit().matrix()).iter().sum();
            assert!((total - 1.0).abs() < 1e-10);
            let avg = outcome_average(&m, qubit().matrix());
            let unc = collide_once(&qubit(), c, 0.05).unwrap();
            assert!(max_abs(&(avg - unc.matrix())) < 1e-12);
        }
    }

    #[test]
    fn conditional_state_matches_explicit_joint_projection() {
        let c = meter(0.4, CMat::zeros(2, 2));
        let tau = 0.2;
        let m = ConditionalModel::new(&c, tau, &FilterSpec::default()).unwrap();
        let r = c.realize(tau).unwrap();
        let rho_m = r.ancillas[0].state.matrix();
        let p = r.ancillas[0].operator(&AncillaOperator::Momentum).unwrap();
        let x = r.ancillas[0].operator(&AncillaOperator::Position).unwrap();
        let (_, xb) = hermitian_eigen(&x);
        let u = unitary_propagator(&kron_mat(&ops::pauli_z(), &p), 1.0, 1.0);
        let joint = &u * kron_mat(qubit().matrix(), rho_m) * u.adjoint();
        for b in [3usize, 10, 16] {
            let proj = kron_mat(&CMat::identity(2, 2), &(xb.column(b) * xb.column(b).adjoint()));
            let block = crate::linalg::partial_trace(&(&proj * &joint * &proj), &crate::linalg::TensorLayout::new(vec![2, 20]).unwrap(), &[0]).unwrap();
            let (s, pr) = m.conditional_collide(qubit().matrix(), b).unwrap();
            assert!(max_abs(&(&s - &block)) < 1e-12);
            assert!((pr - block.trace().re).abs() < 1e-12);
        }
        // the pointer shifts by τḡ·s = s: outcomes at positive x favour s = +1
        let xs: Vec<f64> = crate::linalg::hermitian_eigenvalues(&x);
        let hi = xs.iter().position(|&v| v > 0.5).unwrap();
        let lo = xs.iter().rposition(|&v| v < -0.5).unwrap();
        let (sh, _) = m.conditional_collide(qubit().matrix(), hi).unwrap();
        let (sl, _) = m.conditional_collide(qubit().matrix(), lo).unwrap();
        let ratio = |s: &CMat| s[(0, 0)].re / s[(1, 1)].re;
        assert!(ratio(&sh) > ratio(qubit().matrix()) && ratio(&sl) < ratio(qubit().matrix()));
    }

    #[test]
    fn zero_probability_outcome_is_rejected() {
        let c = CycleSpec::single(
            CMat::zeros(2, 2),
            ops::pauli_z(),
            PreparationFamily::explicit(ops::projector(2, 0)),
            AncillaOperator::Explicit(ops::pauli_z()),
            AncillaOperator::zero(2),
            CouplingSchedule::constant(1.0),
            1.0,
        )
        .unwrap();
        let spec = FilterSpec {
            pointer: vec![PointerBasis::Eigen(AncillaOperator::Explicit(ops::pauli_z()))],
            ..Default::default()
        };
        let m = ConditionalModel::new(&c, 0.1, &spec).unwrap();
        let zero = m.prior().iter().position(|&p| p < 1e-15).unwrap();
        assert!(matches!(m.conditional_collide(qubit().matrix(), zero), Err(Error::ZeroProbability(_))));
    }

    #[test]
    fn increments_average_to_zero_under_the_prior() {
        let c = meter(0.5, CMat::zeros(2, 2));
        let m = ConditionalModel::new(&c, 0.05, &FilterSpec::default()).unwrap();
        assert!(m.prior_mean_increment().abs() < 1e-10);
        assert!(m.increments.iter().any(|w| w.re.abs() > 1e-3));
        for w in &m.increments {
            assert!((w.dw - C64::new(w.re, w.im)).norm() < 1e-12);
        }
        // ρ_m diagonal in the pointer basis: no real increment at all
        let g = ConditionalModel::new(
            &grid_meter(),
            0.05,
            &FilterSpec {
                pointer: vec![PointerBasis::Eigen(AncillaOperator::GridValue)],
                ..Default::default()
            },
        )
        .unwrap();
        assert!(g.increments.iter().all(|w| w.re.abs() < 1e-14));
    }

    #[test]
    fn corrections_vanish_for_diagonal_or_eigenbasis_readout() {
        // ρ_m diagonal in the M eigenbasis, Fourier readout
        let g = ConditionalModel::new(&grid_meter(), 0.05, &FilterSpec::default()).unwrap();
        for (a, b) in g.correction_terms() {
            assert!(a.norm() < 1e-12 && b.norm() < 1e-12);
        }
        // pure ρ_m, readout in the M eigenbasis
        let c = meter(0.5, CMat::zeros(2, 2));
        let spec = FilterSpec {
            pointer: vec![PointerBasis::Eigen(AncillaOperator::Momentum)],
            ..Default::default()
        };
        let m = ConditionalModel::new(&c, 0.05, &spec).unwrap();
        let scale = m.increments.iter().map(|w| w.dw.norm()).fold(1.0, f64::max);
        for (b, (x, y)) in m.correction_terms().iter().enumerate() {
            if m.prior()[b] > 1e-6 {
                assert!(x.norm() < 1e-12 * scale && y.norm() < 1e-12 * scale, "{b}: {x} {y}");
            }
        }
        // generic case: corrections are present
        let gen = ConditionalModel::new(&c, 0.05, &FilterSpec::default()).unwrap();
        assert!(gen.correction_terms().iter().any(|(x, _)| x.norm() > 1e-6));
    }

    #[test]
    fn trajectories_are_reproducible_from_the_seed() {
        let c = meter(0.5, ops::pauli_x() * C64::from(0.3));
        let m = ConditionalModel::new(&c, 0.05, &FilterSpec::default()).unwrap();
        let a = sample_trajectory(&m, &qubit(), 40, 7, 3).unwrap();
        let b = sample_trajectory(&m, &qubit(), 40, 7, 3).unwrap();
        assert_eq!(a, b);
        let other = sample_trajectory(&m, &qubit(), 40, 7, 4).unwrap();
        assert_ne!(a.record.outcomes, other.record.outcomes);
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| ensemble_mean(&m, &qubit(), 10, 150, 11).unwrap())
        };
        assert_eq!(run(1), run(4));
        for t in &a.states {
            assert!((t.matrix().trace().re - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn eigenstate_ancilla_gives_noiseless_unitary_trajectories() {
        let mz = ops::diag(&[1.5, -0.5]);
        let c = CycleSpec::single(
            ops::pauli_x() * C64::from(0.6),
            ops::pauli_z(),
            PreparationFamily::eigenstate(mz.clone(), 1.5),
            AncillaOperator::Explicit(mz),
            AncillaOperator::zero(2),
            CouplingSchedule::strong(0.5),
            1.0,
        )
        .unwrap();
        let tau = 0.1;
        let m = ConditionalModel::new(&c, tau, &FilterSpec::default()).unwrap();
        let ens = sample_ensemble(&m, &qubit(), 30, 8, 1).unwrap();
        let h = ops::pauli_x() * C64::from(0.6) + ops::pauli_z() * C64::from(1.5 * 0.5 / tau);
        let u = unitary_propagator(&h, tau, 1.0);
        let mut exact = qubit().matrix().clone();
        let unc = crate::engine::evolve(&qubit(), &c, 3.0, 30).unwrap();
        for k in 0..=30 {
            for t in &ens {
                assert!(max_abs(&(t.states[k].matrix() - &exact)) < 1e-10);
            }
            assert!(max_abs(&(unc.states[k].matrix() - &exact)) < 1e-10);
            exact = &u * exact * u.adjoint();
        }
        let w0 = ens[0].increments[0];
        assert!(ens.iter().flat_map(|t| &t.increments).all(|w| (w.dw - w0.dw).norm() < 1e-12));
        let avg = ensemble_average(&ens).unwrap();
        assert!(avg.sigma.iter().all(|s| *s < 1e-9));
    }

    #[test]
    fn single_trajectory_ensemble_is_that_trajectory() {
        let m = ConditionalModel::new(&meter(0.5, CMat::zeros(2, 2)), 0.05, &FilterSpec::default()).unwrap();
        let t = sample_trajectory(&m, &qubit(), 12, 2, 0).unwrap();
        let avg = ensemble_average(std::slice::from_ref(&t)).unwrap();
        for (a, b) in avg.trace.states.iter().zip(&t.states) {
            assert!(max_abs(&(a.matrix() - b.matrix())) < 1e-15);
        }
        let mut short = t.clone();
        short.states.pop();
        short.times.pop();
        assert!(ensemble_average(&[t, short]).is_err());
    }

    #[test]
    fn zero_current_feedback_is_identity() {
        let fb = FeedbackSpec {
            s2: ops::pauli_x(),
            g2: 2.0,
        };
        let out = feedback_step(&qubit(), 0.0, &fb, 0.1, 1.0).unwrap();
        assert!(max_abs(&(out.matrix() - qubit().matrix())) < 1e-15);
        assert!(feedback_step(&qubit(), f64::NAN, &fb, 0.1, 1.0).is_err());
    }

    #[test]
    fn expanded_update_agrees_with_exact_filter_at_small_tau() {
        // weak coupling, generic pure pointer: increments are O(τ)
        let c = CycleSpec::single(
            ops::pauli_x() * C64::from(0.5),
            ops::pauli_z(),
            PreparationFamily::pure_gaussian(16, TauLaw::constant(0.8), TauLaw::constant(0.3), TauLaw::constant(0.4)),
            AncillaOperator::Momentum,
            AncillaOperator::zero(16),
            CouplingSchedule::constant(0.7),
            1.0,
        )
        .unwrap();
        let mut errs = Vec::new();
        for tau in [0.02, 0.01] {
            let m = ConditionalModel::new(&c, tau, &FilterSpec::default()).unwrap();
            let rho = qubit().matrix().clone();
            let mut worst: f64 = 0.0;
            for b in 0..m.n_outcomes() {
                if m.prior()[b] < 1e-3 {
                    continue;
                }
                let (s, p) = m.conditional_collide(&rho, b).unwrap();
                let exact = s / C64::from(p);
                worst = worst.max(max_abs(&(exact - m.expanded_update(&rho, b))));
            }
            errs.push(worst);
        }
        // second-order remainder: halving τ cuts the error about fourfold
        assert!(errs[0] < 0.05 && errs[1] < errs[0] / 3.0, "{errs:?}");
    }
}
