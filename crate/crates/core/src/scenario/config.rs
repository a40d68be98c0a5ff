//! JSON scenario documents and their translation into model values.

use serde::{Deserialize, Serialize};

use crate::dynamics::Regime;
use crate::error::{Error, Result};
use crate::filtering::{FeedbackSpec, FilterSpec, PointerBasis};
use crate::linalg::{kron_mat, ops, CMat, CVec, DensityMatrix, TensorLayout, C64};
use crate::model::{
    AncillaOperator, AncillaSpec, CouplingSchedule, CycleSpec, GridSpec, PreparationFamily, SubInteraction, TauLaw,
};

fn one() -> f64 {
    1.0
}

/// Symbolic operator on the system (or on a bare ancilla space).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case", deny_unknown_fields)]
pub enum OperatorExpr {
    PauliX,
    PauliY,
    PauliZ,
    Identity { dim: usize },
    Zero { dim: usize },
    Diag { values: Vec<f64> },
    Projector { dim: usize, index: usize },
    /// ℓ(a + a†)/√2
    PositionTruncated {
        dim: usize,
        #[serde(default = "one")]
        length: f64,
    },
    /// (ħ/ℓ) i(a† − a)/√2
    MomentumTruncated {
        dim: usize,
        #[serde(default = "one")]
        length: f64,
    },
    Annihilation { dim: usize },
    Creation { dim: usize },
    Number { dim: usize },
    Scaled { factor: f64, of: Box<OperatorExpr> },
    Sum { terms: Vec<OperatorExpr> },
    /// Matrix product, left to right.
    Product { factors: Vec<OperatorExpr> },
    Kron { factors: Vec<OperatorExpr> },
    /// Places a single-factor operator on factor `factor` of the system layout.
    Embed { factor: usize, of: Box<OperatorExpr> },
    Matrix {
        re: Vec<Vec<f64>>,
        #[serde(default)]
        im: Vec<Vec<f64>>,
    },
}

impl OperatorExpr {
    pub fn scaled(self, factor: f64) -> Self {
        Self::Scaled {
            factor,
            of: Box::new(self),
        }
    }

    pub fn embed(self, factor: usize) -> Self {
        Self::Embed {
            factor,
            of: Box::new(self),
        }
    }

    pub fn build(&self, layout: &TensorLayout, hbar: f64) -> Result<CMat> {
        Ok(match self {
            Self::PauliX => ops::pauli_x(),
            Self::PauliY => ops::pauli_y(),
            Self::PauliZ => ops::pauli_z(),
            Self::Identity { dim } => CMat::identity(*dim, *dim),
            Self::Zero { dim } => CMat::zeros(*dim, *dim),
            Self::Diag { values } => ops::diag(values),
            Self::Projector { dim, index } => {
                if index >= dim {
                    return Err(Error::InvalidArgument(format!("projector index {index} ≥ dim {dim}")));
                }
                ops::projector(*dim, *index)
            }
            Self::PositionTruncated { dim, length } => ops::position(*dim, *length),
            Self::MomentumTruncated { dim, length } => ops::momentum(*dim, *length, hbar),
            Self::Annihilation { dim } => ops::annihilation(*dim),
            Self::Creation { dim } => ops::annihilation(*dim).adjoint(),
            Self::Number { dim } => ops::number(*dim),
            Self::Scaled { factor, of } => of.build(layout, hbar)? * C64::from(*factor),
            Self::Sum { terms } => {
                let mut it = terms.iter();
                let first = it
                    .next()
                    .ok_or_else(|| Error::InvalidArgument("empty operator sum".into()))?
                    .build(layout, hbar)?;
                it.try_fold(first, |acc, t| {
                    let m = t.build(layout, hbar)?;
                    same_shape(&acc, &m, "operator sum")?;
                    Ok::<_, Error>(acc + m)
                })?
            }
            Self::Product { factors } => {
                let mut it = factors.iter();
                let first = it
                    .next()
                    .ok_or_else(|| Error::InvalidArgument("empty operator product".into()))?
                    .build(layout, hbar)?;
                it.try_fold(first, |acc, t| {
                    let m = t.build(layout, hbar)?;
                    same_shape(&acc, &m, "operator product")?;
                    Ok::<_, Error>(acc * m)
                })?
            }
            Self::Kron { factors } => factors
                .iter()
                .try_fold(CMat::identity(1, 1), |acc, f| Ok::<_, Error>(kron_mat(&acc, &f.build(layout, hbar)?)))?,
            Self::Embed { factor, of } => {
                let m = of.build(layout, hbar)?;
                layout.embed(&m, *factor)?
            }
            Self::Matrix { re, im } => {
                let d = re.len();
                if re.iter().any(|r| r.len() != d) || (!im.is_empty() && (im.len() != d || im.iter().any(|r| r.len() != d)))
                {
                    return Err(Error::InvalidArgument("explicit matrix must be square".into()));
                }
                CMat::from_fn(d, d, |i, j| C64::new(re[i][j], if im.is_empty() { 0.0 } else { im[i][j] }))
            }
        })
    }
}

fn same_shape(a: &CMat, b: &CMat, what: &str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::DimensionMismatch {
            context: what.into(),
            expected: a.nrows(),
            found: b.nrows(),
        });
    }
    Ok(())
}

/// Ancilla operator; frame-dependent forms resolve at realization time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AncillaOpExpr {
    GridValue,
    Position,
    Momentum,
    Zero { dim: usize },
    Explicit { matrix: OperatorExpr },
    Scaled { factor: f64, of: Box<AncillaOpExpr> },
    Sum { terms: Vec<AncillaOpExpr> },
}

impl AncillaOpExpr {
    pub fn build(&self, hbar: f64) -> Result<AncillaOperator> {
        let bare = TensorLayout::single(1);
        Ok(match self {
            Self::GridValue => AncillaOperator::GridValue,
            Self::Position => AncillaOperator::Position,
            Self::Momentum => AncillaOperator::Momentum,
            Self::Zero { dim } => AncillaOperator::zero(*dim),
            Self::Explicit { matrix } => AncillaOperator::Explicit(matrix.build(&bare, hbar)?),
            Self::Scaled { factor, of } => of.build(hbar)?.scaled(*factor),
            Self::Sum { terms } => AncillaOperator::Sum(terms.iter().map(|t| t.build(hbar)).collect::<Result<_>>()?),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PreparationExpr {
    /// Normalized projector onto the eigenspace of `operator` at `eigenvalue`.
    Eigenstate { operator: OperatorExpr, eigenvalue: f64 },
    /// M-diagonal Gaussian mixture with τ′-dependent mean and variance.
    MomentGaussian {
        mean: TauLaw,
        variance: TauLaw,
        #[serde(default)]
        grid: GridSpec,
    },
    /// ψ(x) ∝ exp(−(x−x̄)²/2σ + ip̄x/ħ) on a truncated oscillator.
    PureGaussian {
        dim: usize,
        width: TauLaw,
        #[serde(default = "zero_law")]
        mean_x: TauLaw,
        #[serde(default = "zero_law")]
        mean_p: TauLaw,
    },
    Explicit { state: OperatorExpr },
}

fn zero_law() -> TauLaw {
    TauLaw::constant(0.0)
}

impl PreparationExpr {
    pub fn build(&self, hbar: f64) -> Result<PreparationFamily> {
        let bare = TensorLayout::single(1);
        Ok(match self {
            Self::Eigenstate { operator, eigenvalue } => PreparationFamily::eigenstate(operator.build(&bare, hbar)?, *eigenvalue),
            Self::MomentGaussian { mean, variance, grid } => {
                PreparationFamily::moment_gaussian(mean.clone(), variance.clone(), grid.clone())
            }
            Self::PureGaussian {
                dim,
                width,
                mean_x,
                mean_p,
            } => PreparationFamily::pure_gaussian(*dim, width.clone(), mean_x.clone(), mean_p.clone()),
            Self::Explicit { state } => PreparationFamily::explicit(state.build(&bare, hbar)?),
        })
    }

    fn dim(&self) -> Option<usize> {
        match self {
            Self::MomentGaussian { grid, .. } => Some(grid.points()),
            Self::PureGaussian { dim, .. } => Some(*dim),
            Self::Eigenstate { .. } | Self::Explicit { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AncillaConfig {
    pub preparation: PreparationExpr,
    /// Free ancilla Hamiltonian; zero when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m0: Option<AncillaOpExpr>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermConfig {
    pub s: OperatorExpr,
    #[serde(default)]
    pub ancilla: usize,
    pub m: AncillaOpExpr,
    pub schedule: CouplingSchedule,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StateExpr {
    /// Normalized on construction.
    Pure {
        re: Vec<f64>,
        #[serde(default)]
        im: Vec<f64>,
    },
    Basis { dim: usize, index: usize },
    MaximallyMixed { dim: usize },
    /// Vacuum displaced by α on a truncated oscillator.
    Coherent { dim: usize, re: f64, im: f64 },
    Density { matrix: OperatorExpr },
    Product { factors: Vec<StateExpr> },
}

impl StateExpr {
    pub fn build(&self, hbar: f64) -> Result<DensityMatrix> {
        match self {
            Self::Pure { re, im } => {
                if !im.is_empty() && im.len() != re.len() {
                    return Err(Error::InvalidArgument("pure state re/im lengths differ".into()));
                }
                let v = CVec::from_iterator(
                    re.len(),
                    re.iter().enumerate().map(|(k, r)| C64::new(*r, im.get(k).copied().unwrap_or(0.0))),
                );
                let n = v.norm();
                if !(n > 0.0) {
                    return Err(Error::InvalidState("zero state vector".into()));
                }
                DensityMatrix::pure(&(v / C64::from(n)))
            }
            Self::Basis { dim, index } => {
                if index >= dim {
                    return Err(Error::InvalidArgument(format!("basis index {index} ≥ dim {dim}")));
                }
                DensityMatrix::new(ops::projector(*dim, *index))
            }
            Self::MaximallyMixed { dim } => Ok(DensityMatrix::maximally_mixed(*dim)),
            Self::Coherent { dim, re, im } => DensityMatrix::pure(&crate::model::coherent_state(*dim, C64::new(*re, *im))?),
            Self::Density { matrix } => DensityMatrix::new(matrix.build(&TensorLayout::single(1), hbar)?),
            Self::Product { factors } => {
                let m = factors
                    .iter()
                    .try_fold(CMat::identity(1, 1), |acc, f| Ok::<_, Error>(kron_mat(&acc, f.build(hbar)?.matrix())))?;
                DensityMatrix::new(m)
            }
        }
    }
}

/// Evolution grid: either explicit τ values or step counts, to total time t.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub t: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub taus: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub ns: Vec<usize>,
    /// τ values used for limits and regime classification.
    #[serde(default = "default_limit_taus")]
    pub limit_taus: Vec<f64>,
}

fn default_slices() -> usize {
    64
}

fn default_limit_taus() -> Vec<f64> {
    vec![0.1, 0.01, 0.001]
}

impl SweepConfig {
    /// (τ, n) pairs, coarsest first.
    pub fn points(&self) -> Vec<(f64, usize)> {
        if !self.ns.is_empty() {
            self.ns.iter().map(|&n| (self.t / n as f64, n)).collect()
        } else {
            self.taus
                .iter()
                .map(|&tau| (tau, (self.t / tau).round().max(1.0) as usize))
                .map(|(_, n)| (self.t / n as f64, n))
                .collect()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Unconditional,
    Conditional,
    Both,
}

impl Mode {
    pub fn unconditional(self) -> bool {
        matches!(self, Self::Unconditional | Self::Both)
    }

    pub fn conditional(self) -> bool {
        matches!(self, Self::Conditional | Self::Both)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleConfig {
    pub n_traj: usize,
    #[serde(default)]
    pub seed: u64,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self { n_traj: 256, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PointerExpr {
    Conjugate,
    Eigen { operator: AncillaOpExpr },
    Explicit { matrix: OperatorExpr },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeedbackConfig {
    pub s2: OperatorExpr,
    pub g2: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterConfig {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub pointer: Vec<PointerExpr>,
    #[serde(default)]
    pub record_term: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feedback: Option<FeedbackConfig>,
}

/// Requested output series; each becomes one CSV per sweep point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "series", rename_all = "snake_case", deny_unknown_fields)]
pub enum SeriesRequest {
    /// ρᵢⱼ(t)
    Element { i: usize, j: usize },
    /// |ρ₀₁(t)|
    Coherence,
    Purity,
    Observable { name: String, operator: OperatorExpr },
    /// Negativity across the given system factor.
    Negativity { factor: usize },
    /// Outcome, probability, increment and current of the first trajectories.
    Record { trajectories: usize },
    /// Ensemble-mean ρᵢⱼ(t) with its 3σ̂/√N band.
    EnsembleElement { i: usize, j: usize },
}

/// Numerical assertions a scenario makes about its own run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "check", rename_all = "snake_case", deny_unknown_fields)]
pub enum CheckConfig {
    /// |1 − Tr ρ²| ≤ tol at every time of the finest run.
    PurityPreserved { tol: f64 },
    /// 1 − Tr ρ²(T) ≥ min.
    PurityDrop { min: f64 },
    /// |ρ₀₁(nτ)| against |ρ₀₁(0)|·exp[−(t/τ)(1 − |χ|)] for S₀ = 0, relative.
    ZenoCurve { tol: f64 },
    /// Classified regime over `limit_taus`.
    Regime { expected: Regime },
    /// Trace distance at T between the collisional run and the integrated
    /// limit master equation; must be ≤ tol at the finest τ and shrink.
    MasterConvergence { tol: f64 },
    /// Negativity across `factor` at T ≥ min.
    Negativity { factor: usize, min: f64 },
    /// Every dissipator rate of the limit master equation ≤ max.
    DissipatorsBelow { max: f64 },
    /// ħ|M̃ᵢⱼ| ≤ Γᵢᵢ + Γⱼⱼ at every limit τ for every term pair.
    FeedbackBound,
    /// Outcome-averaged conditional step equals the unconditional step.
    Completeness { tol: f64 },
    /// Ensemble mean within 3σ̂/√N (+ slack) of the unconditional run.
    EnsembleBand {
        #[serde(default)]
        slack: f64,
    },
    /// Ensemble mean with feedback within 3σ̂/√N (+ slack) of the averaged
    /// measurement-plus-feedback master equation.
    FeedbackBand {
        #[serde(default)]
        slack: f64,
    },
    /// Log–log slope of the one-cycle defect ‖U_stepped − U_mean‖ over `taus`.
    MagnusSlope {
        expected: f64,
        tol: f64,
        taus: Vec<f64>,
        #[serde(default = "default_slices")]
        slices: usize,
    },
    /// Top-two-level population of every oscillator factor ≤ max at T.
    Leakage { max: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
    #[serde(default = "one")]
    pub hbar: f64,
    /// Factor dimensions of the system.
    pub system: Vec<usize>,
    pub s0: OperatorExpr,
    pub ancillas: Vec<AncillaConfig>,
    /// Sub-steps in order; each holds the terms active during it.
    pub substeps: Vec<Vec<TermConfig>>,
    pub initial_state: StateExpr,
    pub sweep: SweepConfig,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ensemble: Option<EnsembleConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub filter: Option<FilterConfig>,
    #[serde(default)]
    pub outputs: Vec<SeriesRequest>,
    #[serde(default)]
    pub checks: Vec<CheckConfig>,
}

impl ScenarioConfig {
    /// Parses JSON; errors carry the field path and line/column.
    pub fn from_json(text: &str, origin: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| Error::Config {
            path: origin.into(),
            message: format!("at `{}`: {}", e.path(), e.inner()),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario configs serialize")
    }

    pub fn layout(&self) -> Result<TensorLayout> {
        TensorLayout::new(self.system.clone())
    }

    pub fn cycle(&self) -> Result<CycleSpec> {
        let layout = self.layout()?;
        let hbar = self.hbar;
        let ancillas = self
            .ancillas
            .iter()
            .map(|cfg| {
                let preparation = cfg.preparation.build(hbar)?;
                let m0 = match &cfg.m0 {
                    Some(m) => m.build(hbar)?,
                    None => AncillaOperator::zero(cfg.preparation.dim().unwrap_or_else(|| preparation.ancilla_dim())),
                };
                Ok(AncillaSpec { preparation, m0 })
            })
            .collect::<Result<Vec<_>>>()?;
        let substeps = self
            .substeps
            .iter()
            .map(|step| {
                step.iter()
                    .map(|t| {
                        Ok(SubInteraction {
                            s_op: t.s.build(&layout, hbar)?,
                            ancilla: t.ancilla,
                            m_op: t.m.build(hbar)?,
                            schedule: t.schedule.clone(),
                        })
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        let cycle = CycleSpec {
            system_layout: layout,
            s0: self.s0.build(&self.layout()?, hbar)?,
            ancillas,
            substeps,
            hbar,
        };
        cycle.validate()?;
        Ok(cycle)
    }

    pub fn initial_state(&self) -> Result<DensityMatrix> {
        let rho = self.initial_state.build(self.hbar)?;
        let d: usize = self.system.iter().product();
        if rho.dim() != d {
            return Err(Error::DimensionMismatch {
                context: "initial state vs system layout".into(),
                expected: d,
                found: rho.dim(),
            });
        }
        Ok(rho)
    }

    pub fn filter_spec(&self) -> Result<FilterSpec> {
        let layout = self.layout()?;
        let f = self.filter.clone().unwrap_or_default();
        Ok(FilterSpec {
            pointer: f
                .pointer
                .iter()
                .map(|p| {
                    Ok(match p {
                        PointerExpr::Conjugate => PointerBasis::Conjugate,
                        PointerExpr::Eigen { operator } => PointerBasis::Eigen(operator.build(self.hbar)?),
                        PointerExpr::Explicit { matrix } => {
                            PointerBasis::Explicit(matrix.build(&TensorLayout::single(1), self.hbar)?)
                        }
                    })
                })
                .collect::<Result<_>>()?,
            record_term: f.record_term,
            gamma: f.gamma,
            feedback: f
                .feedback
                .map(|fb| {
                    Ok::<_, Error>(FeedbackSpec {
                        s2: fb.s2.build(&layout, self.hbar)?,
                        g2: fb.g2,
                    })
                })
                .transpose()?,
        })
    }

    /// Full validation: the cycle builds and realizes at every sweep and
    /// limit τ, the state fits, and the run settings are coherent.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Error::Config {
            path: self.name.clone(),
            message: m,
        };
        if !(self.hbar > 0.0) {
            return Err(bad("hbar must be positive".into()));
        }
        if !(self.sweep.t > 0.0) {
            return Err(bad("sweep.t must be positive".into()));
        }
        if self.sweep.taus.is_empty() == self.sweep.ns.is_empty() {
            return Err(bad("sweep needs exactly one of `taus` or `ns`".into()));
        }
        if self.sweep.taus.iter().any(|t| !(*t > 0.0)) || self.sweep.ns.contains(&0) {
            return Err(bad("sweep entries must be positive".into()));
        }
        if self.mode.conditional() && self.ensemble.as_ref().is_some_and(|e| e.n_traj == 0) {
            return Err(bad("ensemble.n_traj must be at least 1".into()));
        }
        let cycle = self.cycle()?;
        self.initial_state()?;
        for (tau, _) in self.sweep.points() {
            cycle.realize(tau)?;
        }
        self.filter_spec()?;
        Ok(())
    }
}
