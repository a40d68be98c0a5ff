//! τ-parametrized ancilla preparations and the operator frames they induce.
//!
//! Every τ-law here is evaluated at the sub-step duration τ′.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{hermitian_eigen, ops, CMat, CVec, DensityMatrix, C64};
use crate::tolerance;

/// Σ c_k τ^{e_k}.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TauLaw {
    pub terms: Vec<(f64, f64)>,
}

impl TauLaw {
    pub fn constant(c: f64) -> Self {
        Self {
            terms: vec![(c, 0.0)],
        }
    }

    pub fn power(c: f64, e: f64) -> Self {
        Self {
            terms: vec![(c, e)],
        }
    }

    pub fn new(terms: Vec<(f64, f64)>) -> Self {
        Self { terms }
    }

    pub fn eval(&self, tau: f64) -> f64 {
        self.terms.iter().map(|&(c, e)| c * tau.powf(e)).sum()
    }
}

/// Grid used for M-diagonal Gaussian mixtures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GridSpec {
    /// μ ± 8σ with the given number of points, rebuilt at every τ.
    Adaptive { points: usize },
    Fixed { lo: f64, hi: f64, points: usize },
}

impl Default for GridSpec {
    fn default() -> Self {
        Self::Adaptive { points: 64 }
    }
}

impl GridSpec {
    pub fn points(&self) -> usize {
        match self {
            Self::Adaptive { points } | Self::Fixed { points, .. } => *points,
        }
    }
}

/// Ancilla operator whose matrix may depend on the realized frame (grid
/// values, oscillator length scale).
#[derive(Debug, Clone, PartialEq)]
pub enum AncillaOperator {
    Explicit(CMat),
    /// diag(grid points) of a grid-realized ancilla.
    GridValue,
    Position,
    Momentum,
    Scaled(f64, Box<AncillaOperator>),
    Sum(Vec<AncillaOperator>),
}

impl AncillaOperator {
    pub fn scaled(self, c: f64) -> Self {
        Self::Scaled(c, Box::new(self))
    }

    pub fn zero(dim: usize) -> Self {
        Self::Explicit(CMat::zeros(dim, dim))
    }
}

/// Operator frame attached to a realized ancilla state.
#[derive(Debug, Clone, PartialEq)]
pub enum AncillaFrame {
    Grid { values: Vec<f64> },
    /// x̂ = ℓ(a+a†)/√2, p̂ = (ħ/ℓ)i(a†−a)/√2.
    Oscillator { length: f64, hbar: f64, dim: usize },
    Plain { dim: usize },
}

impl AncillaFrame {
    pub fn dim(&self) -> usize {
        match self {
            Self::Grid { values } => values.len(),
            Self::Oscillator { dim, .. } | Self::Plain { dim } => *dim,
        }
    }

    pub fn operator(&self, op: &AncillaOperator) -> Result<CMat> {
        let m = match (op, self) {
            (AncillaOperator::Explicit(m), _) => {
                if m.nrows() != self.dim() || m.ncols() != self.dim() {
                    return Err(Error::DimensionMismatch {
                        context: "ancilla operator".into(),
                        expected: self.dim(),
                        found: m.nrows(),
                    });
                }
                m.clone()
            }
            (AncillaOperator::GridValue, Self::Grid { values }) => ops::diag(values),
            (AncillaOperator::Position, Self::Oscillator { length, dim, .. }) => {
                ops::position(*dim, *length)
            }
            (AncillaOperator::Momentum, Self::Oscillator { length, hbar, dim }) => {
                ops::momentum(*dim, *length, *hbar)
            }
            (AncillaOperator::Scaled(c, inner), _) => self.operator(inner)? * C64::from(*c),
            (AncillaOperator::Sum(terms), _) => {
                let mut acc = CMat::zeros(self.dim(), self.dim());
                for t in terms {
                    acc += self.operator(t)?;
                }
                acc
            }
            (other, frame) => {
                return Err(Error::InvalidArgument(format!(
                    "operator {other:?} is not defined on a {} ancilla",
                    frame.kind()
                )))
            }
        };
        Ok(m)
    }

    fn kind(&self) -> &'static str {
        match self {
            Self::Grid { .. } => "grid",
            Self::Oscillator { .. } => "oscillator",
            Self::Plain { .. } => "plain",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PreparationKind {
    /// Normalized projector onto the eigenspace of `m_op` with `eigenvalue`.
    Eigenstate { m_op: CMat, eigenvalue: f64 },
    /// Mixture diagonal in the grid basis with Gaussian weights.
    MomentGaussian {
        mean: TauLaw,
        variance: TauLaw,
        grid: GridSpec,
    },
    /// ψ(x) ∝ exp(−(x−x̄)²/2σ + i p̄x/ħ) on a truncated oscillator.
    PureGaussian {
        dim: usize,
        width: TauLaw,
        mean_x: TauLaw,
        mean_p: TauLaw,
    },
    Explicit(CMat),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreparationFamily {
    pub kind: PreparationKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RealizedAncilla {
    pub state: DensityMatrix,
    pub frame: AncillaFrame,
}

impl RealizedAncilla {
    pub fn operator(&self, op: &AncillaOperator) -> Result<CMat> {
        self.frame.operator(op)
    }

    /// Tr(M^k ρ).
    pub fn moment(&self, op: &AncillaOperator, k: u32) -> Result<f64> {
        Ok(moment(&self.state, &self.operator(op)?, k))
    }
}

/// Tr(M^k ρ), real part.
pub fn moment(rho: &DensityMatrix, m: &CMat, k: u32) -> f64 {
    let mut p = CMat::identity(m.nrows(), m.ncols());
    for _ in 0..k {
        p = &p * m;
    }
    rho.expectation(&p).re
}

impl PreparationFamily {
    pub fn new(kind: PreparationKind) -> Self {
        Self { kind }
    }

    pub fn eigenstate(m_op: CMat, eigenvalue: f64) -> Self {
        Self::new(PreparationKind::Eigenstate { m_op, eigenvalue })
    }

    pub fn moment_gaussian(mean: TauLaw, variance: TauLaw, grid: GridSpec) -> Self {
        Self::new(PreparationKind::MomentGaussian {
            mean,
            variance,
            grid,
        })
    }

    pub fn pure_gaussian(dim: usize, width: TauLaw, mean_x: TauLaw, mean_p: TauLaw) -> Self {
        Self::new(PreparationKind::PureGaussian {
            dim,
            width,
            mean_x,
            mean_p,
        })
    }

    pub fn explicit(rho: CMat) -> Self {
        Self::new(PreparationKind::Explicit(rho))
    }

    pub fn ancilla_dim(&self) -> usize {
        match &self.kind {
            PreparationKind::Eigenstate { m_op, .. } => m_op.nrows(),
            PreparationKind::MomentGaussian { grid, .. } => grid.points(),
            PreparationKind::PureGaussian { dim, .. } => *dim,
            PreparationKind::Explicit(m) => m.nrows(),
        }
    }

    /// State and frame at sub-step duration `tau`.
    pub fn realize(&self, tau: f64, hbar: f64) -> Result<RealizedAncilla> {
        if !(tau > 0.0) || !tau.is_finite() {
            return Err(Error::InvalidArgument(format!("τ must be positive, got {tau}")));
        }
        match &self.kind {
            PreparationKind::Eigenstate { m_op, eigenvalue } => {
                let (vals, vecs) = hermitian_eigen(m_op);
                let cols: Vec<usize> = vals
                    .iter()
                    .enumerate()
                    .filter(|(_, v)| (*v - eigenvalue).abs() <= tolerance::EIGENSPACE * v.abs().max(1.0))
                    .map(|(i, _)| i)
                    .collect();
                if cols.is_empty() {
                    return Err(Error::InvalidArgument(format!(
                        "{eigenvalue} is not an eigenvalue of the ancilla operator"
                    )));
                }
                let d = m_op.nrows();
                let mut proj = CMat::zeros(d, d);
                for &c in &cols {
                    let v = vecs.column(c);
                    proj += &v * v.adjoint();
                }
                proj /= C64::from(cols.len() as f64);
                Ok(RealizedAncilla {
                    state: DensityMatrix::new(proj)?,
                    frame: AncillaFrame::Plain { dim: d },
                })
            }
            PreparationKind::MomentGaussian {
                mean,
                variance,
                grid,
            } => {
                let mu = mean.eval(tau);
                let var = variance.eval(tau);
                if !(var > 0.0) || !mu.is_finite() || !var.is_finite() {
                    return Err(Error::Resolution(format!(
                        "Gaussian variance {var} at τ′ = {tau} is not positive"
                    )));
                }
                let sigma = var.sqrt();
                let (lo, hi, n) = match grid {
                    GridSpec::Adaptive { points } => (mu - 8.0 * sigma, mu + 8.0 * sigma, *points),
                    GridSpec::Fixed { lo, hi, points } => (*lo, *hi, *points),
                };
                if n < 2 || !(hi > lo) {
                    return Err(Error::Resolution("degenerate grid".into()));
                }
                let spacing = (hi - lo) / (n - 1) as f64;
                if sigma < spacing || sigma > (hi - lo) / 6.0 {
                    return Err(Error::Resolution(format!(
                        "σ = {sigma:.3e} incompatible with grid spacing {spacing:.3e} and span {:.3e}",
                        hi - lo
                    )));
                }
                let values: Vec<f64> = (0..n).map(|k| lo + k as f64 * spacing).collect();
                let weights: Vec<f64> = values
                    .iter()
                    .map(|x| (-(x - mu).powi(2) / (2.0 * var)).exp())
                    .collect();
                let total: f64 = weights.iter().sum();
                let rho = ops::diag(&weights.iter().map(|w| w / total).collect::<Vec<_>>());
                Ok(RealizedAncilla {
                    state: DensityMatrix::new(rho)?,
                    frame: AncillaFrame::Grid { values },
                })
            }
            PreparationKind::PureGaussian {
                dim,
                width,
                mean_x,
                mean_p,
            } => {
                let sigma = width.eval(tau);
                if !(sigma > 0.0) || !sigma.is_finite() {
                    return Err(Error::Resolution(format!(
                        "wavefunction width {sigma} at τ′ = {tau} is not positive"
                    )));
                }
                let length = sigma.sqrt();
                let alpha = C64::new(
                    mean_x.eval(tau) / length,
                    mean_p.eval(tau) * length / hbar,
                ) / 2f64.sqrt();
                let psi = coherent_state(*dim, alpha)?;
                Ok(RealizedAncilla {
                    state: DensityMatrix::pure(&psi)?,
                    frame: AncillaFrame::Oscillator {
                        length,
                        hbar,
                        dim: *dim,
                    },
                })
            }
            PreparationKind::Explicit(rho) => Ok(RealizedAncilla {
                state: DensityMatrix::new(rho.clone())?,
                frame: AncillaFrame::Plain { dim: rho.nrows() },
            }),
        }
    }
}

/// Truncated coherent state, rejected when the top two levels carry more
/// than the leakage tolerance.
pub fn coherent_state(dim: usize, alpha: C64) -> Result<CVec> {
    if dim < 3 {
        return Err(Error::Resolution("oscillator truncation needs at least 3 levels".into()));
    }
    let mut c = Vec::with_capacity(dim);
    let mut amp = C64::from((-alpha.norm_sqr() / 2.0).exp());
    for n in 0..dim {
        if n > 0 {
            amp = amp * alpha / (n as f64).sqrt();
        }
        c.push(amp);
    }
    let leak = c[dim - 1].norm_sqr() + c[dim - 2].norm_sqr();
    if leak >= tolerance::LEAKAGE {
        return Err(Error::Resolution(format!(
            "truncated oscillator leaks {leak:.3e} into its top two levels"
        )));
    }
    let v = CVec::from_vec(c);
    let n = v.norm();
    Ok(v / C64::from(n))
}

/// Population in the top two Fock levels.
pub fn leakage(rho: &DensityMatrix) -> f64 {
    let d = rho.dim();
    rho.matrix()[(d - 1, d - 1)].re + rho.matrix()[(d - 2, d - 2)].re
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{anticommutator, commutator, max_abs, I};

    #[test]
    fn eigenstate_is_projector() {
        let prep = PreparationFamily::eigenstate(ops::diag(&[-1.0, 0.0, 1.0]), 0.0);
        let r = prep.realize(0.1, 1.0).unwrap();
        assert!(max_abs(&(r.state.matrix() - ops::diag(&[0.0, 1.0, 0.0]))) < 1e-14);
        let m = ops::diag(&[-1.0, 0.0, 1.0]);
        let prep = PreparationFamily::eigenstate(m.clone(), 1.0);
        let r = prep.realize(0.1, 1.0).unwrap();
        for k in 1..5 {
            assert!((moment(&r.state, &m, k) - 1.0).abs() < 1e-14);
        }
        assert!(PreparationFamily::eigenstate(m, 0.5).realize(0.1, 1.0).is_err());
    }

    #[test]
    fn degenerate_eigenspace_gives_normalized_projector() {
        let m = ops::diag(&[1.0, 1.0, 0.0]);
        let r = PreparationFamily::eigenstate(m, 1.0).realize(1.0, 1.0).unwrap();
        assert!(max_abs(&(r.state.matrix() - ops::diag(&[0.5, 0.5, 0.0]))) < 1e-14);
    }

    #[test]
    fn grid_gaussian_moments() {
        let prep = PreparationFamily::moment_gaussian(
            TauLaw::constant(0.0),
            TauLaw::constant(1.0),
            GridSpec::Fixed {
                lo: -8.0,
                hi: 8.0,
                points: 64,
            },
        );
        let r = prep.realize(0.3, 1.0).unwrap();
        let m1 = r.moment(&AncillaOperator::GridValue, 1).unwrap();
        let m2 = r.moment(&AncillaOperator::GridValue, 2).unwrap();
        assert!(m1.abs() < 1e-6);
        assert!((m2 - 1.0).abs() < 1e-6);
    }

    #[test]
    fn grid_fourth_moment_matches_weighted_sum_oracle() {
        let (mu, var) = (0.4, 0.25);
        let prep = PreparationFamily::moment_gaussian(
            TauLaw::constant(mu),
            TauLaw::constant(var),
            GridSpec::default(),
        );
        let r = prep.realize(1.0, 1.0).unwrap();
        let AncillaFrame::Grid { values } = &r.frame else {
            panic!("grid frame expected")
        };
        let w: Vec<f64> = values.iter().map(|x| (-(x - mu).powi(2) / (2.0 * var)).exp()).collect();
        let z: f64 = w.iter().sum();
        let oracle: f64 = values.iter().zip(&w).map(|(x, w)| x.powi(4) * w).sum::<f64>() / z;
        let got = r.moment(&AncillaOperator::GridValue, 4).unwrap();
        assert!((got - oracle).abs() < 1e-12);
        let closed = 3.0 * var * var + 6.0 * var * mu * mu + mu.powi(4);
        assert!((got - closed).abs() < 1e-9);
    }

    #[test]
    fn grid_resolution_errors() {
        let narrow = PreparationFamily::moment_gaussian(
            TauLaw::constant(0.0),
            TauLaw::constant(1e-4),
            GridSpec::Fixed {
                lo: -8.0,
                hi: 8.0,
                points: 64,
            },
        );
        assert!(matches!(narrow.realize(1.0, 1.0), Err(Error::Resolution(_))));
        let wide = PreparationFamily::moment_gaussian(
            TauLaw::constant(0.0),
            TauLaw::constant(16.0),
            GridSpec::Fixed {
                lo: -8.0,
                hi: 8.0,
                points: 64,
            },
        );
        assert!(matches!(wide.realize(1.0, 1.0), Err(Error::Resolution(_))));
    }

    #[test]
    fn pure_gaussian_second_moments() {
        let hbar = 1.0;
        let sigma = 0.7;
        let prep = PreparationFamily::pure_gaussian(
            30,
            TauLaw::constant(sigma),
            TauLaw::constant(0.0),
            TauLaw::constant(0.0),
        );
        let r = prep.realize(0.2, hbar).unwrap();
        let x = r.operator(&AncillaOperator::Position).unwrap();
        let p = r.operator(&AncillaOperator::Momentum).unwrap();
        let xx = r.state.expectation(&anticommutator(&x, &x)).re;
        let pp = r.state.expectation(&anticommutator(&p, &p)).re;
        let ixp = r.state.expectation(&(commutator(&x, &p) * I)).re;
        assert!((xx - sigma).abs() < 1e-12);
        assert!((pp - hbar * hbar / sigma).abs() < 1e-12);
        assert!((ixp + hbar).abs() < 1e-12);
        assert!((moment(&r.state, &p, 2) - hbar * hbar / (2.0 * sigma)).abs() < 1e-12);
    }

    #[test]
    fn displaced_gaussian_means() {
        let hbar = 2.0;
        let prep = PreparationFamily::pure_gaussian(
            40,
            TauLaw::constant(1.5),
            TauLaw::constant(0.3),
            TauLaw::constant(-0.8),
        );
        let r = prep.realize(0.5, hbar).unwrap();
        assert!((r.moment(&AncillaOperator::Position, 1).unwrap() - 0.3).abs() < 1e-10);
        assert!((r.moment(&AncillaOperator::Momentum, 1).unwrap() + 0.8).abs() < 1e-10);
        assert!(leakage(&r.state) < 1e-6);
    }

    #[test]
    fn leakage_guard_rejects_large_displacement() {
        let prep = PreparationFamily::pure_gaussian(
            8,
            TauLaw::constant(1.0),
            TauLaw::constant(4.0),
            TauLaw::constant(0.0),
        );
        assert!(matches!(prep.realize(1.0, 1.0), Err(Error::Resolution(_))));
    }

    #[test]
    fn frame_rejects_mismatched_operators() {
        let frame = AncillaFrame::Grid { values: vec![0.0, 1.0] };
        assert!(frame.operator(&AncillaOperator::Momentum).is_err());
        let osc = AncillaFrame::Oscillator {
            length: 1.0,
            hbar: 1.0,
            dim: 4,
        };
        assert!(osc.operator(&AncillaOperator::GridValue).is_err());
        let sum = AncillaOperator::Sum(vec![
            AncillaOperator::Position,
            AncillaOperator::Position.scaled(-1.0),
        ]);
        assert!(max_abs(&osc.operator(&sum).unwrap()) == 0.0);
    }

    #[test]
    fn variance_is_nonnegative_for_every_preparation() {
        let m = ops::diag(&[0.2, -0.5, 1.0]);
        let rho = CMat::from_fn(3, 3, |i, j| {
            C64::new(((i + 2 * j) as f64).cos(), ((3 * i + j) as f64).sin() * (i != j) as u8 as f64)
        });
        let rho = &rho * rho.adjoint();
        let tr = rho.trace();
        let state = DensityMatrix::new(rho / tr).unwrap();
        assert!(moment(&state, &m, 1).powi(2) <= moment(&state, &m, 2) + 1e-10);
    }
}
