//! Finite-τ limit quantities Ξᵢ, Γᵢⱼ, M̃ᵢⱼ, M̃ᵢ₀ and their extrapolation to
//! τ → 0.
//!
//! Indices run over sub-interactions in declaration order. Terms on different
//! ancillae see a product state, so their joint moments factorize.

use nalgebra::{DMatrix, DVector};

use super::{CycleSpec, RealizedCycle};
use crate::error::{Error, Result};
use crate::linalg::{anticommutator, commutator, I};
use crate::tolerance;

#[derive(Debug, Clone, PartialEq)]
pub struct LimitSample {
    pub tau: f64,
    pub tau_sub: f64,
    pub xi: Vec<f64>,
    pub gamma: DMatrix<f64>,
    pub mtilde: DMatrix<f64>,
    pub mtilde0: Vec<f64>,
}

/// Limit quantities at the realized τ.
pub fn limit_sample(r: &RealizedCycle) -> Result<LimitSample> {
    let n = r.terms.len();
    let ts = r.tau_sub;
    let hbar = r.hbar;
    let mean = |t: usize| r.ancillas[r.terms[t].ancilla].state.expectation(&r.terms[t].m);
    let xi: Vec<f64> = (0..n).map(|i| r.terms[i].g * mean(i).re).collect();
    let mut gamma = DMatrix::zeros(n, n);
    let mut mtilde = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let (ti, tj) = (&r.terms[i], &r.terms[j]);
            let pref = ts * ti.g * tj.g;
            if ti.ancilla == tj.ancilla {
                let rho = &r.ancillas[ti.ancilla].state;
                gamma[(i, j)] = 0.25 * pref * rho.expectation(&anticommutator(&ti.m, &tj.m)).re;
                mtilde[(i, j)] =
                    pref / (4.0 * hbar) * rho.expectation(&(commutator(&ti.m, &tj.m) * I)).re;
            } else {
                gamma[(i, j)] = 0.5 * pref * mean(i).re * mean(j).re;
            }
        }
    }
    let mtilde0 = (0..n)
        .map(|i| {
            let t = &r.terms[i];
            let rho = &r.ancillas[t.ancilla].state;
            ts * t.g / (4.0 * hbar)
                * rho.expectation(&(commutator(&t.m, &r.m0[t.ancilla]) * I)).re
        })
        .collect();
    for v in gamma.iter().chain(mtilde.iter()).chain(xi.iter()) {
        if !v.is_finite() {
            return Err(Error::NonFinite("limit sample".into()));
        }
    }
    Ok(LimitSample {
        tau: r.tau,
        tau_sub: ts,
        xi,
        gamma,
        mtilde,
        mtilde0,
    })
}

/// Outcome of extrapolating a τ-sequence to τ → 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Extrapolation {
    pub value: f64,
    pub residual: f64,
    /// log–log slope of |f| against τ
    pub slope: f64,
    pub established: bool,
    pub divergent: bool,
}

impl Extrapolation {
    pub fn exact(value: f64) -> Self {
        Self {
            value,
            residual: 0.0,
            slope: 0.0,
            established: true,
            divergent: false,
        }
    }
}

/// Polynomial least-squares constant term of degree `deg` in τ.
fn poly_intercept(taus: &[f64], values: &[f64], deg: usize) -> f64 {
    let scale = taus.iter().cloned().fold(0.0, f64::max);
    let a = DMatrix::from_fn(taus.len(), deg + 1, |r, c| (taus[r] / scale).powi(c as i32));
    let b = DVector::from_column_slice(values);
    match a.svd(true, true).solve(&b, 1e-14) {
        Ok(x) => x[0],
        Err(_) => f64::NAN,
    }
}

/// Richardson extrapolation: quadratic in τ through the three finest points.
/// The residual compares against the linear extrapolant through the two
/// finest points.
pub fn richardson(taus: &[f64], values: &[f64]) -> Extrapolation {
    assert_eq!(taus.len(), values.len());
    let n = taus.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| taus[a].total_cmp(&taus[b]));
    let t: Vec<f64> = idx.iter().map(|&i| taus[i]).collect();
    let f: Vec<f64> = idx.iter().map(|&i| values[i]).collect();
    let fmax = f.iter().map(|x| x.abs()).fold(0.0, f64::max);
    if fmax == 0.0 {
        return Extrapolation::exact(0.0);
    }
    // interpolate through the finest points; coarse points only feed the slope
    let m = n.min(3);
    let value = poly_intercept(&t[..m], &f[..m], m - 1);
    let linear = if n >= 2 {
        f[0] - t[0] * (f[1] - f[0]) / (t[1] - t[0])
    } else {
        f[0]
    };
    let residual = (value - linear).abs();
    // log-log slope over points with nonzero magnitude
    let pts: Vec<(f64, f64)> = t
        .iter()
        .zip(&f)
        .filter(|(_, v)| v.abs() > 1e-300)
        .map(|(t, v)| (t.ln(), v.abs().ln()))
        .collect();
    let slope = if pts.len() >= 2 {
        let m = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        if sxx > 0.0 {
            sxy / sxx
        } else {
            0.0
        }
    } else {
        0.0
    };
    let divergent = slope < tolerance::DIVERGENCE_SLOPE && f[0].abs() > f[n - 1].abs();
    let established = !divergent
        && value.is_finite()
        && residual <= tolerance::EXTRAPOLATION_REL * value.abs().max(fmax);
    Extrapolation {
        value,
        residual,
        slope,
        established,
        divergent,
    }
}

/// Extrapolated limits plus the per-τ samples they came from.
#[derive(Debug, Clone, PartialEq)]
pub struct LimitSet {
    pub xi: Vec<Extrapolation>,
    pub gamma: Vec<Vec<Extrapolation>>,
    pub mtilde: Vec<Vec<Extrapolation>>,
    pub mtilde0: Vec<Extrapolation>,
    pub samples: Vec<LimitSample>,
}

impl LimitSet {
    /// Limits known in closed form.
    pub fn from_values(
        xi: Vec<f64>,
        gamma: DMatrix<f64>,
        mtilde: DMatrix<f64>,
        mtilde0: Vec<f64>,
    ) -> Self {
        let wrap = |m: &DMatrix<f64>| {
            (0..m.nrows())
                .map(|i| (0..m.ncols()).map(|j| Extrapolation::exact(m[(i, j)])).collect())
                .collect()
        };
        Self {
            xi: xi.into_iter().map(Extrapolation::exact).collect(),
            gamma: wrap(&gamma),
            mtilde: wrap(&mtilde),
            mtilde0: mtilde0.into_iter().map(Extrapolation::exact).collect(),
            samples: Vec::new(),
        }
    }

    pub fn n_terms(&self) -> usize {
        self.xi.len()
    }

    fn all(&self) -> impl Iterator<Item = (String, &Extrapolation)> {
        let xi = self.xi.iter().enumerate().map(|(i, e)| (format!("Ξ{i}"), e));
        let g = self.gamma.iter().enumerate().flat_map(|(i, row)| {
            row.iter().enumerate().map(move |(j, e)| (format!("Γ{i}{j}"), e))
        });
        let m = self.mtilde.iter().enumerate().flat_map(|(i, row)| {
            row.iter().enumerate().map(move |(j, e)| (format!("M̃{i}{j}"), e))
        });
        let m0 = self.mtilde0.iter().enumerate().map(|(i, e)| (format!("M̃{i}0"), e));
        xi.chain(g).chain(m).chain(m0)
    }

    pub fn divergent_quantities(&self) -> Vec<String> {
        self.all().filter(|(_, e)| e.divergent).map(|(n, _)| n).collect()
    }

    pub fn any_divergent(&self) -> bool {
        self.all().any(|(_, e)| e.divergent)
    }

    /// First quantity whose limit could not be certified.
    pub fn first_unestablished(&self) -> Option<(String, f64)> {
        self.all()
            .find(|(_, e)| !e.established)
            .map(|(n, e)| (n, e.residual))
    }

    pub fn xi_values(&self) -> Vec<f64> {
        self.xi.iter().map(|e| e.value).collect()
    }

    pub fn gamma_values(&self) -> DMatrix<f64> {
        let n = self.n_terms();
        DMatrix::from_fn(n, n, |i, j| self.gamma[i][j].value)
    }

    pub fn mtilde_values(&self) -> DMatrix<f64> {
        let n = self.n_terms();
        DMatrix::from_fn(n, n, |i, j| self.mtilde[i][j].value)
    }

    pub fn mtilde0_values(&self) -> Vec<f64> {
        self.mtilde0.iter().map(|e| e.value).collect()
    }
}

/// Computes every limit quantity on a decreasing τ sweep and extrapolates.
pub fn limit_set(cycle: &CycleSpec, taus: &[f64]) -> Result<LimitSet> {
    if taus.len() < 3 {
        return Err(Error::InvalidArgument("limit sweep needs at least 3 τ values".into()));
    }
    if taus.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::InvalidArgument("τ sweep must be strictly decreasing".into()));
    }
    if taus[0] / taus[taus.len() - 1] < 100.0 * (1.0 - 1e-12) {
        return Err(Error::InvalidArgument("τ sweep must span at least two decades".into()));
    }
    let samples = taus
        .iter()
        .map(|&t| limit_sample(&cycle.realize(t)?))
        .collect::<Result<Vec<_>>>()?;
    let n = cycle.n_terms();
    let ext = |get: &dyn Fn(&LimitSample) -> f64| {
        let v: Vec<f64> = samples.iter().map(get).collect();
        richardson(taus, &v)
    };
    let xi = (0..n).map(|i| ext(&|s| s.xi[i])).collect();
    let gamma = (0..n)
        .map(|i| (0..n).map(|j| ext(&|s| s.gamma[(i, j)])).collect())
        .collect();
    let mtilde = (0..n)
        .map(|i| (0..n).map(|j| ext(&|s| s.mtilde[(i, j)])).collect())
        .collect();
    let mtilde0 = (0..n).map(|i| ext(&|s| s.mtilde0[i])).collect();
    Ok(LimitSet {
        xi,
        gamma,
        mtilde,
        mtilde0,
        samples,
    })
}

/// Gᵢⱼ = ḡᵢḡⱼ⟨MᵢMⱼ⟩ for two terms on the same ancilla (complex hermitian).
pub fn gram_matrix(r: &RealizedCycle, i: usize, j: usize) -> Result<crate::linalg::CMat> {
    let (ti, tj) = (&r.terms[i], &r.terms[j]);
    if ti.ancilla != tj.ancilla {
        return Err(Error::InvalidArgument("Gram matrix needs terms on one ancilla".into()));
    }
    let rho = &r.ancillas[ti.ancilla].state;
    let ops = [(&ti.m, ti.g), (&tj.m, tj.g)];
    Ok(crate::linalg::CMat::from_fn(2, 2, |a, b| {
        rho.expectation(&(ops[a].0 * ops[b].0)) * (ops[a].1 * ops[b].1)
    }))
}

/// ħ|M̃ᵢⱼ| ≤ Γᵢᵢ + Γⱼⱼ (+1e−10) at the sample's τ.
pub fn feedback_bound_holds(s: &LimitSample, i: usize, j: usize, hbar: f64) -> bool {
    hbar * s.mtilde[(i, j)].abs() <= s.gamma[(i, i)] + s.gamma[(j, j)] + 1e-10
}

#[cfg(test)]
mod tests {
    use super::super::*;
    use super::*;
    use crate::linalg::{hermitian_eigenvalues, ops, CMat, C64};

    #[test]
    fn richardson_recovers_quadratic_exactly() {
        let taus = [0.1, 0.03, 0.01, 0.001];
        let f: Vec<f64> = taus.iter().map(|t| 2.0 + 3.0 * t - 5.0 * t * t).collect();
        let e = richardson(&taus, &f);
        assert!((e.value - 2.0).abs() < 1e-12);
        assert!(e.established && !e.divergent);
    }

    #[test]
    fn richardson_flags_divergence() {
        let taus = [0.1, 0.01, 0.001];
        let f: Vec<f64> = taus.iter().map(|t| 0.5 / t).collect();
        let e = richardson(&taus, &f);
        assert!(e.divergent && !e.established);
        assert!((e.slope + 1.0).abs() < 1e-12);
    }

    #[test]
    fn weak_regime_limits() {
        // fixed ḡ and fixed ⟨M⟩: Ξ = ḡ⟨M⟩, Γ → 0
        let c = CycleSpec::single(
            CMat::zeros(2, 2),
            ops::pauli_z(),
            PreparationFamily::explicit(ops::diag(&[0.8, 0.2])),
            AncillaOperator::Explicit(ops::pauli_z()),
            AncillaOperator::zero(2),
            CouplingSchedule::constant(1.5),
            1.0,
        )
        .unwrap();
        let l = limit_set(&c, &[0.1, 0.01, 0.001]).unwrap();
        assert!((l.xi[0].value - 1.5 * 0.6).abs() < 1e-12);
        assert!(l.gamma[0][0].value.abs() < 1e-12);
        assert!(!l.any_divergent());
    }

    #[test]
    fn strong_regime_fixed_moments_diverge() {
        let c = CycleSpec::single(
            CMat::zeros(2, 2),
            ops::pauli_z(),
            PreparationFamily::explicit(ops::diag(&[0.5, 0.5])),
            AncillaOperator::Explicit(ops::pauli_z()),
            AncillaOperator::zero(2),
            CouplingSchedule::strong(1.0),
            1.0,
        )
        .unwrap();
        let l = limit_set(&c, &[0.1, 0.01, 0.001]).unwrap();
        assert!(l.gamma[0][0].divergent);
        assert!(l.divergent_quantities().contains(&"Γ00".to_string()));
    }

    #[test]
    fn gaussian_meter_limits_with_position_then_momentum() {
        // ḡ₁ = 1/τ′ on p̂, ḡ₂ fixed on x̂, wavefunction width σ = D/τ′
        let (d, g2, hbar) = (0.8, 1.3, 1.0);
        let s = ops::pauli_z();
        let term = |m, sched| SubInteraction {
            s_op: s.clone(),
            ancilla: 0,
            m_op: m,
            schedule: sched,
        };
        let c = CycleSpec {
            system_layout: crate::linalg::TensorLayout::single(2),
            s0: CMat::zeros(2, 2),
            ancillas: vec![AncillaSpec {
                preparation: PreparationFamily::pure_gaussian(
                    8,
                    TauLaw::power(d, -1.0),
                    TauLaw::constant(0.0),
                    TauLaw::constant(0.0),
                ),
                m0: AncillaOperator::zero(8),
            }],
            substeps: vec![
                vec![term(AncillaOperator::Momentum, CouplingSchedule::strong(1.0))],
                vec![term(AncillaOperator::Position, CouplingSchedule::constant(g2))],
            ],
            hbar,
        };
        let l = limit_set(&c, &[0.1, 0.01, 0.001]).unwrap();
        assert!((l.gamma[0][0].value - hbar * hbar / (4.0 * d)).abs() < 1e-10);
        assert!((l.gamma[1][1].value - g2 * g2 * d / 4.0).abs() < 1e-10);
        // natural ordering: M̃₁₂ built from i[p̂, x̂] = ħ
        assert!((l.mtilde[0][1].value - g2 / 4.0).abs() < 1e-10);
        assert!((l.mtilde[1][0].value + g2 / 4.0).abs() < 1e-10);
        assert!(l.first_unestablished().is_none());
    }

    #[test]
    fn gram_matrix_is_positive_and_bounds_feedback() {
        // random mixed qutrit states with non-commuting M₁, M₂
        let m1 = ops::position(3, 1.0);
        let m2 = ops::momentum(3, 1.0, 1.0);
        for seed in 0..50u64 {
            let a = CMat::from_fn(3, 3, |i, j| {
                let x = (seed as f64 * 1.7 + i as f64 * 3.1 + j as f64 * 0.7).sin();
                let y = (seed as f64 * 0.3 + i as f64 * 1.3 - j as f64 * 2.9).cos();
                C64::new(x, y)
            });
            let rho = &a * a.adjoint();
            let tr = rho.trace();
            let prep = PreparationFamily::explicit(rho / tr);
            let mk = |m: &CMat, g| SubInteraction {
                s_op: ops::pauli_z(),
                ancilla: 0,
                m_op: AncillaOperator::Explicit(m.clone()),
                schedule: CouplingSchedule::constant(g),
            };
            let c = CycleSpec {
                system_layout: crate::linalg::TensorLayout::single(2),
                s0: CMat::zeros(2, 2),
                ancillas: vec![AncillaSpec {
                    preparation: prep,
                    m0: AncillaOperator::zero(3),
                }],
                substeps: vec![vec![mk(&m1, 0.7)], vec![mk(&m2, -1.9)]],
                hbar: 1.0,
            };
            let r = c.realize(0.3).unwrap();
            let g = gram_matrix(&r, 0, 1).unwrap();
            let norm = g.iter().map(|z| z.norm()).fold(0.0, f64::max);
            assert!(hermitian_eigenvalues(&g)[0] >= -1e-10 * norm);
            let s = limit_sample(&r).unwrap();
            assert!(feedback_bound_holds(&s, 0, 1, 1.0));
            let min = s.gamma.clone().symmetric_eigen().eigenvalues.min();
            assert!(min >= -1e-12);
        }
    }
}
