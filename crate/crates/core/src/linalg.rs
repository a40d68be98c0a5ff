//! Dense complex linear algebra: operators, density matrices, tensor layouts,
//! partial traces and matrix exponentials.
//!
//! Tensor products follow the usual row-major convention: for `kron(a, b)`
//! the composite index is `i * b.dim + k`, so the first factor is the most
//! significant one. Every layout in the crate uses this ordering.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::tolerance;

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

pub const I: C64 = C64::new(0.0, 1.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const ZERO: C64 = C64::new(0.0, 0.0);

/// A labelled square operator.
#[derive(Debug, Clone, PartialEq)]
pub struct Operator {
    matrix: CMat,
    label: String,
}

impl Operator {
    pub fn new(matrix: CMat, label: impl Into<String>) -> Result<Self> {
        let label = label.into();
        if !matrix.is_square() {
            return Err(Error::DimensionMismatch {
                context: format!("operator {label}"),
                expected: matrix.nrows(),
                found: matrix.ncols(),
            });
        }
        if matrix.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite(label));
        }
        Ok(Self { matrix, label })
    }

    /// Builds an operator and checks that it is hermitian to
    /// [`tolerance::HERMITIAN_REL`] relative to its largest entry.
    pub fn hermitian(matrix: CMat, label: impl Into<String>) -> Result<Self> {
        let op = Self::new(matrix, label)?;
        let dev = hermitian_deviation(&op.matrix);
        let scale = max_abs(&op.matrix).max(1.0);
        if dev > tolerance::HERMITIAN_REL * scale {
            return Err(Error::NotHermitian {
                label: op.label,
                deviation: dev,
            });
        }
        Ok(op)
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            matrix: CMat::zeros(dim, dim),
            label: format!("0_{dim}"),
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            matrix: CMat::identity(dim, dim),
            label: format!("I_{dim}"),
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMat {
        self.matrix
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn is_hermitian(&self) -> bool {
        hermitian_deviation(&self.matrix) <= tolerance::HERMITIAN_REL * max_abs(&self.matrix).max(1.0)
    }

    pub fn is_zero(&self) -> bool {
        self.matrix.iter().all(|z| z.norm() == 0.0)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            matrix: &self.matrix * C64::from(factor),
            label: format!("{factor}*{}", self.label),
        }
    }

    pub fn dagger(&self) -> Self {
        Self {
            matrix: self.matrix.adjoint(),
            label: format!("{}^†", self.label),
        }
    }
}

/// A validated density matrix: unit trace, hermitian and positive semidefinite
/// within `tolerance`.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    matrix: CMat,
    tolerance: f64,
}

impl DensityMatrix {
    pub fn new(matrix: CMat) -> Result<Self> {
        Self::with_tolerance(matrix, tolerance::STRUCTURAL)
    }

    pub fn with_tolerance(matrix: CMat, tol: f64) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::InvalidState("not square".into()));
        }
        if matrix.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite("density matrix".into()));
        }
        let tr = matrix.trace();
        if (tr - ONE).norm() > tol {
            return Err(Error::InvalidState(format!("trace {tr} differs from 1")));
        }
        let dev = hermitian_deviation(&matrix);
        if dev > tol {
            return Err(Error::InvalidState(format!("hermiticity deviation {dev:.3e}")));
        }
        let min_eig = hermitian_eigenvalues(&matrix)
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        if min_eig < -tol {
            return Err(Error::InvalidState(format!("negative eigenvalue {min_eig:.3e}")));
        }
        Ok(Self {
            matrix,
            tolerance: tol,
        })
    }

    /// Wraps a matrix without validation. Callers guarantee the invariants.
    pub(crate) fn new_unchecked(matrix: CMat) -> Self {
        Self {
            matrix,
            tolerance: tolerance::STRUCTURAL,
        }
    }

    /// Pure state |ψ⟩⟨ψ| from a (not necessarily normalized) vector.
    pub fn pure(psi: &CVec) -> Result<Self> {
        let norm = psi.norm();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::InvalidState("zero or non-finite state vector".into()));
        }
        let v = psi / C64::from(norm);
        Ok(Self::new_unchecked(&v * v.adjoint()))
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        Self::new_unchecked(CMat::identity(dim, dim) / C64::from(dim as f64))
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMat {
        self.matrix
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    pub fn expectation(&self, op: &CMat) -> C64 {
        (&self.matrix * op).trace()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        hermitian_eigenvalues(&self.matrix)
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min)
    }
}

/// Ordered tensor-factor dimensions of a composite space.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorLayout {
    factor_dims: Vec<usize>,
}

impl TensorLayout {
    pub fn new(factor_dims: Vec<usize>) -> Result<Self> {
        if factor_dims.is_empty() || factor_dims.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "layout factors must be positive, got {factor_dims:?}"
            )));
        }
        Ok(Self { factor_dims })
    }

    pub fn single(dim: usize) -> Self {
        Self {
            factor_dims: vec![dim],
        }
    }

    pub fn factor_dims(&self) -> &[usize] {
        &self.factor_dims
    }

    pub fn total_dim(&self) -> usize {
        self.factor_dims.iter().product()
    }

    pub fn len(&self) -> usize {
        self.factor_dims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.factor_dims.is_empty()
    }

    /// Splits a composite index into per-factor indices.
    pub fn split(&self, mut index: usize) -> Vec<usize> {
        let mut out = vec![0; self.factor_dims.len()];
        for (slot, &d) in out.iter_mut().zip(&self.factor_dims).rev() {
            *slot = index % d;
            index /= d;
        }
        out
    }

    /// Embeds `op` acting on factor `factor` into the full space.
    pub fn embed(&self, op: &CMat, factor: usize) -> Result<CMat> {
        if factor >= self.factor_dims.len() {
            return Err(Error::InvalidArgument(format!(
                "factor {factor} out of range for layout {:?}",
                self.factor_dims
            )));
        }
        if op.nrows() != self.factor_dims[factor] {
            return Err(Error::DimensionMismatch {
                context: format!("embedding into factor {factor}"),
                expected: self.factor_dims[factor],
                found: op.nrows(),
            });
        }
        let mut acc = CMat::identity(1, 1);
        for (f, &d) in self.factor_dims.iter().enumerate() {
            if f == factor {
                acc = kron_mat(&acc, op);
            } else {
                acc = kron_mat(&acc, &CMat::identity(d, d));
            }
        }
        Ok(acc)
    }
}

pub fn kron(a: &Operator, b: &Operator) -> Operator {
    Operator {
        matrix: kron_mat(&a.matrix, &b.matrix),
        label: format!("{}⊗{}", a.label, b.label),
    }
}

pub fn kron_mat(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

/// Traces out every factor not listed in `keep`. Kept factors retain their
/// relative order.
pub fn partial_trace(a: &CMat, layout: &TensorLayout, keep: &[usize]) -> Result<CMat> {
    let total = layout.total_dim();
    if a.nrows() != total || a.ncols() != total {
        return Err(Error::DimensionMismatch {
            context: "partial trace".into(),
            expected: total,
            found: a.nrows(),
        });
    }
    if let Some(&bad) = keep.iter().find(|&&k| k >= layout.len()) {
        return Err(Error::InvalidArgument(format!("kept factor {bad} out of range")));
    }
    let dims = layout.factor_dims();
    let kept_dim: usize = keep.iter().map(|&k| dims[k]).product();
    // (kept index, traced index) for every composite index
    let split: Vec<(usize, usize)> = (0..total)
        .map(|i| {
            let parts = layout.split(i);
            let mut kept = 0;
            let mut traced = 0;
            for (f, (&p, &d)) in parts.iter().zip(dims).enumerate() {
                if keep.contains(&f) {
                    kept = kept * d + p;
                } else {
                    traced = traced * d + p;
                }
            }
            (kept, traced)
        })
        .collect();
    // `keep` may list factors out of order; permute kept indices accordingly
    let mut sorted = keep.to_vec();
    sorted.sort_unstable();
    let remap: Option<Vec<usize>> = if sorted == keep {
        None
    } else {
        let sub = TensorLayout::new(sorted.iter().map(|&k| dims[k]).collect())?;
        Some(
            (0..kept_dim)
                .map(|i| {
                    let parts = sub.split(i);
                    keep.iter().fold(0, |acc, k| {
                        let pos = sorted.iter().position(|s| s == k).unwrap();
                        acc * dims[*k] + parts[pos]
                    })
                })
                .collect(),
        )
    };
    let mut out = CMat::zeros(kept_dim, kept_dim);
    for i in 0..total {
        let (ki, ti) = split[i];
        for j in 0..total {
            let (kj, tj) = split[j];
            if ti == tj {
                let (r, c) = match &remap {
                    Some(m) => (m[ki], m[kj]),
                    None => (ki, kj),
                };
                out[(r, c)] += a[(i, j)];
            }
        }
    }
    Ok(out)
}

pub fn commutator(a: &CMat, b: &CMat) -> CMat {
    a * b - b * a
}

pub fn anticommutator(a: &CMat, b: &CMat) -> CMat {
    a * b + b * a
}

pub fn max_abs(a: &CMat) -> f64 {
    a.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn hermitian_deviation(a: &CMat) -> f64 {
    max_abs(&(a - a.adjoint()))
}

pub fn hermitian_part(a: &CMat) -> CMat {
    (a + a.adjoint()) * C64::from(0.5)
}

/// Eigen-decomposition of a hermitian matrix (its hermitian part is used).
/// Returns ascending eigenvalues and the matching unitary of eigenvectors.
pub fn hermitian_eigen(a: &CMat) -> (Vec<f64>, CMat) {
    let eig = SymmetricEigen::new(hermitian_part(a));
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = CMat::from_columns(
        &order
            .iter()
            .map(|&i| eig.eigenvectors.column(i).into_owned())
            .collect::<Vec<_>>(),
    );
    (values, vectors)
}

pub fn hermitian_eigenvalues(a: &CMat) -> Vec<f64> {
    let mut v: Vec<f64> = SymmetricEigen::new(hermitian_part(a))
        .eigenvalues
        .iter()
        .cloned()
        .collect();
    v.sort_by(f64::total_cmp);
    v
}

/// Applies a real function to a hermitian matrix through its spectrum.
pub fn hermitian_function(a: &CMat, f: impl Fn(f64) -> C64) -> CMat {
    let (vals, vecs) = hermitian_eigen(a);
    let diag = CMat::from_diagonal(&CVec::from_iterator(vals.len(), vals.iter().map(|&x| f(x))));
    &vecs * diag * vecs.adjoint()
}

/// `exp(-i h t / hbar)` for hermitian `h`.
pub fn unitary_propagator(h: &CMat, t: f64, hbar: f64) -> CMat {
    hermitian_function(h, |x| C64::from_polar(1.0, -x * t / hbar))
}

/// Matrix exponential. Inputs of the form `i·H` with hermitian `H` go through
/// an eigendecomposition; everything else uses scaling and squaring with a
/// degree-13 Padé approximant.
pub fn expm(a: &CMat) -> Result<CMat> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch {
            context: "expm".into(),
            expected: a.nrows(),
            found: a.ncols(),
        });
    }
    if a.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::NonFinite("expm argument".into()));
    }
    let scale = max_abs(a).max(1.0);
    let skew_dev = max_abs(&(a + a.adjoint()));
    if skew_dev <= 1e-14 * scale {
        // a = -i h with h = i a hermitian
        let h = a * I;
        return Ok(unitary_propagator(&h, 1.0, 1.0));
    }
    expm_pade(a)
}

/// Scaling-and-squaring Padé(13) exponential.
pub fn expm_pade(a: &CMat) -> Result<CMat> {
    const B: [f64; 14] = [
        64764752532480000.0,
        32382376266240000.0,
        7771770303897600.0,
        1187353796428800.0,
        129060195264000.0,
        10559470521600.0,
        670442572800.0,
        33522128640.0,
        1323241920.0,
        40840800.0,
        960960.0,
        16380.0,
        182.0,
        1.0,
    ];
    const THETA13: f64 = 5.371920351148152;
    let n = a.nrows();
    let norm1 = (0..n)
        .map(|j| a.column(j).iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max);
    let s = if norm1 > THETA13 {
        (norm1 / THETA13).log2().ceil() as i32
    } else {
        0
    };
    let a = a / C64::from(2f64.powi(s));
    let id = CMat::identity(n, n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let c = |x: f64| C64::from(x);
    let u_inner = &a6 * (&a6 * c(B[13]) + &a4 * c(B[11]) + &a2 * c(B[9]))
        + &a6 * c(B[7])
        + &a4 * c(B[5])
        + &a2 * c(B[3])
        + &id * c(B[1]);
    let u = &a * u_inner;
    let v = &a6 * (&a6 * c(B[12]) + &a4 * c(B[10]) + &a2 * c(B[8]))
        + &a6 * c(B[6])
        + &a4 * c(B[4])
        + &a2 * c(B[2])
        + &id * c(B[0]);
    let p = &v + &u;
    let q = &v - &u;
    let mut r = q
        .lu()
        .solve(&p)
        .ok_or_else(|| Error::NonFinite("singular Padé denominator".into()))?;
    for _ in 0..s {
        r = &r * &r;
    }
    if r.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::NonFinite("expm result".into()));
    }
    Ok(r)
}

/// Trace distance ½‖ρ − σ‖₁.
pub fn trace_distance(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<f64> {
    trace_distance_mat(rho.matrix(), sigma.matrix())
}

pub fn trace_distance_mat(a: &CMat, b: &CMat) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::DimensionMismatch {
            context: "trace distance".into(),
            expected: a.nrows(),
            found: b.nrows(),
        });
    }
    let diff = a - b;
    Ok(0.5 * hermitian_eigenvalues(&diff).iter().map(|x| x.abs()).sum::<f64>())
}

/// Tr ρ².
pub fn purity(rho: &DensityMatrix) -> f64 {
    rho.matrix().iter().map(|z| z.norm_sqr()).sum()
}

/// Partial transpose of `factor` within `layout`.
pub fn partial_transpose(a: &CMat, layout: &TensorLayout, factor: usize) -> CMat {
    let total = layout.total_dim();
    let dims = layout.factor_dims();
    let mut out = CMat::zeros(total, total);
    let join = |parts: &[usize]| parts.iter().zip(dims).fold(0, |acc, (&p, &d)| acc * d + p);
    for i in 0..total {
        let pi = layout.split(i);
        for j in 0..total {
            let pj = layout.split(j);
            let mut ri = pi.clone();
            let mut rj = pj.clone();
            ri[factor] = pj[factor];
            rj[factor] = pi[factor];
            out[(join(&ri), join(&rj))] = a[(i, j)];
        }
    }
    out
}

/// Negativity (‖ρ^{T_B}‖₁ − 1)/2 with respect to `factor`.
pub fn negativity(rho: &DensityMatrix, layout: &TensorLayout, factor: usize) -> f64 {
    let pt = partial_transpose(rho.matrix(), layout, factor);
    hermitian_eigenvalues(&pt)
        .iter()
        .filter(|&&x| x < 0.0)
        .map(|x| -x)
        .sum()
}

pub fn frobenius(a: &CMat) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Column-stacking vectorization matching nalgebra storage.
pub fn vectorize(a: &CMat) -> CVec {
    CVec::from_column_slice(a.as_slice())
}

pub fn unvectorize(v: &CVec, dim: usize) -> CMat {
    CMat::from_column_slice(dim, dim, v.as_slice())
}

pub mod ops {
    //! Standard operator builders.
    use super::*;

    pub fn pauli_x() -> CMat {
        CMat::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO])
    }

    pub fn pauli_y() -> CMat {
        CMat::from_row_slice(2, 2, &[ZERO, -I, I, ZERO])
    }

    pub fn pauli_z() -> CMat {
        CMat::from_row_slice(2, 2, &[ONE, ZERO, ZERO, -ONE])
    }

    pub fn diag(values: &[f64]) -> CMat {
        CMat::from_diagonal(&CVec::from_iterator(
            values.len(),
            values.iter().map(|&x| C64::from(x)),
        ))
    }

    /// Truncated annihilation operator on `dim` Fock levels.
    pub fn annihilation(dim: usize) -> CMat {
        let mut a = CMat::zeros(dim, dim);
        for n in 1..dim {
            a[(n - 1, n)] = C64::from((n as f64).sqrt());
        }
        a
    }

    pub fn number(dim: usize) -> CMat {
        diag(&(0..dim).map(|n| n as f64).collect::<Vec<_>>())
    }

    /// Truncated position `length·(a + a†)/√2`.
    pub fn position(dim: usize, length: f64) -> CMat {
        let a = annihilation(dim);
        (&a + a.adjoint()) * C64::from(length / 2f64.sqrt())
    }

    /// Truncated momentum `(hbar/length)·i(a† − a)/√2`.
    pub fn momentum(dim: usize, length: f64, hbar: f64) -> CMat {
        let a = annihilation(dim);
        (a.adjoint() - &a) * (I * (hbar / length / 2f64.sqrt()))
    }

    /// Computational basis projector |k⟩⟨k|.
    pub fn projector(dim: usize, k: usize) -> CMat {
        let mut p = CMat::zeros(dim, dim);
        p[(k, k)] = ONE;
        p
    }
}
