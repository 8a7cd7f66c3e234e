//! Dense complex linear algebra specialized to Hermitian effects.
//!
//! Operators are stored as `nalgebra` dense matrices of `Complex<f64>`.
//! Rank-one effects `c |v><v|` keep their factored form until they are summed;
//! their norm and spectrum are then available without an eigensolve.

use std::fmt;
use std::ops::{Add, Mul, Sub};

use nalgebra::{DMatrix, DVector, SymmetricEigen, SVD};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tolerance::Tolerances;

pub type C64 = nalgebra::Complex<f64>;

pub(crate) const ZERO: C64 = C64::new(0.0, 0.0);
pub(crate) const ONE: C64 = C64::new(1.0, 0.0);

/// Components below this magnitude are treated as zero when canonicalizing
/// the global phase of a vector or picking a tie-break direction.
const PHASE_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HilbertSpace {
    dim: usize,
}

impl HilbertSpace {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidDimension(dim));
        }
        Ok(Self { dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
}

/// A unit vector in `C^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    amplitudes: DVector<C64>,
}

impl StateVector {
    /// Normalizes `amplitudes` to unit Euclidean norm.
    pub fn new(amplitudes: Vec<C64>) -> Result<Self> {
        if amplitudes.is_empty() {
            return Err(Error::InvalidDimension(0));
        }
        let v = DVector::from_vec(amplitudes);
        let norm = v.norm();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::ZeroVector);
        }
        Ok(Self {
            amplitudes: v.unscale(norm),
        })
    }

    pub fn from_real(amplitudes: &[f64]) -> Result<Self> {
        Self::new(amplitudes.iter().map(|&x| C64::new(x, 0.0)).collect())
    }

    /// Computational basis vector `|j>`.
    pub fn basis(dim: usize, j: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidDimension(dim));
        }
        if j >= dim {
            return Err(Error::InvalidParameter(format!(
                "basis index {j} out of range for dimension {dim}"
            )));
        }
        let mut v = DVector::from_element(dim, ZERO);
        v[j] = ONE;
        Ok(Self { amplitudes: v })
    }

    /// `(1/sqrt d) sum_j |j>`.
    pub fn uniform(dim: usize) -> Result<Self> {
        Self::new(vec![ONE; dim])
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &[C64] {
        self.amplitudes.as_slice()
    }

    pub fn as_vector(&self) -> &DVector<C64> {
        &self.amplitudes
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.norm()
    }

    /// `<self, other>`, antilinear in `self`.
    pub fn inner(&self, other: &StateVector) -> Result<C64> {
        check_dim(self.dim(), other.dim())?;
        Ok(self.amplitudes.dotc(&other.amplitudes))
    }

    /// `<psi, A psi>` (real part; `A` is expected Hermitian).
    pub fn expectation(&self, op: &Operator) -> Result<f64> {
        check_dim(op.dim(), self.dim())?;
        let applied = &op.matrix * &self.amplitudes;
        Ok(self.amplitudes.dotc(&applied).re)
    }

    /// `<psi, E psi>` without densifying a factored effect.
    pub fn expectation_effect(&self, effect: &Effect) -> Result<f64> {
        check_dim(effect.dim(), self.dim())?;
        match &effect.repr {
            EffectRepr::Dense(op) => self.expectation(op),
            EffectRepr::Rank1 { weight, vector } => {
                Ok(weight * vector.dotc(&self.amplitudes).norm_sqr())
            }
        }
    }
}

/// Square complex matrix acting on `C^d`.
#[derive(Clone, PartialEq)]
pub struct Operator {
    matrix: DMatrix<C64>,
}

impl fmt::Debug for Operator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Operator{}", self.matrix)
    }
}

impl Operator {
    pub fn zeros(dim: usize) -> Self {
        Self {
            matrix: DMatrix::from_element(dim, dim, ZERO),
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            matrix: DMatrix::identity(dim, dim),
        }
    }

    pub fn from_matrix(matrix: DMatrix<C64>) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::DimensionMismatch {
                expected: matrix.nrows(),
                actual: matrix.ncols(),
            });
        }
        if matrix.nrows() == 0 {
            return Err(Error::InvalidDimension(0));
        }
        Ok(Self { matrix })
    }

    pub fn from_row_major(dim: usize, entries: &[C64]) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidDimension(0));
        }
        if entries.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                actual: entries.len(),
            });
        }
        Ok(Self {
            matrix: DMatrix::from_row_slice(dim, dim, entries),
        })
    }

    pub fn from_fn(dim: usize, f: impl FnMut(usize, usize) -> C64) -> Self {
        Self {
            matrix: DMatrix::from_fn(dim, dim, f),
        }
    }

    pub fn diagonal(diag: &[f64]) -> Self {
        let d = diag.len();
        Self::from_fn(d, |i, j| if i == j { C64::new(diag[i], 0.0) } else { ZERO })
    }

    /// `weight * |v><v|`.
    pub fn outer(weight: f64, v: &[C64]) -> Self {
        let d = v.len();
        Self::from_fn(d, |i, j| v[i] * v[j].conj() * weight)
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn entry(&self, i: usize, j: usize) -> C64 {
        self.matrix[(i, j)]
    }

    pub fn row_major(&self) -> Vec<C64> {
        let d = self.dim();
        (0..d)
            .flat_map(|i| (0..d).map(move |j| (i, j)))
            .map(|(i, j)| self.matrix[(i, j)])
            .collect()
    }

    pub fn adjoint(&self) -> Self {
        Self {
            matrix: self.matrix.adjoint(),
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            matrix: self.matrix.scale(s),
        }
    }

    /// `U A U^dagger`.
    pub fn conjugate_by(&self, unitary: &Operator) -> Result<Self> {
        check_dim(self.dim(), unitary.dim())?;
        Ok(Self {
            matrix: &unitary.matrix * &self.matrix * unitary.matrix.adjoint(),
        })
    }

    pub fn apply(&self, v: &[C64]) -> Result<Vec<C64>> {
        check_dim(self.dim(), v.len())?;
        let out = &self.matrix * DVector::from_column_slice(v);
        Ok(out.as_slice().to_vec())
    }

    /// Max entry of `|A - A^dagger|`.
    pub fn hermiticity_defect(&self) -> f64 {
        let d = self.dim();
        let mut worst = 0.0_f64;
        for i in 0..d {
            for j in i..d {
                worst = worst.max((self.matrix[(i, j)] - self.matrix[(j, i)].conj()).norm());
            }
        }
        worst
    }

    pub fn max_abs_entry(&self) -> f64 {
        self.matrix.iter().fold(0.0_f64, |m, z| m.max(z.norm()))
    }

    /// Max entrywise distance to another operator of the same dimension.
    pub fn max_entry_distance(&self, other: &Operator) -> Result<f64> {
        check_dim(self.dim(), other.dim())?;
        Ok(self
            .matrix
            .iter()
            .zip(other.matrix.iter())
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).norm())))
    }

    pub fn is_zero(&self) -> bool {
        self.matrix.iter().all(|z| z.re == 0.0 && z.im == 0.0)
    }

    fn hermitian_part(&self) -> DMatrix<C64> {
        (&self.matrix + self.matrix.adjoint()).scale(0.5)
    }

    pub(crate) fn add_assign_ref(&mut self, other: &Operator) {
        self.matrix += &other.matrix;
    }
}

impl Add for &Operator {
    type Output = Operator;
    fn add(self, rhs: &Operator) -> Operator {
        Operator {
            matrix: &self.matrix + &rhs.matrix,
        }
    }
}

impl Sub for &Operator {
    type Output = Operator;
    fn sub(self, rhs: &Operator) -> Operator {
        Operator {
            matrix: &self.matrix - &rhs.matrix,
        }
    }
}

impl Mul for &Operator {
    type Output = Operator;
    fn mul(self, rhs: &Operator) -> Operator {
        Operator {
            matrix: &self.matrix * &rhs.matrix,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum EffectRepr {
    Dense(Operator),
    /// `weight * |vector><vector|`; `vector` need not be normalized.
    Rank1 { weight: f64, vector: DVector<C64> },
}

/// A Hermitian operator `0 <= E <= 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Effect {
    repr: EffectRepr,
    hermiticity_defect: f64,
    eigen_range: (f64, f64),
}

impl Effect {
    /// Validates `op` against the default tolerances.
    pub fn new(op: Operator) -> Result<Self> {
        Self::with_tolerances(op, &Tolerances::default())
    }

    pub fn with_tolerances(op: Operator, tol: &Tolerances) -> Result<Self> {
        let defect = op.hermiticity_defect();
        if defect > tol.hermiticity {
            return Err(Error::NotHermitian {
                defect,
                tol: tol.hermiticity,
            });
        }
        let eig = SymmetricEigen::new(op.hermitian_part());
        let (min, max) = eig
            .eigenvalues
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &l| {
                (lo.min(l), hi.max(l))
            });
        if min < -tol.positivity || max > 1.0 + tol.positivity {
            return Err(Error::NotAnEffect { min, max });
        }
        Ok(Self {
            repr: EffectRepr::Dense(op),
            hermiticity_defect: defect,
            eigen_range: (min, max),
        })
    }

    /// `weight * |vector><vector|`, stored factored.
    pub fn rank1(weight: f64, vector: Vec<C64>) -> Result<Self> {
        if vector.is_empty() {
            return Err(Error::InvalidDimension(0));
        }
        let vector = DVector::from_vec(vector);
        let top = weight * vector.norm_squared();
        if !(weight.is_finite() && weight >= 0.0) || top > 1.0 + Tolerances::default().positivity {
            return Err(Error::NotAnEffect {
                min: weight.min(0.0),
                max: top,
            });
        }
        let bottom = if vector.len() > 1 { 0.0 } else { top };
        Ok(Self {
            repr: EffectRepr::Rank1 { weight, vector },
            hermiticity_defect: 0.0,
            eigen_range: (bottom, top),
        })
    }

    pub fn zero(dim: usize) -> Self {
        Self {
            repr: EffectRepr::Dense(Operator::zeros(dim)),
            hermiticity_defect: 0.0,
            eigen_range: (0.0, 0.0),
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            repr: EffectRepr::Dense(Operator::identity(dim)),
            hermiticity_defect: 0.0,
            eigen_range: (1.0, 1.0),
        }
    }

    pub fn dim(&self) -> usize {
        match &self.repr {
            EffectRepr::Dense(op) => op.dim(),
            EffectRepr::Rank1 { vector, .. } => vector.len(),
        }
    }

    pub fn repr(&self) -> &EffectRepr {
        &self.repr
    }

    pub fn is_rank1(&self) -> bool {
        matches!(self.repr, EffectRepr::Rank1 { .. })
    }

    pub fn hermiticity_defect(&self) -> f64 {
        self.hermiticity_defect
    }

    /// `(lambda_min, lambda_max)` of the Hermitian part.
    pub fn eigen_range(&self) -> (f64, f64) {
        self.eigen_range
    }

    pub fn to_operator(&self) -> Operator {
        match &self.repr {
            EffectRepr::Dense(op) => op.clone(),
            EffectRepr::Rank1 { weight, vector } => Operator::outer(*weight, vector.as_slice()),
        }
    }

    /// Adds this effect into `acc` without materializing a temporary.
    pub(crate) fn accumulate_into(&self, acc: &mut Operator) {
        match &self.repr {
            EffectRepr::Dense(op) => acc.add_assign_ref(op),
            EffectRepr::Rank1 { weight, vector } => {
                let d = vector.len();
                for j in 0..d {
                    let vj = vector[j].conj() * *weight;
                    for i in 0..d {
                        acc.matrix[(i, j)] += vector[i] * vj;
                    }
                }
            }
        }
    }
}

fn check_dim(expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::DimensionMismatch { expected, actual });
    }
    Ok(())
}

/// Eigenvalues (ascending) and matching eigenvector columns of a Hermitian
/// operator. Non-Hermitian input beyond `tol` is rejected, never symmetrized.
pub fn hermitian_eigen(op: &Operator, tol: f64) -> Result<(Vec<f64>, DMatrix<C64>)> {
    let defect = op.hermiticity_defect();
    if defect > tol {
        return Err(Error::NotHermitian { defect, tol });
    }
    let eig = SymmetricEigen::new(op.hermitian_part());
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]).then(a.cmp(&b)));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let d = op.dim();
    let vectors = DMatrix::from_fn(d, d, |i, k| eig.eigenvectors[(i, order[k])]);
    Ok((values, vectors))
}

/// `||E||`, the largest eigenvalue of the Hermitian part of a positive
/// effect. Factored rank-one effects answer `c <v, v>` directly.
pub fn spectral_norm(effect: &Effect) -> f64 {
    let (lo, hi) = effect.eigen_range;
    hi.max(-lo).max(0.0)
}

/// `max |lambda|` of a Hermitian operator (signed differences of effects).
pub fn hermitian_norm(op: &Operator, tol: f64) -> Result<f64> {
    let (values, _) = hermitian_eigen(op, tol)?;
    Ok(values.iter().fold(0.0_f64, |m, l| m.max(l.abs())))
}

/// Largest singular value of an arbitrary square operator.
pub fn operator_norm(op: &Operator) -> f64 {
    if op.is_zero() {
        return 0.0;
    }
    let svd = SVD::new(op.matrix.clone(), false, false);
    svd.singular_values.iter().fold(0.0_f64, |m, &s| m.max(s))
}

/// `||a |u><u| - b |v><v|||` computed on the two-dimensional span of `u` and
/// `v`, without forming `d x d` matrices.
pub fn rank1_difference_norm(a: f64, u: &[C64], b: f64, v: &[C64]) -> Result<f64> {
    check_dim(u.len(), v.len())?;
    let u = DVector::from_column_slice(u);
    let v = DVector::from_column_slice(v);
    let nu = u.norm();
    if nu == 0.0 {
        return Ok((b * v.norm_squared()).abs());
    }
    let e1 = u.unscale(nu);
    let beta = e1.dotc(&v);
    let w = &v - &e1 * beta;
    let gamma = w.norm();
    // Coordinates: u = (nu, 0), v = (beta, gamma) in the basis {e1, e2}.
    let m11 = a * nu * nu - b * beta.norm_sqr();
    let m22 = -b * gamma * gamma;
    let m12 = -(beta * gamma) * b;
    let mean = 0.5 * (m11 + m22);
    let radius = (0.25 * (m11 - m22).powi(2) + m12.norm_sqr()).sqrt();
    Ok((mean + radius).abs().max((mean - radius).abs()))
}

/// Returns the unit vector attaining `sup <psi, E psi>` and the attained value.
///
/// When the top eigenvalue is degenerate (within 1e-10) the result is the
/// normalized projection of the first computational basis vector `|j>` that is
/// not orthogonal to the top eigenspace, i.e. the maximizer whose absolute
/// component pattern is lexicographically largest. The global phase makes the
/// first nonzero component real positive.
pub fn maximizing_state(effect: &Effect) -> Result<(StateVector, f64)> {
    let vector = match &effect.repr {
        EffectRepr::Rank1 { weight, vector } => {
            if *weight == 0.0 || vector.iter().all(|z| *z == ZERO) {
                return Err(Error::NoMaximizer);
            }
            vector.clone()
        }
        EffectRepr::Dense(op) => {
            if op.is_zero() {
                return Err(Error::NoMaximizer);
            }
            let (values, vectors) = hermitian_eigen(op, Tolerances::default().hermiticity)?;
            let d = op.dim();
            let top = values[d - 1];
            let eq = Tolerances::default().equality;
            let first_top = values.iter().position(|&l| l >= top - eq).unwrap_or(d - 1);
            let basis = vectors.columns(first_top, d - first_top).into_owned();
            let mut chosen = basis.column(basis.ncols() - 1).into_owned();
            for j in 0..d {
                // P e_j = U U^dagger e_j = U * conj(row j of U)^T
                let coeffs = basis.row(j).adjoint();
                let projected = &basis * coeffs;
                if projected.norm() > PHASE_EPS {
                    chosen = projected;
                    break;
                }
            }
            chosen
        }
    };
    let state = canonical_phase(StateVector::new(vector.as_slice().to_vec())?);
    let value = state.expectation_effect(effect)?;
    Ok((state, value))
}

/// Rotates the global phase so the first non-negligible component is real
/// and positive.
pub fn canonical_phase(state: StateVector) -> StateVector {
    let lead = state
        .amplitudes
        .iter()
        .find(|z| z.norm() > PHASE_EPS)
        .copied()
        .unwrap_or(ONE);
    let phase = lead.conj() / lead.norm();
    let mut amplitudes = state.amplitudes.map(|z| z * phase);
    for z in amplitudes.iter_mut() {
        if z.norm() <= PHASE_EPS * 1e-4 {
            *z = ZERO;
        }
    }
    let norm = amplitudes.norm();
    StateVector {
        amplitudes: amplitudes.unscale(norm),
    }
}

/// `||AB - BA||` (largest singular value).
pub fn commutator_norm(a: &Effect, b: &Effect) -> Result<f64> {
    check_dim(a.dim(), b.dim())?;
    if let (
        EffectRepr::Rank1 { weight: wa, vector: u },
        EffectRepr::Rank1 { weight: wb, vector: v },
    ) = (&a.repr, &b.repr)
    {
        // [|u><u|, |v><v|] = <u,v> |u><v| - <v,u> |v><u|, a rank-two operator
        // whose singular values are |<u,v>| * ||u|| ||v|| sqrt(1 - cos^2).
        let overlap = u.dotc(v).norm();
        let (nu, nv) = (u.norm(), v.norm());
        let cos2 = if nu == 0.0 || nv == 0.0 {
            1.0
        } else {
            (overlap / (nu * nv)).powi(2).min(1.0)
        };
        return Ok(wa * wb * overlap * nu * nv * (1.0 - cos2).sqrt());
    }
    let (oa, ob) = (a.to_operator(), b.to_operator());
    let c = &(&oa * &ob) - &(&ob * &oa);
    Ok(operator_norm(&c))
}

/// Smallest eigenvalue; certifies `E >= 0`.
pub fn min_eigenvalue(op: &Operator) -> Result<f64> {
    min_eigenvalue_with(op, Tolerances::default().hermiticity)
}

pub fn min_eigenvalue_with(op: &Operator, hermiticity_tol: f64) -> Result<f64> {
    let (values, _) = hermitian_eigen(op, hermiticity_tol)?;
    Ok(values[0])
}
