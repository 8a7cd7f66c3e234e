//! Covariant localization observables built from the orbit of a fiducial
//! vector: `A(D) = sum_{x in D} mu({x}) |U(x) eta><U(x) eta|`.
//!
//! Two finite realizations are provided: the discrete Weyl-Heisenberg system
//! on `Z_d x Z_d`, where the resolution of the identity is exact, and a
//! window of the coherent-state plane sampled by midpoint quadrature on a
//! truncated Fock space, where the normalization defect is measured.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    hermitian_norm, rank1_difference_norm, spectral_norm, Effect, EffectRepr, Operator,
    StateVector, C64, ONE, ZERO,
};
use crate::povm::{DiscretePovm, OutcomeSpace, SpaceShape};
use crate::tolerance::Tolerances;

/// `exp(2 pi i k / d)` with `k` reduced mod `d` before the angle is formed.
fn root_of_unity(k: i64, d: usize) -> C64 {
    let r = k.rem_euclid(d as i64) as f64;
    C64::from_polar(1.0, 2.0 * PI * r / d as f64)
}

/// Shift `X|j> = |j+1>` and clock `Z|j> = w^j |j>` on `C^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeylSystem {
    d: usize,
    shift: Operator,
    clock: Operator,
    roots: Vec<C64>,
}

impl WeylSystem {
    pub fn new(d: usize) -> Result<Self> {
        if d < 2 {
            return Err(Error::InvalidParameter(format!(
                "Weyl-Heisenberg dimension must be at least 2, got {d}"
            )));
        }
        let roots: Vec<C64> = (0..d).map(|k| root_of_unity(k as i64, d)).collect();
        let shift = Operator::from_fn(d, |i, j| if i == (j + 1) % d { ONE } else { ZERO });
        let clock = Operator::from_fn(d, |i, j| if i == j { roots[i] } else { ZERO });
        Ok(Self {
            d,
            shift,
            clock,
            roots,
        })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn shift(&self) -> &Operator {
        &self.shift
    }

    pub fn clock(&self) -> &Operator {
        &self.clock
    }

    /// `w = exp(2 pi i / d)`.
    pub fn omega(&self) -> C64 {
        self.roots[1]
    }

    /// `D(q, p) = X^q Z^p`, entries `<j|D|k> = delta_{j, k+q} w^{pk}`.
    pub fn displacement(&self, q: usize, p: usize) -> Operator {
        let d = self.d;
        Operator::from_fn(d, |j, k| {
            if j == (k + q) % d {
                self.roots[(p * k) % d]
            } else {
                ZERO
            }
        })
    }

    /// `D(q, p) v` without forming the matrix.
    pub fn displace(&self, q: usize, p: usize, v: &[C64]) -> Result<Vec<C64>> {
        let d = self.d;
        if v.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: v.len(),
            });
        }
        Ok((0..d)
            .map(|j| {
                let k = (j + d - q % d) % d;
                self.roots[(p * k) % d] * v[k]
            })
            .collect())
    }

    /// Max deviations from unitarity of `X`, `Z` and from `ZX = w XZ`.
    pub fn relation_defects(&self) -> (f64, f64, f64) {
        let id = Operator::identity(self.d);
        let unitary = |u: &Operator| (&(u * &u.adjoint()) - &id).max_abs_entry();
        let zx = &self.clock * &self.shift;
        let xz = (&self.shift * &self.clock).matrix().map(|z| z * self.omega());
        let weyl = zx
            .matrix()
            .iter()
            .zip(xz.iter())
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).norm()));
        (unitary(&self.shift), unitary(&self.clock), weyl)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "label", rename_all = "kebab-case")]
pub enum FiducialLabel {
    Basis { index: usize },
    Uniform,
    Gaussian { width: f64 },
    Custom,
}

/// The unit vector whose orbit generates the observable.
#[derive(Debug, Clone, PartialEq)]
pub struct FiducialVector {
    pub state: StateVector,
    pub label: FiducialLabel,
}

impl FiducialVector {
    pub fn basis(dim: usize, index: usize) -> Result<Self> {
        Ok(Self {
            state: StateVector::basis(dim, index)?,
            label: FiducialLabel::Basis { index },
        })
    }

    /// The Fock vacuum; the default fiducial of the coherent family.
    pub fn vacuum(fock_dim: usize) -> Result<Self> {
        Self::basis(fock_dim, 0)
    }

    pub fn uniform(dim: usize) -> Result<Self> {
        Ok(Self {
            state: StateVector::uniform(dim)?,
            label: FiducialLabel::Uniform,
        })
    }

    /// Periodized Gaussian on `Z_d` centred at `d/2`, width in lattice units.
    pub fn lattice_gaussian(dim: usize, width: f64) -> Result<Self> {
        if !(width.is_finite() && width > 0.0) {
            return Err(Error::InvalidParameter(format!("gaussian width {width}")));
        }
        let centre = dim as f64 / 2.0;
        let amps = (0..dim)
            .map(|j| {
                let mut acc = 0.0;
                for wrap in -2i64..=2 {
                    let x = j as f64 - centre + (wrap * dim as i64) as f64;
                    acc += (-x * x / (2.0 * width * width)).exp();
                }
                C64::new(acc, 0.0)
            })
            .collect();
        Ok(Self {
            state: StateVector::new(amps)?,
            label: FiducialLabel::Gaussian { width },
        })
    }

    /// Squeezed vacuum truncated to `fock_dim` levels. `width` rescales the
    /// position quadrature (`width = 1` is the vacuum) and must lie in
    /// `[0.25, 4]` so the truncation stays meaningful.
    pub fn squeezed_vacuum(fock_dim: usize, width: f64) -> Result<Self> {
        if !(0.25..=4.0).contains(&width) {
            return Err(Error::InvalidParameter(format!(
                "gaussian width {width} outside [0.25, 4]"
            )));
        }
        if fock_dim == 0 {
            return Err(Error::InvalidDimension(0));
        }
        let r = width.ln();
        let t = -r.tanh();
        let mut amps = vec![ZERO; fock_dim];
        // c_{2n} = t^n sqrt((2n)!) / (2^n n!), built by ratio.
        let mut c = 1.0;
        let mut n = 0usize;
        while 2 * n < fock_dim {
            amps[2 * n] = C64::new(c, 0.0);
            let m = n as f64;
            c *= t * ((2.0 * m + 1.0) * (2.0 * m + 2.0)).sqrt() / (2.0 * (m + 1.0));
            n += 1;
        }
        Ok(Self {
            state: StateVector::new(amps)?,
            label: FiducialLabel::Gaussian { width },
        })
    }

    pub fn custom(state: StateVector) -> Self {
        Self {
            state,
            label: FiducialLabel::Custom,
        }
    }

    /// Haar-random unit vector from complex Gaussian components.
    pub fn random<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Result<Self> {
        let amps = (0..dim)
            .map(|_| C64::new(standard_normal(rng), standard_normal(rng)))
            .collect();
        Ok(Self::custom(StateVector::new(amps)?))
    }

    pub fn dim(&self) -> usize {
        self.state.dim()
    }
}

/// Box-Muller; keeps the sampler independent of distribution crates.
fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random::<f64>();
    (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
}

/// `A({(q,p)}) = (1/d) |D(q,p) eta><D(q,p) eta|` on the `d^2` lattice points,
/// each carrying measure `1/d`.
pub fn build_wh_povm(d: usize, eta: &FiducialVector) -> Result<DiscretePovm> {
    build_wh_povm_with(d, eta, &Tolerances::default())
}

pub fn build_wh_povm_with(d: usize, eta: &FiducialVector, tol: &Tolerances) -> Result<DiscretePovm> {
    let sys = WeylSystem::new(d)?;
    if eta.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            actual: eta.dim(),
        });
    }
    let weight = 1.0 / d as f64;
    let effects = (0..d * d)
        .map(|index| {
            let v = sys.displace(index / d, index % d, eta.state.amplitudes())?;
            Effect::rank1(weight, v)
        })
        .collect::<Result<Vec<_>>>()?;
    let povm = DiscretePovm::new(OutcomeSpace::lattice(d, weight)?, d, effects)?;
    if povm.normalization_defect() > tol.normalization {
        return Err(Error::NotNormalized {
            defect: povm.normalization_defect(),
            threshold: tol.normalization,
        });
    }
    Ok(povm)
}

/// The sharp position observable `{|j><j|}` with unit counting weights.
pub fn sharp_position_pvm(d: usize) -> Result<DiscretePovm> {
    basis_pvm(&crate::marginals::OrthonormalBasis::Computational, d)
}

/// Projections onto the vectors of `basis`, unit counting weights.
pub fn basis_pvm(basis: &crate::marginals::OrthonormalBasis, d: usize) -> Result<DiscretePovm> {
    let effects = (0..d)
        .map(|x| Effect::rank1(1.0, basis.vector(x, d)?))
        .collect::<Result<Vec<_>>>()?;
    DiscretePovm::new(OutcomeSpace::discrete(vec![1.0; d])?, d, effects)
}

/// How a displaced fiducial is brought back into the truncated Fock space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Truncation {
    /// Keep `P D(a) eta` as is. The cell integral then converges to the
    /// identity on the truncated space as the window grows.
    #[default]
    Projected,
    /// Rescale `P D(a) eta` to unit norm. Atoms have norm exactly `h^2/pi`
    /// but far cells pile weight onto the top Fock level.
    Renormalized,
}

/// Square window `[-L, L]^2` of the coherent-state plane sampled at cell
/// centres `-L + k h`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoherentGrid {
    pub fock_dim: usize,
    pub half_width: f64,
    pub cell_size: f64,
    #[serde(default)]
    pub truncation: Truncation,
}

impl CoherentGrid {
    pub fn new(fock_dim: usize, half_width: f64, cell_size: f64) -> Result<Self> {
        let grid = Self {
            fock_dim,
            half_width,
            cell_size,
            truncation: Truncation::Projected,
        };
        grid.check()?;
        Ok(grid)
    }

    pub fn with_truncation(mut self, truncation: Truncation) -> Self {
        self.truncation = truncation;
        self
    }

    fn check(&self) -> Result<()> {
        let (l, h) = (self.half_width, self.cell_size);
        if self.fock_dim < 2 {
            return Err(Error::InvalidParameter(format!(
                "fock_dim must be at least 2, got {}",
                self.fock_dim
            )));
        }
        if !(l.is_finite() && l > 0.0 && h.is_finite() && h > 0.0 && h <= l) {
            return Err(Error::InvalidParameter(format!(
                "need L > 0 and 0 < h <= L, got L = {l}, h = {h}"
            )));
        }
        Ok(())
    }

    /// Cell centres along one axis.
    pub fn axis(&self) -> Vec<f64> {
        let (l, h) = (self.half_width, self.cell_size);
        let count = ((2.0 * l / h) + 1e-9).floor() as usize + 1;
        (0..count).map(|k| -l + k as f64 * h).collect()
    }

    /// `mu(cell) = h^2 / pi`.
    pub fn cell_measure(&self) -> f64 {
        self.cell_size * self.cell_size / PI
    }

    pub fn cell_count(&self) -> usize {
        self.axis().len().pow(2)
    }
}

/// Components `m < N` of `D(alpha) eta`, computed from the exact columns
/// `D|n> = (a^dagger - conj(alpha)) D|n-1> / sqrt(n)`, `D|0> = |alpha>`.
pub fn displaced_fiducial(alpha: C64, eta: &[C64]) -> Vec<C64> {
    let n_dim = eta.len();
    let mut column = vec![ZERO; n_dim];
    column[0] = C64::new((-0.5 * alpha.norm_sqr()).exp(), 0.0);
    for m in 1..n_dim {
        column[m] = column[m - 1] * alpha / (m as f64).sqrt();
    }
    let mut out: Vec<C64> = column.iter().map(|c| c * eta[0]).collect();
    let alpha_bar = alpha.conj();
    for n in 1..n_dim {
        let scale = 1.0 / (n as f64).sqrt();
        let mut next = vec![ZERO; n_dim];
        for m in 0..n_dim {
            let raised = if m > 0 {
                column[m - 1] * (m as f64).sqrt()
            } else {
                ZERO
            };
            next[m] = (raised - alpha_bar * column[m]) * scale;
        }
        column = next;
        if eta[n] != ZERO {
            for m in 0..n_dim {
                out[m] += column[m] * eta[n];
            }
        }
    }
    out
}

/// Midpoint quadrature of the coherent-state resolution of the identity:
/// `A(cell) = (h^2/pi) |D(a_c) eta><D(a_c) eta|` truncated to `N` levels.
pub fn build_coherent_povm(
    grid: &CoherentGrid,
    eta: &FiducialVector,
    tol: &Tolerances,
) -> Result<DiscretePovm> {
    grid.check()?;
    if eta.dim() != grid.fock_dim {
        return Err(Error::DimensionMismatch {
            expected: grid.fock_dim,
            actual: eta.dim(),
        });
    }
    let axis = grid.axis();
    let weight = grid.cell_measure();
    let space = OutcomeSpace::grid(&axis, &axis, weight)?;
    let effects = space
        .atoms()
        .iter()
        .map(|atom| {
            let alpha = C64::new(atom.coord[0], atom.coord[1]);
            let mut v = displaced_fiducial(alpha, eta.state.amplitudes());
            if grid.truncation == Truncation::Renormalized {
                let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
                if norm > 0.0 {
                    v.iter_mut().for_each(|z| *z /= norm);
                }
            } else {
                // Rounding can push |P D eta| a hair above 1 near the origin.
                let n2: f64 = v.iter().map(|z| z.norm_sqr()).sum();
                if n2 > 1.0 {
                    let s = n2.sqrt();
                    v.iter_mut().for_each(|z| *z /= s);
                }
            }
            Effect::rank1(weight, v)
        })
        .collect::<Result<Vec<_>>>()?;
    let povm = DiscretePovm::new(space, grid.fock_dim, effects)?;
    let defect = povm.normalization_defect();
    if !(defect <= tol.normalization) {
        return Err(Error::TruncationInadequate {
            defect,
            threshold: tol.normalization,
            suggested_half_width: suggest_half_width(grid, tol.normalization),
            suggested_fock_dim: suggest_fock_dim(grid, tol.normalization),
        });
    }
    Ok(povm)
}

/// Weight of the top truncated Fock level outside the disk of radius `l`:
/// `sum_{k<N} e^{-l^2} l^{2k} / k!`.
fn disk_tail(fock_dim: usize, l: f64) -> f64 {
    let x = l * l;
    let mut term = (-x).exp();
    let mut sum = term;
    for k in 1..fock_dim {
        term *= x / k as f64;
        sum += term;
    }
    sum
}

fn suggest_half_width(grid: &CoherentGrid, threshold: f64) -> f64 {
    let mut l = grid.half_width;
    while disk_tail(grid.fock_dim, l) > 0.1 * threshold && l < 1e3 {
        l += 0.5;
    }
    l
}

fn suggest_fock_dim(grid: &CoherentGrid, threshold: f64) -> usize {
    (2..=grid.fock_dim)
        .rev()
        .find(|&n| disk_tail(n, grid.half_width) <= 0.1 * threshold)
        .unwrap_or(2)
}

/// `max_x || D(a,b) A({x}) D(a,b)^dagger - A({x + (a,b)}) ||` over the lattice.
pub fn covariance_check(povm: &DiscretePovm, sys: &WeylSystem, shift: (usize, usize)) -> Result<f64> {
    let d = sys.dim();
    match povm.space().shape() {
        SpaceShape::Lattice { d: pd } if pd == d && povm.dim() == d => {}
        other => {
            return Err(Error::MismatchedSystem(format!(
                "POVM on {other:?} in dimension {} does not live on the Z_{d} x Z_{d} lattice",
                povm.dim()
            )))
        }
    }
    let (a, b) = (shift.0 % d, shift.1 % d);
    let unitary = sys.displacement(a, b);
    let mut worst = 0.0_f64;
    for (index, effect) in povm.effects().iter().enumerate() {
        let (q, p) = (index / d, index % d);
        let target = povm.atom_effect(((q + a) % d) * d + (p + b) % d)?;
        let dev = match (effect.repr(), target.repr()) {
            (
                EffectRepr::Rank1 { weight: wa, vector: u },
                EffectRepr::Rank1 { weight: wb, vector: v },
            ) => {
                let moved = sys.displace(a, b, u.as_slice())?;
                rank1_difference_norm(*wa, &moved, *wb, v.as_slice())?
            }
            _ => {
                let moved = effect.to_operator().conjugate_by(&unitary)?;
                hermitian_norm(&(&moved - &target.to_operator()), 1e-8)?
            }
        };
        worst = worst.max(dev);
    }
    Ok(worst)
}

/// Result of the absolute-continuity certificate `||F(D)|| <= c nu(D)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContinuityConstant {
    /// `max_x ||F({x})|| / nu({x})`; `None` when some null atom carries a
    /// nonzero effect and no finite constant exists.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constant: Option<f64>,
    /// Atom attaining the maximum, or the first null atom with a nonzero effect.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub witness: Option<usize>,
}

impl ContinuityConstant {
    pub fn is_finite(&self) -> bool {
        self.constant.is_some()
    }
}

pub fn absolute_continuity_constant(povm: &DiscretePovm) -> ContinuityConstant {
    let mut best: Option<(usize, f64)> = None;
    for (index, effect) in povm.effects().iter().enumerate() {
        let norm = spectral_norm(effect);
        let weight = povm.space().weight(index);
        if weight == 0.0 {
            if norm > 0.0 {
                return ContinuityConstant {
                    constant: None,
                    witness: Some(index),
                };
            }
            continue;
        }
        let ratio = norm / weight;
        if best.map_or(true, |(_, r)| ratio > r) {
            best = Some((index, ratio));
        }
    }
    ContinuityConstant {
        constant: Some(best.map_or(0.0, |(_, r)| r)),
        witness: best.map(|(i, _)| i),
    }
}
