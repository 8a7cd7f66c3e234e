//! Marginal observables of phase-space POVMs and Markov-kernel smearing of
//! sharp observables.
//!
//! A kernel `w[x][a]` assigns to every spectral point `x` of a reference PVM
//! a probability distribution over outcome atoms `a`. Smearing the PVM gives
//! the commutative POVM `F(D) = sum_x w_D(x) E({x})` with
//! `w_D(x) = sum_{a in D} w[x][a]`.

use std::f64::consts::PI;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::covariant::{build_wh_povm, sharp_position_pvm, FiducialVector};
use crate::error::{Error, Result};
use crate::linalg::{hermitian_norm, Effect, Operator, C64};
use crate::povm::{is_projective, tree_sum, Atom, DiscretePovm, MeasureKind, MeasureSpec, OutcomeSpace, SpaceShape};
use crate::serial::{format_f64, parse_f64};
use crate::tolerance::Tolerances;

/// Row-sum slack for a Markov kernel.
pub const KERNEL_ROW_TOL: f64 = 1e-10;
/// Off-diagonal magnitude tolerated when reading a kernel off a POVM.
pub const DIAGONAL_TOL: f64 = 1e-10;

/// Orthonormal reference basis of `C^d`, named explicitly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OrthonormalBasis {
    /// `|j>`, the eigenbasis of the clock `Z` (sharp position).
    Computational,
    /// `f_k = d^{-1/2} sum_j w^{jk} |j>`, the eigenbasis of the shift `X`
    /// (sharp momentum).
    Fourier,
}

impl OrthonormalBasis {
    pub fn vector(&self, x: usize, d: usize) -> Result<Vec<C64>> {
        if x >= d {
            return Err(Error::InvalidParameter(format!(
                "basis index {x} out of range for dimension {d}"
            )));
        }
        Ok(match self {
            OrthonormalBasis::Computational => {
                let mut v = vec![C64::new(0.0, 0.0); d];
                v[x] = C64::new(1.0, 0.0);
                v
            }
            OrthonormalBasis::Fourier => {
                let norm = 1.0 / (d as f64).sqrt();
                (0..d)
                    .map(|j| {
                        let r = ((j * x) % d) as f64;
                        C64::from_polar(norm, 2.0 * PI * r / d as f64)
                    })
                    .collect()
            }
        })
    }

    /// Columns are the basis vectors.
    fn matrix(&self, d: usize) -> Result<Operator> {
        let cols = (0..d)
            .map(|x| self.vector(x, d))
            .collect::<Result<Vec<_>>>()?;
        Ok(Operator::from_fn(d, |i, x| cols[x][i]))
    }
}

/// Dense row-stochastic table `w[x][atom]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovKernel {
    rows: usize,
    cols: usize,
    entries: Vec<f64>,
}

impl MarkovKernel {
    /// Entries are row-major. Each must lie in `[0, 1]` and each row must
    /// sum to one within [`KERNEL_ROW_TOL`].
    pub fn new(rows: usize, cols: usize, entries: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 || entries.len() != rows * cols {
            return Err(Error::InvalidParameter(format!(
                "kernel of {rows} x {cols} needs {} entries, got {}",
                rows * cols,
                entries.len()
            )));
        }
        for (k, &value) in entries.iter().enumerate() {
            if !(0.0..=1.0).contains(&value) {
                return Err(Error::KernelEntry {
                    row: k / cols,
                    col: k % cols,
                    value,
                });
            }
        }
        for row in 0..rows {
            let sum: f64 = entries[row * cols..(row + 1) * cols].iter().sum();
            if (sum - 1.0).abs() > KERNEL_ROW_TOL {
                return Err(Error::KernelRowSum {
                    row,
                    sum,
                    tol: KERNEL_ROW_TOL,
                });
            }
        }
        Ok(Self {
            rows,
            cols,
            entries,
        })
    }

    pub fn identity(n: usize) -> Result<Self> {
        Self::new(
            n,
            n,
            (0..n * n).map(|k| if k / n == k % n { 1.0 } else { 0.0 }).collect(),
        )
    }

    pub fn uniform(rows: usize, cols: usize) -> Result<Self> {
        Self::new(rows, cols, vec![1.0 / cols as f64; rows * cols])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, x: usize, atom: usize) -> f64 {
        self.entries[x * self.cols + atom]
    }

    pub fn row(&self, x: usize) -> &[f64] {
        &self.entries[x * self.cols..(x + 1) * self.cols]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    /// `w_D(x) = sum_{atom in D} w[x][atom]`.
    pub fn event_weight(&self, x: usize, atoms: &[usize]) -> f64 {
        atoms.iter().map(|&a| self.get(x, a)).sum()
    }

    /// Largest row-sum deviation from one.
    pub fn row_sum_defect(&self) -> f64 {
        (0..self.rows)
            .map(|x| (self.row(x).iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    pub fn max_entry_distance(&self, other: &MarkovKernel) -> Result<f64> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::DimensionMismatch {
                expected: self.entries.len(),
                actual: other.entries.len(),
            });
        }
        Ok(self
            .entries
            .iter()
            .zip(&other.entries)
            .fold(0.0, |m, (a, b)| f64::max(m, (a - b).abs())))
    }

    /// Header row of atom indices, then one row per spectral point, every
    /// float with 17 significant digits. LF line endings.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(out);
        let ser = |e: csv::Error| Error::Serialization(e.to_string());
        w.write_record((0..self.cols).map(|a| a.to_string())).map_err(ser)?;
        for x in 0..self.rows {
            w.write_record(self.row(x).iter().map(|&v| format_f64(v)))
                .map_err(ser)?;
        }
        w.flush().map_err(|e| Error::Serialization(e.to_string()))
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        String::from_utf8(buf).map_err(|e| Error::Serialization(e.to_string()))
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let ser = |e: csv::Error| Error::Serialization(e.to_string());
        let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
        let header = r.headers().map_err(ser)?.clone();
        for (k, field) in header.iter().enumerate() {
            if field.trim().parse::<usize>().ok() != Some(k) {
                return Err(Error::Serialization(format!(
                    "kernel header column {k} is '{field}', expected {k}"
                )));
            }
        }
        let cols = header.len();
        let mut entries = Vec::new();
        let mut rows = 0;
        for record in r.records() {
            let record = record.map_err(ser)?;
            for field in record.iter() {
                entries.push(parse_f64(field)?);
            }
            rows += 1;
        }
        Self::new(rows, cols, entries)
    }
}

/// A commutative POVM obtained by smearing a sharp observable.
#[derive(Debug, Clone, PartialEq)]
pub struct SmearedObservable {
    pub base_basis: OrthonormalBasis,
    pub kernel: MarkovKernel,
    pub povm: DiscretePovm,
}

fn marginal_space(space: &OutcomeSpace, along_q: bool) -> Result<OutcomeSpace> {
    let (nq, np) = space.product_axes().ok_or(Error::NotProductSpace)?;
    let (n, other) = if along_q { (nq, np) } else { (np, nq) };
    let periodic = matches!(space.shape(), SpaceShape::Lattice { .. });
    let atoms = (0..n)
        .map(|k| {
            let members: Vec<usize> = (0..other)
                .map(|j| if along_q { k * np + j } else { j * np + k })
                .collect();
            let first = &space.atoms()[members[0]];
            Atom {
                index: k,
                coord: vec![first.coord[if along_q { 0 } else { 1 }]],
                weight: members.iter().map(|&i| space.weight(i)).sum(),
            }
        })
        .collect();
    let measure = match space.measure().kind {
        MeasureKind::CountingNormalized => MeasureSpec {
            kind: MeasureKind::CountingNormalized,
            total: space.measure().total,
        },
        MeasureKind::LebesgueCell => MeasureSpec {
            kind: MeasureKind::LebesgueCell,
            total: None,
        },
    };
    OutcomeSpace::new(SpaceShape::Chain { cells: n, periodic }, atoms, measure)
}

fn marginal(povm: &DiscretePovm, along_q: bool) -> Result<DiscretePovm> {
    let space = povm.space();
    let (nq, np) = space.product_axes().ok_or(Error::NotProductSpace)?;
    let n = if along_q { nq } else { np };
    let tol = Tolerances {
        positivity: Tolerances::default().positivity + povm.normalization_defect(),
        ..Tolerances::default()
    };
    let effects = (0..n)
        .map(|k| {
            let members: Vec<&Effect> = if along_q {
                (0..np).map(|j| &povm.effects()[k * np + j]).collect()
            } else {
                (0..nq).map(|j| &povm.effects()[j * np + k]).collect()
            };
            Effect::with_tolerances(tree_sum(&members, povm.dim()), &tol)
        })
        .collect::<Result<Vec<_>>>()?;
    DiscretePovm::new(marginal_space(space, along_q)?, povm.dim(), effects)
}

/// `F^Q({q}) = A({q} x all p)`.
pub fn marginal_q(povm: &DiscretePovm) -> Result<DiscretePovm> {
    marginal(povm, true)
}

/// `F^P({p}) = A(all q x {p})`.
pub fn marginal_p(povm: &DiscretePovm) -> Result<DiscretePovm> {
    marginal(povm, false)
}

/// `F({a}) = sum_x w[x][a] E({x})` on an outcome space of `kernel.cols()`
/// unit-weight atoms.
pub fn smear_pvm(
    base: &DiscretePovm,
    base_basis: OrthonormalBasis,
    kernel: &MarkovKernel,
) -> Result<SmearedObservable> {
    let space = OutcomeSpace::discrete(vec![1.0; kernel.cols()])?;
    smear_pvm_onto(base, base_basis, kernel, space)
}

/// As [`smear_pvm`] but on a caller-supplied outcome space (for instance the
/// marginal space of a phase-space POVM).
pub fn smear_pvm_onto(
    base: &DiscretePovm,
    base_basis: OrthonormalBasis,
    kernel: &MarkovKernel,
    space: OutcomeSpace,
) -> Result<SmearedObservable> {
    let check = is_projective(base, Tolerances::default().equality);
    if !check.holds {
        return Err(Error::NotProjective(format!("worst witness {:?}", check.worst)));
    }
    if kernel.rows() != base.space().len() {
        return Err(Error::DimensionMismatch {
            expected: base.space().len(),
            actual: kernel.rows(),
        });
    }
    let d = base.dim();
    let projections: Vec<Operator> = base.effects().iter().map(Effect::to_operator).collect();
    let effects = (0..kernel.cols())
        .map(|a| {
            let mut acc = Operator::zeros(d);
            for (x, proj) in projections.iter().enumerate() {
                let w = kernel.get(x, a);
                if w != 0.0 {
                    acc = &acc + &proj.scale(w);
                }
            }
            Effect::new(acc)
        })
        .collect::<Result<Vec<_>>>()?;
    let povm = DiscretePovm::new(space, d, effects)?;
    Ok(SmearedObservable {
        base_basis,
        kernel: kernel.clone(),
        povm,
    })
}

/// Why a POVM could not be read as a smearing in the given basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "failure", rename_all = "kebab-case")]
pub enum ExtractionFailure {
    NotDiagonal { atom: usize, off_diagonal: f64 },
    NotStochastic { row: usize, sum: f64 },
}

/// Reads `w[x][a] = <x|F({a})|x>` off a POVM that is diagonal in `basis`.
pub fn extract_kernel(
    povm: &DiscretePovm,
    basis: &OrthonormalBasis,
) -> std::result::Result<MarkovKernel, ExtractionFailure> {
    let d = povm.dim();
    let b = basis
        .matrix(d)
        .expect("basis indices are in range by construction");
    let b_adj = b.adjoint();
    let cols = povm.effects().len();
    let mut entries = vec![0.0; d * cols];
    let mut worst: Option<(usize, f64)> = None;
    for (a, effect) in povm.effects().iter().enumerate() {
        let rotated = &(&b_adj * &effect.to_operator()) * &b;
        for i in 0..d {
            for j in 0..d {
                if i == j {
                    entries[i * cols + a] = rotated.entry(i, i).re;
                } else {
                    let off = rotated.entry(i, j).norm();
                    if worst.map_or(true, |(_, w)| off > w) {
                        worst = Some((a, off));
                    }
                }
            }
        }
    }
    if let Some((atom, off_diagonal)) = worst {
        if off_diagonal > DIAGONAL_TOL {
            return Err(ExtractionFailure::NotDiagonal { atom, off_diagonal });
        }
    }
    for x in 0..d {
        let sum: f64 = entries[x * cols..(x + 1) * cols].iter().sum();
        if (sum - 1.0).abs() > KERNEL_ROW_TOL {
            return Err(ExtractionFailure::NotStochastic { row: x, sum });
        }
    }
    // Rounding noise around 0 and 1 is clamped; the checks above bound it.
    for e in entries.iter_mut() {
        *e = e.clamp(0.0, 1.0);
    }
    MarkovKernel::new(d, cols, entries).map_err(|_| ExtractionFailure::NotStochastic {
        row: 0,
        sum: f64::NAN,
    })
}

/// `w[x][q] = |<x - q mod d | eta>|^2`, the smearing kernel of the
/// Weyl-Heisenberg position marginal.
pub fn position_kernel(eta: &FiducialVector) -> Result<MarkovKernel> {
    let d = eta.dim();
    let amps = eta.state.amplitudes();
    let entries = (0..d * d)
        .map(|k| {
            let (x, q) = (k / d, k % d);
            amps[(x + d - q) % d].norm_sqr()
        })
        .collect();
    MarkovKernel::new(d, d, entries)
}

/// `v[k][p] = |<f_{k-p} | eta>|^2` in the Fourier basis, the kernel of the
/// momentum marginal.
pub fn momentum_kernel(eta: &FiducialVector) -> Result<MarkovKernel> {
    let d = eta.dim();
    let amps = eta.state.amplitudes();
    let hat: Vec<f64> = (0..d)
        .map(|k| {
            let f = OrthonormalBasis::Fourier.vector(k, d)?;
            Ok(f.iter().zip(amps).map(|(a, b)| a.conj() * b).sum::<C64>().norm_sqr())
        })
        .collect::<Result<_>>()?;
    let entries = (0..d * d)
        .map(|k| {
            let (row, p) = (k / d, k % d);
            hat[(row + d - p) % d]
        })
        .collect();
    MarkovKernel::new(d, d, entries)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelIdentity {
    /// Max entrywise deviation (the pass/fail metric).
    pub max_entry_deviation: f64,
    pub max_spectral_deviation: f64,
}

/// Builds `F^Q` of the Weyl-Heisenberg POVM and, independently, the sharp
/// position PVM smeared with [`position_kernel`]; returns their distance.
pub fn marginal_kernel_identity_check(d: usize, eta: &FiducialVector) -> Result<KernelIdentity> {
    let marginal = marginal_q(&build_wh_povm(d, eta)?)?;
    let smeared = smear_pvm(
        &sharp_position_pvm(d)?,
        OrthonormalBasis::Computational,
        &position_kernel(eta)?,
    )?;
    let mut out = KernelIdentity {
        max_entry_deviation: 0.0,
        max_spectral_deviation: 0.0,
    };
    for (a, b) in marginal.effects().iter().zip(smeared.povm.effects()) {
        let (a, b) = (a.to_operator(), b.to_operator());
        out.max_entry_deviation = out.max_entry_deviation.max(a.max_entry_distance(&b)?);
        out.max_spectral_deviation = out
            .max_spectral_deviation
            .max(hermitian_norm(&(&a - &b), 1e-8)?);
    }
    Ok(out)
}
