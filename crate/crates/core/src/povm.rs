//! Finite outcome spaces, events and POVMs given as atom -> effect maps.
//!
//! The Borel algebra of the continuum is replaced by the finite algebra
//! generated by the atoms of an [`OutcomeSpace`]; every event is a finite
//! union of atoms and countable additivity reduces to finite additivity.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    min_eigenvalue_with, operator_norm, spectral_norm, Effect, EffectRepr, Operator, StateVector,
};
use crate::tolerance::Tolerances;

/// How the per-atom weights of an outcome space were assigned.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MeasureKind {
    /// All atoms carry the same weight.
    CountingNormalized,
    /// Atoms are phase-space cells weighted by their area.
    LebesgueCell,
}

/// The reference measure `nu` of an outcome space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasureSpec {
    pub kind: MeasureKind,
    /// `None` flags an infinite total measure (the Lebesgue analog); the
    /// per-atom weights stay finite.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub total: Option<f64>,
}

/// Topology of an outcome space.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpaceShape {
    /// Isolated atoms, discrete topology.
    Discrete { atoms: usize },
    /// One-dimensional chain of cells, optionally periodic.
    Chain { cells: usize, periodic: bool },
    /// `Z_d x Z_d` torus; atom `(q, p)` has index `q * d + p`.
    Lattice { d: usize },
    /// Open `nq x np` grid of phase-space cells; index `iq * np + ip`.
    Grid { nq: usize, np: usize },
}

impl SpaceShape {
    pub fn atom_count(&self) -> usize {
        match *self {
            SpaceShape::Discrete { atoms } => atoms,
            SpaceShape::Chain { cells, .. } => cells,
            SpaceShape::Lattice { d } => d * d,
            SpaceShape::Grid { nq, np } => nq * np,
        }
    }

    /// `(q atoms, p atoms)` when the space is a product.
    pub fn product_axes(&self) -> Option<(usize, usize)> {
        match *self {
            SpaceShape::Lattice { d } => Some((d, d)),
            SpaceShape::Grid { nq, np } => Some((nq, np)),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Atom {
    pub index: usize,
    pub coord: Vec<f64>,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeSpace {
    shape: SpaceShape,
    atoms: Vec<Atom>,
    measure: MeasureSpec,
}

impl OutcomeSpace {
    /// Checks the structural invariants and builds the space.
    pub fn new(shape: SpaceShape, atoms: Vec<Atom>, measure: MeasureSpec) -> Result<Self> {
        if atoms.len() != shape.atom_count() {
            return Err(Error::InvalidSpace(format!(
                "shape {shape:?} needs {} atoms, got {}",
                shape.atom_count(),
                atoms.len()
            )));
        }
        if atoms.is_empty() {
            return Err(Error::InvalidSpace("no atoms".into()));
        }
        for (k, atom) in atoms.iter().enumerate() {
            if atom.index != k {
                return Err(Error::InvalidSpace(format!(
                    "atom indices must be contiguous from 0; position {k} holds {}",
                    atom.index
                )));
            }
            if !(atom.weight.is_finite() && atom.weight >= 0.0) {
                return Err(Error::InvalidSpace(format!(
                    "atom {k} has invalid weight {}",
                    atom.weight
                )));
            }
            if atom.coord.iter().any(|c| !c.is_finite()) {
                return Err(Error::InvalidSpace(format!("atom {k} has a non-finite coordinate")));
            }
        }
        if measure.kind == MeasureKind::CountingNormalized {
            let w0 = atoms[0].weight;
            if atoms.iter().any(|a| a.weight != w0) {
                return Err(Error::InvalidSpace(
                    "counting-normalized measure requires equal atom weights".into(),
                ));
            }
        }
        Ok(Self {
            shape,
            atoms,
            measure,
        })
    }

    /// Isolated atoms with the given weights; coordinates are the indices.
    pub fn discrete(weights: Vec<f64>) -> Result<Self> {
        let n = weights.len();
        let equal = weights.windows(2).all(|w| w[0] == w[1]);
        let total = weights.iter().sum();
        let atoms = weights
            .into_iter()
            .enumerate()
            .map(|(index, weight)| Atom {
                index,
                coord: vec![index as f64],
                weight,
            })
            .collect();
        let kind = if equal {
            MeasureKind::CountingNormalized
        } else {
            MeasureKind::LebesgueCell
        };
        Self::new(
            SpaceShape::Discrete { atoms: n },
            atoms,
            MeasureSpec {
                kind,
                total: Some(total),
            },
        )
    }

    /// The torus `Z_d x Z_d`, every point weighted by `weight`.
    pub fn lattice(d: usize, weight: f64) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidDimension(d));
        }
        let atoms = (0..d * d)
            .map(|index| Atom {
                index,
                coord: vec![(index / d) as f64, (index % d) as f64],
                weight,
            })
            .collect();
        Self::new(
            SpaceShape::Lattice { d },
            atoms,
            MeasureSpec {
                kind: MeasureKind::CountingNormalized,
                total: Some(weight * (d * d) as f64),
            },
        )
    }

    /// Product grid of cell centers with a common cell measure. The total
    /// measure is flagged infinite: the grid is a window onto the plane.
    pub fn grid(q_centers: &[f64], p_centers: &[f64], cell_weight: f64) -> Result<Self> {
        let (nq, np) = (q_centers.len(), p_centers.len());
        let atoms = (0..nq * np)
            .map(|index| Atom {
                index,
                coord: vec![q_centers[index / np], p_centers[index % np]],
                weight: cell_weight,
            })
            .collect();
        Self::new(
            SpaceShape::Grid { nq, np },
            atoms,
            MeasureSpec {
                kind: MeasureKind::LebesgueCell,
                total: None,
            },
        )
    }

    pub fn shape(&self) -> SpaceShape {
        self.shape
    }

    pub fn measure(&self) -> MeasureSpec {
        self.measure
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn weight(&self, index: usize) -> f64 {
        self.atoms[index].weight
    }

    pub fn weights(&self) -> Vec<f64> {
        self.atoms.iter().map(|a| a.weight).collect()
    }

    /// `nu(event)`, summed in ascending atom order.
    pub fn event_weight(&self, event: &EventSet) -> f64 {
        event.iter().map(|i| self.atoms[i].weight).sum()
    }

    pub fn product_axes(&self) -> Option<(usize, usize)> {
        self.shape.product_axes()
    }

    /// Index of atom `(iq, ip)` in a product space.
    pub fn product_index(&self, iq: usize, ip: usize) -> Result<usize> {
        let (nq, np) = self.product_axes().ok_or(Error::NotProductSpace)?;
        if iq >= nq || ip >= np {
            return Err(Error::InvalidParameter(format!(
                "product coordinate ({iq}, {ip}) outside {nq} x {np}"
            )));
        }
        Ok(iq * np + ip)
    }

    /// Atoms sharing a face with `index`; empty for discrete spaces.
    pub fn neighbors(&self, index: usize) -> Vec<usize> {
        let mut out = Vec::new();
        match self.shape {
            SpaceShape::Discrete { .. } => {}
            SpaceShape::Chain { cells, periodic } => {
                if index > 0 {
                    out.push(index - 1);
                } else if periodic && cells > 1 {
                    out.push(cells - 1);
                }
                if index + 1 < cells {
                    out.push(index + 1);
                } else if periodic && cells > 1 {
                    out.push(0);
                }
            }
            SpaceShape::Lattice { d } => {
                let (q, p) = (index / d, index % d);
                for (dq, dp) in [(d - 1, 0), (1, 0), (0, d - 1), (0, 1)] {
                    out.push(((q + dq) % d) * d + (p + dp) % d);
                }
            }
            SpaceShape::Grid { nq, np } => {
                let (q, p) = (index / np, index % np);
                if q > 0 {
                    out.push(index - np);
                }
                if q + 1 < nq {
                    out.push(index + np);
                }
                if p > 0 {
                    out.push(index - 1);
                }
                if p + 1 < np {
                    out.push(index + 1);
                }
            }
        }
        out.sort_unstable();
        out.dedup();
        out.retain(|&j| j != index);
        out
    }
}

/// A sorted set of atom indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EventSet(Vec<usize>);

impl EventSet {
    /// Sorts and deduplicates; every index must be below `space_len`.
    pub fn new(mut indices: Vec<usize>, space_len: usize) -> Result<Self> {
        indices.sort_unstable();
        indices.dedup();
        if let Some(&bad) = indices.iter().find(|&&i| i >= space_len) {
            return Err(Error::AtomOutOfRange {
                index: bad,
                len: space_len,
            });
        }
        Ok(Self(indices))
    }

    pub fn empty() -> Self {
        Self(Vec::new())
    }

    pub fn full(space_len: usize) -> Self {
        Self((0..space_len).collect())
    }

    pub fn singleton(index: usize) -> Self {
        Self(vec![index])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().copied()
    }

    pub fn contains(&self, index: usize) -> bool {
        self.0.binary_search(&index).is_ok()
    }

    pub fn is_subset(&self, other: &EventSet) -> bool {
        self.iter().all(|i| other.contains(i))
    }

    pub fn union(&self, other: &EventSet) -> EventSet {
        let mut v: Vec<usize> = self.0.iter().chain(other.0.iter()).copied().collect();
        v.sort_unstable();
        v.dedup();
        Self(v)
    }

    /// `self \ other`.
    pub fn difference(&self, other: &EventSet) -> EventSet {
        Self(self.iter().filter(|&i| !other.contains(i)).collect())
    }

    pub fn complement(&self, space_len: usize) -> EventSet {
        Self((0..space_len).filter(|&i| !self.contains(i)).collect())
    }

    fn check_range(&self, space_len: usize) -> Result<()> {
        match self.0.last() {
            Some(&last) if last >= space_len => Err(Error::AtomOutOfRange {
                index: last,
                len: space_len,
            }),
            _ => Ok(()),
        }
    }
}

/// A POVM on a finite outcome space: one effect per atom.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretePovm {
    space: OutcomeSpace,
    dim: usize,
    effects: Vec<Effect>,
    normalization_defect: f64,
}

impl DiscretePovm {
    /// Builds the POVM and records `||sum_x F({x}) - 1||`. The defect is
    /// stored, not enforced; constructors decide what is admissible.
    pub fn new(space: OutcomeSpace, dim: usize, effects: Vec<Effect>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidDimension(dim));
        }
        if effects.len() != space.len() {
            return Err(Error::InvalidSpace(format!(
                "{} effects for {} atoms",
                effects.len(),
                space.len()
            )));
        }
        if let Some(bad) = effects.iter().find(|e| e.dim() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: bad.dim(),
            });
        }
        let refs: Vec<&Effect> = effects.iter().collect();
        let total = tree_sum(&refs, dim);
        let residual = &total - &Operator::identity(dim);
        let normalization_defect = operator_norm(&residual);
        Ok(Self {
            space,
            dim,
            effects,
            normalization_defect,
        })
    }

    pub fn space(&self) -> &OutcomeSpace {
        &self.space
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn effects(&self) -> &[Effect] {
        &self.effects
    }

    pub fn atom_effect(&self, index: usize) -> Result<&Effect> {
        self.effects.get(index).ok_or(Error::AtomOutOfRange {
            index,
            len: self.effects.len(),
        })
    }

    pub fn normalization_defect(&self) -> f64 {
        self.normalization_defect
    }

    pub fn full_event(&self) -> EventSet {
        EventSet::full(self.space.len())
    }

    /// `sum_{x in event} F({x})` as a plain operator, pairwise-reduced in
    /// ascending atom order.
    pub fn sum_operator(&self, event: &EventSet) -> Result<Operator> {
        event.check_range(self.space.len())?;
        let refs: Vec<&Effect> = event.iter().map(|i| &self.effects[i]).collect();
        Ok(tree_sum(&refs, self.dim))
    }

    /// `F(event)`. Singletons return the stored atom (factored form kept).
    pub fn effect_of(&self, event: &EventSet) -> Result<Effect> {
        event.check_range(self.space.len())?;
        match event.indices() {
            [] => Ok(Effect::zero(self.dim)),
            [single] => Ok(self.effects[*single].clone()),
            _ => {
                let sum = self.sum_operator(event)?;
                let tol = Tolerances {
                    positivity: Tolerances::default().positivity + self.normalization_defect,
                    ..Tolerances::default()
                };
                Effect::with_tolerances(sum, &tol)
            }
        }
    }

    /// `||F(event)||`.
    pub fn event_norm(&self, event: &EventSet) -> Result<f64> {
        Ok(spectral_norm(&self.effect_of(event)?))
    }
}

/// Pairwise (tree) reduction over the slice order.
pub(crate) fn tree_sum(effects: &[&Effect], dim: usize) -> Operator {
    match effects.len() {
        0 => Operator::zeros(dim),
        1 => {
            let mut acc = Operator::zeros(dim);
            effects[0].accumulate_into(&mut acc);
            acc
        }
        n => {
            let mid = n / 2;
            let mut left = tree_sum(&effects[..mid], dim);
            let right = tree_sum(&effects[mid..], dim);
            left.add_assign_ref(&right);
            left
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomCheck {
    pub index: usize,
    pub min_eigenvalue: f64,
    pub norm: f64,
    pub positive: bool,
    pub bounded: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub atoms: Vec<AtomCheck>,
    pub normalization_defect: f64,
    pub normalization_threshold: f64,
    pub normalized: bool,
    pub passed: bool,
}

impl ValidationReport {
    pub fn failing_atoms(&self) -> impl Iterator<Item = &AtomCheck> {
        self.atoms.iter().filter(|a| !(a.positive && a.bounded))
    }
}

/// Positivity and `||F({x})|| <= 1` per atom plus the normalization defect.
pub fn validate_povm(povm: &DiscretePovm, tol: &Tolerances) -> ValidationReport {
    let atoms: Vec<AtomCheck> = povm
        .effects
        .iter()
        .enumerate()
        .map(|(index, effect)| {
            let min_eigenvalue = match effect.repr() {
                EffectRepr::Rank1 { .. } => effect.eigen_range().0,
                EffectRepr::Dense(op) => {
                    min_eigenvalue_with(op, tol.hermiticity).unwrap_or(f64::NEG_INFINITY)
                }
            };
            let norm = spectral_norm(effect);
            AtomCheck {
                index,
                min_eigenvalue,
                norm,
                positive: min_eigenvalue >= -tol.positivity,
                bounded: norm <= 1.0 + tol.positivity,
            }
        })
        .collect();
    let normalized = povm.normalization_defect <= tol.normalization;
    let passed = normalized && atoms.iter().all(|a| a.positive && a.bounded);
    ValidationReport {
        atoms,
        normalization_defect: povm.normalization_defect,
        normalization_threshold: tol.normalization,
        normalized,
        passed,
    }
}

/// A pair of atoms and the norm that witnesses a failed check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairWitness {
    pub first: usize,
    pub second: usize,
    pub norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairCheck {
    pub holds: bool,
    pub tolerance: f64,
    /// Worst pair found (also reported when the check holds).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub worst: Option<PairWitness>,
}

fn worse(current: Option<PairWitness>, candidate: PairWitness) -> Option<PairWitness> {
    match current {
        Some(w) if w.norm >= candidate.norm => Some(w),
        _ => Some(candidate),
    }
}

/// Pairwise atom commutativity; by bilinearity this covers all events.
pub fn is_commutative(povm: &DiscretePovm, tol: f64) -> PairCheck {
    let n = povm.effects.len();
    let mut worst = None;
    for x in 0..n {
        for y in (x + 1)..n {
            let norm = crate::linalg::commutator_norm(&povm.effects[x], &povm.effects[y])
                .unwrap_or(f64::INFINITY);
            worst = worse(
                worst,
                PairWitness {
                    first: x,
                    second: y,
                    norm,
                },
            );
        }
    }
    PairCheck {
        holds: worst.map_or(true, |w| w.norm <= tol),
        tolerance: tol,
        worst,
    }
}

/// `||A B||` with factored shortcuts.
fn product_norm(a: &Effect, b: &Effect) -> f64 {
    match (a.repr(), b.repr()) {
        (
            EffectRepr::Rank1 { weight: wa, vector: u },
            EffectRepr::Rank1 { weight: wb, vector: v },
        ) => wa * wb * u.dotc(v).norm() * u.norm() * v.norm(),
        _ => operator_norm(&(&a.to_operator() * &b.to_operator())),
    }
}

/// `||F^2 - F||`.
fn idempotency_defect(e: &Effect) -> f64 {
    match e.repr() {
        EffectRepr::Rank1 { weight, vector } => {
            let n2 = vector.norm_squared();
            (weight * (weight * n2 - 1.0)).abs() * n2
        }
        EffectRepr::Dense(op) => operator_norm(&(&(op * op) - op)),
    }
}

/// `F({x}) F({y}) = 0` for `x != y` and `F({x})^2 = F({x})`, within `tol`.
/// Idempotency witnesses have `first == second`.
pub fn is_projective(povm: &DiscretePovm, tol: f64) -> PairCheck {
    let n = povm.effects.len();
    let mut worst = None;
    for x in 0..n {
        let norm = idempotency_defect(&povm.effects[x]);
        worst = worse(
            worst,
            PairWitness {
                first: x,
                second: x,
                norm,
            },
        );
    }
    for x in 0..n {
        for y in (x + 1)..n {
            let norm = product_norm(&povm.effects[x], &povm.effects[y]);
            worst = worse(
                worst,
                PairWitness {
                    first: x,
                    second: y,
                    norm,
                },
            );
        }
    }
    PairCheck {
        holds: worst.map_or(true, |w| w.norm <= tol),
        tolerance: tol,
        worst,
    }
}

/// Atoms with `||F({x})|| > tol`: the spectrum in the discrete topology.
pub fn spectrum_support(povm: &DiscretePovm, tol: f64) -> EventSet {
    EventSet(
        povm.effects
            .iter()
            .enumerate()
            .filter(|(_, e)| spectral_norm(e) > tol)
            .map(|(i, _)| i)
            .collect(),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Probability {
    /// Clamped into `[0, 1 + 1e-10]`.
    pub value: f64,
    pub raw: f64,
    pub violation: bool,
}

const PROBABILITY_SLACK: f64 = 1e-10;

/// `<psi, F(event) psi>`.
pub fn outcome_probability(
    povm: &DiscretePovm,
    psi: &StateVector,
    event: &EventSet,
) -> Result<Probability> {
    if psi.dim() != povm.dim {
        return Err(Error::DimensionMismatch {
            expected: povm.dim,
            actual: psi.dim(),
        });
    }
    let raw = match event.indices() {
        [single] => {
            event.check_range(povm.space.len())?;
            psi.expectation_effect(&povm.effects[*single])?
        }
        _ => psi.expectation(&povm.sum_operator(event)?)?,
    };
    let violation = !(-PROBABILITY_SLACK..=1.0 + PROBABILITY_SLACK).contains(&raw);
    Ok(Probability {
        value: raw.clamp(0.0, 1.0 + PROBABILITY_SLACK),
        raw,
        violation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::C64;

    fn sharp(d: usize) -> DiscretePovm {
        let effects = (0..d)
            .map(|j| {
                let mut diag = vec![0.0; d];
                diag[j] = 1.0;
                Effect::new(Operator::diagonal(&diag)).unwrap()
            })
            .collect();
        DiscretePovm::new(OutcomeSpace::discrete(vec![1.0; d]).unwrap(), d, effects).unwrap()
    }

    #[test]
    fn empty_and_full_events() {
        let pvm = sharp(4);
        let empty = pvm.effect_of(&EventSet::empty()).unwrap();
        assert_eq!(spectral_norm(&empty), 0.0);
        let full = pvm.effect_of(&pvm.full_event()).unwrap();
        assert!(full
            .to_operator()
            .max_entry_distance(&Operator::identity(4))
            .unwrap()
            < 1e-10);
    }

    #[test]
    fn out_of_range_event_rejected() {
        let pvm = sharp(2);
        assert!(EventSet::new(vec![2], 2).is_err());
        let bogus = EventSet(vec![0, 5]);
        assert!(matches!(
            pvm.effect_of(&bogus),
            Err(Error::AtomOutOfRange { index: 5, len: 2 })
        ));
    }

    #[test]
    fn validate_sharp_passes() {
        let report = validate_povm(&sharp(4), &Tolerances::default());
        assert!(report.passed);
        assert_eq!(report.normalization_defect, 0.0);
    }

    #[test]
    fn validate_overcomplete_fails_normalization() {
        let a = Effect::new(Operator::identity(2).scale(0.6)).unwrap();
        let povm =
            DiscretePovm::new(OutcomeSpace::discrete(vec![1.0; 2]).unwrap(), 2, vec![a.clone(), a])
                .unwrap();
        let report = validate_povm(&povm, &Tolerances::default());
        assert!(!report.passed);
        assert!(!report.normalized);
        assert!((report.normalization_defect - 0.2).abs() < 1e-12);
        assert_eq!(report.failing_atoms().count(), 0);
    }

    #[test]
    fn projective_checks() {
        assert!(is_projective(&sharp(3), 1e-12).holds);
        let n = 3;
        let uniform: Vec<Effect> = (0..n)
            .map(|_| Effect::new(Operator::identity(2).scale(1.0 / n as f64)).unwrap())
            .collect();
        let trivial =
            DiscretePovm::new(OutcomeSpace::discrete(vec![1.0; n]).unwrap(), 2, uniform).unwrap();
        let check = is_projective(&trivial, 1e-12);
        assert!(!check.holds);
        assert!(check.worst.unwrap().norm > 0.1);
        assert!(is_commutative(&trivial, 1e-12).holds);
    }

    #[test]
    fn spectrum_support_drops_zero_atoms() {
        let effects = vec![
            Effect::new(Operator::diagonal(&[1.0, 0.0])).unwrap(),
            Effect::new(Operator::diagonal(&[0.0, 1.0])).unwrap(),
            Effect::zero(2),
        ];
        let povm =
            DiscretePovm::new(OutcomeSpace::discrete(vec![1.0; 3]).unwrap(), 2, effects).unwrap();
        assert_eq!(spectrum_support(&povm, 1e-12).indices(), &[0, 1]);
    }

    #[test]
    fn probability_examples() {
        let pvm = sharp(3);
        let psi = StateVector::basis(3, 0).unwrap();
        let p = outcome_probability(&pvm, &psi, &EventSet::singleton(0)).unwrap();
        assert_eq!(p.value, 1.0);
        assert!(!p.violation);
        let full = outcome_probability(&pvm, &psi, &pvm.full_event()).unwrap();
        assert!((full.value - 1.0).abs() < 1e-10);
        let wrong = StateVector::basis(2, 0).unwrap();
        assert!(outcome_probability(&pvm, &wrong, &pvm.full_event()).is_err());
    }

    #[test]
    fn probability_violation_is_reported_and_clamped() {
        let a = Effect::new(Operator::identity(1).scale(0.8)).unwrap();
        let povm =
            DiscretePovm::new(OutcomeSpace::discrete(vec![1.0; 2]).unwrap(), 1, vec![a.clone(), a])
                .unwrap();
        let psi = StateVector::new(vec![C64::new(1.0, 0.0)]).unwrap();
        let p = outcome_probability(&povm, &psi, &povm.full_event()).unwrap();
        assert!(p.violation);
        assert!((p.raw - 1.6).abs() < 1e-12);
        assert_eq!(p.value, 1.0 + 1e-10);
    }

    #[test]
    fn neighbors_by_shape() {
        let lattice = OutcomeSpace::lattice(3, 1.0 / 3.0).unwrap();
        // (0,0) wraps to (2,0), (1,0), (0,2), (0,1)
        assert_eq!(lattice.neighbors(0), vec![1, 2, 3, 6]);
        let grid = OutcomeSpace::grid(&[0.0, 1.0], &[0.0, 1.0, 2.0], 0.5).unwrap();
        assert_eq!(grid.neighbors(0), vec![1, 3]);
        assert_eq!(grid.neighbors(4), vec![1, 3, 5]);
        let discrete = OutcomeSpace::discrete(vec![1.0; 3]).unwrap();
        assert!(discrete.neighbors(1).is_empty());
        assert_eq!(grid.measure().total, None);
        assert_eq!(lattice.measure().total, Some(3.0));
    }

    #[test]
    fn counting_measure_requires_equal_weights() {
        let atoms = vec![
            Atom { index: 0, coord: vec![0.0], weight: 1.0 },
            Atom { index: 1, coord: vec![1.0], weight: 2.0 },
        ];
        let spec = MeasureSpec { kind: MeasureKind::CountingNormalized, total: Some(3.0) };
        assert!(OutcomeSpace::new(SpaceShape::Discrete { atoms: 2 }, atoms, spec).is_err());
    }

    #[test]
    fn event_algebra() {
        let a = EventSet::new(vec![3, 1, 1], 5).unwrap();
        let b = EventSet::new(vec![1, 4], 5).unwrap();
        assert_eq!(a.indices(), &[1, 3]);
        assert_eq!(a.union(&b).indices(), &[1, 3, 4]);
        assert_eq!(a.difference(&b).indices(), &[3]);
        assert_eq!(a.complement(5).indices(), &[0, 2, 4]);
        assert!(EventSet::singleton(1).is_subset(&a));
    }
}
