//! Norm-1 verdicts, the necessary condition on atom norms, continuity along
//! refinement sequences and cell-shrinking scaling laws.
//!
//! Limits are represented by finite sequences (nested events, or a family of
//! grids with halving cell size) together with a fitted trend. The reports
//! state what was measured; they do not extrapolate.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::covariant::ContinuityConstant;
use crate::error::{Error, Result};
use crate::linalg::{hermitian_norm, maximizing_state, spectral_norm};
use crate::povm::{DiscretePovm, EventSet, OutcomeSpace};

/// Spaces up to this many atoms are enumerated exhaustively.
pub const EXHAUSTIVE_LIMIT: usize = 12;
/// Random events drawn for larger spaces.
pub const RANDOM_EVENT_COUNT: usize = 200;
/// Slack on the domination `||.|| <= c nu`.
pub const DOMINATION_SLACK: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventOrigin {
    Exhaustive,
    Empty,
    Full,
    Singleton,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventSample {
    pub event: EventSet,
    pub origin: EventOrigin,
}

/// Each atom joins the event independently with probability 1/2.
pub fn random_events<R: Rng + ?Sized>(space_len: usize, count: usize, rng: &mut R) -> Vec<EventSet> {
    (0..count)
        .map(|_| {
            let picked: Vec<usize> = (0..space_len).filter(|_| rng.random::<bool>()).collect();
            EventSet::new(picked, space_len).expect("indices drawn in range")
        })
        .collect()
}

/// All `2^n` events when `n <= 12`; otherwise empty, full, every singleton
/// and 200 random events from a ChaCha8 stream seeded with `seed`.
pub fn standard_events(space: &OutcomeSpace, seed: Option<u64>) -> Result<Vec<EventSample>> {
    let n = space.len();
    if n <= EXHAUSTIVE_LIMIT {
        return Ok((0u32..(1u32 << n))
            .map(|mask| EventSample {
                event: EventSet::new((0..n).filter(|&i| mask & (1 << i) != 0).collect(), n)
                    .expect("in range"),
                origin: EventOrigin::Exhaustive,
            })
            .collect());
    }
    let seed = seed.ok_or_else(|| {
        Error::InvalidParameter(format!(
            "a seed is required to sample events on a space of {n} atoms"
        ))
    })?;
    let mut out = vec![
        EventSample {
            event: EventSet::empty(),
            origin: EventOrigin::Empty,
        },
        EventSample {
            event: EventSet::full(n),
            origin: EventOrigin::Full,
        },
    ];
    out.extend((0..n).map(|i| EventSample {
        event: EventSet::singleton(i),
        origin: EventOrigin::Singleton,
    }));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    out.extend(
        random_events(n, RANDOM_EVENT_COUNT, &mut rng)
            .into_iter()
            .map(|event| EventSample {
                event,
                origin: EventOrigin::Random,
            }),
    );
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Norm1Verdict {
    HasNorm1,
    Fails,
    ExcludedByNecessaryCondition,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub event: EventSet,
    pub origin: EventOrigin,
    pub norm: f64,
    pub gap: f64,
    /// `<psi, F(D) psi>` for the reported maximizer; equals `norm`.
    pub attained: f64,
    /// Maximizing unit vector as `[re, im]` pairs.
    pub maximizer: Vec<[f64; 2]>,
    /// `gap > tolerance`: this event refutes the norm-1 property.
    pub witness: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Norm1Report {
    pub verdict: Norm1Verdict,
    pub tolerance: f64,
    pub tested_events: usize,
    pub zero_events: usize,
    pub records: Vec<EventRecord>,
}

impl Norm1Report {
    /// Sharpens a failing verdict when the necessary condition already
    /// excludes the norm-1 property.
    pub fn with_necessary_condition(mut self, condition: &NecessaryCondition) -> Self {
        if self.verdict == Norm1Verdict::Fails && condition.verdict != NecessaryVerdict::Inconclusive
        {
            self.verdict = Norm1Verdict::ExcludedByNecessaryCondition;
        }
        self
    }

    pub fn has_norm1(&self) -> bool {
        self.verdict == Norm1Verdict::HasNorm1
    }

    pub fn witnesses(&self) -> impl Iterator<Item = &EventRecord> {
        self.records.iter().filter(|r| r.witness)
    }
}

/// `||F(D)||`, the gap `1 - ||F(D)||` and the maximizing vector for every
/// event with `||F(D)|| > tol`.
pub fn norm1_report(povm: &DiscretePovm, events: &[EventSample], tol: f64) -> Result<Norm1Report> {
    let mut records = Vec::new();
    let mut zero_events = 0;
    for sample in events {
        let effect = povm.effect_of(&sample.event)?;
        let norm = spectral_norm(&effect);
        if norm <= tol {
            zero_events += 1;
            continue;
        }
        let (state, attained) = maximizing_state(&effect)?;
        records.push(EventRecord {
            event: sample.event.clone(),
            origin: sample.origin,
            norm,
            gap: 1.0 - norm,
            attained,
            maximizer: state.amplitudes().iter().map(|z| [z.re, z.im]).collect(),
            witness: 1.0 - norm > tol,
        });
    }
    Ok(Norm1Report {
        verdict: if records.iter().all(|r| !r.witness) {
            Norm1Verdict::HasNorm1
        } else {
            Norm1Verdict::Fails
        },
        tolerance: tol,
        tested_events: events.len(),
        zero_events,
        records,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NecessaryVerdict {
    /// Null atoms sit on the boundary of the support.
    Excluded,
    /// Atom norms vanish along the cell-shrinking family.
    ExcludedInLimit,
    /// Condition satisfied; it is necessary, not sufficient.
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NecessaryCondition {
    pub verdict: NecessaryVerdict,
    pub tolerance: f64,
    /// Atoms with `||F({x})|| <= tol` adjacent to the support.
    pub witnesses: Vec<usize>,
    /// `max_x ||F({x})||`: no single atom can be localized better.
    pub atom_norm_ceiling: f64,
    /// `max_x ||F({x})|| / nu({x})` over atoms of positive weight.
    pub ceiling_ratio: f64,
    /// Smallest atom norm inside the support.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_support_norm: Option<f64>,
}

/// Looks for points of the spectrum whose atom carries a (numerically) zero
/// effect. In the discrete topology the closure of the support is the
/// support itself; on chains, lattices and grids it adds the face neighbours.
pub fn necessary_condition_verdict(povm: &DiscretePovm, tol: f64) -> NecessaryCondition {
    let space = povm.space();
    let norms: Vec<f64> = povm.effects().iter().map(spectral_norm).collect();
    let in_support = |i: usize| norms[i] > tol;
    let witnesses: Vec<usize> = (0..norms.len())
        .filter(|&i| !in_support(i) && space.weight(i).is_finite())
        .filter(|&i| space.neighbors(i).into_iter().any(in_support))
        .collect();
    let ceiling_ratio = norms
        .iter()
        .enumerate()
        .filter(|(i, _)| space.weight(*i) > 0.0)
        .map(|(i, n)| n / space.weight(i))
        .fold(0.0, f64::max);
    let min_support_norm = norms
        .iter()
        .copied()
        .filter(|&n| n > tol)
        .fold(None, |m: Option<f64>, n| Some(m.map_or(n, |m| m.min(n))));
    NecessaryCondition {
        verdict: if witnesses.is_empty() {
            NecessaryVerdict::Inconclusive
        } else {
            NecessaryVerdict::Excluded
        },
        tolerance: tol,
        witnesses,
        atom_norm_ceiling: norms.iter().copied().fold(0.0, f64::max),
        ceiling_ratio,
        min_support_norm,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingPoint {
    pub atom: usize,
    pub measure: f64,
    pub norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub points: Vec<ScalingPoint>,
    /// Least-squares slope of `ln ||A(cell)||` against `ln mu(cell)`.
    pub slope: f64,
    pub intercept: f64,
}

/// Fits `ln ||A(cell)|| = slope * ln mu(cell) + intercept` over the worst
/// (largest-norm) cell of each level.
pub fn cell_shrink_scaling(levels: &[DiscretePovm]) -> Result<ScalingFit> {
    if levels.len() < 2 {
        return Err(Error::TooFewLevels(levels.len()));
    }
    let points = levels
        .iter()
        .map(|povm| {
            let (atom, norm) = povm
                .effects()
                .iter()
                .map(spectral_norm)
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (i, n)| if n > best.1 { (i, n) } else { best });
            let measure = povm.space().weight(atom);
            if !(norm > 0.0 && measure > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "scaling needs positive cell norm and measure, got {norm} and {measure}"
                )));
            }
            Ok(ScalingPoint { atom, measure, norm })
        })
        .collect::<Result<Vec<_>>>()?;
    let xs: Vec<f64> = points.iter().map(|p| p.measure.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.norm.ln()).collect();
    let (slope, intercept) = least_squares(&xs, &ys)?;
    Ok(ScalingFit {
        points,
        slope,
        intercept,
    })
}

fn least_squares(xs: &[f64], ys: &[f64]) -> Result<(f64, f64)> {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidParameter(
            "scaling levels share one cell measure".into(),
        ));
    }
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyCondition {
    pub verdict: NecessaryVerdict,
    pub fit: ScalingFit,
}

/// The nested-grid reading of "a point of the spectrum": a point is the
/// sequence of shrinking cells containing it, and its atom norm is bounded
/// by the per-level ceiling. If the ceiling decays with the cell measure
/// (positive fitted slope, strictly decreasing ceilings) every point's atom
/// norm vanishes along the family.
pub fn necessary_condition_family(levels: &[DiscretePovm]) -> Result<FamilyCondition> {
    let fit = cell_shrink_scaling(levels)?;
    let mut by_measure = fit.points.clone();
    by_measure.sort_by(|a, b| b.measure.total_cmp(&a.measure));
    let decreasing = by_measure.windows(2).all(|w| w[1].norm < w[0].norm);
    let verdict = if decreasing && fit.slope > 0.0 {
        NecessaryVerdict::ExcludedInLimit
    } else {
        NecessaryVerdict::Inconclusive
    };
    Ok(FamilyCondition { verdict, fit })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    /// `D_i` increases to the limit `D`; deviation `||F(D) - F(D_i)||`.
    Increasing,
    /// `D_i` decreases to the empty set; deviation `||F(D_i)||`.
    DecreasingToEmpty,
    /// `D_i` decreases to a single atom; deviation `||F(D_i) - F({x})||`.
    DecreasingToAtom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementSequence {
    events: Vec<EventSet>,
    direction: Direction,
    limit: EventSet,
}

impl RefinementSequence {
    pub fn new(events: Vec<EventSet>, direction: Direction, limit: EventSet) -> Result<Self> {
        if events.is_empty() {
            return Err(Error::InvalidRefinement("empty sequence".into()));
        }
        let nested = |a: &EventSet, b: &EventSet| match direction {
            Direction::Increasing => a.is_subset(b),
            _ => b.is_subset(a),
        };
        if let Some(k) = events.windows(2).position(|w| !nested(&w[0], &w[1])) {
            return Err(Error::InvalidRefinement(format!(
                "events {k} and {} are not nested in the {direction:?} direction",
                k + 1
            )));
        }
        match direction {
            Direction::Increasing => {
                if !events.iter().all(|e| e.is_subset(&limit)) {
                    return Err(Error::InvalidRefinement("event exceeds the limit set".into()));
                }
            }
            Direction::DecreasingToEmpty => {
                if !limit.is_empty() {
                    return Err(Error::InvalidRefinement("limit must be empty".into()));
                }
            }
            Direction::DecreasingToAtom => {
                if limit.len() != 1 || !events.iter().all(|e| limit.is_subset(e)) {
                    return Err(Error::InvalidRefinement(
                        "limit must be one atom contained in every event".into(),
                    ));
                }
            }
        }
        Ok(Self {
            events,
            direction,
            limit,
        })
    }

    pub fn events(&self) -> &[EventSet] {
        &self.events
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn limit(&self) -> &EventSet {
        &self.limit
    }

    /// Squares of half-size `0, 1, ...` around `center` in a product space,
    /// clipped at the boundary, growing until they cover the whole space.
    pub fn growing_squares(space: &OutcomeSpace, center: usize) -> Result<Self> {
        let events = squares(space, center)?;
        Self::new(events, Direction::Increasing, EventSet::full(space.len()))
    }

    /// The squares of [`growing_squares`](Self::growing_squares) in reverse,
    /// shrinking onto the atom `center`.
    pub fn shrinking_squares(space: &OutcomeSpace, center: usize) -> Result<Self> {
        let mut events = squares(space, center)?;
        events.reverse();
        Self::new(events, Direction::DecreasingToAtom, EventSet::singleton(center))
    }

    /// Shrinking squares followed by the empty event.
    pub fn vanishing_squares(space: &OutcomeSpace, center: usize) -> Result<Self> {
        let mut events = squares(space, center)?;
        events.reverse();
        events.push(EventSet::empty());
        Self::new(events, Direction::DecreasingToEmpty, EventSet::empty())
    }

    /// Suffixes `{k, ..., n-1}` for `k = 0..=n` of any outcome space.
    pub fn vanishing_suffixes(space: &OutcomeSpace) -> Result<Self> {
        let n = space.len();
        let events = (0..=n)
            .map(|k| EventSet::new((k..n).collect(), n))
            .collect::<Result<Vec<_>>>()?;
        Self::new(events, Direction::DecreasingToEmpty, EventSet::empty())
    }
}

fn squares(space: &OutcomeSpace, center: usize) -> Result<Vec<EventSet>> {
    let (nq, np) = space.product_axes().ok_or(Error::NotProductSpace)?;
    if center >= space.len() {
        return Err(Error::AtomOutOfRange {
            index: center,
            len: space.len(),
        });
    }
    let (cq, cp) = (center / np, center % np);
    let reach = cq.max(nq - 1 - cq).max(cp).max(np - 1 - cp);
    (0..=reach)
        .map(|k| {
            let qs = cq.saturating_sub(k)..=(cq + k).min(nq - 1);
            let atoms: Vec<usize> = qs
                .flat_map(|q| {
                    (cp.saturating_sub(k)..=(cp + k).min(np - 1)).map(move |p| q * np + p)
                })
                .collect();
            EventSet::new(atoms, space.len())
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefinementLevel {
    pub event_size: usize,
    pub deviation: f64,
    /// `nu` of the set difference between the event and the limit.
    pub measure: f64,
    /// `c * measure`, absent when no finite constant exists.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bound: Option<f64>,
    pub dominated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuityReport {
    pub direction: Direction,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constant: Option<f64>,
    pub levels: Vec<RefinementLevel>,
    pub all_dominated: bool,
    pub final_deviation: f64,
}

/// Deviation and measure sequences along `seq`, with the domination
/// `deviation <= c * measure + 1e-10` checked at every level.
pub fn refinement_check(
    povm: &DiscretePovm,
    seq: &RefinementSequence,
    constant: &ContinuityConstant,
) -> Result<ContinuityReport> {
    let space = povm.space();
    let limit_sum = povm.sum_operator(&seq.limit)?;
    let levels = seq
        .events
        .iter()
        .map(|event| {
            let (deviation, diff) = match seq.direction {
                Direction::Increasing => {
                    let gap = &limit_sum - &povm.sum_operator(event)?;
                    (hermitian_norm(&gap, 1e-8)?, seq.limit.difference(event))
                }
                Direction::DecreasingToEmpty => (povm.event_norm(event)?, event.clone()),
                Direction::DecreasingToAtom => {
                    let gap = &povm.sum_operator(event)? - &limit_sum;
                    (hermitian_norm(&gap, 1e-8)?, event.difference(&seq.limit))
                }
            };
            let measure = space.event_weight(&diff);
            let bound = constant.constant.map(|c| c * measure);
            Ok(RefinementLevel {
                event_size: event.len(),
                deviation,
                measure,
                bound,
                dominated: bound.map_or(true, |b| deviation <= b + DOMINATION_SLACK),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ContinuityReport {
        direction: seq.direction,
        constant: constant.constant,
        all_dominated: levels.iter().all(|l| l.dominated),
        final_deviation: levels.last().map_or(0.0, |l| l.deviation),
        levels,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointBound {
    pub q_atoms: EventSet,
    pub p_atoms: EventSet,
    pub norm: f64,
    /// `min(1, c * mu(Dq x Dp))`.
    pub bound: f64,
    pub attained: f64,
    pub maximizer: Vec<[f64; 2]>,
}

/// `||A(Dq x Dp)||` for a product event, with its absolute-continuity
/// certificate and the state that attains it.
pub fn joint_localization_bound(
    povm: &DiscretePovm,
    q_atoms: &EventSet,
    p_atoms: &EventSet,
    constant: &ContinuityConstant,
) -> Result<JointBound> {
    let space = povm.space();
    let (nq, np) = space.product_axes().ok_or(Error::NotProductSpace)?;
    let q_atoms = EventSet::new(q_atoms.indices().to_vec(), nq)?;
    let p_atoms = EventSet::new(p_atoms.indices().to_vec(), np)?;
    let atoms: Vec<usize> = q_atoms
        .iter()
        .flat_map(|q| p_atoms.iter().map(move |p| q * np + p))
        .collect();
    let event = EventSet::new(atoms, space.len())?;
    let effect = povm.effect_of(&event)?;
    let norm = spectral_norm(&effect);
    let bound = constant
        .constant
        .map_or(1.0, |c| (c * space.event_weight(&event)).min(1.0));
    let (attained, maximizer) = match maximizing_state(&effect) {
        Ok((state, value)) => (
            value,
            state.amplitudes().iter().map(|z| [z.re, z.im]).collect(),
        ),
        Err(Error::NoMaximizer) => (0.0, Vec::new()),
        Err(e) => return Err(e),
    };
    Ok(JointBound {
        q_atoms,
        p_atoms,
        norm,
        bound,
        attained,
        maximizer,
    })
}
