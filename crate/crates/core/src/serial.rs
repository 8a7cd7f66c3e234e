//! JSON and text encodings.
//!
//! Every float is written with 17 significant digits in scientific notation,
//! which round-trips `f64` exactly. Non-finite values are refused at write
//! time instead of silently becoming `null`.

use std::io;

use serde::{Deserialize, Serialize};
use serde_json::ser::{Formatter, PrettyFormatter};

use crate::error::{Error, Result};
use crate::linalg::{Effect, EffectRepr, Operator, C64};
use crate::povm::{Atom, DiscretePovm, MeasureKind, MeasureSpec, OutcomeSpace, SpaceShape};

/// `x` with 17 significant digits, e.g. `-2.5000000000000000e-1`.
pub fn format_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn parse_f64(text: &str) -> Result<f64> {
    text.trim()
        .parse::<f64>()
        .map_err(|e| Error::Serialization(format!("bad float '{text}': {e}")))
}

/// Pretty JSON with fixed-precision floats.
pub struct SigDigitsFormatter<'a> {
    inner: PrettyFormatter<'a>,
}

impl Default for SigDigitsFormatter<'_> {
    fn default() -> Self {
        Self {
            inner: PrettyFormatter::with_indent(b"  "),
        }
    }
}

impl Formatter for SigDigitsFormatter<'_> {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        if !value.is_finite() {
            return Err(io::Error::new(
                io::ErrorKind::InvalidData,
                format!("non-finite number {value} in report"),
            ));
        }
        writer.write_all(format_f64(value).as_bytes())
    }

    // serde_json lowers NaN and infinities to `null` before the formatter
    // sees them, so a null in a report can only come from a non-finite number.
    fn write_null<W: ?Sized + io::Write>(&mut self, _writer: &mut W) -> io::Result<()> {
        Err(io::Error::new(
            io::ErrorKind::InvalidData,
            "non-finite number (or null) in report",
        ))
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, value as f64)
    }

    fn begin_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.begin_array(w)
    }

    fn end_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_array(w)
    }

    fn begin_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.inner.begin_array_value(w, first)
    }

    fn end_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_array_value(w)
    }

    fn begin_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.begin_object(w)
    }

    fn end_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_object(w)
    }

    fn begin_object_key<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.inner.begin_object_key(w, first)
    }

    fn end_object_key<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_object_key(w)
    }

    fn begin_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.begin_object_value(w)
    }

    fn end_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_object_value(w)
    }
}

/// Serializes with [`SigDigitsFormatter`] and a trailing newline.
pub fn to_json_string<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, SigDigitsFormatter::default());
    value
        .serialize(&mut ser)
        .map_err(|e| Error::Serialization(e.to_string()))?;
    buf.push(b'\n');
    String::from_utf8(buf).map_err(|e| Error::Serialization(e.to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum InfiniteFlag {
    Infinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum TotalDto {
    Finite(f64),
    Infinite(InfiniteFlag),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct MeasureDto {
    kind: MeasureKind,
    total: TotalDto,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpaceDto {
    kind: String,
    shape: Vec<usize>,
    weights: Vec<f64>,
    measure: MeasureDto,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Rank1Dto {
    weight: f64,
    vector: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum EffectDto {
    Dense(Vec<[f64; 2]>),
    Rank1 { rank1: Rank1Dto },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AtomDto {
    index: usize,
    coord: Vec<f64>,
    effect: EffectDto,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PovmDto {
    dim: usize,
    space: SpaceDto,
    atoms: Vec<AtomDto>,
    normalization_defect: f64,
}

fn pairs(values: &[C64]) -> Vec<[f64; 2]> {
    values.iter().map(|z| [z.re, z.im]).collect()
}

fn complexes(pairs: &[[f64; 2]]) -> Vec<C64> {
    pairs.iter().map(|p| C64::new(p[0], p[1])).collect()
}

fn shape_to_dto(shape: SpaceShape) -> (String, Vec<usize>) {
    match shape {
        SpaceShape::Discrete { atoms } => ("discrete".into(), vec![atoms]),
        SpaceShape::Chain {
            cells,
            periodic: false,
        } => ("chain".into(), vec![cells]),
        SpaceShape::Chain {
            cells,
            periodic: true,
        } => ("ring".into(), vec![cells]),
        SpaceShape::Lattice { d } => ("lattice".into(), vec![d, d]),
        SpaceShape::Grid { nq, np } => ("grid".into(), vec![nq, np]),
    }
}

fn shape_from_dto(kind: &str, shape: &[usize]) -> Result<SpaceShape> {
    let bad = || Error::Serialization(format!("space kind '{kind}' with shape {shape:?}"));
    Ok(match (kind, shape) {
        ("discrete", &[atoms]) => SpaceShape::Discrete { atoms },
        ("chain", &[cells]) => SpaceShape::Chain {
            cells,
            periodic: false,
        },
        ("ring", &[cells]) => SpaceShape::Chain {
            cells,
            periodic: true,
        },
        ("lattice", &[d, e]) if d == e => SpaceShape::Lattice { d },
        ("grid", &[nq, np]) => SpaceShape::Grid { nq, np },
        _ => return Err(bad()),
    })
}

fn povm_to_dto(povm: &DiscretePovm) -> PovmDto {
    let space = povm.space();
    let (kind, shape) = shape_to_dto(space.shape());
    let measure = space.measure();
    let atoms = space
        .atoms()
        .iter()
        .zip(povm.effects())
        .map(|(atom, effect)| AtomDto {
            index: atom.index,
            coord: atom.coord.clone(),
            effect: match effect.repr() {
                EffectRepr::Dense(op) => EffectDto::Dense(pairs(&op.row_major())),
                EffectRepr::Rank1 { weight, vector } => EffectDto::Rank1 {
                    rank1: Rank1Dto {
                        weight: *weight,
                        vector: pairs(vector.as_slice()),
                    },
                },
            },
        })
        .collect();
    PovmDto {
        dim: povm.dim(),
        space: SpaceDto {
            kind,
            shape,
            weights: space.weights(),
            measure: MeasureDto {
                kind: measure.kind,
                total: match measure.total {
                    Some(t) => TotalDto::Finite(t),
                    None => TotalDto::Infinite(InfiniteFlag::Infinite),
                },
            },
        },
        atoms,
        normalization_defect: povm.normalization_defect(),
    }
}

fn povm_from_dto(dto: PovmDto) -> Result<DiscretePovm> {
    let shape = shape_from_dto(&dto.space.kind, &dto.space.shape)?;
    if dto.space.weights.len() != dto.atoms.len() {
        return Err(Error::Serialization(format!(
            "{} weights for {} atoms",
            dto.space.weights.len(),
            dto.atoms.len()
        )));
    }
    let mut atoms = Vec::with_capacity(dto.atoms.len());
    let mut effects = Vec::with_capacity(dto.atoms.len());
    for (atom, weight) in dto.atoms.into_iter().zip(dto.space.weights) {
        effects.push(match atom.effect {
            EffectDto::Dense(entries) => {
                Effect::new(Operator::from_row_major(dto.dim, &complexes(&entries))?)?
            }
            EffectDto::Rank1 { rank1 } => Effect::rank1(rank1.weight, complexes(&rank1.vector))?,
        });
        atoms.push(Atom {
            index: atom.index,
            coord: atom.coord,
            weight,
        });
    }
    let measure = MeasureSpec {
        kind: dto.space.measure.kind,
        total: match dto.space.measure.total {
            TotalDto::Finite(t) => Some(t),
            TotalDto::Infinite(_) => None,
        },
    };
    let povm = DiscretePovm::new(OutcomeSpace::new(shape, atoms, measure)?, dto.dim, effects)?;
    if povm.normalization_defect().to_bits() != dto.normalization_defect.to_bits()
        && (povm.normalization_defect() - dto.normalization_defect).abs() > 1e-12
    {
        return Err(Error::Serialization(format!(
            "recorded normalization defect {} disagrees with recomputed {}",
            dto.normalization_defect,
            povm.normalization_defect()
        )));
    }
    Ok(povm)
}

/// The POVM interchange format:
/// `{ "dim", "space": {"kind", "shape", "weights", "measure"}, "atoms": [...],
/// "normalization_defect" }`. Dense effects are row-major `[re, im]` pairs;
/// factored ones are `{"rank1": {"weight", "vector"}}`.
pub fn povm_to_json(povm: &DiscretePovm) -> Result<String> {
    to_json_string(&povm_to_dto(povm))
}

pub fn povm_from_json(text: &str) -> Result<DiscretePovm> {
    let dto: PovmDto =
        serde_json::from_str(text).map_err(|e| Error::Serialization(e.to_string()))?;
    povm_from_dto(dto)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covariant::{build_wh_povm, sharp_position_pvm, FiducialVector};
    use crate::marginals::marginal_q;

    #[test]
    fn float_format_has_17_significant_digits() {
        assert_eq!(format_f64(0.1), "1.0000000000000001e-1");
        assert_eq!(format_f64(-2.5), "-2.5000000000000000e0");
        assert_eq!(parse_f64("1.0000000000000001e-1").unwrap(), 0.1);
    }

    #[test]
    fn non_finite_refused() {
        assert!(to_json_string(&vec![1.0, f64::NAN]).is_err());
        assert!(to_json_string(&f64::INFINITY).is_err());
        assert!(to_json_string(&vec![1.0, 2.0]).is_ok());
    }

    #[test]
    fn dense_and_factored_round_trip_bit_exact() {
        let eta = FiducialVector::lattice_gaussian(3, 0.8).unwrap();
        let wh = build_wh_povm(3, &eta).unwrap();
        for povm in [wh.clone(), marginal_q(&wh).unwrap(), sharp_position_pvm(4).unwrap()] {
            let text = povm_to_json(&povm).unwrap();
            let back = povm_from_json(&text).unwrap();
            assert_eq!(back, povm);
            assert_eq!(povm_to_json(&back).unwrap(), text);
        }
    }

    #[test]
    fn malformed_documents_rejected() {
        assert!(povm_from_json("{").is_err());
        let text = povm_to_json(&sharp_position_pvm(2).unwrap()).unwrap();
        let wrong_kind = text.replace("\"discrete\"", "\"lattice\"");
        assert!(povm_from_json(&wrong_kind).is_err());
    }
}
