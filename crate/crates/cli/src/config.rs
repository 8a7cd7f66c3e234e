use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use phaseloc_core::covariant::Truncation;
use phaseloc_core::analysis::EXHAUSTIVE_LIMIT;
use phaseloc_core::Tolerances;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema: u32,
    pub construction: Construction,
    #[serde(default)]
    pub analyses: Vec<Analysis>,
    /// Overrides by tolerance name; unknown names are rejected.
    #[serde(default)]
    pub tolerances: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scaling: Option<ScalingSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub joint: Option<JointSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub refinement: Option<RefinementSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Construction {
    Wh {
        d: usize,
        #[serde(default)]
        fiducial: FiducialSpec,
        #[serde(default)]
        thresholds: Thresholds,
    },
    Sharp {
        d: usize,
    },
    Coherent {
        #[serde(rename = "N")]
        fock_dim: usize,
        #[serde(rename = "L")]
        half_width: f64,
        h: f64,
        #[serde(default)]
        fiducial: FiducialSpec,
        #[serde(default)]
        truncation: Truncation,
        #[serde(default)]
        thresholds: Thresholds,
    },
}

impl Construction {
    pub fn kind(&self) -> &'static str {
        match self {
            Construction::Wh { .. } => "wh",
            Construction::Sharp { .. } => "sharp",
            Construction::Coherent { .. } => "coherent",
        }
    }

    /// The integer shape parameters: `[d]` or `[N, cells per axis]`.
    pub fn dims(&self) -> Vec<usize> {
        match self {
            Construction::Wh { d, .. } | Construction::Sharp { d } => vec![*d],
            Construction::Coherent {
                fock_dim,
                half_width,
                h,
                ..
            } => vec![*fock_dim, cells_per_axis(*half_width, *h)],
        }
    }

    pub fn atom_count(&self) -> usize {
        match self {
            Construction::Wh { d, .. } => d * d,
            Construction::Sharp { d } => *d,
            Construction::Coherent { half_width, h, .. } => cells_per_axis(*half_width, *h).pow(2),
        }
    }

    pub fn is_product(&self) -> bool {
        !matches!(self, Construction::Sharp { .. })
    }

    fn fiducial(&self) -> Option<&FiducialSpec> {
        match self {
            Construction::Wh { fiducial, .. } | Construction::Coherent { fiducial, .. } => {
                Some(fiducial)
            }
            Construction::Sharp { .. } => None,
        }
    }

    pub fn thresholds(&self) -> Thresholds {
        match self {
            Construction::Wh { thresholds, .. } | Construction::Coherent { thresholds, .. } => {
                *thresholds
            }
            Construction::Sharp { .. } => Thresholds::default(),
        }
    }
}

fn cells_per_axis(half_width: f64, h: f64) -> usize {
    if half_width > 0.0 && h > 0.0 {
        (2.0 * half_width / h + 1e-9).floor() as usize + 1
    } else {
        0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "label", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FiducialSpec {
    Basis { index: usize },
    /// Alias of `basis` index 0, the usual name in Fock space.
    Vacuum,
    Uniform,
    /// Lattice Gaussian for `wh`, squeezed vacuum for `coherent`.
    Gaussian { width: f64 },
    /// Haar-random; drawn from the config seed.
    Random,
    Custom { amplitudes: Vec<[f64; 2]> },
}

impl Default for FiducialSpec {
    fn default() -> Self {
        FiducialSpec::Basis { index: 0 }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Thresholds {
    /// Admissible normalization defect for the constructor.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normalization: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Analysis {
    Validate,
    Covariance,
    Norm1,
    NecessaryCondition,
    Refinement,
    Scaling,
    Marginals,
    KernelIdentity,
    JointBound,
}

impl Analysis {
    pub fn name(self) -> &'static str {
        match self {
            Analysis::Validate => "validate",
            Analysis::Covariance => "covariance",
            Analysis::Norm1 => "norm1",
            Analysis::NecessaryCondition => "necessary-condition",
            Analysis::Refinement => "refinement",
            Analysis::Scaling => "scaling",
            Analysis::Marginals => "marginals",
            Analysis::KernelIdentity => "kernel-identity",
            Analysis::JointBound => "joint-bound",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalingSpec {
    pub cell_sizes: Vec<f64>,
}

impl Default for ScalingSpec {
    fn default() -> Self {
        Self {
            cell_sizes: vec![0.4, 0.2, 0.1, 0.05],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointSpec {
    /// Row indices along the first axis.
    pub q: Vec<usize>,
    /// Column indices along the second axis.
    pub p: Vec<usize>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RefinementSpec {
    /// Atom the squares are centred on; defaults to the middle atom.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepParameter {
    #[serde(rename = "d")]
    D,
    #[serde(rename = "N")]
    FockDim,
    #[serde(rename = "L")]
    HalfWidth,
    #[serde(rename = "h")]
    CellSize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
}

/// Parses a config, reporting the failing field path with line and column.
pub fn parse_config(text: &str, origin: &Path) -> Result<ExperimentConfig, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let config: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|err| {
        let path = err.path().to_string();
        let inner = err.into_inner();
        CliError::Config(format!(
            "{}:{}:{}: at `{}`: {}",
            origin.display(),
            inner.line(),
            inner.column(),
            path,
            inner
        ))
    })?;
    config.check()?;
    Ok(config)
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("reading {}: {e}", path.display())))?;
    parse_config(&text, path)
}

impl ExperimentConfig {
    /// Structural checks beyond the schema: analyses fit the construction,
    /// a seed is present whenever randomness is requested.
    pub fn check(&self) -> Result<(), CliError> {
        if self.schema != SCHEMA_VERSION {
            return Err(CliError::Config(format!(
                "unsupported schema {} (expected {SCHEMA_VERSION})",
                self.schema
            )));
        }
        let mut seen = self.analyses.clone();
        seen.sort();
        if seen.windows(2).any(|w| w[0] == w[1]) {
            return Err(CliError::Config("an analysis is listed twice".into()));
        }
        self.tolerances()?;
        let kind = self.construction.kind();
        for a in &self.analyses {
            let fits = match a {
                Analysis::Covariance | Analysis::Marginals | Analysis::KernelIdentity => kind == "wh",
                Analysis::Scaling => kind == "coherent",
                Analysis::JointBound => self.construction.is_product(),
                _ => true,
            };
            if !fits {
                return Err(CliError::Selection(format!(
                    "analysis `{}` does not apply to a `{kind}` construction",
                    a.name()
                )));
            }
        }
        if self.seed.is_none() {
            if self.construction.fiducial() == Some(&FiducialSpec::Random) {
                return Err(CliError::Config(
                    "a random fiducial needs `seed` (or --seed)".into(),
                ));
            }
            if self.analyses.contains(&Analysis::Norm1)
                && self.construction.atom_count() > EXHAUSTIVE_LIMIT
            {
                return Err(CliError::Config(format!(
                    "norm1 on {} atoms samples random events and needs `seed` (or --seed)",
                    self.construction.atom_count()
                )));
            }
        }
        if self.analyses.contains(&Analysis::JointBound) && self.joint.is_none() {
            return Err(CliError::Config("joint-bound needs a `joint` section".into()));
        }
        Ok(())
    }

    /// Defaults for the construction kind with the overrides applied.
    pub fn tolerances(&self) -> Result<Tolerances, CliError> {
        let mut tol = match self.construction {
            Construction::Coherent { .. } => Tolerances::truncated(),
            _ => Tolerances::default(),
        };
        if let Some(t) = self.construction.thresholds().normalization {
            tol.set("normalization", t)
                .map_err(|e| CliError::Config(e.to_string()))?;
        }
        for (k, v) in &self.tolerances {
            tol.set(k, *v).map_err(|e| CliError::Config(e.to_string()))?;
        }
        Ok(tol)
    }

    /// SHA-256 of the canonical compact JSON of the config, without the
    /// seed and the output directory: the same experiment hashes the same
    /// wherever it is written and whichever seed draws its samples.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.seed = None;
        canonical.output_dir = None;
        let text = serde_json::to_string(&canonical).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    /// The same experiment with one sweep parameter replaced.
    pub fn with_parameter(&self, parameter: SweepParameter, value: f64) -> Result<Self, CliError> {
        let mut out = self.clone();
        out.sweep = None;
        let as_int = || {
            if value.fract() == 0.0 && value >= 0.0 {
                Ok(value as usize)
            } else {
                Err(CliError::Config(format!("sweep value {value} must be an integer")))
            }
        };
        match (&mut out.construction, parameter) {
            (Construction::Wh { d, .. } | Construction::Sharp { d }, SweepParameter::D) => {
                *d = as_int()?
            }
            (Construction::Coherent { fock_dim, .. }, SweepParameter::FockDim) => {
                *fock_dim = as_int()?
            }
            (Construction::Coherent { half_width, .. }, SweepParameter::HalfWidth) => {
                *half_width = value
            }
            (Construction::Coherent { h, .. }, SweepParameter::CellSize) => *h = value,
            (c, p) => {
                return Err(CliError::Selection(format!(
                    "cannot sweep {p:?} of a `{}` construction",
                    c.kind()
                )))
            }
        }
        out.check()?;
        Ok(out)
    }
}
