use std::fs;
use std::path::{Path, PathBuf};

use phaseloc_core::analysis::{
    cell_shrink_scaling, joint_localization_bound, necessary_condition_family,
    necessary_condition_verdict, norm1_report, refinement_check, standard_events,
    ContinuityReport, FamilyCondition, RefinementSequence, ScalingFit,
};
use phaseloc_core::covariant::{
    absolute_continuity_constant, build_coherent_povm, build_wh_povm_with, covariance_check,
    sharp_position_pvm, CoherentGrid, FiducialVector, WeylSystem,
};
use phaseloc_core::linalg::StateVector;
use phaseloc_core::marginals::{
    extract_kernel, marginal_kernel_identity_check, marginal_p, marginal_q, MarkovKernel,
    OrthonormalBasis,
};
use phaseloc_core::povm::{is_commutative, validate_povm, DiscretePovm, EventSet, PairCheck};
use phaseloc_core::serial::{format_f64, povm_to_json, to_json_string};
use phaseloc_core::{Error as CoreError, Tolerances, C64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{Analysis, Construction, ExperimentConfig, FiducialSpec, ScalingSpec};
use crate::error::{io_err, CliError};

pub const TOOLKIT_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const MANIFEST_FILE: &str = "manifest.json";
const OUTPUT_ENV: &str = "PHASELOC_OUT";
const RANDOM_SHIFTS: usize = 50;
/// Accepted window for the fitted cell-shrink slope.
pub const SLOPE_WINDOW: [f64; 2] = [0.9, 1.1];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Selection {
    pub kind: String,
    pub dims: Vec<usize>,
    pub analyses: Vec<Analysis>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FileFormat {
    Json,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputFile {
    /// Relative to the manifest's directory.
    pub path: String,
    pub format: FileFormat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisEntry {
    pub analysis: String,
    pub passed: bool,
    pub files: Vec<OutputFile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub passed: usize,
    pub failed: usize,
    pub all_passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema: u32,
    pub toolkit_version: String,
    pub command: String,
    pub config_hash: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub started_at: String,
    pub finished_at: String,
    pub selection: Selection,
    pub outputs: Vec<AnalysisEntry>,
    pub summary: Summary,
    pub exit_code: i32,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(io_err(path.display()))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: not a run manifest: {e}", path.display())))
    }
}

/// Envelope shared by every analysis report.
#[derive(Serialize)]
struct Report<'a, T: Serialize> {
    analysis: &'a str,
    config_hash: &'a str,
    toolkit_version: &'a str,
    construction: &'a Construction,
    passed: bool,
    result: T,
}

/// Output directory precedence: `--out`, the config, `$PHASELOC_OUT`, then
/// `./phaseloc-out`.
pub fn resolve_output_dir(flag: Option<&Path>, config: &ExperimentConfig) -> PathBuf {
    flag.map(Path::to_path_buf)
        .or_else(|| config.output_dir.clone())
        .or_else(|| std::env::var_os(OUTPUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("phaseloc-out"))
}

pub fn fiducial(construction: &Construction, seed: Option<u64>) -> Result<FiducialVector, CliError> {
    let (dim, spec, coherent) = match construction {
        Construction::Wh { d, fiducial, .. } => (*d, fiducial, false),
        Construction::Coherent {
            fock_dim, fiducial, ..
        } => (*fock_dim, fiducial, true),
        Construction::Sharp { .. } => {
            return Err(CliError::Selection("a sharp PVM has no fiducial".into()))
        }
    };
    let bad = |e: CoreError| CliError::Config(format!("fiducial: {e}"));
    match spec {
        FiducialSpec::Basis { index } => FiducialVector::basis(dim, *index).map_err(bad),
        FiducialSpec::Vacuum => FiducialVector::vacuum(dim).map_err(bad),
        FiducialSpec::Uniform => FiducialVector::uniform(dim).map_err(bad),
        FiducialSpec::Gaussian { width } if coherent => {
            FiducialVector::squeezed_vacuum(dim, *width).map_err(bad)
        }
        FiducialSpec::Gaussian { width } => FiducialVector::lattice_gaussian(dim, *width).map_err(bad),
        FiducialSpec::Random => {
            let seed = seed.ok_or_else(|| CliError::Config("a random fiducial needs a seed".into()))?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(1);
            FiducialVector::random(dim, &mut rng).map_err(bad)
        }
        FiducialSpec::Custom { amplitudes } => {
            let amps = amplitudes.iter().map(|[re, im]| C64::new(*re, *im)).collect();
            let state = StateVector::new(amps).map_err(bad)?;
            if state.dim() != dim {
                return Err(CliError::Config(format!(
                    "fiducial has {} amplitudes, construction needs {dim}",
                    state.dim()
                )));
            }
            Ok(FiducialVector::custom(state))
        }
    }
}

/// Constructor failures on valid parameters are threshold breaches (exit
/// 1); everything else is a bad parameter (exit 2).
fn construction_error(e: CoreError) -> CliError {
    match e {
        CoreError::TruncationInadequate { .. } | CoreError::NotNormalized { .. } => {
            CliError::Construction(e)
        }
        other => CliError::Config(format!("construction: {other}")),
    }
}

pub fn build(config: &ExperimentConfig) -> Result<DiscretePovm, CliError> {
    let tol = config.tolerances()?;
    match &config.construction {
        Construction::Wh { d, .. } => {
            let eta = fiducial(&config.construction, config.seed)?;
            build_wh_povm_with(*d, &eta, &tol).map_err(construction_error)
        }
        Construction::Sharp { d } => sharp_position_pvm(*d).map_err(construction_error),
        Construction::Coherent {
            fock_dim,
            half_width,
            h,
            truncation,
            ..
        } => {
            let eta = fiducial(&config.construction, config.seed)?;
            let grid = CoherentGrid::new(*fock_dim, *half_width, *h)
                .map_err(construction_error)?
                .with_truncation(*truncation);
            build_coherent_povm(&grid, &eta, &tol).map_err(construction_error)
        }
    }
}

/// Machine-readable payload of a constructor refusal.
pub fn construction_payload(e: &CoreError) -> serde_json::Value {
    match e {
        CoreError::TruncationInadequate {
            defect,
            threshold,
            suggested_half_width,
            suggested_fock_dim,
        } => serde_json::json!({
            "error": "truncation-inadequate",
            "defect": defect,
            "threshold": threshold,
            "suggested_half_width": suggested_half_width,
            "suggested_fock_dim": suggested_fock_dim,
            "message": e.to_string(),
        }),
        CoreError::NotNormalized { defect, threshold } => serde_json::json!({
            "error": "not-normalized",
            "defect": defect,
            "threshold": threshold,
            "message": e.to_string(),
        }),
        other => serde_json::json!({ "error": "construction", "message": other.to_string() }),
    }
}

struct Ctx<'a> {
    config: &'a ExperimentConfig,
    hash: String,
    tol: Tolerances,
    out: &'a Path,
}

impl Ctx<'_> {
    fn write_json<T: Serialize>(
        &self,
        name: &str,
        analysis: &str,
        passed: bool,
        result: T,
    ) -> Result<OutputFile, CliError> {
        let report = Report {
            analysis,
            config_hash: &self.hash,
            toolkit_version: TOOLKIT_VERSION,
            construction: &self.config.construction,
            passed,
            result,
        };
        let text = to_json_string(&report)
            .map_err(|e| CliError::NonFinite(format!("{analysis}: {e}")))?;
        self.write(name, &text, FileFormat::Json)
    }

    fn write(&self, name: &str, text: &str, format: FileFormat) -> Result<OutputFile, CliError> {
        let path = self.out.join(name);
        fs::write(&path, text).map_err(io_err(path.display()))?;
        Ok(OutputFile {
            path: name.to_string(),
            format,
        })
    }

    fn write_kernel(&self, name: &str, kernel: &MarkovKernel) -> Result<OutputFile, CliError> {
        let text = kernel
            .to_csv_string()
            .map_err(|e| CliError::Io(format!("{name}: {e}")))?;
        self.write(name, &text, FileFormat::Csv)
    }
}

/// Computation errors inside an analysis mean the check could not pass.
fn check_err(analysis: Analysis) -> impl Fn(CoreError) -> CliError {
    move |e| CliError::Check(format!("{}: {e}", analysis.name()))
}

fn csv_line(cells: &[String]) -> String {
    let mut line = cells.join(",");
    line.push('\n');
    line
}

fn opt(x: Option<f64>) -> String {
    x.map(format_f64).unwrap_or_default()
}

#[derive(Serialize)]
struct ShiftRecord {
    q: usize,
    p: usize,
    deviation: f64,
}

#[derive(Serialize)]
struct CovarianceResult {
    exhaustive: bool,
    tolerance: f64,
    max_deviation: f64,
    shifts: Vec<ShiftRecord>,
}

#[derive(Serialize)]
struct NamedSequence {
    name: &'static str,
    report: ContinuityReport,
}

#[derive(Serialize)]
struct RefinementResult {
    center: usize,
    constant: Option<f64>,
    normalization_defect: f64,
    sequences: Vec<NamedSequence>,
}

#[derive(Serialize)]
struct ScalingLevel {
    cell_size: f64,
    normalization_defect: f64,
}

#[derive(Serialize)]
struct ScalingResult {
    slope_window: [f64; 2],
    levels: Vec<ScalingLevel>,
    fit: ScalingFit,
    family: FamilyCondition,
}

#[derive(Serialize)]
struct MarginalSide {
    basis: OrthonormalBasis,
    validated: bool,
    normalization_defect: f64,
    commutativity: PairCheck,
    kernel_extracted: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    extraction_failure: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    kernel_row_sum_defect: Option<f64>,
}

#[derive(Serialize)]
struct KernelIdentityResult {
    tolerance: f64,
    max_entry_deviation: f64,
    max_spectral_deviation: f64,
}

#[derive(Serialize)]
struct JointResult {
    constant: Option<f64>,
    slack: f64,
    bound: phaseloc_core::JointBound,
}

fn default_center(povm: &DiscretePovm) -> usize {
    match povm.space().product_axes() {
        Some((nq, np)) => (nq / 2) * np + np / 2,
        None => povm.space().len() / 2,
    }
}

fn run_analysis(
    ctx: &Ctx,
    povm: &DiscretePovm,
    analysis: Analysis,
) -> Result<(bool, Vec<OutputFile>), CliError> {
    let cfg = ctx.config;
    let tol = &ctx.tol;
    let name = analysis.name();
    let err = check_err(analysis);
    macro_rules! report {
        ($passed:expr, $value:expr) => {
            vec![ctx.write_json(&format!("{name}.json"), name, $passed, $value)?]
        };
    }
    match analysis {
        Analysis::Validate => {
            let report = validate_povm(povm, tol);
            Ok((report.passed, report!(report.passed, &report)))
        }
        Analysis::Covariance => {
            let d = cfg.construction.dims()[0];
            let sys = WeylSystem::new(d).map_err(&err)?;
            let exhaustive = d <= 8;
            let shifts: Vec<(usize, usize)> = if exhaustive {
                (0..d).flat_map(|q| (0..d).map(move |p| (q, p))).collect()
            } else {
                let seed = cfg
                    .seed
                    .ok_or_else(|| CliError::Config("random shifts need a seed".into()))?;
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(2);
                (0..RANDOM_SHIFTS)
                    .map(|_| (rng.random_range(0..d), rng.random_range(0..d)))
                    .collect()
            };
            let shifts = shifts
                .into_iter()
                .map(|(q, p)| {
                    covariance_check(povm, &sys, (q, p)).map(|deviation| ShiftRecord { q, p, deviation })
                })
                .collect::<Result<Vec<_>, _>>()
                .map_err(&err)?;
            let max_deviation = shifts.iter().map(|s| s.deviation).fold(0.0, f64::max);
            let passed = max_deviation <= tol.equality;
            let result = CovarianceResult {
                exhaustive,
                tolerance: tol.equality,
                max_deviation,
                shifts,
            };
            Ok((passed, report!(passed, &result)))
        }
        Analysis::Norm1 => {
            let events = standard_events(povm.space(), cfg.seed).map_err(&err)?;
            let condition = necessary_condition_verdict(povm, tol.support);
            let report = norm1_report(povm, &events, tol.norm1)
                .map_err(&err)?
                .with_necessary_condition(&condition);
            let passed = report.has_norm1();
            Ok((passed, report!(passed, &report)))
        }
        Analysis::NecessaryCondition => {
            let condition = necessary_condition_verdict(povm, tol.support);
            let passed = condition.verdict == phaseloc_core::NecessaryVerdict::Inconclusive;
            Ok((passed, report!(passed, &condition)))
        }
        Analysis::Refinement => {
            let c = absolute_continuity_constant(povm);
            let center = cfg
                .refinement
                .and_then(|r| r.center)
                .unwrap_or_else(|| default_center(povm));
            let space = povm.space();
            let sequences: Vec<(&'static str, RefinementSequence)> =
                if space.product_axes().is_some() {
                    vec![
                        ("growing-squares", RefinementSequence::growing_squares(space, center)),
                        ("shrinking-squares", RefinementSequence::shrinking_squares(space, center)),
                        ("vanishing-squares", RefinementSequence::vanishing_squares(space, center)),
                    ]
                    .into_iter()
                    .map(|(n, s)| s.map(|s| (n, s)))
                    .collect::<Result<_, _>>()
                    .map_err(|e| CliError::Config(format!("refinement: {e}")))?
                } else {
                    vec![(
                        "vanishing-suffixes",
                        RefinementSequence::vanishing_suffixes(space).map_err(&err)?,
                    )]
                };
            let mut csv = csv_line(&[
                "sequence", "level", "event_size", "deviation", "measure", "bound", "dominated",
            ]
            .map(String::from));
            let mut named = Vec::new();
            let mut passed = true;
            for (seq_name, seq) in sequences {
                let report = refinement_check(povm, &seq, &c).map_err(&err)?;
                passed &= report.all_dominated;
                if seq.direction() == phaseloc_core::Direction::Increasing {
                    passed &= report.final_deviation <= povm.normalization_defect() + 1e-10;
                }
                for (k, level) in report.levels.iter().enumerate() {
                    csv.push_str(&csv_line(&[
                        seq_name.to_string(),
                        k.to_string(),
                        level.event_size.to_string(),
                        format_f64(level.deviation),
                        format_f64(level.measure),
                        opt(level.bound),
                        level.dominated.to_string(),
                    ]));
                }
                named.push(NamedSequence {
                    name: seq_name,
                    report,
                });
            }
            let result = RefinementResult {
                center,
                constant: c.constant,
                normalization_defect: povm.normalization_defect(),
                sequences: named,
            };
            let mut files = report!(passed, &result);
            files.push(ctx.write("refinement.csv", &csv, FileFormat::Csv)?);
            Ok((passed, files))
        }
        Analysis::Scaling => {
            let Construction::Coherent {
                fock_dim,
                half_width,
                truncation,
                ..
            } = &cfg.construction
            else {
                unreachable!("checked with the config")
            };
            let spec = cfg.scaling.clone().unwrap_or_else(ScalingSpec::default);
            let eta = fiducial(&cfg.construction, cfg.seed)?;
            let levels = spec
                .cell_sizes
                .iter()
                .map(|&h| {
                    let grid = CoherentGrid::new(*fock_dim, *half_width, h)
                        .map_err(construction_error)?
                        .with_truncation(*truncation);
                    build_coherent_povm(&grid, &eta, tol).map_err(construction_error)
                })
                .collect::<Result<Vec<_>, _>>()?;
            let fit = cell_shrink_scaling(&levels).map_err(&err)?;
            let family = necessary_condition_family(&levels).map_err(&err)?;
            let passed = (SLOPE_WINDOW[0]..=SLOPE_WINDOW[1]).contains(&fit.slope);
            let mut csv = csv_line(&["cell_size", "atom", "measure", "norm"].map(String::from));
            for (h, p) in spec.cell_sizes.iter().zip(&fit.points) {
                csv.push_str(&csv_line(&[
                    format_f64(*h),
                    p.atom.to_string(),
                    format_f64(p.measure),
                    format_f64(p.norm),
                ]));
            }
            let result = ScalingResult {
                slope_window: SLOPE_WINDOW,
                levels: spec
                    .cell_sizes
                    .iter()
                    .zip(&levels)
                    .map(|(&cell_size, l)| ScalingLevel {
                        cell_size,
                        normalization_defect: l.normalization_defect(),
                    })
                    .collect(),
                fit,
                family,
            };
            let mut files = report!(passed, &result);
            files.push(ctx.write("scaling.csv", &csv, FileFormat::Csv)?);
            Ok((passed, files))
        }
        Analysis::Marginals => {
            let mut passed = true;
            let mut files = Vec::new();
            let mut sides = Vec::new();
            for (label, marginal, basis) in [
                ("q", marginal_q(povm), OrthonormalBasis::Computational),
                ("p", marginal_p(povm), OrthonormalBasis::Fourier),
            ] {
                let marginal = marginal.map_err(&err)?;
                let validation = validate_povm(&marginal, tol);
                let commutativity = is_commutative(&marginal, tol.commutativity);
                let extracted = extract_kernel(&marginal, &basis);
                let side_ok = validation.passed && commutativity.holds && extracted.is_ok();
                passed &= side_ok;
                let (failure, row_defect) = match &extracted {
                    Ok(k) => {
                        files.push(ctx.write_kernel(&format!("kernel_{label}.csv"), k)?);
                        (None, Some(k.row_sum_defect()))
                    }
                    Err(f) => (Some(format!("{f:?}")), None),
                };
                sides.push((
                    label,
                    MarginalSide {
                        basis,
                        validated: validation.passed,
                        normalization_defect: marginal.normalization_defect(),
                        commutativity,
                        kernel_extracted: extracted.is_ok(),
                        extraction_failure: failure,
                        kernel_row_sum_defect: row_defect,
                    },
                ));
            }
            let result: std::collections::BTreeMap<_, _> = sides.into_iter().collect();
            let mut out = report!(passed, &result);
            out.append(&mut files);
            Ok((passed, out))
        }
        Analysis::KernelIdentity => {
            let d = cfg.construction.dims()[0];
            let eta = fiducial(&cfg.construction, cfg.seed)?;
            let check = marginal_kernel_identity_check(d, &eta).map_err(&err)?;
            let passed = check.max_entry_deviation <= tol.equality;
            let result = KernelIdentityResult {
                tolerance: tol.equality,
                max_entry_deviation: check.max_entry_deviation,
                max_spectral_deviation: check.max_spectral_deviation,
            };
            Ok((passed, report!(passed, &result)))
        }
        Analysis::JointBound => {
            let spec = cfg.joint.as_ref().expect("checked with the config");
            let (nq, np) = povm
                .space()
                .product_axes()
                .ok_or_else(|| CliError::Selection("joint-bound needs a product space".into()))?;
            let q = EventSet::new(spec.q.clone(), nq)
                .map_err(|e| CliError::Config(format!("joint.q: {e}")))?;
            let p = EventSet::new(spec.p.clone(), np)
                .map_err(|e| CliError::Config(format!("joint.p: {e}")))?;
            let c = absolute_continuity_constant(povm);
            let bound = joint_localization_bound(povm, &q, &p, &c).map_err(&err)?;
            let passed = bound.norm <= bound.bound + tol.equality;
            let result = JointResult {
                constant: c.constant,
                slack: tol.equality,
                bound,
            };
            Ok((passed, report!(passed, &result)))
        }
    }
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

fn selection(config: &ExperimentConfig) -> Selection {
    Selection {
        kind: config.construction.kind().to_string(),
        dims: config.construction.dims(),
        analyses: config.analyses.clone(),
    }
}

fn finish(
    out: &Path,
    command: &str,
    config: &ExperimentConfig,
    started_at: String,
    outputs: Vec<AnalysisEntry>,
    exit_code: i32,
) -> Result<RunManifest, CliError> {
    let passed = outputs.iter().filter(|o| o.passed).count();
    let manifest = RunManifest {
        schema: crate::config::SCHEMA_VERSION,
        toolkit_version: TOOLKIT_VERSION.to_string(),
        command: command.to_string(),
        config_hash: config.hash(),
        seed: config.seed,
        started_at,
        finished_at: now(),
        selection: selection(config),
        summary: Summary {
            passed,
            failed: outputs.len() - passed,
            all_passed: passed == outputs.len(),
        },
        outputs,
        exit_code,
    };
    let text = to_json_string(&manifest).map_err(|e| CliError::NonFinite(e.to_string()))?;
    let path = out.join(MANIFEST_FILE);
    fs::write(&path, text).map_err(io_err(path.display()))?;
    Ok(manifest)
}

fn prepare(out: &Path) -> Result<(), CliError> {
    fs::create_dir_all(out).map_err(io_err(out.display()))
}

/// Records a constructor refusal next to the manifest before failing.
fn construction_failed(
    out: &Path,
    command: &str,
    config: &ExperimentConfig,
    started_at: String,
    e: CliError,
) -> CliError {
    if let CliError::Construction(inner) = &e {
        let payload = construction_payload(inner);
        let text = serde_json::to_string_pretty(&payload).unwrap_or_default() + "\n";
        if fs::write(out.join("construction_error.json"), text).is_ok() {
            let entry = AnalysisEntry {
                analysis: "construction".into(),
                passed: false,
                files: vec![OutputFile {
                    path: "construction_error.json".into(),
                    format: FileFormat::Json,
                }],
            };
            let _ = finish(out, command, config, started_at, vec![entry], e.exit_code());
        }
    }
    e
}

/// Runs the selected analyses in declared order. The manifest is written
/// even when checks fail; the exit code lives in it.
pub fn check(config: &ExperimentConfig, out: &Path) -> Result<RunManifest, CliError> {
    let started_at = now();
    prepare(out)?;
    let povm = match build(config) {
        Ok(p) => p,
        Err(e) => return Err(construction_failed(out, "check", config, started_at, e)),
    };
    let ctx = Ctx {
        config,
        hash: config.hash(),
        tol: config.tolerances()?,
        out,
    };
    let mut outputs = Vec::new();
    for &analysis in &config.analyses {
        let (passed, files) = match run_analysis(&ctx, &povm, analysis) {
            Ok(r) => r,
            Err(e @ (CliError::Check(_) | CliError::Construction(_) | CliError::NonFinite(_))) => {
                eprintln!("{}: {e}", analysis.name());
                (false, Vec::new())
            }
            Err(e) => return Err(e),
        };
        outputs.push(AnalysisEntry {
            analysis: analysis.name().to_string(),
            passed,
            files,
        });
    }
    let exit_code = if outputs.iter().all(|o| o.passed) { 0 } else { 1 };
    finish(out, "check", config, started_at, outputs, exit_code)
}

/// Builds the POVM, writes it as JSON together with its validation report.
pub fn build_only(config: &ExperimentConfig, out: &Path) -> Result<RunManifest, CliError> {
    let started_at = now();
    prepare(out)?;
    let povm = match build(config) {
        Ok(p) => p,
        Err(e) => return Err(construction_failed(out, "build", config, started_at, e)),
    };
    let ctx = Ctx {
        config,
        hash: config.hash(),
        tol: config.tolerances()?,
        out,
    };
    let text = povm_to_json(&povm).map_err(|e| CliError::NonFinite(e.to_string()))?;
    let povm_file = ctx.write("povm.json", &text, FileFormat::Json)?;
    let (passed, mut files) = run_analysis(&ctx, &povm, Analysis::Validate)?;
    files.insert(0, povm_file);
    let outputs = vec![AnalysisEntry {
        analysis: "build".into(),
        passed,
        files,
    }];
    finish(out, "build", config, started_at, outputs, if passed { 0 } else { 1 })
}

/// Writes both marginals as POVM JSON and their extracted kernels as CSV.
pub fn marginal(config: &ExperimentConfig, out: &Path) -> Result<RunManifest, CliError> {
    if config.construction.kind() != "wh" {
        return Err(CliError::Selection(
            "marginals are defined for the `wh` construction".into(),
        ));
    }
    let started_at = now();
    prepare(out)?;
    let povm = match build(config) {
        Ok(p) => p,
        Err(e) => return Err(construction_failed(out, "marginal", config, started_at, e)),
    };
    let ctx = Ctx {
        config,
        hash: config.hash(),
        tol: config.tolerances()?,
        out,
    };
    let mut files = Vec::new();
    for (label, m) in [("q", marginal_q(&povm)), ("p", marginal_p(&povm))] {
        let m = m.map_err(check_err(Analysis::Marginals))?;
        let text = povm_to_json(&m).map_err(|e| CliError::NonFinite(e.to_string()))?;
        files.push(ctx.write(&format!("marginal_{label}.json"), &text, FileFormat::Json)?);
    }
    let (passed, mut more) = run_analysis(&ctx, &povm, Analysis::Marginals)?;
    files.append(&mut more);
    let outputs = vec![AnalysisEntry {
        analysis: "marginals".into(),
        passed,
        files,
    }];
    finish(out, "marginal", config, started_at, outputs, if passed { 0 } else { 1 })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepPoint {
    pub value: f64,
    pub directory: String,
    pub exit_code: i32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// One `check` per sweep value, each in its own subdirectory, plus an
/// index file `sweep.json`. Returns the worst exit code.
pub fn sweep(config: &ExperimentConfig, out: &Path) -> Result<(Vec<SweepPoint>, i32), CliError> {
    let spec = config
        .sweep
        .clone()
        .ok_or_else(|| CliError::Config("sweep needs a `sweep` section".into()))?;
    prepare(out)?;
    let tag = match spec.parameter {
        crate::config::SweepParameter::D => "d",
        crate::config::SweepParameter::FockDim => "N",
        crate::config::SweepParameter::HalfWidth => "L",
        crate::config::SweepParameter::CellSize => "h",
    };
    let mut points = Vec::new();
    let mut worst = 0;
    for &value in &spec.values {
        let point_config = config.with_parameter(spec.parameter, value)?;
        let directory = format!("{tag}={value}");
        let (exit_code, error) = match check(&point_config, &out.join(&directory)) {
            Ok(m) => (m.exit_code, None),
            Err(e @ (CliError::Construction(_) | CliError::Check(_) | CliError::NonFinite(_))) => {
                (e.exit_code(), Some(e.to_string()))
            }
            Err(e) => return Err(e),
        };
        worst = worst.max(exit_code);
        points.push(SweepPoint {
            value,
            directory,
            exit_code,
            error,
        });
    }
    let text = to_json_string(&points).map_err(|e| CliError::NonFinite(e.to_string()))?;
    fs::write(out.join("sweep.json"), text).map_err(io_err(out.display()))?;
    Ok((points, worst))
}
