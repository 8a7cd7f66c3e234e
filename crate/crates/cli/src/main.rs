use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use phaseloc_cli::run::construction_payload;
use phaseloc_cli::{
    build_only, check, diff_reports, load_config, marginal, resolve_output_dir, sweep, CliError,
    ExperimentConfig, RunManifest,
};

#[derive(Parser)]
#[command(name = "phaseloc", version, about = "Localization observables on discrete phase spaces")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the POVM and write it with its validation report.
    Build(RunArgs),
    /// Run the analyses selected in the config.
    Check(RunArgs),
    /// Run `check` once per value of the config's `sweep` section.
    Sweep(RunArgs),
    /// Write the position and momentum marginals and their kernels.
    Marginal(RunArgs),
    /// Compare two runs field by field.
    ReportDiff(DiffArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory (default: config `output_dir`, then $PHASELOC_OUT).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Tolerance override, e.g. `--tol equality=1e-9`; repeatable.
    #[arg(long = "tol", value_name = "KEY=VAL", value_parser = parse_kv)]
    tol: Vec<(String, f64)>,
    #[arg(long)]
    quiet: bool,
}

#[derive(Args)]
struct DiffArgs {
    /// Manifest file or run directory.
    a: PathBuf,
    b: PathBuf,
    /// Per-field numeric tolerance, e.g. `--tol norm=1e-12`; repeatable.
    #[arg(long = "tol", value_name = "KEY=VAL", value_parser = parse_kv)]
    tol: Vec<(String, f64)>,
    #[arg(long)]
    quiet: bool,
}

fn parse_kv(s: &str) -> Result<(String, f64), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected KEY=VAL, got `{s}`"))?;
    let v: f64 = v.parse().map_err(|e| format!("`{v}`: {e}"))?;
    Ok((k.trim().to_string(), v))
}

fn effective_config(args: &RunArgs) -> Result<ExperimentConfig, CliError> {
    let mut cfg = load_config(&args.config)?;
    if args.seed.is_some() {
        cfg.seed = args.seed;
    }
    for (k, v) in &args.tol {
        cfg.tolerances.insert(k.clone(), *v);
    }
    cfg.check()?;
    Ok(cfg)
}

fn print_manifest(m: &RunManifest, out: &Path) {
    for o in &m.outputs {
        println!("{:<20} {}", o.analysis, if o.passed { "pass" } else { "FAIL" });
    }
    println!(
        "{} passed, {} failed; manifest {}",
        m.summary.passed,
        m.summary.failed,
        out.join(phaseloc_cli::run::MANIFEST_FILE).display()
    );
}

fn execute(command: Command) -> Result<i32, CliError> {
    match command {
        Command::Build(args) => run_with(&args, build_only),
        Command::Check(args) => run_with(&args, check),
        Command::Marginal(args) => run_with(&args, marginal),
        Command::Sweep(args) => {
            let cfg = effective_config(&args)?;
            let out = resolve_output_dir(args.out.as_deref(), &cfg);
            let (points, code) = sweep(&cfg, &out)?;
            if !args.quiet {
                for p in &points {
                    println!("{:<20} exit {}", p.directory, p.exit_code);
                }
            }
            Ok(code)
        }
        Command::ReportDiff(args) => {
            let tol: BTreeMap<String, f64> = args.tol.into_iter().collect();
            let diff = diff_reports(&args.a, &args.b, &tol)?;
            if !args.quiet {
                println!(
                    "{}",
                    serde_json::to_string_pretty(&diff).expect("diff serializes")
                );
            }
            Ok(if diff.is_empty() { 0 } else { 1 })
        }
    }
}

fn run_with(
    args: &RunArgs,
    f: fn(&ExperimentConfig, &Path) -> Result<RunManifest, CliError>,
) -> Result<i32, CliError> {
    let cfg = effective_config(args)?;
    let out = resolve_output_dir(args.out.as_deref(), &cfg);
    let manifest = f(&cfg, &out)?;
    if !args.quiet {
        print_manifest(&manifest, &out);
    }
    Ok(manifest.exit_code)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("phaseloc: {e}");
            if let CliError::Construction(inner) = &e {
                eprintln!("{}", construction_payload(inner));
            }
            e.exit_code()
        }
    };
    ExitCode::from(code as u8)
}
