use std::collections::BTreeMap;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use icbias::experiment::{
    emit_report, read_fits, read_report, run_attack, run_generate, run_mitigation, run_propagation,
    ExperimentConfig, ExperimentReport, ReportFormat, ReportRow, RunOptions,
};
use icbias::Error;

#[derive(Parser)]
#[command(name = "icbias", version, about = "In-context bias propagation, attack and mitigation sweeps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Drift propagation sweep over the k and π grids.
    Propagate(RunArgs),
    /// Feature-aligned attack sweep with downstream evaluation.
    Attack(RunArgs),
    /// Attack sweep repeated for each mitigation strategy.
    Mitigate(RunArgs),
    /// Generate and persist synthetic datasets only.
    Generate(RunArgs),
    /// Re-emit and summarize an existing report.
    Report(ReportArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides `out_dir` from the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Run a single seed instead of the configured list.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "csv")]
    format: String,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    dump_prompts: bool,
}

#[derive(Args)]
struct ReportArgs {
    /// Folder holding `report.csv` or `report.json`.
    #[arg(long)]
    out: PathBuf,
    /// Format to re-emit in.
    #[arg(long, default_value = "csv")]
    format: String,
    /// Unused; accepted for symmetry with the run subcommands.
    #[arg(long)]
    config: Option<PathBuf>,
}

enum Failure {
    Config(String),
    Runtime(String),
    Degenerate(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 1,
            Failure::Runtime(_) => 2,
            Failure::Degenerate(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Runtime(m) | Failure::Degenerate(m) => m,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::Config(_) | Error::BiasSpec(_) | Error::Subgroup(_) | Error::Schema(_) => Failure::Config(msg),
            Error::Degenerate(_) => Failure::Degenerate(msg),
            _ => Failure::Runtime(msg),
        }
    }
}

fn load_config(args: &RunArgs) -> Result<(ExperimentConfig, RunOptions, ReportFormat), Failure> {
    let config_err = |e: Error| Failure::Config(e.to_string());
    let (mut cfg, base) = ExperimentConfig::from_file(&args.config).map_err(config_err)?;
    let format: ReportFormat = args.format.parse().map_err(config_err)?;
    if let Some(out) = &args.out {
        cfg.out_dir = out.clone();
    }
    if let Some(seed) = args.seed {
        cfg.seeds = vec![seed];
    }
    if args.workers == Some(0) {
        return Err(Failure::Config("--workers must be positive".into()));
    }
    let opts = RunOptions {
        base_dir: base,
        workers: args.workers,
        artifacts: Some(cfg.out_dir.join("synthetic")),
        dump_prompts: args.dump_prompts,
        transport: None,
    };
    Ok((cfg, opts, format))
}

fn summarize(out: &mut impl Write, report: &ExperimentReport, written: &[PathBuf]) -> io::Result<()> {
    let flagged = report.rows.iter().filter(|r| !r.flag.is_empty()).count();
    writeln!(out, "{} rows ({} flagged)", report.rows.len(), flagged)?;
    for f in report.fits.iter().filter(|f| f.seed.is_none()) {
        writeln!(out, "beta k={:<4} {:.4} (r2 {:.3}, {} points)", f.k, f.beta, f.r_squared, f.points)?;
    }
    print_table(out, &report.rows)?;
    for p in written {
        writeln!(out, "wrote {}", p.display())?;
    }
    Ok(())
}

/// Print to stdout; a reader that went away early is not an error.
fn emit(f: impl FnOnce(&mut io::StdoutLock) -> io::Result<()>) -> Result<(), Failure> {
    match f(&mut io::stdout().lock()) {
        Err(e) if e.kind() != io::ErrorKind::BrokenPipe => Err(Failure::Runtime(format!("stdout: {e}"))),
        _ => Ok(()),
    }
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

fn cell(x: Option<f64>) -> String {
    x.map_or_else(|| "-".into(), |v| format!("{v:.4}"))
}

/// Means over seeds per (mode, mitigation, model, k, π).
fn print_table(out: &mut impl Write, rows: &[ReportRow]) -> io::Result<()> {
    type Key = (String, String, String, usize, String);
    let mut groups: BTreeMap<Key, Vec<&ReportRow>> = BTreeMap::new();
    for r in rows {
        let key = (r.mode.clone(), r.mitigation.clone(), r.model.clone(), r.k, format!("{:.2}", r.pi));
        groups.entry(key).or_default().push(r);
    }
    writeln!(
        out,
        "{:<14} {:<19} {:<9} {:>4} {:>5} {:>9} {:>9} {:>9} {:>9} {:>9}",
        "mode", "mitigation", "model", "k", "pi", "spd_s", "spd_d", "f1_r", "mdi_prot", "success"
    )?;
    for ((mode, mit, model, k, pi), rs) in groups {
        let col = |f: fn(&ReportRow) -> Option<f64>| mean(&rs.iter().filter_map(|r| f(r)).collect::<Vec<_>>());
        let success: Vec<bool> = rs.iter().filter_map(|r| r.attack_success).collect();
        let success = if success.is_empty() {
            "-".to_string()
        } else {
            format!("{}/{}", success.iter().filter(|s| **s).count(), success.len())
        };
        writeln!(
            out,
            "{:<14} {:<19} {:<9} {:>4} {:>5} {:>9} {:>9} {:>9} {:>9} {:>9}",
            mode,
            mit,
            if model.is_empty() { "-" } else { &model },
            k,
            pi,
            cell(col(|r| r.spd_s)),
            cell(col(|r| r.spd_d)),
            cell(col(|r| r.f1_r)),
            cell(col(|r| r.mdi_protected)),
            success
        )?;
    }
    Ok(())
}

fn run(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::Propagate(a) => sweep(&a, run_propagation),
        Command::Attack(a) => sweep(&a, run_attack),
        Command::Mitigate(a) => sweep(&a, run_mitigation),
        Command::Generate(a) => {
            let (cfg, opts, _) = load_config(&a)?;
            let report = run_generate(&cfg, &opts)?;
            let dir = opts.artifacts.expect("set by load_config");
            let errors = report.rows.iter().filter(|r| r.flag.starts_with("error")).count();
            emit(|out| writeln!(out, "{} datasets under {}", report.rows.len() - errors, dir.display()))?;
            if errors > 0 {
                return Err(Failure::Runtime(format!("{errors} grid point(s) failed")));
            }
            Ok(())
        }
        Command::Report(a) => report(&a),
    }
}

fn sweep(
    args: &RunArgs,
    f: fn(&ExperimentConfig, &RunOptions) -> icbias::Result<ExperimentReport>,
) -> Result<(), Failure> {
    let (cfg, opts, format) = load_config(args)?;
    let report = f(&cfg, &opts)?;
    let written = emit_report(&report, format, &cfg.out_dir)?;
    emit(|out| summarize(out, &report, &written))
}

fn find_report(dir: &Path, stem: &str) -> Option<PathBuf> {
    ["csv", "json"]
        .iter()
        .map(|ext| dir.join(format!("{stem}.{ext}")))
        .find(|p| p.exists())
}

fn report(args: &ReportArgs) -> Result<(), Failure> {
    let format: ReportFormat = args.format.parse().map_err(|e: Error| Failure::Config(e.to_string()))?;
    let path = find_report(&args.out, "report")
        .ok_or_else(|| Failure::Runtime(format!("no report.csv or report.json in {}", args.out.display())))?;
    let mut report = ExperimentReport {
        rows: read_report(&path)?,
        ..Default::default()
    };
    if let Some(fits) = find_report(&args.out, "fits") {
        report.fits = read_fits(fits)?;
    }
    let written = emit_report(&report, format, &args.out)?;
    emit(|out| summarize(out, &report, &written))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
