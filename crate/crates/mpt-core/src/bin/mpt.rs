//! Command-line driver for magnetic polarizability tensor sweeps.
//!
//! Four commands cover the workflow: `sweep-full` runs the direct solver at
//! every output frequency, `sweep-pod` trains a reduced basis offline and
//! runs certified fast evaluations online, `scale` applies an exact
//! conductivity- or size-scaling identity to a saved report, and
//! `compare-oracle` checks reduced sweeps against the closed-form conducting
//! sphere. Commands exit 0 on success, 2 for configuration or input
//! problems, 3 for solver failures and 4 when certified error bounds cannot
//! exist for the given system.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use mpt_core::config::RunConfig;
use mpt_core::pipeline::{self, PipelineError};
use mpt_core::report::SweepReport;
use mpt_core::scaling::ScaleTransform;

#[derive(Parser)]
#[command(
    name = "mpt",
    version,
    about = "Spectral signatures of conducting permeable objects",
    long_about = "Computes the frequency-dependent magnetic polarizability tensor of a \
                  conducting permeable object over a frequency band, either with the \
                  full-order finite element solver or with a certified reduced-order \
                  model, and applies exact parameter-scaling identities to finished \
                  sweeps."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Common options of the configuration-driven commands. Every override
/// replaces the corresponding configuration value before validation reruns.
#[derive(Args)]
struct SweepArgs {
    /// Run configuration, a TOML document (see the repository's configs/).
    #[arg(long, value_name = "PATH")]
    config: PathBuf,

    /// Output directory (default: the configuration's `output.dir`, which
    /// itself defaults to `out`).
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Worker thread cap. Accepted for forward compatibility; evaluation
    /// currently runs sequentially so identical configurations produce
    /// byte-identical tables.
    #[arg(long, value_name = "K")]
    threads: Option<usize>,

    /// Basis truncation tolerance override (`reduction.tol`, default 1e-4;
    /// 0 keeps every mode).
    #[arg(long, value_name = "X")]
    tol: Option<f64>,

    /// Training snapshot count override (`sweep.snapshots`).
    #[arg(long, value_name = "N")]
    snapshots: Option<usize>,

    /// Frequency grid spacing override (`sweep.spacing`, default log).
    #[arg(long, value_name = "SPACING")]
    spacing: Option<SpacingArg>,

    /// Output point count override (`sweep.outputs`, default: the snapshot
    /// count; must be at least the snapshot count).
    #[arg(long, value_name = "N0")]
    outputs: Option<usize>,
}

#[derive(Copy, Clone, ValueEnum)]
enum SpacingArg {
    /// Uniform in log10 of the angular frequency.
    Log,
    /// Uniform in the angular frequency.
    Lin,
}

#[derive(Copy, Clone, ValueEnum)]
enum TransformArg {
    /// Multiply every conductivity by the factor; the frequency axis
    /// contracts by the same factor and tensor values carry over unchanged.
    Conductivity,
    /// Multiply the object scale by the factor; the frequency axis contracts
    /// by the factor squared and tensor values grow by its cube.
    Size,
}

#[derive(Subcommand)]
enum Command {
    /// Full-order sweep: one direct solve per output frequency.
    SweepFull(SweepArgs),

    /// Certified reduced-order sweep: offline training, then fast online
    /// evaluations with per-entry error radii.
    SweepPod(SweepArgs),

    /// Apply an exact scaling identity to a saved JSON report.
    Scale {
        /// Saved report (the `.json` file written by sweep-full/sweep-pod).
        report: PathBuf,

        /// Which scaling identity to apply.
        #[arg(value_enum)]
        transform: TransformArg,

        /// Positive scale factor s.
        factor: f64,

        /// Output directory for the scaled report.
        #[arg(long, value_name = "DIR", default_value = "out")]
        out: PathBuf,
    },

    /// Compare reduced sweeps against the closed-form conducting sphere,
    /// training once with log-spaced and once with linearly spaced
    /// snapshots.
    CompareOracle(SweepArgs),
}

fn apply_overrides(cfg: &mut RunConfig, args: &SweepArgs) -> Result<(), PipelineError> {
    if let Some(tol) = args.tol {
        cfg.reduction.tol = tol;
    }
    if let Some(n) = args.snapshots {
        cfg.sweep.snapshots = n;
    }
    if let Some(n0) = args.outputs {
        cfg.sweep.outputs = Some(n0);
    }
    if let Some(spacing) = args.spacing {
        cfg.sweep.spacing = match spacing {
            SpacingArg::Log => mpt_core::config::SpacingConfig::Log,
            SpacingArg::Lin => mpt_core::config::SpacingConfig::Lin,
        };
    }
    if let Some(dir) = &args.out {
        cfg.output.dir = dir.clone();
    }
    if let Some(threads) = args.threads {
        if threads > 1 {
            eprintln!(
                "note: --threads {threads} acknowledged; solves run sequentially so \
                 repeated runs stay byte-identical"
            );
        }
    }
    cfg.validate().map_err(PipelineError::from)
}

fn load_config(args: &SweepArgs) -> Result<RunConfig, PipelineError> {
    let mut cfg = RunConfig::from_path(&args.config)?;
    apply_overrides(&mut cfg, args)?;
    Ok(cfg)
}

fn emit_report(report: &SweepReport, dir: &Path, stem: &str) -> Result<(), PipelineError> {
    report.save(dir, stem)?;
    println!(
        "wrote {} and {}",
        dir.join(format!("{stem}.csv")).display(),
        dir.join(format!("{stem}.json")).display()
    );
    if let Some(mesh) = &report.mesh {
        println!(
            "mesh: {} vertices, {} tetrahedra, {} unknowns",
            mesh.vertices, mesh.tets, mesh.dofs
        );
    }
    println!("rows: {}", report.rows.len());
    Ok(())
}

fn cmd_sweep_full(args: &SweepArgs) -> Result<(), PipelineError> {
    let cfg = load_config(args)?;
    let report = pipeline::run_full_sweep(&cfg)?;
    emit_report(&report, &cfg.output.dir, "full")?;
    println!(
        "full-order solves: {:.3} s of {:.3} s total",
        report.timing.full_order, report.timing.total
    );
    Ok(())
}

fn cmd_sweep_pod(args: &SweepArgs) -> Result<(), PipelineError> {
    let cfg = load_config(args)?;
    let report = pipeline::run_pod_sweep(&cfg)?;
    emit_report(&report, &cfg.output.dir, "pod")?;
    if let Some(modes) = &report.modes {
        let kept: Vec<String> = modes.iter().map(|m| m.kept.to_string()).collect();
        println!("retained modes per direction: {}", kept.join(", "));
    }
    if let Some(cert) = &report.certificate {
        println!(
            "stability eigenvalue {:.3e} at reference frequency {:.3e} rad/s",
            cert.lambda_min, cert.omega_prime
        );
    }
    let t = &report.timing;
    println!(
        "offline: snapshots {:.3} s, truncation {:.3} s, projection {:.3} s, \
         certificate {:.3} s",
        t.offline_snapshots, t.offline_svd, t.offline_projection, t.offline_certificate
    );
    println!(
        "online: solves {:.3} s, outputs {:.3} s, bounds {:.3} s",
        t.online_solves, t.online_outputs, t.online_certificates
    );
    Ok(())
}

fn cmd_scale(
    report: &Path,
    transform: TransformArg,
    factor: f64,
    out: &Path,
) -> Result<(), PipelineError> {
    let transform = match transform {
        TransformArg::Conductivity => ScaleTransform::Conductivity,
        TransformArg::Size => ScaleTransform::Size,
    };
    let scaled = pipeline::run_scale(report, transform, factor)?;
    emit_report(&scaled, out, "scaled")?;
    let step = scaled.provenance.last().expect("scaling records provenance");
    println!(
        "applied {} scaling with factor {}; derivation depth {}",
        step.transform,
        step.factor,
        scaled.provenance.len()
    );
    Ok(())
}

fn cmd_compare_oracle(args: &SweepArgs) -> Result<(), PipelineError> {
    let cfg = load_config(args)?;
    let cmp = pipeline::run_oracle_comparison(&cfg)?;
    cmp.save(&cfg.output.dir, "oracle")?;
    println!(
        "wrote {} and {}",
        cfg.output.dir.join("oracle.csv").display(),
        cfg.output.dir.join("oracle.json").display()
    );
    if cmp.degenerate {
        println!(
            "degenerate configuration (no conductivity): exact and computed signatures \
             both vanish; absolute differences reported"
        );
    }
    println!(
        "worst first-eigenvalue error: {:.3e} (log-spaced training), {:.3e} \
         (linearly spaced training)",
        cmp.max_err_log, cmp.max_err_lin
    );
    Ok(())
}

fn run(cli: &Cli) -> Result<(), PipelineError> {
    match &cli.command {
        Command::SweepFull(args) => cmd_sweep_full(args),
        Command::SweepPod(args) => cmd_sweep_pod(args),
        Command::Scale { report, transform, factor, out } => {
            cmd_scale(report, *transform, *factor, out)
        }
        Command::CompareOracle(args) => cmd_compare_oracle(args),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            // Every error Display already embeds its source chain.
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
