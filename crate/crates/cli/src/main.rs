//! `szego`: run limit experiments, list the catalog, run invariant batteries.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use szego_lab::symbols::PSI_KINDS;
use szego_lab::szego::run_limit_sweep;
use szego_lab::verify::{run_suite, SUITES};

use config::{resolve, ExperimentConfig, FileConfig, Format, Overrides};

/// `println!` that tolerates a closed stdout (e.g. piped into `head`).
macro_rules! say {
    ($($arg:tt)*) => {{
        use std::io::Write;
        let _ = writeln!(std::io::stdout().lock(), $($arg)*);
    }};
}

#[derive(Parser)]
#[command(name = "szego", version, about = "Szegő-type limit experiments for Toeplitz operators on reproducing-kernel spaces")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an alpha sweep and write its report.
    Run(RunArgs),
    /// List settings, built-in symbols and psi kinds.
    Catalog,
    /// Run an invariant battery: frames, berezin, lieb, szego or all.
    Verify {
        suite: String,
        #[arg(long, default_value_t = 20240601)]
        seed: u64,
    },
}

#[derive(Args)]
struct RunArgs {
    /// TOML experiment file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// torus, group, bergman, fock or paley-wiener.
    #[arg(long)]
    setting: Option<String>,
    /// Comma-separated alpha ladder.
    #[arg(long, value_delimiter = ',', conflicts_with_all = ["n", "big_n"])]
    alpha: Option<Vec<f64>>,
    /// Comma-separated ladder of box radii (torus, groups).
    #[arg(long, value_delimiter = ',', conflicts_with = "big_n")]
    n: Option<Vec<f64>>,
    /// Alias of `--n`.
    #[arg(long = "N", id = "big_n", value_delimiter = ',')]
    big_n: Option<Vec<f64>>,
    /// Torus dimension.
    #[arg(long)]
    dim: Option<usize>,
    /// Comma-separated group moduli.
    #[arg(long, value_delimiter = ',')]
    moduli: Option<Vec<usize>>,
    #[arg(long)]
    symbol: Option<String>,
    #[arg(long)]
    eta: Option<String>,
    /// id, log, exp, abs, power:<k>, abs-power:<p>, log-shifted:<c> or an expression in x.
    #[arg(long)]
    psi: Option<String>,
    /// Shift c in log(x + c) when --psi log.
    #[arg(long)]
    psi_shift: Option<f64>,
    /// plain, symbol-weighted or pair-weighted.
    #[arg(long)]
    variant: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Any of json, csv, plot (comma-separated).
    #[arg(long, value_delimiter = ',')]
    format: Option<Vec<String>>,
    #[arg(long)]
    tol_quad: Option<f64>,
    #[arg(long)]
    tol_tail: Option<f64>,
    #[arg(long)]
    tol_sandwich: Option<f64>,
    /// Number of monomials on the disk and plane.
    #[arg(long)]
    n_cut: Option<usize>,
    /// Half width of the shifted-sinc basis on the line.
    #[arg(long)]
    half_width: Option<usize>,
    #[arg(long)]
    force_dense: bool,
    /// Compute the Berezin-Lieb sandwich at each point (true/false).
    #[arg(long)]
    lieb: Option<bool>,
    #[arg(long)]
    seed: Option<u64>,
}

/// Exit statuses.
const OK: u8 = 0;
const NUMERICAL: u8 = 1;
const USAGE: u8 = 2;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { USAGE } else { OK });
        }
    };
    let code = match cli.command {
        Command::Run(args) => run(args),
        Command::Catalog => {
            for line in catalog() {
                say!("{line}");
            }
            OK
        }
        Command::Verify { suite, seed } => verify(&suite, seed),
    };
    ExitCode::from(code)
}

fn run(args: RunArgs) -> u8 {
    let started = Instant::now();
    let file = match &args.config {
        Some(p) => match FileConfig::load(p) {
            Ok(f) => f,
            Err(e) => {
                eprintln!("error: {e}");
                return USAGE;
            }
        },
        None => FileConfig::default(),
    };
    let config_path = args.config.clone();
    let overrides = Overrides {
        family: args.setting,
        dim: args.dim,
        moduli: args.moduli,
        ladder: args.alpha.or(args.n).or(args.big_n),
        sigma: args.symbol,
        eta: args.eta,
        psi: args.psi,
        psi_shift: args.psi_shift,
        variant: args.variant,
        out: args.out,
        formats: args.format,
        tol_quad: args.tol_quad,
        tol_tail: args.tol_tail,
        tol_sandwich: args.tol_sandwich,
        n_cut: args.n_cut,
        half_width: args.half_width,
        force_dense: args.force_dense,
        lieb: args.lieb,
        seed: args.seed,
    };
    let cfg = match resolve(file, overrides) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return USAGE;
        }
    };
    eprintln!(
        "running {} sweep on {} over {} ladder points",
        cfg.spec.variant.name(),
        cfg.spec.family,
        cfg.spec.alphas.len()
    );
    let report = match run_limit_sweep(&cfg.spec) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return match e {
                szego_lab::Error::Config(_) | szego_lab::Error::Parse { .. } | szego_lab::Error::UnknownIdentifier { .. } => USAGE,
                _ => NUMERICAL,
            };
        }
    };
    for p in &report.points {
        match (p.value, p.error) {
            (Some(v), Some(e)) => say!("alpha {:<10} value {v:.12}  error {e:.3e}", p.alpha),
            _ => say!("alpha {:<10} failed: {}", p.alpha, p.failure.as_deref().unwrap_or("unknown")),
        }
    }
    say!("target {:.12}", report.target);
    if let Some(r) = report.rate {
        say!("rate   error ~ {:.4e} alpha^-{:.4} (residual {:.2e})", r.c, r.p, r.residual);
    }
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    let failed = report.failed_assertions();
    let written = match write_outputs(&cfg, &report, config_path.as_deref(), &failed, started) {
        Ok(w) => w,
        Err(e) => {
            eprintln!("error: {e:#}");
            return NUMERICAL;
        }
    };
    for f in written {
        eprintln!("wrote {}", f.display());
    }
    if failed.is_empty() {
        OK
    } else {
        for f in &failed {
            eprintln!("assertion failed: {f}");
        }
        NUMERICAL
    }
}

#[derive(Serialize)]
struct RunMeta<'a> {
    tool: &'static str,
    version: &'static str,
    config: Option<String>,
    seed: u64,
    started_unix: u64,
    elapsed_seconds: f64,
    failed_assertions: &'a [String],
    files: Vec<String>,
}

fn write_outputs(
    cfg: &ExperimentConfig,
    report: &szego_lab::LimitReport,
    config_path: Option<&Path>,
    failed: &[String],
    started: Instant,
) -> anyhow::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(&cfg.out).with_context(|| format!("cannot create {}", cfg.out.display()))?;
    let mut files = Vec::new();
    for f in &cfg.formats {
        match f {
            Format::Json => {
                let p = cfg.out.join("report.json");
                std::fs::write(&p, report.to_json()).with_context(|| format!("cannot write {}", p.display()))?;
                files.push(p);
            }
            Format::Csv => {
                let p = cfg.out.join("report.csv");
                let file = std::fs::File::create(&p).with_context(|| format!("cannot write {}", p.display()))?;
                report.write_csv(file)?;
                files.push(p);
            }
            Format::Plot => {
                for (name, data) in report.plot_curves() {
                    let p = cfg.out.join(format!("{name}.dat"));
                    std::fs::write(&p, data).with_context(|| format!("cannot write {}", p.display()))?;
                    files.push(p);
                }
            }
        }
    }
    let meta = RunMeta {
        tool: "szego",
        version: env!("CARGO_PKG_VERSION"),
        config: config_path.map(|p| p.display().to_string()),
        seed: cfg.seed,
        started_unix: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0)
            .saturating_sub(started.elapsed().as_secs()),
        elapsed_seconds: started.elapsed().as_secs_f64(),
        failed_assertions: failed,
        files: files.iter().map(|p| p.display().to_string()).collect(),
    };
    let p = cfg.out.join("run_meta.json");
    std::fs::write(&p, serde_json::to_string_pretty(&meta)? + "\n").with_context(|| format!("cannot write {}", p.display()))?;
    files.push(p);
    Ok(files)
}

fn catalog() -> Vec<String> {
    let mut lines = vec![
        "setting bergman: weighted Bergman space on the disk; alpha > -1; variables x y r r2".to_string(),
        "setting fock: Fock space on the plane; alpha > 0; variables x y r r2".to_string(),
        "setting group: finite abelian group Z_m1 x ... with box radius N; variables x1 x2 ...".to_string(),
        "setting paley-wiener: Paley-Wiener space on the line; alpha > 0; variable x".to_string(),
        "setting torus: d-dimensional torus with box radius n; variables theta1 theta2 ...".to_string(),
        "symbol bergman: (1 - r2)^2".to_string(),
        "symbol bergman: (1 - r2)^3".to_string(),
        "symbol fock: exp(-r2)".to_string(),
        "symbol group: 2 + cos(pi * x1 / 6)".to_string(),
        "symbol paley-wiener: exp(-x^2)".to_string(),
        "symbol torus: 2 + cos(theta1)".to_string(),
        "symbol torus: 3 + cos(theta1) + cos(theta2)".to_string(),
        "variant pair-weighted: tr(T_eta psi(T_sigma)) / c(alpha)".to_string(),
        "variant plain: tr psi(T_sigma) / c(alpha)".to_string(),
        "variant symbol-weighted: tr(T_sigma psi(T_sigma)) / c(alpha)".to_string(),
    ];
    lines.extend(PSI_KINDS.iter().map(|k| format!("psi {k}")));
    lines.sort();
    lines
}

fn verify(suite: &str, seed: u64) -> u8 {
    if !SUITES.contains(&suite) {
        eprintln!("error: unknown suite '{suite}' (expected one of {})", SUITES.join(", "));
        return USAGE;
    }
    eprintln!("running suite {suite}");
    match run_suite(suite, seed) {
        Ok(r) => {
            let passed = r.passed();
            let summary = serde_json::json!({
                "suite": r.suite,
                "seed": r.seed,
                "passed": passed,
                "total": r.checks.len(),
                "failed": r.checks.iter().filter(|c| !c.passed).count(),
                "checks": r.checks,
            });
            say!("{}", serde_json::to_string_pretty(&summary).expect("summary serializes"));
            if passed {
                OK
            } else {
                NUMERICAL
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            USAGE
        }
    }
}
