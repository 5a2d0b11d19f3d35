use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use ritt_lab::error::Result;
use ritt_lab::experiment::{self, BoundsMode, Diagnostic, ExperimentConfig, RunSummary};
use ritt_lab::seq::{ConvMethod, ConvOptions};

#[derive(Parser)]
#[command(name = "ritt-lab", version, about = "Ritt and Kreiss diagnostics for probability sequences")]
struct Cli {
    /// Worker threads for independent experiments and resolvent scans.
    #[arg(long, global = true, env = "RITT_LAB_THREADS")]
    threads: Option<usize>,

    /// Convolution backend; overrides the config.
    #[arg(long, global = true, value_enum)]
    method: Option<Method>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Direct,
    Fft,
}

#[derive(Clone, Copy, ValueEnum)]
enum Bounds {
    Strict,
    Consistent,
}

#[derive(Subcommand)]
enum Command {
    /// Build one family and dump it as sequence.json / sequence.csv.
    Family {
        /// Family JSON file, e.g. {"family": "alpha_frac", "alpha": 0.5, "N": 4096}.
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run only the sequence diagnostics of an experiment config.
    Diag {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run only the operator suites of an experiment config.
    Op {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the class report for every experiment that names a family.
    Report {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every diagnostic and operator suite in a config.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Diff the artifacts of two manifests.
    Compare {
        manifest_a: PathBuf,
        manifest_b: PathBuf,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        /// `consistent` checks lower/upper columns for overlap instead of equality.
        #[arg(long, value_enum, default_value_t = Bounds::Strict)]
        bounds: Bounds,
    },
}

#[derive(Clone, Copy, PartialEq)]
enum Part {
    Diagnostics,
    Operators,
    Report,
    All,
}

fn load(cli: &Cli, path: &Path, out: Option<&PathBuf>, part: Part) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(m) = cli.method {
        cfg = cfg.with_method(match m {
            Method::Direct => ConvMethod::Direct,
            Method::Fft => ConvMethod::Fft,
        });
    }
    if let Some(t) = cli.threads {
        cfg = cfg.with_threads(t);
    }
    cfg = match out {
        Some(dir) => cfg.with_output_dir(dir.clone()),
        None => {
            // relative output dirs live next to the config
            let dir = path.parent().unwrap_or(Path::new(".")).join(&cfg.output_dir);
            cfg.with_output_dir(dir)
        }
    };
    for e in &mut cfg.experiments {
        match part {
            Part::Diagnostics => e.operator_suite = None,
            Part::Operators => e.diagnostics.clear(),
            Part::Report => {
                e.operator_suite = None;
                e.diagnostics = if e.family.is_some() {
                    vec![Diagnostic::ClassAReport]
                } else {
                    Vec::new()
                };
            }
            Part::All => {}
        }
    }
    cfg.experiments.retain(|e| !e.diagnostics.is_empty() || e.operator_suite.is_some());
    Ok(cfg)
}

fn print_summary(s: &RunSummary) {
    for o in &s.outcomes {
        let state = if !o.errors.is_empty() {
            "FAILED"
        } else if o.partial {
            "PARTIAL"
        } else {
            "ok"
        };
        println!("{:<24} {:<8} {} artifacts", o.name, state, o.artifacts.len());
        for e in &o.errors {
            println!("    {e}");
        }
    }
    println!("manifest: {}", s.manifest.display());
}

fn run(cli: &Cli) -> Result<bool> {
    let part = match &cli.command {
        Command::Family { config, out } => {
            let spec = experiment::parse_family_text(&std::fs::read_to_string(config)?)?;
            let method = cli.method.map_or(ConvMethod::Auto, |m| match m {
                Method::Direct => ConvMethod::Direct,
                Method::Fft => ConvMethod::Fft,
            });
            for p in experiment::dump_family(&spec, ConvOptions::default().with_method(method), out)? {
                println!("{}", p.display());
            }
            return Ok(true);
        }
        Command::Compare {
            manifest_a,
            manifest_b,
            tol,
            bounds,
        } => {
            let mode = match bounds {
                Bounds::Strict => BoundsMode::Strict,
                Bounds::Consistent => BoundsMode::Consistent,
            };
            let rep = experiment::compare_with(manifest_a, manifest_b, *tol, mode)?;
            for r in &rep.rows {
                let status = serde_json::to_value(r.status)?;
                println!(
                    "{:<48} {:<18} {:.3e}{}",
                    r.artifact,
                    status.as_str().unwrap_or_default(),
                    r.max_scaled_diff,
                    r.first_failure.as_deref().map(|f| format!("  ({f})")).unwrap_or_default()
                );
            }
            return Ok(rep.passed());
        }
        Command::Diag { config, out } => (config, out, Part::Diagnostics),
        Command::Op { config, out } => (config, out, Part::Operators),
        Command::Report { config, out } => (config, out, Part::Report),
        Command::Run { config, out } => (config, out, Part::All),
    };
    let (config, out, part) = part;
    let cfg = load(cli, config, out.as_ref(), part)?;
    let base = config.parent().unwrap_or(Path::new(".")).to_path_buf();
    let summary = experiment::run(&cfg, &base)?;
    print_summary(&summary);
    Ok(summary.success())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
