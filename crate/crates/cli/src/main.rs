use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use orbitlab::error::{ErrorKind, Result};
use orbitlab::gram_schmidt::GsVariant;
use orbitlab::scenario::{
    bundled_names, bundled_scenario, emit_plot_data, load_config, load_config_dir, read_report,
    run_batch, run_scenario, write_run, Overrides, ScenarioConfig, ScenarioStatus,
};

const DEFAULT_OUT: &str = "orbitlab-out";

/// Finite-truncation laboratory for orthonormalized operator orbits.
#[derive(Debug, Parser)]
#[command(name = "orbitlab", version)]
struct Cli {
    /// Output directory.
    #[arg(long, global = true, env = "ORBITLAB_OUT")]
    out: Option<PathBuf>,

    /// Override the scenario seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Override the ambient dimension.
    #[arg(long, global = true)]
    dim: Option<usize>,

    /// Override the orbit depth.
    #[arg(long, global = true)]
    depth: Option<usize>,

    #[arg(long, global = true, value_enum)]
    gs_variant: Option<VariantArg>,

    #[arg(long, global = true, value_enum)]
    reorthogonalize: Option<Switch>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one scenario file (or `bundled:<name>`).
    Run { config: String },
    /// Run every `*.json` scenario in a directory.
    Batch {
        dir: PathBuf,
        /// Worker threads (defaults to the available parallelism).
        #[arg(long)]
        parallelism: Option<usize>,
    },
    /// Write per-probe CSV series from a report.
    Plot { report: PathBuf },
    /// List the bundled scenarios.
    List,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum VariantArg {
    Classical,
    Modified,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Switch {
    On,
    Off,
}

impl Cli {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            dim: self.dim,
            depth: self.depth,
            gs_variant: self.gs_variant.map(|v| match v {
                VariantArg::Classical => GsVariant::Classical,
                VariantArg::Modified => GsVariant::Modified,
            }),
            reorthogonalize: self.reorthogonalize.map(|s| matches!(s, Switch::On)),
        }
    }

    fn out_dir(&self) -> PathBuf {
        self.out
            .clone()
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
    }
}

fn exit_code(kind: ErrorKind) -> u8 {
    match kind {
        ErrorKind::Usage | ErrorKind::Io => 1,
        ErrorKind::NumericFailure => 2,
        ErrorKind::Inconsistency => 3,
    }
}

fn load(source: &str) -> Result<ScenarioConfig> {
    match source.strip_prefix("bundled:") {
        Some(name) => bundled_scenario(name),
        None => load_config(Path::new(source)),
    }
}

fn run(cli: &Cli) -> Result<u8> {
    let overrides = cli.overrides();
    match &cli.command {
        Command::Run { config } => {
            let mut cfg = load(config)?;
            overrides.apply(&mut cfg);
            let report = run_scenario(&cfg)?;
            let dir = write_run(&report, &cli.out_dir())?;
            println!("{}: {} ({})", cfg.name, report.body.verdict, dir.display());
            Ok(0)
        }
        Command::Batch { dir, parallelism } => {
            let mut configs = load_config_dir(dir)?;
            for cfg in &mut configs {
                overrides.apply(cfg);
            }
            let threads = match parallelism {
                Some(p) => *p,
                None => std::thread::available_parallelism().map_or(1, |n| n.get()),
            };
            let index = run_batch(&configs, threads, &cli.out_dir())?;
            for e in &index.scenarios {
                match (&e.status, e.verdict, &e.error) {
                    (ScenarioStatus::Ok, Some(v), _) => println!("{}: {v}", e.name),
                    (_, _, Some(err)) => println!("{}: FAILED {err}", e.name),
                    _ => println!("{}: FAILED", e.name),
                }
            }
            Ok(index.worst_failure().map_or(0, exit_code))
        }
        Command::Plot { report } => {
            let body = read_report(report)?;
            let target = match &cli.out {
                Some(out) => out.clone(),
                None => report.parent().unwrap_or(Path::new(".")).join("plot"),
            };
            let files = emit_plot_data(&body, &target)?;
            println!("{} files written to {}", files.len(), target.display());
            Ok(0)
        }
        Command::List => {
            for name in bundled_names() {
                println!("{name}");
            }
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(e.kind()))
        }
    }
}
