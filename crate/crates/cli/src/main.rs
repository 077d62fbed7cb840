use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fluxmech_cli::config::parse_axis;
use fluxmech_cli::manifest::MANIFEST_FILE;
use fluxmech_cli::{replay, run_to_dir, selftest, CliError, Command, Config, RunManifest};
use fluxmech_core::sweep::AxisSpec;

/// Semiclassical flux qubit and nanomechanical oscillator: simulation and analysis.
///
/// Worker threads come from FLUXMECH_THREADS (default: all cores); outputs do
/// not depend on it. Exit codes: 0 ok, 1 check failed, 2 config, 3 numeric, 4 I/O.
#[derive(Parser)]
#[command(name = "fluxmech", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Integrate the equations of motion and write the trajectory.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// End time of the integration.
        #[arg(long)]
        t_end: Option<f64>,
    },
    /// Tabulate the qubit response over detuning and frequency.
    Response {
        #[command(flatten)]
        common: Common,
        /// Frequency grid `lo:hi:count`.
        #[arg(long, value_parser = parse_axis, allow_hyphen_values = true)]
        omega: Option<AxisSpec>,
        /// Detuning grid `lo:hi:count`.
        #[arg(long, value_parser = parse_axis, allow_hyphen_values = true)]
        delta: Option<AxisSpec>,
        /// Add the simulated response next to the analytic one.
        #[arg(long)]
        oracle: bool,
    },
    /// Continue the equilibrium branch in g and locate the Hopf point.
    Bifurcate {
        #[command(flatten)]
        common: Common,
        /// Coupling grid `lo:hi:count`.
        #[arg(long, value_parser = parse_axis, allow_hyphen_values = true)]
        g: Option<AxisSpec>,
        /// Which branch points get a simulated long-time state.
        #[arg(long, value_enum)]
        cycles: Option<Cycles>,
    },
    /// Damping-correction map over the flux plane.
    Map {
        #[command(flatten)]
        common: Common,
        /// DC flux grid `lo:hi:count`.
        #[arg(long, value_parser = parse_axis, allow_hyphen_values = true)]
        phi_e0: Option<AxisSpec>,
        /// AC flux amplitude grid `lo:hi:count`.
        #[arg(long, value_parser = parse_axis, allow_hyphen_values = true)]
        phi_e1: Option<AxisSpec>,
        /// Highest multi-photon order.
        #[arg(long)]
        n_max: Option<u32>,
    },
    /// Run the acceptance checks, one line per criterion.
    Selftest {
        /// Comma-separated criterion numbers (default: all).
        #[arg(long, value_delimiter = ',')]
        criteria: Vec<u32>,
    },
    /// Re-run a manifest and verify that every output is reproduced exactly.
    Replay {
        /// Manifest file, or a directory containing manifest.json.
        manifest: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct Common {
    /// TOML configuration file.
    #[arg(short, long)]
    config: PathBuf,
    /// Output directory.
    #[arg(short, long)]
    out: PathBuf,
    /// Override a configuration entry, `section.key=value`.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Cycles {
    None,
    BeyondHopf,
    All,
}

fn axis(key: &str, a: AxisSpec) -> String {
    format!("run.{key}={{ lo = {:?}, hi = {:?}, count = {} }}", a.lo, a.hi, a.count)
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("FLUXMECH_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| CliError::Config(format!("FLUXMECH_THREADS must be a positive integer, got `{raw}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))
}

fn run_command(command: Command, common: Common, flags: Vec<String>) -> Result<(), CliError> {
    let mut overrides = common.overrides;
    overrides.extend(flags);
    let cfg = Config::load(&common.config, &overrides)?;
    let manifest = run_to_dir(command, &cfg, &common.out)?;
    println!(
        "{} run={} wrote {} file(s) and {MANIFEST_FILE} to {}",
        command.name(),
        manifest.run_id,
        manifest.outputs.len(),
        common.out.display()
    );
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    configure_threads()?;
    match cli.command {
        Cmd::Simulate { common, t_end } => {
            let flags = t_end.map(|t| format!("run.t_end={t:?}")).into_iter().collect();
            run_command(Command::Simulate, common, flags)
        }
        Cmd::Response {
            common,
            omega,
            delta,
            oracle,
        } => {
            let mut flags: Vec<String> = omega.map(|a| axis("omega", a)).into_iter().collect();
            flags.extend(delta.map(|a| axis("delta", a)));
            if oracle {
                flags.push("run.oracle=true".into());
            }
            run_command(Command::Response, common, flags)
        }
        Cmd::Bifurcate { common, g, cycles } => {
            let mut flags: Vec<String> = g.map(|a| axis("g", a)).into_iter().collect();
            flags.extend(cycles.map(|c| {
                let name = match c {
                    Cycles::None => "none",
                    Cycles::BeyondHopf => "beyond_hopf",
                    Cycles::All => "all",
                };
                format!("run.cycles=\"{name}\"")
            }));
            run_command(Command::Bifurcate, common, flags)
        }
        Cmd::Map {
            common,
            phi_e0,
            phi_e1,
            n_max,
        } => {
            let mut flags: Vec<String> = phi_e0.map(|a| axis("phi_e0", a)).into_iter().collect();
            flags.extend(phi_e1.map(|a| axis("phi_e1", a)));
            flags.extend(n_max.map(|n| format!("run.n_max={n}")));
            run_command(Command::Map, common, flags)
        }
        Cmd::Selftest { criteria } => {
            let ids = if criteria.is_empty() { selftest::all_criteria() } else { criteria };
            let mut failed = Vec::new();
            for id in ids {
                let report = selftest::run_criterion(id);
                println!("{}", report.line());
                if !report.passed {
                    failed.push(id.to_string());
                }
            }
            if failed.is_empty() {
                Ok(())
            } else {
                Err(CliError::Check(format!("failed criteria: {}", failed.join(", "))))
            }
        }
        Cmd::Replay { manifest, out } => {
            let path = if manifest.is_dir() { manifest.join(MANIFEST_FILE) } else { manifest };
            let text = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
            let m = RunManifest::from_json(&text)?;
            let fresh = replay(&m, &out)?;
            println!(
                "replay run={} reproduced {} file(s) in {}",
                fresh.run_id,
                fresh.outputs.len(),
                out.display()
            );
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("fluxmech: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
