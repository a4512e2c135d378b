use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use sync_sim::config::RunConfig;
use sync_sim::error::Error;
use sync_sim::experiment::{self, SweepSpec};

#[derive(Parser)]
#[command(name = "sync-sim", version, about = "Timeslot-beacon synchronization simulator")]
struct Cli {
    /// Override the master seed from the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the output directory from the config file.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one simulation and write run_summary.csv and error_trace.csv.
    Run { config: PathBuf },
    /// Sweep one variable and write sweep_<var>.csv.
    Sweep {
        config: PathBuf,
        /// requested_hz, rssi_dbm, distance_m, interval_ms or throughput_kbps
        #[arg(long)]
        var: String,
        /// Comma-separated values, e.g. "1,10,100,1000".
        #[arg(long, allow_hyphen_values = true)]
        values: String,
        #[arg(long, default_value_t = 1)]
        repeats: u32,
        /// Also write an SVG chart of mean |error|.
        #[arg(long)]
        svg: bool,
    },
    /// Check a config and print its normalized form and derived parameters.
    Validate { config: PathBuf },
}

fn load(cli: &Cli, path: &Path) -> Result<(RunConfig, PathBuf), Error> {
    let mut cfg = RunConfig::load(path).map_err(|e| match e {
        Error::Io(io) => Error::Parse(format!("{}: {io}", path.display())),
        other => other,
    })?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    let out = cli
        .out_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from(&cfg.output.out_dir));
    Ok((cfg, out))
}

fn run(cli: &Cli) -> Result<(), Error> {
    match &cli.cmd {
        Cmd::Run { config } => {
            let (cfg, out) = load(cli, config)?;
            cfg.validate()?;
            for f in experiment::cmd_run(&cfg, &out)? {
                println!("wrote {}", f.display());
            }
        }
        Cmd::Sweep {
            config,
            var,
            values,
            repeats,
            svg,
        } => {
            let (cfg, out) = load(cli, config)?;
            let spec = SweepSpec {
                var: var.parse()?,
                values: experiment::parse_values(values)?,
                repeats: *repeats,
            };
            for f in experiment::cmd_sweep(&cfg, &spec, &out, *svg)? {
                println!("wrote {}", f.display());
            }
        }
        Cmd::Validate { config } => {
            let (cfg, _) = load(cli, config)?;
            print!("{}", experiment::validate_report(&cfg)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
