use antiwindup::analysis::Execution;
use antiwindup_cli::commands;
use antiwindup_cli::config::{load_config, ControllerKind, RunConfig};
use antiwindup_cli::report::{self, format_table, MetricsRecord};
use antiwindup_cli::CliError;
use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "antiwindup", version, about = "Anti-windup heading control benchmark on the REMUS yaw model")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML configuration; defaults reproduce the benchmark.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run margin sweeps on one thread.
    #[arg(long)]
    sequential: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run all configured controllers and write logs, metrics and plots.
    Compare {
        #[command(flatten)]
        common: Common,
        /// Output directory (overrides `out_dir`).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        no_margins: bool,
        #[arg(long)]
        no_plots: bool,
    },
    /// Simulate one controller and write its log.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        controller: ControllerKind,
        /// CSV path; defaults to `<out_dir>/<controller>.csv`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Estimate gain and delay margins of one controller.
    Margins {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        controller: ControllerKind,
    },
    /// Compute ISE/IACE/IACER of a logged run.
    Metrics {
        #[arg(long)]
        log: PathBuf,
    },
}

impl Common {
    fn load(&self) -> Result<RunConfig, CliError> {
        match &self.config {
            Some(path) => Ok(load_config(path)?),
            None => Ok(RunConfig::default()),
        }
    }

    fn execution(&self) -> Execution {
        if self.sequential {
            Execution::Sequential
        } else {
            Execution::default()
        }
    }
}

fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Compare {
            common,
            out,
            no_margins,
            no_plots,
        } => {
            let mut cfg = common.load()?;
            if let Some(out) = out {
                cfg.out_dir = out;
            }
            cfg.margins &= !no_margins;
            cfg.plots &= !no_plots;
            let output = commands::compare(&cfg, common.execution())?;
            let records: Vec<MetricsRecord> = output.results.iter().map(|r| r.record()).collect();
            print!("{}", format_table(&records));
            for r in output.results.iter().filter(|r| r.unstable) {
                eprintln!("warning: {} fails the instability detector on the nominal run", r.kind);
            }
            for f in &output.files {
                eprintln!("wrote {}", f.display());
            }
        }
        Command::Run { common, controller, out } => {
            let cfg = common.load()?;
            let res = commands::evaluate(&cfg, controller, false, common.execution())?;
            let path = out.unwrap_or_else(|| cfg.out_dir.join(format!("{controller}.csv")));
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
            }
            report::write_log_file(&res.log, &path)?;
            print!("{}", format_table(&[res.record()]));
            println!("stable: {}", !res.unstable);
            eprintln!("wrote {}", path.display());
        }
        Command::Margins { common, controller } => {
            let cfg = common.load()?;
            let res = commands::evaluate(&cfg, controller, true, common.execution())?;
            if res.unstable {
                println!("{controller}: nominal loop unstable, no margins");
            } else {
                print!("{}", format_table(&[res.record()]));
            }
        }
        Command::Metrics { log } => {
            let m = commands::metrics_of_file(&log)?;
            println!("{}", serde_json::to_string_pretty(&m)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
