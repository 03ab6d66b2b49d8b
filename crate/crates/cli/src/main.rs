use clap::{Args, Parser, Subcommand};
use mechsyn_cli::config::PipelineConfig;
use mechsyn_cli::stages::{
    cmd_generate, cmd_label, cmd_mine, cmd_optimize, cmd_report, cmd_train, Run,
};
use mechsyn_cli::CliError;
use std::path::PathBuf;

/// Quasi-serial mechanism synthesis pipeline: sample and filter designs,
/// label them against a task, train a surrogate, optimize, and mine rules.
#[derive(Parser)]
#[command(name = "mechsyn", version, about)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct StageArgs {
    /// Pipeline configuration (TOML). Built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run directory; stages exchange files here through the manifest.
    #[arg(long)]
    out: PathBuf,
    /// Overrides the stage's named seed from the config.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Sample, filter, and kinematically label designs.
    Generate(StageArgs),
    /// Append joint-torque labels.
    Label(StageArgs),
    /// Train the surrogate on a held-out split.
    Train(StageArgs),
    /// Run the constrained NSGA-II search and verify the archive.
    Optimize(StageArgs),
    /// Mine sensitivity, tree, correlation, and derivative reports.
    Mine(StageArgs),
    /// Render the markdown run report.
    Report(StageArgs),
    /// Run all six stages in order with the config's named seeds.
    Run(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Pipeline configuration (TOML). Built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run directory; stages exchange files here through the manifest.
    #[arg(long)]
    out: PathBuf,
}

fn load_config(path: &Option<PathBuf>) -> Result<(PipelineConfig, String), CliError> {
    match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", p.display())))?;
            let cfg = PipelineConfig::from_toml(&text)?;
            Ok((cfg, text))
        }
        None => {
            let cfg = PipelineConfig::default();
            let text = cfg.to_toml();
            Ok((cfg, text))
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.cmd {
        Cmd::Generate(a) => stage(&a, cmd_generate),
        Cmd::Label(a) => stage(&a, cmd_label),
        Cmd::Train(a) => stage(&a, cmd_train),
        Cmd::Optimize(a) => stage(&a, cmd_optimize),
        Cmd::Mine(a) => stage(&a, cmd_mine),
        Cmd::Report(a) => stage(&a, cmd_report),
        Cmd::Run(a) => {
            let (cfg, text) = load_config(&a.config)?;
            let run = Run::new(&cfg, &text, &a.out);
            cmd_generate(&run, None)?;
            cmd_label(&run, None)?;
            cmd_train(&run, None)?;
            cmd_optimize(&run, None)?;
            cmd_mine(&run, None)?;
            cmd_report(&run, None)
        }
    }
}

fn stage(a: &StageArgs, f: fn(&Run, Option<u64>) -> Result<(), CliError>) -> Result<(), CliError> {
    let (cfg, text) = load_config(&a.config)?;
    let run = Run::new(&cfg, &text, &a.out);
    f(&run, a.seed)
}

fn main() {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => {}
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
