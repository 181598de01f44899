use clap::{Parser, Subcommand};
use delibench_cli::stages::{self, Outcome};
use delibench_cli::{CliError, Ctx, LoadedConfig, Overrides};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "delibench", version, about = "Benchmark pipeline for deliberation summaries")]
struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true, default_value = "delibench.toml")]
    config: PathBuf,
    /// Override the run seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the judge: stub, remote, or llm:<model>.
    #[arg(long, global = true)]
    judge: Option<String>,
    /// Override the output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Cap on summarization provider requests, retries included.
    #[arg(long, global = true)]
    max_requests: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw opinion subsets per question and size.
    Sample,
    /// Generate summaries for every subset, model and resample.
    Summarize,
    /// Build ring-matched comparison pairs and print the balance table.
    Pair,
    /// Score every (opinion, summary) triple with the selected judge.
    Judge,
    /// Aggregate scores into leaderboard, preference and minority reports.
    Report {
        /// Also write topic x model relative-preference data.
        #[arg(long)]
        heatmap_data: bool,
    },
    /// Check config, corpus, manifests and output directory.
    Validate,
}

fn status(stage: &str, outcome: &Outcome) {
    match outcome {
        Outcome::Ran(path) => eprintln!("{stage}: done ({})", path.display()),
        Outcome::UpToDate => eprintln!("{stage}: up to date"),
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let overrides = Overrides {
        seed: cli.seed,
        judge: cli.judge,
        out: cli.out,
        max_requests: cli.max_requests,
        heatmap: matches!(cli.command, Command::Report { heatmap_data: true }),
    };
    let ctx = Ctx::new(LoadedConfig::load(&cli.config, &overrides)?)?;
    match cli.command {
        Command::Sample => status("sample", &stages::cmd_sample(&ctx)?),
        Command::Summarize => status("summarize", &stages::cmd_summarize(&ctx)?),
        Command::Pair => {
            let (outcome, table) = stages::cmd_pair(&ctx)?;
            print!("{table}");
            status("pair", &outcome);
        }
        Command::Judge => status("judge", &stages::cmd_judge(&ctx)?),
        Command::Report { .. } => {
            let r = stages::cmd_report(&ctx)?;
            print!("{}", r.leaderboard);
            status("report", &r.outcome);
        }
        Command::Validate => {
            let v = stages::cmd_validate(&ctx)?;
            for p in &v.problems {
                eprintln!("invalid: {p}");
            }
            for s in &v.stale {
                eprintln!("stale: {s}");
            }
            for o in &v.orphans {
                eprintln!("orphan: {o}");
            }
            if !v.stale.is_empty() {
                return Err(CliError::Stale(format!("{} stale stage(s)", v.stale.len())));
            }
            if !v.problems.is_empty() || !v.orphans.is_empty() {
                return Err(CliError::Validation(format!(
                    "{} problem(s), {} orphan file(s)",
                    v.problems.len(),
                    v.orphans.len()
                )));
            }
            eprintln!("validate: ok");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
