use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use demand_impact::pipeline::{LoadedConfig, Manifest, Pipeline, PipelineConfig, Stage};
use demand_impact::{synth, Error, Result};

#[derive(Parser)]
#[command(
    name = "demand-impact",
    version,
    about = "Counterfactual analysis of daily electricity demand"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct RunArgs {
    /// Pipeline config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; stage files go to OUT/<stage>/.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Parse demand, mobility and voltage files into canonical CSVs.
    Ingest(RunArgs),
    /// Build the day-of-week aligned comparison groups.
    Align(RunArgs),
    /// Fit the structural time-series model per area.
    Fit(RunArgs),
    /// Simulate counterfactuals and summarize the effect per period.
    Impact(RunArgs),
    /// Repeat the analysis with all windows moved back.
    Placebo(RunArgs),
    /// Estimate the partial-adjustment panel model.
    Gmm(RunArgs),
    /// Levene, ANOVA and Tukey HSD tests of temperature across periods.
    Seasons(RunArgs),
    /// Run every stage in order, or a single one with --stage.
    Run {
        #[command(flatten)]
        args: RunArgs,
        #[arg(long)]
        stage: Option<String>,
    },
    /// Print a config with every default written out.
    Template {
        /// Write to a file instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the synthetic example dataset and its config.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 20200401)]
        seed: u64,
    },
}

fn pipeline(args: &RunArgs) -> Result<Pipeline> {
    let mut loaded = LoadedConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        loaded.config.seed = seed;
    }
    Ok(Pipeline::new(loaded, &args.out))
}

fn report(m: &Manifest) {
    println!("{}: {} files", m.stage, m.outputs.len());
    for note in &m.notes {
        println!("  note: {note}");
    }
}

fn stage(args: &RunArgs, stage: Stage) -> Result<()> {
    report(&pipeline(args)?.run_stage(stage)?);
    Ok(())
}

fn write_template(out: Option<&Path>) -> Result<()> {
    let text = format!(
        "# Every setting is listed with its default value.\n# Relative paths are resolved against this file's directory.\n{}",
        PipelineConfig::template().to_toml()
    );
    match out {
        Some(path) => std::fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest(a) => stage(&a, Stage::Ingest),
        Command::Align(a) => stage(&a, Stage::Align),
        Command::Fit(a) => stage(&a, Stage::Fit),
        Command::Impact(a) => stage(&a, Stage::Impact),
        Command::Placebo(a) => stage(&a, Stage::Placebo),
        Command::Gmm(a) => stage(&a, Stage::Gmm),
        Command::Seasons(a) => stage(&a, Stage::Seasons),
        Command::Run { args, stage: None } => {
            for m in pipeline(&args)?.run_all()? {
                report(&m);
            }
            Ok(())
        }
        Command::Run {
            args,
            stage: Some(name),
        } => stage_by_name(&args, &name),
        Command::Template { out } => write_template(out.as_deref()),
        Command::Synth { out, seed } => {
            synth::write_bundle(&out, seed)?;
            println!("wrote {}", out.join("config.toml").display());
            Ok(())
        }
    }
}

fn stage_by_name(args: &RunArgs, name: &str) -> Result<()> {
    let s: Stage = name.parse()?;
    stage(args, s)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("invalid arguments");
            eprintln!("E_CONFIG: {}", first.trim_start_matches("error: "));
            return ExitCode::from(2);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let class = e.class();
            eprintln!("{}: {}", class.tag(), one_line(&e));
            ExitCode::from(class.exit_code() as u8)
        }
    }
}

fn one_line(e: &Error) -> String {
    e.to_string().split_whitespace().collect::<Vec<_>>().join(" ")
}
