use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand as ClapSubcommand};

use geotweet::config::RunConfig;
use geotweet::pipeline::{run, Subcommand};
use geotweet::states::State;
use geotweet::synth::{generate, write_bundle, SynthSpec};
use geotweet::{DateWindow, Result};

#[derive(Parser)]
#[command(name = "geotweet", version, about = "Analyze geo-tagged tweet archives")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(ClapSubcommand)]
enum Command {
    /// Parse, keyword-filter and deduplicate the raw archives.
    Ingest(RunArgs),
    /// Detect and remove bot accounts.
    Clean(RunArgs),
    /// Daily and hour-of-week volume tables.
    Volumes(RunArgs),
    /// Work engagement around lockdown and reopen dates.
    Engagement(RunArgs),
    /// State and county distribution tables.
    Geo(RunArgs),
    /// Hashtags, mentions and LDA topics.
    Topics(RunArgs),
    /// Lexicon and emoji sentiment tables.
    Sentiment(RunArgs),
    /// Emoji sentiment around policy and case-count events.
    Events(RunArgs),
    /// Pairwise state correlations and event MANOVA.
    Stats(RunArgs),
    /// Every stage in order.
    All(RunArgs),
    /// Write the synthetic two-state corpus and a config that analyzes it.
    Synth(SynthArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Primary NDJSON archive (plain or .gz); repeatable.
    #[arg(long = "input")]
    inputs: Vec<PathBuf>,
    /// Archive used to fill crawler outages; repeatable.
    #[arg(long = "compensation-input")]
    compensation_inputs: Vec<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    /// First day of the observation window (YYYY-MM-DD).
    #[arg(long)]
    from: Option<NaiveDate>,
    /// Last day of the observation window (YYYY-MM-DD).
    #[arg(long)]
    to: Option<NaiveDate>,
    /// Comma-separated state abbreviations or names.
    #[arg(long, value_delimiter = ',')]
    states: Option<Vec<String>>,
    /// Resolve counties from local polygons only.
    #[arg(long)]
    offline_geocoder: bool,
    /// Contact identifier sent to the remote geocoder.
    #[arg(long, env = "GEOTWEET_GEOCODER_CONTACT", hide_env_values = true)]
    geocoder_contact: Option<String>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 5000)]
    tweets: usize,
    #[arg(long, default_value_t = 300)]
    compensation: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

impl RunArgs {
    fn into_config(self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::from_path(path)?,
            None => RunConfig::default(),
        };
        if !self.inputs.is_empty() {
            cfg.inputs = self.inputs;
        }
        if !self.compensation_inputs.is_empty() {
            cfg.compensation_inputs = self.compensation_inputs;
        }
        if let Some(out) = self.out {
            cfg.out_dir = out;
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if self.workers.is_some() {
            cfg.workers = self.workers;
        }
        if self.from.is_some() || self.to.is_some() {
            let start = self.from.unwrap_or(cfg.window.start);
            let end = self.to.unwrap_or(cfg.window.end);
            cfg.window = DateWindow::new(start, end)?;
        }
        if let Some(states) = self.states {
            cfg.states = Some(states.iter().map(|s| s.trim().parse::<State>()).collect::<Result<_>>()?);
        }
        if self.offline_geocoder {
            cfg.geocoder.offline = true;
        }
        if self.geocoder_contact.is_some() {
            cfg.geocoder.contact = self.geocoder_contact;
        }
        Ok(cfg)
    }
}

const SYNTH_CONFIG: &str = r#"inputs = ["tweets.ndjson"]
compensation_inputs = ["compensation.ndjson"]
out_dir = "out"

[resources]
calendar = "calendar.csv"
population = "population.csv"
cases = "cases.csv"
boundaries = "counties.geojson"

[topics]
candidates = [2, 4, 6]
repeats = 3
passes = 100
"#;

fn synth(args: SynthArgs) -> Result<()> {
    let corpus = generate(&SynthSpec { tweets: args.tweets, compensation: args.compensation, seed: args.seed });
    write_bundle(&args.out, &corpus)?;
    std::fs::write(args.out.join("geotweet.toml"), SYNTH_CONFIG)?;
    println!("wrote synthetic corpus to {}", args.out.display());
    Ok(())
}

fn execute(sub: Subcommand, args: RunArgs) -> Result<()> {
    let cfg = args.into_config()?;
    let summary = run(sub, &cfg)?;
    for skip in &summary.skipped_stages {
        eprintln!("skipped {skip}");
    }
    for notice in &summary.notices {
        eprintln!("note: {notice}");
    }
    println!("{} artifacts, manifest at {}", summary.artifacts.len(), display(&summary.manifest));
    Ok(())
}

fn display(p: &Path) -> String {
    p.display().to_string()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Ingest(a) => execute(Subcommand::Ingest, a),
        Command::Clean(a) => execute(Subcommand::Clean, a),
        Command::Volumes(a) => execute(Subcommand::Volumes, a),
        Command::Engagement(a) => execute(Subcommand::Engagement, a),
        Command::Geo(a) => execute(Subcommand::Geo, a),
        Command::Topics(a) => execute(Subcommand::Topics, a),
        Command::Sentiment(a) => execute(Subcommand::Sentiment, a),
        Command::Events(a) => execute(Subcommand::Events, a),
        Command::Stats(a) => execute(Subcommand::Stats, a),
        Command::All(a) => execute(Subcommand::All, a),
        Command::Synth(a) => synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
