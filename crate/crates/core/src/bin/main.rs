use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use astd_anomaly::cli::{self, CliError, Injection, Profile, ScoreField, SynthConfig};
use astd_anomaly::pipeline::PipelineConfig;

#[derive(Parser)]
#[command(name = "astd-anomaly", version, about = "Streaming ensemble anomaly detection over logon logs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct PipelineArgs {
    /// Logon CSV (id,date,user,pc,activity)
    #[arg(long)]
    input: PathBuf,
    /// JSON configuration; built-in defaults when omitted
    #[arg(long)]
    config: Option<PathBuf>,
    /// Keep only rows with this activity, e.g. Logon
    #[arg(long)]
    activity_filter: Option<String>,
    /// chrono format of the date column
    #[arg(long)]
    date_format: Option<String>,
}

impl PipelineArgs {
    fn config(&self) -> Result<PipelineConfig, CliError> {
        let mut cfg = match &self.config {
            Some(p) => cli::load_config(p)?,
            None => PipelineConfig::default(),
        };
        if let Some(f) = &self.activity_filter {
            cfg.activity_filter = Some(f.clone());
        }
        if let Some(f) = &self.date_format {
            cfg.date_format = f.clone();
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Stream a log through the detectors and write alerts
    Run {
        #[command(flatten)]
        pipeline: PipelineArgs,
        #[arg(long, default_value = "alerts.jsonl")]
        alerts_out: PathBuf,
        /// Also write one line per scored event
        #[arg(long)]
        scores_out: Option<PathBuf>,
    },
    /// Score a run against ground-truth labels
    Evaluate {
        /// Scores file written by `run --scores-out`
        #[arg(long)]
        input: PathBuf,
        /// CSV with eventId,label
        #[arg(long)]
        labels: PathBuf,
        /// `votes` or a detector name
        #[arg(long, default_value = "votes")]
        field: String,
        /// Include the ROC points in the output
        #[arg(long)]
        roc: bool,
    },
    /// Generate a labelled synthetic logon log
    Synth {
        #[arg(long, default_value_t = 50)]
        users: usize,
        #[arg(long, default_value_t = 26)]
        weeks: usize,
        #[arg(long, default_value_t = 0.05)]
        rate: f64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = Profile::Drift)]
        profile: Profile,
        /// How anomalies are spread: episode or uniform
        #[arg(long, default_value_t = Injection::Episode)]
        injection: Injection,
        #[arg(long, default_value = "logon.csv")]
        out: PathBuf,
        #[arg(long, default_value = "labels.csv")]
        labels: PathBuf,
    },
    /// Print the canonical state after consuming a log
    DumpState {
        #[command(flatten)]
        pipeline: PipelineArgs,
    },
}

fn execute(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::Run { pipeline, alerts_out, scores_out } => {
            let cfg = pipeline.config()?;
            let s = cli::run(&pipeline.input, &cfg, &alerts_out, scores_out.as_deref())?;
            println!(
                "events={} users={} alerts={} retrains={} skipped={} scored={} late={} malformed={} filtered={}",
                s.events, s.users, s.alerts, s.retrains, s.skipped, s.scored, s.late, s.malformed, s.filtered
            );
        }
        Command::Evaluate { input, labels, field, roc } => {
            let scored = cli::read_scores(&input)?;
            let labels = cli::read_labels(&labels)?;
            let field: ScoreField = field.parse().expect("infallible");
            let mut report = cli::evaluate(&scored, &labels, &field)?;
            if !roc {
                report.roc_points.clear();
            }
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::Synth { users, weeks, rate, seed, profile, injection, out, labels } => {
            let cfg = SynthConfig { users, weeks, rate, seed, profile, injection, ..SynthConfig::default() };
            let s = cli::write_synth(&cfg, &out, &labels)?;
            println!("events={} anomalies={} users={}", s.events, s.anomalies, s.users);
        }
        Command::DumpState { pipeline } => {
            let text = cli::dump_state(&pipeline.input, &pipeline.config()?)?;
            // a closed pipe (e.g. `| head`) is not an error
            match std::io::stdout().lock().write_all(text.as_bytes()) {
                Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => {}
                r => r?,
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
