use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use uma_rfid::channel::ScenarioScript;
use uma_rfid::harness::{run_trials, write_output, Experiment, HarnessError, OutputFormat, TrialConfig};

#[derive(Parser)]
#[command(name = "uma-rfid", version, about = "Simulate UMA-RFID sessions and attacks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run honest (or scripted) protocol sessions.
    Session {
        #[command(flatten)]
        common: Common,
        /// Interception script: one `<session> <label> block|replace <hex>|xor <hex>` per line.
        #[arg(long)]
        script: Option<PathBuf>,
        #[arg(long, default_value_t = 3)]
        sessions: u32,
    },
    /// Play the untraceability game.
    Game {
        #[command(flatten)]
        common: Common,
        /// untraceability, untraceability-no-send or random-guess.
        #[arg(long, default_value = "untraceability")]
        strategy: String,
    },
    /// Run an attack: full-disclosure, clone, desync-mitm, desync-bitflip,
    /// bitflip-rounds or traceability.
    Attack {
        name: String,
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 3)]
        follow_ups: u32,
        #[arg(long, default_value_t = 64)]
        c1_round_cap: u32,
    },
    /// Check the public-message identities on random inputs.
    VerifyIdentities {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    /// Word length in bits (multiple of 4, at most 128).
    #[arg(long, default_value_t = 128)]
    bits: u32,
    /// Number of trials; defaults depend on the experiment.
    #[arg(long)]
    trials: Option<u64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
    /// Write records here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    workers: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    JsonLines,
    Csv,
}

impl From<Format> for OutputFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Text => OutputFormat::Text,
            Format::JsonLines => OutputFormat::JsonLines,
            Format::Csv => OutputFormat::Csv,
        }
    }
}

fn configure(experiment: Experiment, common: &Common) -> TrialConfig {
    let mut cfg = TrialConfig::new(experiment)
        .with_word_len(common.bits)
        .with_seed(common.seed)
        .with_workers(common.workers);
    if let Some(t) = common.trials {
        cfg = cfg.with_trials(t);
    }
    cfg
}

fn run(cli: Cli) -> Result<bool, HarnessError> {
    let (cfg, common) = match cli.command {
        Command::Session { common, script, sessions } => {
            let mut cfg = configure(Experiment::Session, &common);
            cfg.sessions_per_trial = sessions;
            if let Some(path) = script {
                let text = std::fs::read_to_string(&path)?;
                cfg.script = ScenarioScript::parse(&text)
                    .map_err(|e| HarnessError::InvalidConfig(format!("{}: {e}", path.display())))?;
            }
            (cfg, common)
        }
        Command::Game { common, strategy } => {
            let exp = Experiment::from_name(&strategy)?;
            if !matches!(exp, Experiment::Game(_)) {
                return Err(HarnessError::UnknownExperiment { name: strategy });
            }
            (configure(exp, &common), common)
        }
        Command::Attack { name, common, follow_ups, c1_round_cap } => {
            let exp = Experiment::from_name(&name)?;
            let mut cfg = configure(exp, &common);
            cfg.follow_up_sessions = follow_ups;
            cfg.c1_round_cap = c1_round_cap;
            (cfg, common)
        }
        Command::VerifyIdentities { common } => (configure(Experiment::VerifyIdentities, &common), common),
    };

    let output = run_trials(&cfg)?;
    let mut sink: Box<dyn Write> = match &common.out {
        Some(path) => Box::new(BufWriter::new(File::create(path)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    };
    write_output(&mut sink, &output, common.format.into())?;
    sink.flush()?;
    eprintln!(
        "{}: {}/{} succeeded, {}/{} assertions held in {:.2?}",
        output.summary.experiment,
        output.summary.successes,
        output.summary.trials,
        output.summary.assertions_held,
        output.summary.trials,
        output.summary.duration,
    );
    Ok(output.summary.all_assertions_held())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
