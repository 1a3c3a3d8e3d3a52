//! Seeded Monte Carlo trials over every scenario and attack.
//!
//! Trial `i` of a run draws all of its randomness from streams derived from
//! `(seed, i)`, and results are collected in trial order, so the output is
//! byte-identical for any worker count.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{self, Write};
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::Serialize;
use serde_json::Value;
use thiserror::Error;

use crate::adversary::{run_untraceability_game, GameConfig, GameError, RandomGuess};
use crate::attacks::{
    attack_traceability, bitflip_round_trial, bitflip_trial, clone_trial, full_disclosure_trial,
    mitm_trial, recover_key, AttackKind, AttackReport, DEFAULT_C1_ROUND_CAP,
};
use crate::channel::{ChannelEvent, ScenarioScript};
use crate::protocol::{
    compute_a, compute_b, next_pair, run_session, PairState, ProtocolError, ReaderState,
    SessionOutcome, TagState,
};
use crate::seed::{trial_rng, Stream};
use crate::stats::{wilson_interval, CounterStats, StatsError};
use crate::word::{validate_len, Word, WordError, DEFAULT_WORD_LEN};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("unknown experiment {name:?}; available: {}", Experiment::NAMES.join(", "))]
    UnknownExperiment { name: String },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Word(#[from] WordError),
    #[error("trial {trial}: {source}")]
    Protocol {
        trial: u64,
        #[source]
        source: ProtocolError,
    },
    #[error("trial {trial}: {source}")]
    Game {
        trial: u64,
        #[source]
        source: GameError,
    },
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Adversary used in the untraceability game.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum GameStrategy {
    /// The blocked-`C` tracing attack with budgets (2, 1).
    Traceability,
    /// Same attack with no `Send` budget.
    TraceabilityNoSend,
    /// Uniform guessing.
    RandomGuess,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Experiment {
    Session,
    Game(GameStrategy),
    Attack(AttackKind),
    /// Independent `C1` rounds of the bit-flip attack.
    BitflipRounds,
    VerifyIdentities,
}

impl Experiment {
    pub const NAMES: [&'static str; 10] = [
        "session",
        "untraceability",
        "untraceability-no-send",
        "random-guess",
        "full-disclosure",
        "clone",
        "desync-mitm",
        "desync-bitflip",
        "bitflip-rounds",
        "verify-identities",
    ];

    pub fn from_name(name: &str) -> Result<Experiment, HarnessError> {
        Ok(match name {
            "session" => Experiment::Session,
            "untraceability" | "traceability" => Experiment::Game(GameStrategy::Traceability),
            "untraceability-no-send" => Experiment::Game(GameStrategy::TraceabilityNoSend),
            "random-guess" => Experiment::Game(GameStrategy::RandomGuess),
            "bitflip-rounds" => Experiment::BitflipRounds,
            "verify-identities" => Experiment::VerifyIdentities,
            other => match AttackKind::from_name(other) {
                Some(kind) => Experiment::Attack(kind),
                None => {
                    return Err(HarnessError::UnknownExperiment {
                        name: other.to_owned(),
                    })
                }
            },
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Session => "session",
            Experiment::Game(GameStrategy::Traceability) => "untraceability",
            Experiment::Game(GameStrategy::TraceabilityNoSend) => "untraceability-no-send",
            Experiment::Game(GameStrategy::RandomGuess) => "random-guess",
            Experiment::Attack(kind) => kind.name(),
            Experiment::BitflipRounds => "bitflip-rounds",
            Experiment::VerifyIdentities => "verify-identities",
        }
    }

    /// Trial count used when none is given; the whole suite at these counts
    /// finishes in well under a minute at 128 bits.
    pub fn default_trials(&self) -> u64 {
        match self {
            Experiment::Session => 100,
            Experiment::Game(_) => 1000,
            Experiment::Attack(AttackKind::DesyncBitflip) => 200,
            Experiment::Attack(_) => 1000,
            Experiment::BitflipRounds => 10_000,
            Experiment::VerifyIdentities => 100_000,
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrialConfig {
    pub experiment: Experiment,
    pub word_len: u32,
    pub trials: u64,
    pub seed: u64,
    /// Worker threads; 0 means one per core.
    pub workers: usize,
    /// Honest sessions run after a desync to check it is permanent.
    pub follow_up_sessions: u32,
    pub c1_round_cap: u32,
    /// Sessions per trial for the `session` experiment.
    pub sessions_per_trial: u32,
    /// Interception rules for the `session` experiment.
    pub script: ScenarioScript,
}

impl TrialConfig {
    pub fn new(experiment: Experiment) -> Self {
        TrialConfig {
            experiment,
            word_len: DEFAULT_WORD_LEN,
            trials: experiment.default_trials(),
            seed: 0,
            workers: 0,
            follow_up_sessions: 3,
            c1_round_cap: DEFAULT_C1_ROUND_CAP,
            sessions_per_trial: 3,
            script: ScenarioScript::new(),
        }
    }

    pub fn with_word_len(mut self, word_len: u32) -> Self {
        self.word_len = word_len;
        self
    }

    pub fn with_trials(mut self, trials: u64) -> Self {
        self.trials = trials;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = workers;
        self
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        validate_len(self.word_len)?;
        if self.trials == 0 {
            return Err(HarnessError::InvalidConfig("trials must be at least 1".into()));
        }
        if self.c1_round_cap == 0 {
            return Err(HarnessError::InvalidConfig("C1 round cap must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EventRecord {
    pub trial: u64,
    #[serde(flatten)]
    pub event: ChannelEvent,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GameRecord {
    pub trial: u64,
    pub b: u8,
    pub d: u8,
    pub success: bool,
    pub execute: u32,
    pub send: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttackRecord {
    pub trial: u64,
    #[serde(flatten)]
    pub report: AttackReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundRecord {
    pub trial: u64,
    pub admitted: bool,
    pub hw_preserved: bool,
    pub c2_trials: u64,
    pub state_violations: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentityRecord {
    pub trial: u64,
    pub key: Word,
    pub nonce: Word,
    /// `A ^ B ^ IDT' = K'`.
    pub disclosure_identity: bool,
    /// `B ^ IDT' = Rot(K,K) ^ K`.
    pub tracing_identity: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Record {
    Event(EventRecord),
    Game(GameRecord),
    Attack(Box<AttackRecord>),
    Round(RoundRecord),
    Identity(IdentityRecord),
}

/// Outcome of one trial as seen by the aggregator.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub trial: u64,
    pub success: bool,
    /// Whether every check the experiment makes on this trial held.
    pub assertions_held: bool,
    pub counters: Vec<(&'static str, u64)>,
    /// Named 0/1 flags summed into the summary's extras.
    pub flags: Vec<(&'static str, bool)>,
    pub records: Vec<Record>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryStats {
    pub experiment: String,
    pub word_len: u32,
    pub seed: u64,
    pub trials: u64,
    pub successes: u64,
    pub success_rate: f64,
    pub wilson_low: f64,
    pub wilson_high: f64,
    pub assertions_held: u64,
    /// `|Pr[d = b] - 1/2|`, for game experiments.
    pub advantage: Option<f64>,
    pub counters: Vec<CounterStats>,
    pub extras: BTreeMap<String, u64>,
    /// Wall-clock time; kept out of serialized output so runs stay
    /// byte-reproducible.
    #[serde(skip)]
    pub duration: Duration,
}

impl SummaryStats {
    pub fn all_assertions_held(&self) -> bool {
        self.assertions_held == self.trials
    }
}

#[derive(Debug, Clone)]
pub struct TrialOutput {
    pub config: TrialConfig,
    pub results: Vec<TrialResult>,
    pub summary: SummaryStats,
}

impl TrialOutput {
    pub fn records(&self) -> impl Iterator<Item = &Record> {
        self.results.iter().flat_map(|r| r.records.iter())
    }
}

/// Aggregates trial results.
pub fn summarize(config: &TrialConfig, results: &[TrialResult]) -> Result<SummaryStats, HarnessError> {
    if results.is_empty() {
        return Err(StatsError::Empty.into());
    }
    let trials = results.len() as u64;
    let successes = results.iter().filter(|r| r.success).count() as u64;
    let success_rate = successes as f64 / trials as f64;
    let (wilson_low, wilson_high) = wilson_interval(successes, trials);

    let mut names: Vec<&'static str> = Vec::new();
    for r in results {
        for (name, _) in &r.counters {
            if !names.contains(name) {
                names.push(name);
            }
        }
    }
    let counters = names
        .iter()
        .map(|name| {
            let values: Vec<u64> = results
                .iter()
                .flat_map(|r| r.counters.iter().filter(|(n, _)| n == name).map(|&(_, v)| v))
                .collect();
            CounterStats::from_values(name, &values)
        })
        .collect::<Result<Vec<_>, _>>()?;

    let mut extras = BTreeMap::new();
    for r in results {
        for &(name, flag) in &r.flags {
            *extras.entry(name.to_owned()).or_insert(0) += flag as u64;
        }
    }

    Ok(SummaryStats {
        experiment: config.experiment.name().to_owned(),
        word_len: config.word_len,
        seed: config.seed,
        trials,
        successes,
        success_rate,
        wilson_low,
        wilson_high,
        assertions_held: results.iter().filter(|r| r.assertions_held).count() as u64,
        advantage: matches!(config.experiment, Experiment::Game(_))
            .then(|| (success_rate - 0.5).abs()),
        counters,
        extras,
        duration: Duration::ZERO,
    })
}

/// Runs every trial of `config` and aggregates the results.
pub fn run_trials(config: &TrialConfig) -> Result<TrialOutput, HarnessError> {
    config.validate()?;
    let started = Instant::now();
    let run = || -> Vec<Result<TrialResult, HarnessError>> {
        (0..config.trials)
            .into_par_iter()
            .map(|i| run_one(config, i))
            .collect()
    };
    let collected = if config.workers == 0 {
        run()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(config.workers)
            .build()
            .map_err(|e| HarnessError::InvalidConfig(e.to_string()))?
            .install(run)
    };
    let results = collected.into_iter().collect::<Result<Vec<_>, _>>()?;
    let mut summary = summarize(config, &results)?;
    summary.duration = started.elapsed();
    Ok(TrialOutput {
        config: config.clone(),
        results,
        summary,
    })
}

/// Runs trial `trial` of `config` on the calling thread.
pub fn run_one(config: &TrialConfig, trial: u64) -> Result<TrialResult, HarnessError> {
    let proto = |source| HarnessError::Protocol { trial, source };
    let (l, seed) = (config.word_len, config.seed);
    match config.experiment {
        Experiment::Session => session_trial(config, trial),
        Experiment::Game(strategy) => {
            let (r1, r2) = match strategy {
                GameStrategy::Traceability => (2, 1),
                GameStrategy::TraceabilityNoSend => (2, 0),
                GameStrategy::RandomGuess => (0, 0),
            };
            let gc = GameConfig::new(l, r1, r2, config.trials, seed)?;
            let outcome = match strategy {
                GameStrategy::RandomGuess => {
                    run_untraceability_game(&mut RandomGuess::new(seed, trial), &gc, trial)
                }
                _ => attack_traceability(&gc, trial),
            }
            .map_err(|source| HarnessError::Game { trial, source })?;
            Ok(TrialResult {
                trial,
                success: outcome.success,
                assertions_held: outcome.success || strategy != GameStrategy::Traceability,
                counters: vec![],
                flags: vec![
                    ("false_matches", outcome.b == 1 && outcome.d == 0),
                    ("missed_matches", outcome.b == 0 && outcome.d == 1),
                ],
                records: vec![Record::Game(GameRecord {
                    trial,
                    b: outcome.b,
                    d: outcome.d,
                    success: outcome.success,
                    execute: outcome.queries.execute,
                    send: outcome.queries.send,
                })],
            })
        }
        Experiment::Attack(kind) => {
            let report = match kind {
                AttackKind::FullDisclosure => full_disclosure_trial(l, seed, trial),
                AttackKind::Clone => clone_trial(l, seed, trial),
                AttackKind::DesyncMitm => mitm_trial(l, seed, trial, config.follow_up_sessions),
                AttackKind::DesyncBitflip => {
                    bitflip_trial(l, seed, trial, config.c1_round_cap, config.follow_up_sessions)
                }
            }
            .map_err(proto)?;
            let mut counters = vec![];
            if let Some(r) = report.c1_rounds {
                counters.push(("c1_rounds", r as u64));
            }
            if let Some(t) = report.c2_trials {
                counters.push(("c2_trials", t));
            }
            let mut flags = vec![];
            if let Some(b) = report.b_check {
                flags.push(("b_check_passed", b));
            }
            if kind == AttackKind::DesyncBitflip {
                flags.push(("chance_collisions", report.chance_collision == Some(true)));
                flags.push(("c2_predicted", report.c2_predicted == Some(true)));
            }
            Ok(TrialResult {
                trial,
                success: report.success,
                assertions_held: report.success,
                counters,
                flags,
                records: vec![Record::Attack(Box::new(AttackRecord { trial, report }))],
            })
        }
        Experiment::BitflipRounds => {
            let r = bitflip_round_trial(l, seed, trial).map_err(proto)?;
            Ok(TrialResult {
                trial,
                success: r.admitted,
                assertions_held: r.violations == 0 && (!r.hw_preserved || r.admitted),
                counters: vec![("c2_trials", r.trials)],
                flags: vec![
                    ("hw_preserved", r.hw_preserved),
                    ("chance_collisions", r.admitted && !r.hw_preserved),
                ],
                records: vec![Record::Round(RoundRecord {
                    trial,
                    admitted: r.admitted,
                    hw_preserved: r.hw_preserved,
                    c2_trials: r.trials,
                    state_violations: r.violations,
                })],
            })
        }
        Experiment::VerifyIdentities => {
            let mut rng = trial_rng(seed, trial, Stream::Setup);
            let key = Word::random(l, &mut rng);
            let nonce = Word::random(l, &mut rng);
            let (disclosure, tracing) = check_identities(&key, &nonce);
            Ok(TrialResult {
                trial,
                success: disclosure && tracing,
                assertions_held: disclosure && tracing,
                counters: vec![],
                flags: vec![],
                records: vec![Record::Identity(IdentityRecord {
                    trial,
                    key,
                    nonce,
                    disclosure_identity: disclosure,
                    tracing_identity: tracing,
                })],
            })
        }
    }
}

/// Evaluates both public-message identities for one `(K, N)`:
/// `A ^ B ^ IDT' = K'` and `B ^ IDT' = Rot(K,K) ^ K`.
pub fn check_identities(key: &Word, nonce: &Word) -> (bool, bool) {
    let a = compute_a(key, nonce);
    let b = compute_b(key, nonce);
    let next = next_pair(&PairState { idt: *key, key: *key }, nonce);
    (
        recover_key(&a, &b, &next.idt) == next.key,
        b ^ next.idt == key.self_rot() ^ key,
    )
}

fn session_trial(config: &TrialConfig, trial: u64) -> Result<TrialResult, HarnessError> {
    let proto = |source| HarnessError::Protocol { trial, source };
    let l = config.word_len;
    let tag0 = TagState::random(l, &mut trial_rng(config.seed, trial, Stream::Setup));
    let mut tag = tag0;
    let mut reader = ReaderState::new();
    reader.register(tag.database_entry()).map_err(proto)?;
    let mut nonces = trial_rng(config.seed, trial, Stream::Reader);
    let mut channel = config.script.channel();

    let mut held = true;
    let mut successes = 0u64;
    let mut records = Vec::new();
    for s in 0..config.sessions_per_trial as u64 {
        let before = tag;
        let t = run_session(&mut reader, &mut tag, &mut nonces, &mut channel, s).map_err(proto)?;
        if t.outcome == SessionOutcome::MutualSuccess {
            successes += 1;
            held &= reader.is_synchronized_with(&tag);
            // the pair used is the tag's new `previous`; the tracing identity
            // holds for any undisturbed exchange
            let used = tag.previous;
            let undisturbed = t.events.iter().all(|e| e.disposition == crate::channel::Disposition::Delivered);
            if undisturbed {
                let b = t.b.expect("successful session carries B");
                held &= b ^ tag.current.idt == used.key.self_rot() ^ used.key;
                held &= before.holds(&used);
            }
        }
        records.extend(t.events.into_iter().map(|event| Record::Event(EventRecord { trial, event })));
    }
    Ok(TrialResult {
        trial,
        success: held,
        assertions_held: held,
        counters: vec![("mutual_successes", successes)],
        flags: vec![("synchronized_at_end", reader.is_synchronized_with(&tag))],
        records,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Text,
    JsonLines,
    Csv,
}

impl OutputFormat {
    pub fn from_name(name: &str) -> Option<OutputFormat> {
        match name {
            "text" => Some(OutputFormat::Text),
            "json-lines" => Some(OutputFormat::JsonLines),
            "csv" => Some(OutputFormat::Csv),
            _ => None,
        }
    }
}

fn scalar_text(v: &Value) -> String {
    match v {
        Value::Null => "-".into(),
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn flat_summary(summary: &SummaryStats) -> Result<Vec<(String, String)>, HarnessError> {
    let Value::Object(map) = serde_json::to_value(summary)? else {
        unreachable!("summary serializes as an object")
    };
    let mut out = Vec::new();
    for (k, v) in map {
        match (k.as_str(), v) {
            ("counters", Value::Array(items)) => {
                for item in items {
                    let name = scalar_text(&item["name"]);
                    for field in ["mean", "median", "max"] {
                        out.push((format!("{name}_{field}"), scalar_text(&item[field])));
                    }
                }
            }
            ("extras", Value::Object(extras)) => {
                out.extend(extras.into_iter().map(|(k, v)| (k, scalar_text(&v))));
            }
            (_, v) => out.push((k, scalar_text(&v))),
        }
    }
    Ok(out)
}

/// Writes records followed by the summary block.
///
/// * `text` — `key=value` pairs per record; the `session` experiment instead
///   emits the transcript line format with `# trial <n>` separators.
/// * `json-lines` — one JSON object per record, then `{"summary": {...}}`.
/// * `csv` — a fixed header row then one row per record; the summary follows
///   as `# key=value` comment lines.
pub fn write_output<W: Write>(out: &mut W, output: &TrialOutput, format: OutputFormat) -> Result<(), HarnessError> {
    match format {
        OutputFormat::Text => {
            if output.config.experiment == Experiment::Session {
                for r in &output.results {
                    writeln!(out, "# trial {}", r.trial)?;
                    for rec in &r.records {
                        if let Record::Event(e) = rec {
                            writeln!(out, "{}", e.event.to_line())?;
                        }
                    }
                }
            } else {
                for rec in output.records() {
                    let Value::Object(map) = serde_json::to_value(rec)? else {
                        unreachable!("records serialize as objects")
                    };
                    let line: Vec<String> = map
                        .iter()
                        .map(|(k, v)| format!("{k}={}", scalar_text(v)))
                        .collect();
                    writeln!(out, "{}", line.join(" "))?;
                }
            }
            writeln!(out, "# summary")?;
            for (k, v) in flat_summary(&output.summary)? {
                writeln!(out, "# {k}={v}")?;
            }
        }
        OutputFormat::JsonLines => {
            for rec in output.records() {
                serde_json::to_writer(&mut *out, rec)?;
                writeln!(out)?;
            }
            serde_json::to_writer(&mut *out, &serde_json::json!({ "summary": output.summary }))?;
            writeln!(out)?;
        }
        OutputFormat::Csv => {
            {
                let mut w = csv::Writer::from_writer(&mut *out);
                let mut header_written = false;
                for rec in output.records() {
                    let Value::Object(map) = serde_json::to_value(rec)? else {
                        unreachable!("records serialize as objects")
                    };
                    if !header_written {
                        w.write_record(map.keys())?;
                        header_written = true;
                    }
                    w.write_record(map.values().map(|v| match v {
                        Value::Null => String::new(),
                        other => scalar_text(other),
                    }))?;
                }
                w.flush()?;
            }
            for (k, v) in flat_summary(&output.summary)? {
                writeln!(out, "# {k}={v}")?;
            }
        }
    }
    Ok(())
}
