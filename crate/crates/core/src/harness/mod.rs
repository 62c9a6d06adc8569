//! Experiment orchestration: build a run from a config, drive the round
//! engine, persist metrics, compare codecs and derive rate diagnostics.
//!
//! A run directory holds:
//!
//! - `config.json`: the effective configuration;
//! - `metrics.csv`: one row per round with columns
//!   `round, objective_total, smooth_part, l1_part, consensus_sq,
//!   proj_grad_sq, bits_this_round, cum_bits, test_metric`. Optional cells
//!   are left empty. A failed run ends with a `# error: ...` line;
//! - `summary.json`;
//! - `messages.log` when message recording is on.

mod config;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::codec::{adaptive_range_rule, laplace_rate_bound, LaplaceRateModel};
use crate::error::{Error, Result};
use crate::protocol::{Compressor, Engine, EngineSetup, RoundMetrics};
use crate::rng::{self, Purpose};
use crate::tasks::{self, ModelKind};

pub use config::{ExperimentConfig, TaskName};

pub const METRICS_HEADER: [&str; 9] = [
    "round",
    "objective_total",
    "smooth_part",
    "l1_part",
    "consensus_sq",
    "proj_grad_sq",
    "bits_this_round",
    "cum_bits",
    "test_metric",
];

/// Tail probability used when evaluating the rate bound on a run.
pub const RANGE_RULE_EPSILON: f64 = 0.01;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub codec: Compressor,
    pub rounds: u64,
    pub final_objective: Option<f64>,
    pub final_consensus_sq: Option<f64>,
    pub total_bits: u64,
    /// Informational only.
    pub wall_seconds: f64,
}

/// Result of [`run`].
#[derive(Clone, Debug)]
pub struct RunArtifact {
    pub dir: PathBuf,
    pub metrics_path: PathBuf,
    pub config: ExperimentConfig,
    pub kind: ModelKind,
    pub rounds: Vec<RoundMetrics>,
    pub summary: RunSummary,
}

/// Build the engine for `config`. All config, data and topology errors
/// surface here, before any round runs.
pub fn prepare(config: &ExperimentConfig) -> Result<Engine> {
    config.validate()?;
    let topology = config.build_topology()?;
    let (train, test) = config.build_data()?;
    let kind = config.model_kind(&train)?;
    kind.check_labels(&train)?;
    if let Some(test) = &test {
        kind.check_labels(test)?;
    }
    let shards = tasks::partition(&train, config.n_nodes, config.seed)?;
    Engine::new(EngineSetup {
        init: initial_model(&kind, config.init_scale(), config.seed),
        kind,
        topology,
        shards,
        test,
        hp: config.hyper_params(),
        compressor: config.codec,
        seed: config.seed,
        threads: config.threads,
        metric_every: config.metric_every,
    })
}

/// Shared starting point of every node: zero, or i.i.d. normal entries with
/// standard deviation `scale` when `scale > 0`.
pub fn initial_model(kind: &ModelKind, scale: f64, seed: u64) -> Vec<f64> {
    if scale == 0.0 {
        return vec![0.0; kind.dim()];
    }
    let mut g = rng::stream(seed, Purpose::Init, 0, 0);
    let normal = Normal::new(0.0, scale).expect("scale is finite and positive");
    (0..kind.dim()).map(|_| normal.sample(&mut g)).collect()
}

/// Execute `config` and write the run directory `out`.
pub fn run(config: &ExperimentConfig, out: &Path) -> Result<RunArtifact> {
    let mut engine = prepare(config)?;
    std::fs::create_dir_all(out)?;
    std::fs::write(
        out.join("config.json"),
        serde_json::to_string_pretty(config)?,
    )?;
    if config.record_messages {
        engine.record_messages(&out.join("messages.log"))?;
    }

    let metrics_path = out.join("metrics.csv");
    let mut csv = BufWriter::new(File::create(&metrics_path)?);
    writeln!(csv, "{}", METRICS_HEADER.join(","))?;
    let started = Instant::now();
    let mut rounds = Vec::with_capacity(config.rounds as usize);
    for _ in 0..config.rounds {
        match engine.run_round() {
            Ok(m) => {
                writeln!(csv, "{}", metrics_row(&m))?;
                rounds.push(m);
            }
            Err(e) => {
                writeln!(csv, "# error: {e}")?;
                csv.flush()?;
                log::error!("run aborted after {} rounds: {e}", rounds.len());
                return Err(e);
            }
        }
    }
    csv.flush()?;

    let summary = RunSummary {
        codec: config.codec,
        rounds: rounds.len() as u64,
        final_objective: rounds.last().map(|m| m.objective.total),
        final_consensus_sq: rounds.last().map(|m| m.consensus_sq),
        total_bits: engine.cum_bits(),
        wall_seconds: started.elapsed().as_secs_f64(),
    };
    std::fs::write(
        out.join("summary.json"),
        serde_json::to_string_pretty(&summary)?,
    )?;
    log::info!(
        "{}: {} rounds, {} bits, objective {:?}",
        config.codec.name(),
        summary.rounds,
        summary.total_bits,
        summary.final_objective
    );
    Ok(RunArtifact {
        dir: out.to_owned(),
        metrics_path,
        config: config.clone(),
        kind: engine.setup().kind,
        rounds,
        summary,
    })
}

fn metrics_row(m: &RoundMetrics) -> String {
    let opt = |v: Option<f64>| v.map(|x| format!("{x:?}")).unwrap_or_default();
    format!(
        "{},{:?},{:?},{:?},{:?},{},{},{},{}",
        m.round,
        m.objective.total,
        m.objective.smooth_part,
        m.objective.l1_part,
        m.consensus_sq,
        opt(m.proj_grad_sq),
        m.bits_this_round,
        m.cum_bits,
        opt(m.test_metric)
    )
}

/// One parsed `metrics.csv` row.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRow {
    pub round: u64,
    pub objective_total: f64,
    pub smooth_part: f64,
    pub l1_part: f64,
    pub consensus_sq: f64,
    pub proj_grad_sq: Option<f64>,
    pub bits_this_round: u64,
    pub cum_bits: u64,
    pub test_metric: Option<f64>,
}

/// Parsed metrics file and its error trailer, if any.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsFile {
    pub rows: Vec<MetricsRow>,
    pub error: Option<String>,
}

pub fn read_metrics(path: &Path) -> Result<MetricsFile> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let parse_err = |line: usize, reason: String| Error::Parse {
        path: path.to_owned(),
        line: line as u64 + 1,
        reason,
    };
    match lines.next() {
        Some((_, h)) if h == METRICS_HEADER.join(",") => {}
        _ => return Err(parse_err(0, "missing or unexpected header".to_owned())),
    }
    let mut rows = Vec::new();
    let mut error = None;
    for (i, line) in lines {
        if let Some(msg) = line.strip_prefix("# error: ") {
            error = Some(msg.to_owned());
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != METRICS_HEADER.len() {
            return Err(parse_err(
                i,
                format!(
                    "expected {} cells, got {}",
                    METRICS_HEADER.len(),
                    cells.len()
                ),
            ));
        }
        let f = |k: usize| -> Result<f64> {
            cells[k].parse().map_err(|_| {
                parse_err(
                    i,
                    format!("{} is not a number: {:?}", METRICS_HEADER[k], cells[k]),
                )
            })
        };
        let u = |k: usize| -> Result<u64> {
            cells[k].parse().map_err(|_| {
                parse_err(
                    i,
                    format!("{} is not an integer: {:?}", METRICS_HEADER[k], cells[k]),
                )
            })
        };
        let opt = |k: usize| -> Result<Option<f64>> {
            if cells[k].is_empty() {
                Ok(None)
            } else {
                f(k).map(Some)
            }
        };
        rows.push(MetricsRow {
            round: u(0)?,
            objective_total: f(1)?,
            smooth_part: f(2)?,
            l1_part: f(3)?,
            consensus_sq: f(4)?,
            proj_grad_sq: opt(5)?,
            bits_this_round: u(6)?,
            cum_bits: u(7)?,
            test_metric: opt(8)?,
        });
    }
    Ok(MetricsFile { rows, error })
}

/// Bits spent by one codec until the objective first reached the cutoff.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CodecResult {
    pub codec: Compressor,
    /// Cumulative bits at the first round whose objective is at or below
    /// the cutoff, or at the last round when it never got there.
    pub bits_to_cutoff: u64,
    pub reached: bool,
    pub round_reached: Option<u64>,
    pub total_bits: u64,
    pub final_objective: Option<f64>,
    pub best_objective: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub cutoff_objective: f64,
    /// Whether the cutoff came from the config or was derived from the runs.
    pub cutoff_from_config: bool,
    pub results: Vec<CodecResult>,
}

impl Comparison {
    pub fn get(&self, codec: Compressor) -> Option<&CodecResult> {
        self.results.iter().find(|r| r.codec == codec)
    }
}

/// Run `config` once per codec (into `out/<codec>`) and report cumulative
/// bits to an objective cutoff.
///
/// The cutoff is `cutoff_objective` from the config when present. Otherwise
/// it is the loosest level every codec attained: the largest of the
/// per-codec best objectives.
pub fn compare_codecs(config: &ExperimentConfig, out: &Path) -> Result<Comparison> {
    let mut runs = Vec::new();
    for codec in Compressor::ALL {
        let cfg = ExperimentConfig {
            codec,
            record_messages: false,
            ..config.clone()
        };
        runs.push(run(&cfg, &out.join(codec.name()))?);
    }
    let best = |a: &RunArtifact| {
        a.rounds
            .iter()
            .map(|m| m.objective.total)
            .fold(None, |acc: Option<f64>, v| {
                Some(acc.map_or(v, |b| b.min(v)))
            })
    };
    let (cutoff, from_config) = match config.cutoff_objective {
        Some(c) => (c, true),
        None => (
            runs.iter()
                .filter_map(best)
                .fold(f64::NEG_INFINITY, f64::max),
            false,
        ),
    };
    let results = runs
        .iter()
        .map(|a| {
            let hit = a.rounds.iter().find(|m| m.objective.total <= cutoff);
            CodecResult {
                codec: a.config.codec,
                bits_to_cutoff: hit.map_or(a.summary.total_bits, |m| m.cum_bits),
                reached: hit.is_some(),
                round_reached: hit.map(|m| m.round),
                total_bits: a.summary.total_bits,
                final_objective: a.summary.final_objective,
                best_objective: best(a),
            }
        })
        .collect();
    let comparison = Comparison {
        cutoff_objective: cutoff,
        cutoff_from_config: from_config,
        results,
    };
    std::fs::write(
        out.join("compare.json"),
        serde_json::to_string_pretty(&comparison)?,
    )?;
    Ok(comparison)
}

/// Per-round rate series of a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub round: u64,
    /// Mean over nodes of payload bits per coordinate.
    pub bits_per_coord: f64,
    /// Mean over nodes of the type-vector bound.
    pub type_bound: f64,
    /// Laplace-model bound at the fitted scale, with the range from
    /// [`adaptive_range_rule`]. `None` when every residual was zero.
    pub laplace_bound: Option<f64>,
    /// Mean over nodes of the mean absolute residual entry.
    pub rho_hat: f64,
}

/// Empirical payload rate against both bounds, round by round.
pub fn rate_diagnostics(artifact: &RunArtifact) -> Result<Vec<RateRow>> {
    if artifact.config.codec != Compressor::Malcom {
        return Err(Error::Config(format!(
            "rate diagnostics need the malcom codec, run used {}",
            artifact.config.codec.name()
        )));
    }
    let dim = artifact.kind.dim();
    let levels = u32::from(artifact.config.levels);
    artifact
        .rounds
        .iter()
        .map(|m| {
            let n = m.node_stats.len() as f64;
            let mean = |f: fn(&crate::protocol::CodecStats) -> f64| {
                m.node_stats.iter().map(f).sum::<f64>() / n
            };
            let rho_hat = mean(|s| s.rho_hat);
            let laplace_bound = if rho_hat > 0.0 {
                let range_r = adaptive_range_rule(rho_hat, dim, RANGE_RULE_EPSILON)?;
                Some(laplace_rate_bound(&LaplaceRateModel {
                    rho: rho_hat,
                    range_r,
                    levels_count: levels,
                })?)
            } else {
                None
            };
            Ok(RateRow {
                round: m.round,
                bits_per_coord: mean(|s| s.payload_bits_per_coord),
                type_bound: mean(|s| s.bound_per_coord),
                laplace_bound,
                rho_hat,
            })
        })
        .collect()
}

pub fn write_rate_csv(rows: &[RateRow], path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "round,bits_per_coord,type_bound,laplace_bound,rho_hat")?;
    for r in rows {
        writeln!(
            out,
            "{},{:?},{:?},{},{:?}",
            r.round,
            r.bits_per_coord,
            r.type_bound,
            r.laplace_bound
                .map(|v| format!("{v:?}"))
                .unwrap_or_default(),
            r.rho_hat
        )?;
    }
    out.flush()?;
    Ok(())
}

/// Maximum-likelihood scale of a zero-mean Laplace sample: the mean
/// absolute value.
pub fn laplace_scale_mle(sample: &[f64]) -> f64 {
    sample.iter().map(|v| v.abs()).sum::<f64>() / sample.len() as f64
}
