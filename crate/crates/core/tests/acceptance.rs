//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.
//!
//! Run with `cargo test -p malcom-core --test acceptance`.

use std::path::Path;
use std::time::{Duration, Instant};

use malcom::codec::{self, bit_bound, compute_type_vector};
use malcom::harness::{self, ExperimentConfig, RunArtifact, TaskName};
use malcom::optimizer::centralized_reference;
use malcom::protocol::Compressor;
use malcom::quantizer::{self, contraction_params, QuantizedResidual, Symbol};
use malcom::rng::{stream, Purpose};
use malcom::tasks::{self, ModelKind};
use rand::Rng;
use rand_distr::{Distribution, Exp, StandardNormal};

const CODEC_CASES: usize = 10_000;
const CODEC_TIME_LIMIT: Duration = Duration::from_secs(30);
const CONTRACTION_VECTORS: usize = 100;
const CONTRACTION_TRIALS: usize = 2000;
const CONTRACTION_SLACK: f64 = 1.02;
const CONTRACTION_TIME_LIMIT: Duration = Duration::from_secs(60);
const RATE_VECTORS: usize = 1000;
const RATE_DIM: usize = 10_000;
const LAPLACE_SCALE: f64 = 0.3;
const RATE_LEVELS: u16 = 8;
const RATE_FACTOR: f64 = 1.1;
const SWEEP_LEVELS: [u16; 5] = [2, 4, 8, 16, 32];
const DRIFT_LIMIT: f64 = 1e-10;
const OBJECTIVE_REL_TOL: f64 = 0.05;
const REFERENCE_TOL: f64 = 1e-8;
const PROJ_GRAD_RATIO: f64 = 0.10;
const RUN_TIME_LIMIT: Duration = Duration::from_secs(300);
const MALCOM_TO_NONE_LIMIT: f64 = 0.25;
const MU_SWEEP: [f64; 4] = [0.0, 1e-4, 1e-3, 1e-2];
const FD_PROBES: usize = 100;
const FD_REL_TOL: f64 = 1e-5;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn main() {
    let scratch = tempfile::tempdir().expect("scratch dir");
    let criteria: Vec<(&str, Box<dyn FnOnce(&mut Shared) -> Outcome>)> = vec![
        ("codec roundtrip exactness", Box::new(|_| codec_roundtrip())),
        ("quantizer contraction", Box::new(|_| contraction())),
        (
            "payload within type-vector bound",
            Box::new(|_| type_bound()),
        ),
        (
            "rate saturates in the number of levels",
            Box::new(|_| rate_saturation()),
        ),
        ("average preservation", Box::new(average_preservation)),
        ("desk-scale convergence", Box::new(convergence)),
        ("compression comparison", Box::new(compression)),
        ("threshold trend", Box::new(threshold_trend)),
        ("determinism across thread counts", Box::new(determinism)),
        ("gradient correctness", Box::new(|_| gradients())),
    ];
    let mut shared = Shared::new(scratch.path());
    let mut failures = 0;
    for (k, (name, check)) in criteria.into_iter().enumerate() {
        let started = Instant::now();
        let o = check(&mut shared);
        if !o.pass {
            failures += 1;
        }
        println!(
            "[{}] {:>2}. {name}: {} ({:.1}s)",
            if o.pass { "PASS" } else { "FAIL" },
            k + 1,
            o.detail,
            started.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {} of 10 criteria passed", 10 - failures);
    if failures > 0 {
        std::process::exit(1);
    }
}

fn laplace_vector(seed: u64, index: u64, dim: usize, scale: f64) -> Vec<f64> {
    let mut g = stream(seed, Purpose::Test, 100, index);
    let exp = Exp::new(1.0 / scale).expect("positive rate");
    (0..dim)
        .map(|_| {
            let magnitude: f64 = exp.sample(&mut g);
            if g.random::<bool>() {
                magnitude
            } else {
                -magnitude
            }
        })
        .collect()
}

fn codec_roundtrip() -> Outcome {
    let started = Instant::now();
    let mut mismatches = 0;
    for case in 0..CODEC_CASES as u64 {
        let mut g = stream(1, Purpose::Test, 1, case);
        let dim = g.random_range(1..=512usize);
        let levels = g.random_range(2..=32u16);
        let alphabet = levels + 1;
        let symbols: Vec<Symbol> = match case % 5 {
            0 => vec![Symbol::ZERO; dim],
            1 => vec![Symbol::from_index(g.random_range(0..alphabet)); dim],
            2 => (0..dim)
                .map(|_| {
                    if g.random::<f64>() < 0.9 {
                        Symbol::ZERO
                    } else {
                        Symbol::from_index(g.random_range(0..alphabet))
                    }
                })
                .collect(),
            3 => {
                // Geometric-looking skew towards low indices.
                (0..dim)
                    .map(|_| {
                        let u: f64 = g.random();
                        let idx = ((-u.ln()) * 2.0) as u16;
                        Symbol::from_index(idx.min(levels))
                    })
                    .collect()
            }
            _ => (0..dim)
                .map(|_| Symbol::from_index(g.random_range(0..alphabet)))
                .collect(),
        };
        let q = QuantizedResidual {
            symbols,
            min_val: g.random_range(-5.0..5.0),
            range: if case % 7 == 0 {
                0.0
            } else {
                g.random_range(0.0..10.0)
            },
            levels_count: levels,
        };
        let q = if q.range == 0.0 {
            // Zero range allows only Z and level 0.
            QuantizedResidual {
                symbols: q
                    .symbols
                    .iter()
                    .map(|s| if s.is_zero() { *s } else { Symbol::level(0) })
                    .collect(),
                ..q
            }
        } else {
            q
        };
        let ok = codec::encode(&q)
            .and_then(|m| codec::decode(&through_bytes(&m)))
            .map(|back| {
                back.symbols == q.symbols
                    && back.levels_count == q.levels_count
                    && back.min_val.to_bits() == q.min_val.to_bits()
                    && back.range.to_bits() == q.range.to_bits()
            })
            .unwrap_or(false);
        if !ok {
            mismatches += 1;
        }
    }
    let elapsed = started.elapsed();
    outcome(
        mismatches == 0 && elapsed < CODEC_TIME_LIMIT,
        format!(
            "{mismatches} mismatches in {CODEC_CASES} cases, {:.2}s (limit {}s)",
            elapsed.as_secs_f64(),
            CODEC_TIME_LIMIT.as_secs()
        ),
    )
}

/// The message as a receiver parses it from the wire.
fn through_bytes(m: &codec::EncodedMessage) -> codec::EncodedMessage {
    codec::EncodedMessage::from_bytes(&m.to_bytes()).expect("header parses")
}

fn contraction() -> Outcome {
    let started = Instant::now();
    let mut worst = f64::NEG_INFINITY;
    let mut worst_at = (0, 0);
    let mut pass = true;
    for levels in [4u16, 8, 16] {
        let limit = contraction_params(100, u32::from(levels)).bound * CONTRACTION_SLACK;
        for v in 0..CONTRACTION_VECTORS as u64 {
            let mut g = stream(2, Purpose::Test, u64::from(levels), v);
            let p: Vec<f64> = (0..100).map(|_| StandardNormal.sample(&mut g)).collect();
            let ratio = quantizer::empirical_contraction(&p, levels, CONTRACTION_TRIALS, v)
                .expect("nonzero vector");
            if ratio > limit {
                pass = false;
            }
            if ratio / limit > worst {
                worst = ratio / limit;
                worst_at = (levels, v);
            }
        }
    }
    let elapsed = started.elapsed();
    outcome(
        pass && elapsed < CONTRACTION_TIME_LIMIT,
        format!(
            "worst ratio/bound {worst:.4} (L={}, vector {}), limit {CONTRACTION_SLACK}, {:.1}s (limit {}s)",
            worst_at.0,
            worst_at.1,
            elapsed.as_secs_f64(),
            CONTRACTION_TIME_LIMIT.as_secs()
        ),
    )
}

fn type_bound() -> Outcome {
    let slack = 16.0 * (f64::from(RATE_LEVELS) + 1.0) + 128.0;
    let mut worst_margin = f64::INFINITY;
    let mut violations = 0;
    for v in 0..RATE_VECTORS as u64 {
        let p = laplace_vector(3, v, RATE_DIM, LAPLACE_SCALE);
        let mut dither = stream(3, Purpose::Dither, 0, v);
        let q = quantizer::quantize(&p, RATE_LEVELS, &mut dither).expect("finite input");
        let msg = codec::encode(&q).expect("valid residual");
        let limit = RATE_FACTOR * RATE_DIM as f64 * bit_bound(&compute_type_vector(&q)) + slack;
        let margin = limit - msg.payload_bit_len as f64;
        if margin < 0.0 {
            violations += 1;
        }
        worst_margin = worst_margin.min(margin);
    }
    outcome(
        violations == 0,
        format!("{violations} of {RATE_VECTORS} vectors over the limit, smallest margin {worst_margin:.0} bits"),
    )
}

fn rate_saturation() -> Outcome {
    const DITHERS: u64 = 10;
    let p = laplace_vector(4, 0, RATE_DIM, LAPLACE_SCALE);
    let rates: Vec<f64> = SWEEP_LEVELS
        .iter()
        .map(|&levels| {
            let total: usize = (0..DITHERS)
                .map(|k| {
                    let mut dither = stream(4, Purpose::Dither, u64::from(levels), k);
                    let q = quantizer::quantize(&p, levels, &mut dither).expect("finite input");
                    codec::encode(&q).expect("valid residual").payload_bit_len
                })
                .sum();
            total as f64 / (DITHERS as f64 * RATE_DIM as f64)
        })
        .collect();
    let first: Vec<f64> = rates.windows(2).map(|w| w[1] - w[0]).collect();
    let second: Vec<f64> = first.windows(2).map(|w| w[1] - w[0]).collect();
    let nondecreasing = first.iter().all(|d| *d >= 0.0);
    let concave = second.iter().all(|d| *d < 0.0);
    outcome(
        nondecreasing && concave,
        format!(
            "bits/coord {} at L={SWEEP_LEVELS:?}; second differences {}",
            fmt_list(&rates),
            fmt_list(&second)
        ),
    )
}

fn fmt_list(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.3}")).collect();
    format!("[{}]", parts.join(", "))
}

/// Runs and reference values shared by the protocol-level criteria.
struct Shared<'a> {
    dir: &'a Path,
    base: ExperimentConfig,
    main: Option<(RunArtifact, Duration)>,
    reference: Option<f64>,
}

impl<'a> Shared<'a> {
    fn new(dir: &'a Path) -> Shared<'a> {
        let base = ExperimentConfig {
            task: TaskName::Logistic,
            data_path: None,
            samples: 5000,
            features: 200,
            sparsity: 0.1,
            classes: 2,
            hidden: 1,
            test_samples: 0,
            topology: "ring10".to_owned(),
            topology_path: None,
            n_nodes: 10,
            eta: 0.05,
            mu: 1e-3,
            gamma: 1.0,
            levels: 8,
            rounds: 2000,
            batch_size: 64,
            seed: 7,
            metric_every: 10,
            codec: Compressor::Malcom,
            output: None,
            cutoff_objective: None,
            threads: 1,
            record_messages: false,
            init_scale: None,
        };
        Shared {
            dir,
            base,
            main: None,
            reference: None,
        }
    }

    fn main_run(&mut self) -> &(RunArtifact, Duration) {
        if self.main.is_none() {
            let started = Instant::now();
            let artifact = harness::run(&self.base, &self.dir.join("main")).expect("main run");
            self.main = Some((artifact, started.elapsed()));
        }
        self.main.as_ref().expect("just set")
    }

    fn reference_objective(&mut self) -> f64 {
        if let Some(r) = self.reference {
            return r;
        }
        let (train, _) = self.base.build_data().expect("data");
        let shards =
            tasks::partition(&train, self.base.n_nodes, self.base.seed).expect("partition");
        let kind = ModelKind::Logistic {
            features: train.dim,
        };
        let r = centralized_reference(&kind, &shards, self.base.mu, REFERENCE_TOL, 200_000)
            .expect("reference");
        self.reference = Some(r.objective.total);
        r.objective.total
    }

    fn run_variant(&self, name: &str, config: &ExperimentConfig) -> RunArtifact {
        harness::run(config, &self.dir.join(name)).expect("variant run")
    }
}

fn average_preservation(shared: &mut Shared) -> Outcome {
    let (artifact, _) = shared.main_run();
    let (worst_round, worst) = artifact
        .rounds
        .iter()
        .map(|m| (m.round, m.mean_drift))
        .fold((0, 0.0f64), |acc, x| if x.1 > acc.1 { x } else { acc });
    outcome(
        worst <= DRIFT_LIMIT && artifact.rounds.len() == 2000,
        format!(
            "max |mean x - mean z| = {worst:.3e} at round {worst_round} (limit {DRIFT_LIMIT:e})"
        ),
    )
}

fn convergence(shared: &mut Shared) -> Outcome {
    let f_ref = shared.reference_objective();
    let (artifact, elapsed) = shared.main_run();
    let rows = &artifact.rounds;
    let t = rows.len() as u64;
    let final_obj = rows.last().expect("rounds ran").objective.total;
    let rel = (final_obj - f_ref).abs() / f_ref.abs();
    let window = t / 10;
    let mean_pg = |lo: u64, hi: u64| {
        let v: Vec<f64> = rows
            .iter()
            .filter(|m| m.round >= lo && m.round <= hi)
            .filter_map(|m| m.proj_grad_sq)
            .collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    let early = mean_pg(1, window);
    let late = mean_pg(t - window + 1, t);
    let c100 = rows[99].consensus_sq;
    let c_end = rows.last().expect("rounds ran").consensus_sq;
    let a = rel <= OBJECTIVE_REL_TOL;
    let b = late <= PROJ_GRAD_RATIO * early;
    let c = c_end < c100;
    outcome(
        a && b && c && *elapsed < RUN_TIME_LIMIT,
        format!(
            "(a) objective {final_obj:.6} vs reference {f_ref:.6}, rel {rel:.4} [{}]; (b) |g|^2 late/early {:.4} [{}]; (c) consensus {c_end:.4e} at T vs {c100:.4e} at 100 [{}]; run {:.1}s",
            ok(a),
            late / early,
            ok(b),
            ok(c),
            elapsed.as_secs_f64()
        ),
    )
}

fn ok(b: bool) -> &'static str {
    if b {
        "ok"
    } else {
        "fail"
    }
}

fn compression(shared: &mut Shared) -> Outcome {
    let f_ref = shared.reference_objective();
    let config = ExperimentConfig {
        cutoff_objective: Some(f_ref * (1.0 + OBJECTIVE_REL_TOL)),
        ..shared.base.clone()
    };
    let cmp = harness::compare_codecs(&config, &shared.dir.join("compare")).expect("compare");
    let bits = |c: Compressor| cmp.get(c).expect("codec ran");
    let (m, p, n) = (
        bits(Compressor::Malcom),
        bits(Compressor::PerEntry),
        bits(Compressor::None),
    );
    let ratio = m.bits_to_cutoff as f64 / n.bits_to_cutoff as f64;
    let reached = m.reached && p.reached && n.reached;
    let pass = reached
        && m.bits_to_cutoff < p.bits_to_cutoff
        && p.bits_to_cutoff < n.bits_to_cutoff
        && ratio <= MALCOM_TO_NONE_LIMIT;
    outcome(
        pass,
        format!(
            "bits to objective {:.6}: malcom {} (round {:?}), per-entry {} (round {:?}), none {} (round {:?}); malcom/none {ratio:.4} (limit {MALCOM_TO_NONE_LIMIT})",
            cmp.cutoff_objective,
            m.bits_to_cutoff,
            m.round_reached,
            p.bits_to_cutoff,
            p.round_reached,
            n.bits_to_cutoff,
            n.round_reached
        ),
    )
}

fn threshold_trend(shared: &mut Shared) -> Outcome {
    let base_mu = shared.base.mu;
    let main_bits = shared.main_run().0.summary.total_bits;
    let bits: Vec<u64> = MU_SWEEP
        .iter()
        .map(|&mu| {
            if mu == base_mu {
                main_bits
            } else {
                let cfg = ExperimentConfig {
                    mu,
                    ..shared.base.clone()
                };
                shared
                    .run_variant(&format!("mu-{mu}"), &cfg)
                    .summary
                    .total_bits
            }
        })
        .collect();
    let pass = bits.windows(2).all(|w| w[1] <= w[0]);
    let parts: Vec<String> = MU_SWEEP
        .iter()
        .zip(&bits)
        .map(|(mu, b)| format!("mu={mu}: {b}"))
        .collect();
    outcome(pass, format!("cumulative bits at T: {}", parts.join(", ")))
}

fn determinism(shared: &mut Shared) -> Outcome {
    let one = std::fs::read(&shared.main_run().0.metrics_path).expect("metrics");
    let cfg = ExperimentConfig {
        threads: 8,
        ..shared.base.clone()
    };
    let eight = std::fs::read(shared.run_variant("threads-8", &cfg).metrics_path).expect("metrics");
    let rows = harness::read_metrics(&shared.main_run().0.metrics_path)
        .map(|m| m.rows.len())
        .unwrap_or(0);
    outcome(
        one == eight && rows == 2000,
        format!(
            "metrics.csv at 1 and 8 threads: {} ({} bytes, {rows} rows)",
            if one == eight { "identical" } else { "differ" },
            one.len()
        ),
    )
}

/// Central differences with step 1e-5, compared as
/// `|analytic - numeric| / max(|analytic|, |numeric|, 1e-8)`.
fn gradients() -> Outcome {
    let logistic_data = tasks::synth_logistic(10, 64, 12, 0.5);
    let logistic = ModelKind::Logistic { features: 12 };
    let blobs = tasks::synth_blobs(11, 64, 6, 4);
    let mlp = ModelKind::Mlp(tasks::MlpShape {
        inputs: 6,
        hidden: 5,
        classes: 4,
    });
    let mut worst = [0.0f64; 2];
    for (slot, (kind, data)) in [(logistic, &logistic_data), (mlp, &blobs)]
        .into_iter()
        .enumerate()
    {
        for probe in 0..FD_PROBES as u64 {
            let mut g = stream(12, Purpose::Test, slot as u64, probe);
            let params: Vec<f64> = (0..kind.dim())
                .map(|_| {
                    let v: f64 = StandardNormal.sample(&mut g);
                    0.5 * v
                })
                .collect();
            let rows: Vec<usize> = (0..data.len())
                .filter(|_| g.random::<f64>() < 0.5)
                .collect();
            let rows = if rows.is_empty() { vec![0] } else { rows };
            let (_, grad) = kind.loss_grad(&params, data, &rows).expect("gradient");
            let j = g.random_range(0..kind.dim());
            let h = 1e-5;
            let mut plus = params.clone();
            plus[j] += h;
            let mut minus = params.clone();
            minus[j] -= h;
            let numeric = (kind.loss(&plus, data, &rows).expect("loss")
                - kind.loss(&minus, data, &rows).expect("loss"))
                / (2.0 * h);
            let rel = (grad[j] - numeric).abs() / grad[j].abs().max(numeric.abs()).max(1e-8);
            worst[slot] = worst[slot].max(rel);
        }
    }
    outcome(
        worst.iter().all(|w| *w < FD_REL_TOL),
        format!(
            "worst relative error over {FD_PROBES} probes: logistic {:.2e}, mlp {:.2e} (limit {FD_REL_TOL:e})",
            worst[0], worst[1]
        ),
    )
}
