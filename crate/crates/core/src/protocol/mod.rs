//! Per-node state machine and the synchronous round engine.
//!
//! One round, for every node `i` in parallel:
//!
//! 1. `z_i = prox(x_i - eta * grad_i)` on a fresh mini-batch;
//! 2. residual `p_i = z_i - y_i`, quantized and encoded into one message;
//! 3. the message goes to every neighbor; each receiver decodes the bytes
//!    and adds the result to its replica of `y_i`, and the sender adds its
//!    own dequantized residual to `y_i`;
//! 4. `x_i = z_i + gamma * sum_j w_ij (y_j - y_i)`.
//!
//! Steps 1-2 and 3-4 are separated by a barrier. All cross-node sums run in
//! node order, so results do not depend on the thread count.

mod log;

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codec::{self, EncodedMessage};
use crate::error::{Error, Result};
use crate::optimizer::{self, HyperParams, ObjectiveReport};
use crate::quantizer::{self, QuantizedResidual};
use crate::rng::{self, Purpose};
use crate::tasks::{batch_indices, Dataset, ModelKind};
use crate::topology::Topology;

pub use log::{read_message_log, LoggedMessage, MessageLog};

/// How residuals are put on the wire.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Compressor {
    /// Dithered quantizer plus the vector source coder.
    #[default]
    Malcom,
    /// Same quantizer, each symbol coded on its own with Elias omega.
    #[serde(rename = "per_entry_baseline")]
    PerEntry,
    /// Exact residual as raw little-endian doubles, 64 bits per entry.
    None,
}

impl Compressor {
    pub fn name(self) -> &'static str {
        match self {
            Compressor::Malcom => "malcom",
            Compressor::PerEntry => "per_entry_baseline",
            Compressor::None => "none",
        }
    }

    pub const ALL: [Compressor; 3] = [Compressor::Malcom, Compressor::PerEntry, Compressor::None];
}

impl std::str::FromStr for Compressor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Compressor> {
        Compressor::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown codec {s:?}")))
    }
}

/// One node's model, prox output and replicas.
#[derive(Clone, Debug, PartialEq)]
pub struct NodeState {
    pub node_id: usize,
    pub x: Vec<f64>,
    pub z: Vec<f64>,
    /// This node's public replica `y_i`.
    pub y_self: Vec<f64>,
    /// Replicas `y_j` of each neighbor.
    pub y_neighbors: BTreeMap<usize, Vec<f64>>,
    /// Rounds completed; together with the seed this addresses the node's
    /// batch and dither streams.
    pub rounds_done: u64,
}

impl NodeState {
    pub fn new(node_id: usize, init: Vec<f64>, neighbors: &[usize]) -> NodeState {
        let dim = init.len();
        NodeState {
            node_id,
            z: init.clone(),
            x: init,
            y_self: vec![0.0; dim],
            y_neighbors: neighbors.iter().map(|&j| (j, vec![0.0; dim])).collect(),
            rounds_done: 0,
        }
    }
}

/// SGD step and prox on the rows `rows` of `shard`. Sets `state.z` and
/// returns the residual `z - y_self`.
pub fn local_step(
    state: &mut NodeState,
    kind: &ModelKind,
    shard: &Dataset,
    rows: &[usize],
    hp: &HyperParams,
) -> Result<Vec<f64>> {
    let round = state.rounds_done;
    let (_, grad) = kind.loss_grad(&state.x, shard, rows)?;
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite {
            what: "gradient",
            node: state.node_id,
            round,
        });
    }
    let mut z = optimizer::sgd_step(&state.x, &grad, hp.eta);
    optimizer::soft_threshold_in_place(&mut z, hp.threshold());
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            what: "model",
            node: state.node_id,
            round,
        });
    }
    let residual = z.iter().zip(&state.y_self).map(|(a, b)| a - b).collect();
    state.z = z;
    Ok(residual)
}

/// Per-message coding statistics.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CodecStats {
    /// Payload bits (without header) per coordinate.
    pub payload_bits_per_coord: f64,
    /// Bits-per-coordinate bound of the message's type vector.
    pub bound_per_coord: f64,
    /// Mean absolute residual entry.
    pub rho_hat: f64,
    pub range: f64,
}

/// An encoded residual ready to be broadcast.
#[derive(Clone, Debug, PartialEq)]
pub struct Outgoing {
    pub bytes: Vec<u8>,
    /// Bits counted per directed edge.
    pub wire_bits: u64,
    /// What every receiver will reconstruct.
    pub dequantized: Vec<f64>,
    pub stats: CodecStats,
}

/// Quantize and encode `residual`. `dither_key` addresses the dither
/// stream as `(node, round)`.
pub fn compress(
    compressor: Compressor,
    residual: &[f64],
    levels: u16,
    seed: u64,
    dither_key: (u64, u64),
) -> Result<Outgoing> {
    let dim = residual.len() as f64;
    let rho_hat = residual.iter().map(|v| v.abs()).sum::<f64>() / dim;
    if compressor == Compressor::None {
        let bytes: Vec<u8> = residual.iter().flat_map(|v| v.to_le_bytes()).collect();
        return Ok(Outgoing {
            wire_bits: 8 * bytes.len() as u64,
            bytes,
            dequantized: residual.to_vec(),
            stats: CodecStats {
                payload_bits_per_coord: 64.0,
                bound_per_coord: 64.0,
                rho_hat,
                range: f64::NAN,
            },
        });
    }
    let mut dither = rng::stream(seed, Purpose::Dither, dither_key.0, dither_key.1);
    let q = quantizer::quantize(residual, levels, &mut dither)?;
    let msg = match compressor {
        Compressor::Malcom => codec::encode(&q)?,
        _ => codec::baseline_per_entry_encode(&q)?,
    };
    let tv = codec::compute_type_vector(&q);
    Ok(Outgoing {
        bytes: msg.to_bytes(),
        wire_bits: msg.wire_bits(),
        dequantized: quantizer::dequantize(&q),
        stats: CodecStats {
            payload_bits_per_coord: msg.payload_bit_len as f64 / dim,
            bound_per_coord: codec::bit_bound(&tv),
            rho_hat,
            range: q.range,
        },
    })
}

/// Receiver side of [`compress`].
pub fn decompress(compressor: Compressor, bytes: &[u8], dim: usize) -> Result<Vec<f64>> {
    if compressor == Compressor::None {
        if bytes.len() != 8 * dim {
            return Err(Error::decode(
                8 * bytes.len(),
                format!("expected {} raw bytes, got {}", 8 * dim, bytes.len()),
            ));
        }
        return Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect());
    }
    let msg = EncodedMessage::from_bytes(bytes)?;
    let q: QuantizedResidual = match compressor {
        Compressor::Malcom => codec::decode(&msg)?,
        _ => codec::baseline_per_entry_decode(&msg)?,
    };
    if q.dim() != dim {
        return Err(Error::decode(
            0,
            format!("message carries {} entries, expected {dim}", q.dim()),
        ));
    }
    Ok(quantizer::dequantize(&q))
}

/// Replica updates for one node: `y_self += own`, and for every neighbor
/// `j`, `y_j += decode(message_j)`.
pub fn exchange(
    state: &mut NodeState,
    own: &[f64],
    inbox: &[(usize, &[u8])],
    compressor: Compressor,
) -> Result<()> {
    let dim = state.x.len();
    add_into(&mut state.y_self, own);
    for &(sender, bytes) in inbox {
        let q = decompress(compressor, bytes, dim).map_err(|e| Error::Exchange {
            sender,
            receiver: state.node_id,
            round: state.rounds_done,
            source: Box::new(e),
        })?;
        let replica = state.y_neighbors.get_mut(&sender).ok_or_else(|| {
            Error::invalid(format!(
                "node {} got a message from non-neighbor {sender}",
                state.node_id
            ))
        })?;
        add_into(replica, &q);
    }
    Ok(())
}

fn add_into(acc: &mut [f64], delta: &[f64]) {
    acc.iter_mut().zip(delta).for_each(|(a, d)| *a += d);
}

/// `z + gamma * sum_{j != i} w_ij (y_j - y_i)`, neighbors in ascending order.
pub fn aggregate(state: &NodeState, gamma: f64, w_row: &[f64]) -> Vec<f64> {
    let mut mix = vec![0.0; state.z.len()];
    for (&j, y_j) in &state.y_neighbors {
        let w = w_row[j];
        mix.iter_mut()
            .zip(y_j.iter().zip(&state.y_self))
            .for_each(|(m, (a, b))| *m += w * (a - b));
    }
    state
        .z
        .iter()
        .zip(&mix)
        .map(|(z, m)| z + gamma * m)
        .collect()
}

/// Everything reported after a round.
#[derive(Clone, Debug, PartialEq)]
pub struct RoundMetrics {
    /// 1-based: the row for round `t` describes the models after `t` rounds.
    pub round: u64,
    pub objective: ObjectiveReport,
    /// `sum_i |x_i - x_bar|^2`.
    pub consensus_sq: f64,
    /// `|g(x_bar)|^2` with full-batch gradients, on metric rounds.
    pub proj_grad_sq: Option<f64>,
    pub bits_this_round: u64,
    pub cum_bits: u64,
    /// Test accuracy at `x_bar`, on metric rounds when a test set exists.
    pub test_metric: Option<f64>,
    /// `max_k |mean_i x_i(t+1)[k] - mean_i z_i(t)[k]|`.
    pub mean_drift: f64,
    pub node_stats: Vec<CodecStats>,
}

/// Static inputs of an engine.
#[derive(Clone, Debug)]
pub struct EngineSetup {
    pub kind: ModelKind,
    pub topology: Topology,
    pub shards: Vec<Dataset>,
    pub test: Option<Dataset>,
    pub hp: HyperParams,
    pub compressor: Compressor,
    pub seed: u64,
    /// Worker threads; 0 lets the pool pick.
    pub threads: usize,
    /// Projected gradient and test metric cadence, in rounds.
    pub metric_every: u64,
    /// Shared initial model.
    pub init: Vec<f64>,
}

pub struct Engine {
    setup: EngineSetup,
    nodes: Vec<NodeState>,
    neighbors: Vec<Vec<usize>>,
    cum_bits: u64,
    pool: rayon::ThreadPool,
    log: Option<MessageLog>,
}

impl Engine {
    pub fn new(setup: EngineSetup) -> Result<Engine> {
        setup.hp.validate()?;
        let n = setup.topology.n;
        if setup.shards.len() != n {
            return Err(Error::Config(format!(
                "{} shards for {n} nodes",
                setup.shards.len()
            )));
        }
        if setup.init.len() != setup.kind.dim() {
            return Err(Error::Config(format!(
                "initial model has {} entries, model needs {}",
                setup.init.len(),
                setup.kind.dim()
            )));
        }
        for (i, shard) in setup.shards.iter().enumerate() {
            if shard.is_empty() {
                return Err(Error::Config(format!("node {i} has no data")));
            }
            setup.kind.check_labels(shard)?;
        }
        if setup.metric_every == 0 {
            return Err(Error::Config("metric_every must be positive".to_owned()));
        }
        let neighbors: Vec<Vec<usize>> = (0..n).map(|i| setup.topology.neighbors(i)).collect();
        let nodes = neighbors
            .iter()
            .enumerate()
            .map(|(i, nb)| NodeState::new(i, setup.init.clone(), nb))
            .collect();
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(setup.threads)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        Ok(Engine {
            setup,
            nodes,
            neighbors,
            cum_bits: 0,
            pool,
            log: None,
        })
    }

    /// Append every message sent from now on to a length-prefixed log.
    pub fn record_messages(&mut self, path: &Path) -> Result<()> {
        self.log = Some(MessageLog::create(path)?);
        Ok(())
    }

    pub fn nodes(&self) -> &[NodeState] {
        &self.nodes
    }

    pub fn setup(&self) -> &EngineSetup {
        &self.setup
    }

    pub fn rounds_done(&self) -> u64 {
        self.nodes[0].rounds_done
    }

    pub fn cum_bits(&self) -> u64 {
        self.cum_bits
    }

    pub fn mean_model(&self) -> Vec<f64> {
        mean_of(self.nodes.iter().map(|s| s.x.as_slice()))
    }

    /// True when every neighbor replica equals the owner's `y_self` bit for
    /// bit.
    pub fn replicas_coherent(&self) -> bool {
        self.nodes.iter().all(|node| {
            node.y_neighbors.iter().all(|(&j, y)| {
                y.iter()
                    .zip(&self.nodes[j].y_self)
                    .all(|(a, b)| a.to_bits() == b.to_bits())
            })
        })
    }

    pub fn run_round(&mut self) -> Result<RoundMetrics> {
        let setup = &self.setup;
        let round = self.rounds_done();
        let hp = setup.hp;

        let outgoing: Vec<Outgoing> = self.pool.install(|| {
            self.nodes
                .par_iter_mut()
                .map(|state| {
                    let i = state.node_id;
                    let shard = &setup.shards[i];
                    let rows = batch_indices(setup.seed, i, round, shard.len(), hp.batch_size);
                    let p = local_step(state, &setup.kind, shard, &rows, &hp)?;
                    compress(
                        setup.compressor,
                        &p,
                        hp.levels_count,
                        setup.seed,
                        (i as u64, round),
                    )
                })
                .collect::<Result<Vec<_>>>()
        })?;

        if let Some(log) = self.log.as_mut() {
            for (i, out) in outgoing.iter().enumerate() {
                log.append(round, i, &out.bytes)?;
            }
        }

        let neighbors = &self.neighbors;
        self.pool.install(|| {
            self.nodes
                .par_iter_mut()
                .map(|state| {
                    let i = state.node_id;
                    let inbox: Vec<(usize, &[u8])> = neighbors[i]
                        .iter()
                        .map(|&j| (j, outgoing[j].bytes.as_slice()))
                        .collect();
                    exchange(state, &outgoing[i].dequantized, &inbox, setup.compressor)?;
                    state.x = aggregate(state, hp.gamma, &setup.topology.weights[i]);
                    state.rounds_done += 1;
                    Ok(())
                })
                .collect::<Result<()>>()
        })?;

        let bits_this_round: u64 = outgoing
            .iter()
            .zip(neighbors)
            .map(|(out, nb)| out.wire_bits * nb.len() as u64)
            .sum();
        self.cum_bits += bits_this_round;
        let node_stats = outgoing.into_iter().map(|o| o.stats).collect();
        self.metrics(round + 1, bits_this_round, node_stats)
    }

    fn metrics(
        &self,
        round: u64,
        bits_this_round: u64,
        node_stats: Vec<CodecStats>,
    ) -> Result<RoundMetrics> {
        let setup = &self.setup;
        let kind = &setup.kind;
        let losses: Vec<f64> = self.pool.install(|| {
            self.nodes
                .par_iter()
                .map(|s| kind.full_loss(&s.x, &setup.shards[s.node_id]))
                .collect::<Result<Vec<_>>>()
        })?;
        let n = self.nodes.len() as f64;
        let smooth_part = losses.iter().sum::<f64>() / n;
        let l1_part = setup.hp.mu
            * self
                .nodes
                .iter()
                .map(|s| optimizer::l1_norm(&s.x))
                .sum::<f64>()
            / n;
        let objective = ObjectiveReport {
            smooth_part,
            l1_part,
            total: smooth_part + l1_part,
        };

        let x_bar = self.mean_model();
        let z_bar = mean_of(self.nodes.iter().map(|s| s.z.as_slice()));
        let mean_drift = x_bar
            .iter()
            .zip(&z_bar)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let consensus_sq = self
            .nodes
            .iter()
            .map(|s| {
                s.x.iter()
                    .zip(&x_bar)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
            })
            .sum();

        let metric_round = round == 1 || round.is_multiple_of(setup.metric_every);
        let proj_grad_sq = if metric_round {
            let grads: Vec<Vec<f64>> = self.pool.install(|| {
                setup
                    .shards
                    .par_iter()
                    .map(|ds| kind.full_loss_grad(&x_bar, ds).map(|(_, g)| g))
                    .collect::<Result<Vec<_>>>()
            })?;
            let grad = mean_of(grads.iter().map(Vec::as_slice));
            let g = optimizer::projected_gradient(&x_bar, &grad, setup.hp.eta, setup.hp.mu);
            Some(g.iter().map(|v| v * v).sum())
        } else {
            None
        };
        let test_metric = match (&setup.test, metric_round) {
            (Some(test), true) => Some(kind.accuracy(&x_bar, test)?),
            _ => None,
        };
        Ok(RoundMetrics {
            round,
            objective,
            consensus_sq,
            proj_grad_sq,
            bits_this_round,
            cum_bits: self.cum_bits,
            test_metric,
            mean_drift,
            node_stats,
        })
    }
}

/// Coordinate-wise mean, summing in iteration order.
fn mean_of<'a>(vectors: impl Iterator<Item = &'a [f64]>) -> Vec<f64> {
    let mut acc: Vec<f64> = Vec::new();
    let mut count = 0usize;
    for v in vectors {
        if acc.is_empty() {
            acc = vec![0.0; v.len()];
        }
        add_into(&mut acc, v);
        count += 1;
    }
    let n = count.max(1) as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    acc
}
