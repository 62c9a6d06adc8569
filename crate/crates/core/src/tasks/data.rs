use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::rng::{self, Purpose};

/// Row-major feature matrix with one label per row.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub dim: usize,
    pub features: Vec<f64>,
    pub labels: Vec<f64>,
}

impl Dataset {
    pub fn new(
        name: impl Into<String>,
        dim: usize,
        features: Vec<f64>,
        labels: Vec<f64>,
    ) -> Result<Dataset> {
        if dim == 0 {
            return Err(Error::invalid("dataset needs at least one feature"));
        }
        if features.len() != dim * labels.len() {
            return Err(Error::invalid(format!(
                "{} feature values do not form {} rows of {dim}",
                features.len(),
                labels.len()
            )));
        }
        if let Some(i) = features.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "non-finite feature in row {}",
                i / dim
            )));
        }
        Ok(Dataset {
            name: name.into(),
            dim,
            features,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.features[r * self.dim..(r + 1) * self.dim]
    }

    pub fn select(&self, rows: &[usize], name: impl Into<String>) -> Dataset {
        let mut features = Vec::with_capacity(rows.len() * self.dim);
        for &r in rows {
            features.extend_from_slice(self.row(r));
        }
        Dataset {
            name: name.into(),
            dim: self.dim,
            features,
            labels: rows.iter().map(|&r| self.labels[r]).collect(),
        }
    }

    /// Stack datasets with the same feature dimension.
    pub fn concat(parts: &[Dataset], name: impl Into<String>) -> Result<Dataset> {
        let dim = parts
            .first()
            .map(|p| p.dim)
            .ok_or_else(|| Error::invalid("nothing to concatenate"))?;
        if parts.iter().any(|p| p.dim != dim) {
            return Err(Error::invalid("datasets have different feature dimensions"));
        }
        Ok(Dataset {
            name: name.into(),
            dim,
            features: parts
                .iter()
                .flat_map(|p| p.features.iter().copied())
                .collect(),
            labels: parts
                .iter()
                .flat_map(|p| p.labels.iter().copied())
                .collect(),
        })
    }
}

/// Gaussian features with labels drawn from a logistic model whose weight
/// vector has `ceil(sparsity * d)` nonzero entries.
///
/// Nonzero weights are standard normal scaled by `2 / sqrt(k)`, so logits
/// have a standard deviation near 2 regardless of `k`.
pub fn synth_logistic(seed: u64, samples: usize, dim: usize, sparsity: f64) -> Dataset {
    let mut g = rng::stream(seed, Purpose::Data, 0, 0);
    let k = ((sparsity.clamp(0.0, 1.0) * dim as f64).ceil() as usize).min(dim);
    let mut support: Vec<usize> = (0..dim).collect();
    support.shuffle(&mut g);
    let mut weights = vec![0.0; dim];
    let scale = if k > 0 { 2.0 / (k as f64).sqrt() } else { 0.0 };
    for &j in &support[..k] {
        let v: f64 = StandardNormal.sample(&mut g);
        weights[j] = scale * v;
    }

    let mut features = Vec::with_capacity(samples * dim);
    let mut labels = Vec::with_capacity(samples);
    for _ in 0..samples {
        let start = features.len();
        features.extend((0..dim).map(|_| -> f64 { StandardNormal.sample(&mut g) }));
        let z: f64 = features[start..]
            .iter()
            .zip(&weights)
            .map(|(a, b)| a * b)
            .sum();
        let p = 1.0 / (1.0 + (-z).exp());
        labels.push(if g.random::<f64>() < p { 1.0 } else { -1.0 });
    }
    Dataset {
        name: format!("synth-logistic-{seed}"),
        dim,
        features,
        labels,
    }
}

/// Gaussian blobs: `classes` clouds with standard deviation 0.5 around
/// random centers of norm about 2. Labels are class indices.
pub fn synth_blobs(seed: u64, samples: usize, dim: usize, classes: usize) -> Dataset {
    let mut g = rng::stream(seed, Purpose::Data, 1, 0);
    let center_scale = 2.0 / (dim as f64).sqrt();
    let centers: Vec<Vec<f64>> = (0..classes)
        .map(|_| {
            (0..dim)
                .map(|_| {
                    let v: f64 = StandardNormal.sample(&mut g);
                    center_scale * v
                })
                .collect()
        })
        .collect();
    let mut features = Vec::with_capacity(samples * dim);
    let mut labels = Vec::with_capacity(samples);
    for _ in 0..samples {
        let c = g.random_range(0..classes);
        for &mu in &centers[c] {
            let v: f64 = StandardNormal.sample(&mut g);
            features.push(mu + 0.5 * v);
        }
        labels.push(c as f64);
    }
    Dataset {
        name: format!("synth-blobs-{seed}"),
        dim,
        features,
        labels,
    }
}

/// Shuffle the rows and deal them into `n` disjoint shards whose sizes
/// differ by at most one.
pub fn partition(ds: &Dataset, n: usize, seed: u64) -> Result<Vec<Dataset>> {
    if n == 0 || n > ds.len() {
        return Err(Error::invalid(format!(
            "cannot split {} samples across {n} nodes",
            ds.len()
        )));
    }
    let mut order: Vec<usize> = (0..ds.len()).collect();
    order.shuffle(&mut rng::stream(seed, Purpose::Partition, 0, 0));
    let base = ds.len() / n;
    let extra = ds.len() % n;
    let mut shards = Vec::with_capacity(n);
    let mut start = 0;
    for i in 0..n {
        let size = base + usize::from(i < extra);
        shards.push(ds.select(&order[start..start + size], format!("{}/{i}", ds.name)));
        start += size;
    }
    Ok(shards)
}

/// Row indices of node `node`'s mini-batch in round `round`.
///
/// Each epoch is a fresh permutation of the shard keyed by
/// `(seed, node, epoch)`; round `t` takes positions `[t B, (t + 1) B)` of
/// the concatenated epochs, so every row is used once per epoch.
pub fn batch_indices(
    seed: u64,
    node: usize,
    round: u64,
    shard_len: usize,
    batch: usize,
) -> Vec<usize> {
    let batch = batch.clamp(1, shard_len.max(1));
    let len = shard_len as u64;
    let start = round * batch as u64;
    let mut out = Vec::with_capacity(batch);
    let mut epoch = start / len;
    let mut perm = epoch_permutation(seed, node, epoch, shard_len);
    for pos in start..start + batch as u64 {
        if pos / len != epoch {
            epoch = pos / len;
            perm = epoch_permutation(seed, node, epoch, shard_len);
        }
        out.push(perm[(pos % len) as usize]);
    }
    out
}

fn epoch_permutation(seed: u64, node: usize, epoch: u64, len: usize) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..len).collect();
    perm.shuffle(&mut rng::stream(seed, Purpose::Batch, node as u64, epoch));
    perm
}

/// Read a numeric CSV whose last column is the label. A first row with any
/// non-numeric cell is taken as a header.
pub fn load_csv(path: &Path) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut width: Option<usize> = None;
    for (k, record) in reader.records().enumerate() {
        let record = record?;
        let line = record.position().map_or(k as u64 + 1, |p| p.line());
        let parsed: std::result::Result<Vec<f64>, usize> = record
            .iter()
            .enumerate()
            .map(|(i, c)| c.parse::<f64>().map_err(|_| i))
            .collect();
        let values = match parsed {
            Ok(v) => v,
            Err(_) if k == 0 => continue,
            Err(col) => {
                return Err(Error::Parse {
                    path: path.to_owned(),
                    line,
                    reason: format!("column {} is not numeric: {:?}", col + 1, &record[col]),
                })
            }
        };
        if values.len() < 2 {
            return Err(Error::Parse {
                path: path.to_owned(),
                line,
                reason: "need at least one feature and a label".to_owned(),
            });
        }
        match width {
            None => width = Some(values.len()),
            Some(w) if w != values.len() => {
                return Err(Error::Parse {
                    path: path.to_owned(),
                    line,
                    reason: format!("expected {w} columns, found {}", values.len()),
                })
            }
            _ => {}
        }
        if let Some(col) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Parse {
                path: path.to_owned(),
                line,
                reason: format!("column {} is not finite", col + 1),
            });
        }
        let (x, y) = values.split_at(values.len() - 1);
        features.extend_from_slice(x);
        labels.push(y[0]);
    }
    let Some(width) = width else {
        return Err(Error::Parse {
            path: path.to_owned(),
            line: 1,
            reason: "no data rows".to_owned(),
        });
    };
    let name = path
        .file_stem()
        .map_or_else(|| "csv".to_owned(), |s| s.to_string_lossy().into_owned());
    Dataset::new(name, width - 1, features, labels)
}

/// Write `ds` as CSV with a header row `x0,...,label`. Floats are written
/// in shortest round-trip form so [`load_csv`] reproduces them exactly.
pub fn write_csv(ds: &Dataset, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    let header: Vec<String> = (0..ds.dim)
        .map(|j| format!("x{j}"))
        .chain(std::iter::once("label".to_owned()))
        .collect();
    writeln!(out, "{}", header.join(","))?;
    for r in 0..ds.len() {
        let cells: Vec<String> = ds
            .row(r)
            .iter()
            .chain(std::iter::once(&ds.labels[r]))
            .map(|v| format!("{v:?}"))
            .collect();
        writeln!(out, "{}", cells.join(","))?;
    }
    out.flush()?;
    Ok(())
}
