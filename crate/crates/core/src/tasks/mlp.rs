//! One-hidden-layer perceptron: `softmax(W2 tanh(W1 x + b1) + b2)` with
//! cross-entropy loss.
//!
//! Flat parameter layout: `W1` (hidden x inputs, row-major), `b1`, `W2`
//! (classes x hidden, row-major), `b2`.

use serde::{Deserialize, Serialize};

use super::Dataset;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpShape {
    pub inputs: usize,
    pub hidden: usize,
    pub classes: usize,
}

impl MlpShape {
    pub fn param_count(&self) -> usize {
        self.hidden * self.inputs + self.hidden + self.classes * self.hidden + self.classes
    }

    fn offsets(&self) -> (usize, usize, usize) {
        let b1 = self.hidden * self.inputs;
        let w2 = b1 + self.hidden;
        let b2 = w2 + self.classes * self.hidden;
        (b1, w2, b2)
    }
}

struct Forward {
    hidden: Vec<f64>,
    probs: Vec<f64>,
}

fn forward(shape: &MlpShape, params: &[f64], x: &[f64]) -> Forward {
    let (b1, w2, b2) = shape.offsets();
    let hidden: Vec<f64> = (0..shape.hidden)
        .map(|h| {
            let row = &params[h * shape.inputs..(h + 1) * shape.inputs];
            let pre: f64 = row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + params[b1 + h];
            pre.tanh()
        })
        .collect();
    let logits: Vec<f64> = (0..shape.classes)
        .map(|c| {
            let row = &params[w2 + c * shape.hidden..w2 + (c + 1) * shape.hidden];
            row.iter().zip(&hidden).map(|(a, b)| a * b).sum::<f64>() + params[b2 + c]
        })
        .collect();
    let top = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - top).exp()).collect();
    let norm: f64 = exps.iter().sum();
    Forward {
        hidden,
        probs: exps.into_iter().map(|e| e / norm).collect(),
    }
}

pub(crate) fn predict(shape: &MlpShape, params: &[f64], x: &[f64]) -> usize {
    let f = forward(shape, params, x);
    let mut best = 0;
    for (c, &p) in f.probs.iter().enumerate() {
        if p > f.probs[best] {
            best = c;
        }
    }
    best
}

pub fn loss(shape: &MlpShape, params: &[f64], data: &Dataset, rows: &[usize]) -> f64 {
    let total: f64 = rows
        .iter()
        .map(|&r| {
            let f = forward(shape, params, data.row(r));
            -f.probs[data.labels[r] as usize].ln()
        })
        .sum();
    total / rows.len() as f64
}

pub fn loss_grad(
    shape: &MlpShape,
    params: &[f64],
    data: &Dataset,
    rows: &[usize],
) -> (f64, Vec<f64>) {
    let (b1, w2, b2) = shape.offsets();
    let mut grad = vec![0.0; params.len()];
    let mut total = 0.0;
    let mut d_hidden = vec![0.0; shape.hidden];
    for &r in rows {
        let x = data.row(r);
        let label = data.labels[r] as usize;
        let f = forward(shape, params, x);
        total -= f.probs[label].ln();

        d_hidden.iter_mut().for_each(|v| *v = 0.0);
        for c in 0..shape.classes {
            let d_logit = f.probs[c] - if c == label { 1.0 } else { 0.0 };
            grad[b2 + c] += d_logit;
            let row = w2 + c * shape.hidden;
            for h in 0..shape.hidden {
                grad[row + h] += d_logit * f.hidden[h];
                d_hidden[h] += d_logit * params[row + h];
            }
        }
        for h in 0..shape.hidden {
            let d_pre = d_hidden[h] * (1.0 - f.hidden[h] * f.hidden[h]);
            grad[b1 + h] += d_pre;
            let row = h * shape.inputs;
            for (g, &xi) in grad[row..row + shape.inputs].iter_mut().zip(x) {
                *g += d_pre * xi;
            }
        }
    }
    let scale = 1.0 / rows.len() as f64;
    grad.iter_mut().for_each(|g| *g *= scale);
    (total * scale, grad)
}
