//! Desk-scale learning tasks: datasets, models and their exact gradients.

mod data;
pub mod logistic;
pub mod mlp;

pub use data::{
    batch_indices, load_csv, partition, synth_blobs, synth_logistic, write_csv, Dataset,
};
pub use mlp::MlpShape;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Model family and its shape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelKind {
    /// Binary logistic regression on `features` inputs, labels in {-1, +1}.
    Logistic { features: usize },
    /// One tanh hidden layer, softmax output.
    Mlp(MlpShape),
}

impl ModelKind {
    /// Number of trainable parameters.
    pub fn dim(&self) -> usize {
        match self {
            ModelKind::Logistic { features } => *features,
            ModelKind::Mlp(shape) => shape.param_count(),
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            ModelKind::Logistic { features } => *features,
            ModelKind::Mlp(shape) => shape.inputs,
        }
    }

    /// Mean loss and gradient over the rows `rows` of `data`.
    pub fn loss_grad(
        &self,
        params: &[f64],
        data: &Dataset,
        rows: &[usize],
    ) -> Result<(f64, Vec<f64>)> {
        self.check(params, data)?;
        if rows.is_empty() {
            return Err(Error::invalid("empty batch"));
        }
        Ok(match self {
            ModelKind::Logistic { .. } => logistic::loss_grad(params, data, rows),
            ModelKind::Mlp(shape) => mlp::loss_grad(shape, params, data, rows),
        })
    }

    /// Mean loss over the rows `rows` of `data`.
    pub fn loss(&self, params: &[f64], data: &Dataset, rows: &[usize]) -> Result<f64> {
        self.check(params, data)?;
        if rows.is_empty() {
            return Err(Error::invalid("empty batch"));
        }
        Ok(match self {
            ModelKind::Logistic { .. } => logistic::loss(params, data, rows),
            ModelKind::Mlp(shape) => mlp::loss(shape, params, data, rows),
        })
    }

    /// Full-batch loss and gradient.
    pub fn full_loss_grad(&self, params: &[f64], data: &Dataset) -> Result<(f64, Vec<f64>)> {
        let rows: Vec<usize> = (0..data.len()).collect();
        self.loss_grad(params, data, &rows)
    }

    pub fn full_loss(&self, params: &[f64], data: &Dataset) -> Result<f64> {
        let rows: Vec<usize> = (0..data.len()).collect();
        self.loss(params, data, &rows)
    }

    /// Task metric on `data`: classification accuracy.
    pub fn accuracy(&self, params: &[f64], data: &Dataset) -> Result<f64> {
        self.check(params, data)?;
        if data.is_empty() {
            return Err(Error::invalid("empty dataset"));
        }
        let correct = (0..data.len())
            .filter(|&r| match self {
                ModelKind::Logistic { .. } => {
                    let z = logistic::logit(params, data.row(r));
                    (z >= 0.0) == (data.labels[r] > 0.0)
                }
                ModelKind::Mlp(shape) => {
                    mlp::predict(shape, params, data.row(r)) == data.labels[r] as usize
                }
            })
            .count();
        Ok(correct as f64 / data.len() as f64)
    }

    /// Check that labels fit the model: +-1 for logistic, class indices for MLP.
    pub fn check_labels(&self, data: &Dataset) -> Result<()> {
        for (i, &y) in data.labels.iter().enumerate() {
            let ok = match self {
                ModelKind::Logistic { .. } => y == 1.0 || y == -1.0,
                ModelKind::Mlp(shape) => {
                    y >= 0.0 && y.fract() == 0.0 && (y as usize) < shape.classes
                }
            };
            if !ok {
                return Err(Error::invalid(format!(
                    "label {y} at row {i} is not valid for this model"
                )));
            }
        }
        Ok(())
    }

    fn check(&self, params: &[f64], data: &Dataset) -> Result<()> {
        if params.len() != self.dim() {
            return Err(Error::invalid(format!(
                "model expects {} parameters, got {}",
                self.dim(),
                params.len()
            )));
        }
        if data.dim != self.input_dim() {
            return Err(Error::invalid(format!(
                "model expects {} input features, dataset has {}",
                self.input_dim(),
                data.dim
            )));
        }
        Ok(())
    }
}

/// A model's kind together with its flat parameter vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub kind: ModelKind,
    pub params: Vec<f64>,
}

impl Model {
    pub fn zeros(kind: ModelKind) -> Model {
        Model {
            params: vec![0.0; kind.dim()],
            kind,
        }
    }
}
