//! Local update kernels: SGD step, l1 proximal map, objective and the
//! projected-gradient stationarity measure.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tasks::{Dataset, ModelKind};

/// Step sizes, penalty and schedule of a run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    /// Learning rate.
    pub eta: f64,
    /// l1 penalty weight.
    pub mu: f64,
    /// Consensus step size.
    pub gamma: f64,
    /// Quantization levels.
    pub levels_count: u16,
    /// Number of rounds.
    pub rounds_t: u64,
    pub batch_size: usize,
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return bad(format!("eta must be positive and finite, got {}", self.eta));
        }
        if !(self.mu >= 0.0 && self.mu.is_finite()) {
            return bad(format!(
                "mu must be non-negative and finite, got {}",
                self.mu
            ));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad(format!("gamma must lie in (0, 1], got {}", self.gamma));
        }
        if self.levels_count < 2 {
            return bad(format!(
                "levels must be at least 2, got {}",
                self.levels_count
            ));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive".to_owned());
        }
        Ok(())
    }

    /// Soft-threshold level applied after each SGD step.
    pub fn threshold(&self) -> f64 {
        self.mu * self.eta
    }
}

pub fn sgd_step(x: &[f64], grad: &[f64], eta: f64) -> Vec<f64> {
    debug_assert_eq!(x.len(), grad.len());
    x.iter().zip(grad).map(|(a, g)| a - eta * g).collect()
}

/// Proximal map of `threshold * |.|_1`. Entries with `|v| <= threshold`
/// become zero.
pub fn soft_threshold(v: &[f64], threshold: f64) -> Vec<f64> {
    v.iter().map(|&a| shrink(a, threshold)).collect()
}

pub fn soft_threshold_in_place(v: &mut [f64], threshold: f64) {
    v.iter_mut().for_each(|a| *a = shrink(*a, threshold));
}

fn shrink(a: f64, threshold: f64) -> f64 {
    if threshold == 0.0 {
        a
    } else if a.abs() <= threshold {
        0.0
    } else {
        a - threshold.copysign(a)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveReport {
    /// Mean of the node losses.
    pub smooth_part: f64,
    /// `mu` times the mean l1 norm of the node models.
    pub l1_part: f64,
    pub total: f64,
}

pub fn l1_norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v.abs()).sum()
}

/// `(1/n) sum_i (F_i(x_i) + mu |x_i|_1)` with full-batch `F_i`.
pub fn objective(
    kind: &ModelKind,
    models: &[Vec<f64>],
    datasets: &[Dataset],
    mu: f64,
) -> Result<ObjectiveReport> {
    if models.len() != datasets.len() || models.is_empty() {
        return Err(Error::invalid(format!(
            "{} models for {} datasets",
            models.len(),
            datasets.len()
        )));
    }
    if let Some(i) = datasets.iter().position(Dataset::is_empty) {
        return Err(Error::invalid(format!("dataset of node {i} is empty")));
    }
    let n = models.len() as f64;
    let mut smooth = 0.0;
    let mut l1 = 0.0;
    for (x, ds) in models.iter().zip(datasets) {
        smooth += kind.full_loss(x, ds)?;
        l1 += l1_norm(x);
    }
    let smooth_part = smooth / n;
    let l1_part = mu * l1 / n;
    Ok(ObjectiveReport {
        smooth_part,
        l1_part,
        total: smooth_part + l1_part,
    })
}

/// `(x - prox(x - eta grad, mu eta)) / eta`, the generalized gradient of
/// the composite objective.
pub fn projected_gradient(x_bar: &[f64], full_grad: &[f64], eta: f64, mu: f64) -> Vec<f64> {
    let mut z = sgd_step(x_bar, full_grad, eta);
    soft_threshold_in_place(&mut z, mu * eta);
    x_bar.iter().zip(&z).map(|(a, b)| (a - b) / eta).collect()
}

/// Average full-batch loss and gradient of the node datasets at one point.
pub fn mean_full_loss_grad(
    kind: &ModelKind,
    x: &[f64],
    datasets: &[Dataset],
) -> Result<(f64, Vec<f64>)> {
    let mut loss = 0.0;
    let mut grad = vec![0.0; x.len()];
    for ds in datasets {
        let (l, g) = kind.full_loss_grad(x, ds)?;
        loss += l;
        grad.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
    }
    let n = datasets.len() as f64;
    grad.iter_mut().for_each(|a| *a /= n);
    Ok((loss / n, grad))
}

/// Minimizer of the pooled composite objective found by a single machine.
#[derive(Clone, Debug, PartialEq)]
pub struct Reference {
    pub params: Vec<f64>,
    pub objective: ObjectiveReport,
    pub iterations: usize,
    /// Norm of the projected gradient at `params`.
    pub stationarity: f64,
    pub step: f64,
}

/// Centralized proximal gradient descent on `(1/n) sum_i F_i(x) + mu |x|_1`
/// for logistic regression, with step `1/K` where `K` bounds the smoothness
/// constant. Uses Nesterov momentum with a function-value restart and stops
/// once the projected-gradient norm falls below `tol`.
pub fn centralized_reference(
    kind: &ModelKind,
    datasets: &[Dataset],
    mu: f64,
    tol: f64,
    max_iter: usize,
) -> Result<Reference> {
    let ModelKind::Logistic { features } = *kind else {
        return Err(Error::invalid(
            "the centralized reference is only defined for the convex logistic task",
        ));
    };
    if datasets.is_empty() || datasets.iter().any(Dataset::is_empty) {
        return Err(Error::invalid("reference needs non-empty datasets"));
    }
    let step = 1.0 / logistic_smoothness(datasets, features);
    let composite = |x: &[f64]| -> Result<f64> {
        Ok(mean_full_loss_grad(kind, x, datasets)?.0 + mu * l1_norm(x))
    };

    let mut x = vec![0.0; features];
    let mut y = x.clone();
    let mut momentum = 1.0f64;
    let mut f_x = composite(&x)?;
    let mut iterations = 0;
    let mut stationarity = f64::INFINITY;
    while iterations < max_iter {
        iterations += 1;
        let (_, g) = mean_full_loss_grad(kind, &y, datasets)?;
        let mut next = sgd_step(&y, &g, step);
        soft_threshold_in_place(&mut next, mu * step);
        let f_next = composite(&next)?;
        if f_next > f_x {
            // Momentum overshot: restart from x with a plain proximal step.
            momentum = 1.0;
            y.clone_from(&x);
            continue;
        }
        let next_momentum = (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt()) / 2.0;
        let beta = (momentum - 1.0) / next_momentum;
        y = next
            .iter()
            .zip(&x)
            .map(|(a, b)| a + beta * (a - b))
            .collect();
        momentum = next_momentum;
        x = next;
        f_x = f_next;

        let (_, gx) = mean_full_loss_grad(kind, &x, datasets)?;
        stationarity = projected_gradient(&x, &gx, step, mu)
            .iter()
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt();
        if stationarity <= tol {
            break;
        }
    }
    let models = vec![x.clone(); datasets.len()];
    let objective = objective(kind, &models, datasets, mu)?;
    Ok(Reference {
        params: x,
        objective,
        iterations,
        stationarity,
        step,
    })
}

/// Upper bound on the gradient Lipschitz constant of the mean logistic
/// loss: `(1/n) sum_i lambda_max(X_i^T X_i) / (4 m_i)`, by power iteration
/// on the averaged operator, padded by 1%.
fn logistic_smoothness(datasets: &[Dataset], features: usize) -> f64 {
    let apply = |v: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; features];
        for ds in datasets {
            let scale = 1.0 / (4.0 * ds.len() as f64 * datasets.len() as f64);
            for r in 0..ds.len() {
                let row = ds.row(r);
                let dot: f64 = row.iter().zip(v).map(|(a, b)| a * b).sum();
                out.iter_mut()
                    .zip(row)
                    .for_each(|(o, a)| *o += scale * dot * a);
            }
        }
        out
    };
    let mut v = vec![1.0 / (features as f64).sqrt(); features];
    let mut estimate = 0.0;
    for _ in 0..200 {
        let w = apply(&v);
        let norm = w.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 1.0;
        }
        let converged = (norm - estimate).abs() <= 1e-9 * norm;
        estimate = norm;
        v = w.into_iter().map(|a| a / norm).collect();
        if converged {
            break;
        }
    }
    estimate * 1.01
}
