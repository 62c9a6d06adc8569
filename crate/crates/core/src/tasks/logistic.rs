//! Binary logistic regression, labels in {-1, +1}, no intercept.

use super::Dataset;

pub(crate) fn logit(w: &[f64], x: &[f64]) -> f64 {
    w.iter().zip(x).map(|(a, b)| a * b).sum()
}

/// `ln(1 + e^-m)` without overflow.
fn softplus_neg(m: f64) -> f64 {
    if m > 0.0 {
        (-m).exp().ln_1p()
    } else {
        -m + m.exp().ln_1p()
    }
}

/// `1 / (1 + e^m)`.
fn sigmoid_neg(m: f64) -> f64 {
    if m > 0.0 {
        let e = (-m).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + m.exp())
    }
}

pub fn loss(w: &[f64], data: &Dataset, rows: &[usize]) -> f64 {
    let total: f64 = rows
        .iter()
        .map(|&r| softplus_neg(data.labels[r] * logit(w, data.row(r))))
        .sum();
    total / rows.len() as f64
}

/// Mean of `ln(1 + exp(-y w.x))` and its gradient `-mean(y x sigmoid(-y w.x))`.
pub fn loss_grad(w: &[f64], data: &Dataset, rows: &[usize]) -> (f64, Vec<f64>) {
    let mut grad = vec![0.0; w.len()];
    let mut total = 0.0;
    for &r in rows {
        let x = data.row(r);
        let y = data.labels[r];
        let margin = y * logit(w, x);
        total += softplus_neg(margin);
        let coef = -y * sigmoid_neg(margin);
        for (g, &xi) in grad.iter_mut().zip(x) {
            *g += coef * xi;
        }
    }
    let scale = 1.0 / rows.len() as f64;
    grad.iter_mut().for_each(|g| *g *= scale);
    (total * scale, grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tasks::synth_logistic;

    #[test]
    fn origin_loss_and_gradient() {
        let ds = synth_logistic(3, 50, 4, 0.5);
        let rows: Vec<usize> = (0..ds.len()).collect();
        let (l, g) = loss_grad(&[0.0; 4], &ds, &rows);
        assert!((l - std::f64::consts::LN_2).abs() < 1e-15);
        for j in 0..4 {
            let expected: f64 = -rows
                .iter()
                .map(|&r| ds.labels[r] * ds.row(r)[j])
                .sum::<f64>()
                / 50.0
                / 2.0;
            assert!((g[j] - expected).abs() < 1e-14);
        }
    }

    #[test]
    fn stable_for_large_margins() {
        assert_eq!(softplus_neg(1000.0), 0.0);
        assert_eq!(softplus_neg(-1000.0), 1000.0);
        assert_eq!(sigmoid_neg(-1000.0), 1.0);
        assert_eq!(sigmoid_neg(1000.0), 0.0);
    }
}
