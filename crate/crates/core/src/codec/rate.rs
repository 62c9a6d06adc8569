//! Closed-form rate estimates for the source coder.

use super::TypeVector;
use crate::error::{Error, Result};

/// Golomb run-length overhead constant, in bits.
pub const GOLOMB_OVERHEAD: f64 = 2.914;

fn xlog2(p: f64) -> f64 {
    if p > 0.0 {
        p * p.log2()
    } else {
        0.0
    }
}

/// Bits-per-coordinate bound for coding a vector with type `tv`:
///
/// `H(f) + 2.914 (1 - f0) + f0 log2 f0 + sum_{l>=1} f_l log2(1 - sum_{m<l} f_m)`
///
/// with `f` the frequencies sorted in descending order. `0 log 0 = 0`, and a
/// term whose tail mass `1 - sum f_m` is not positive contributes nothing.
pub fn bit_bound(tv: &TypeVector) -> f64 {
    let mut f = tv.frequencies();
    f.sort_by(|a, b| b.total_cmp(a));
    let entropy: f64 = -f.iter().map(|&p| xlog2(p)).sum::<f64>();
    let f0 = f[0];
    let mut bound = entropy + GOLOMB_OVERHEAD * (1.0 - f0) + xlog2(f0);
    let mut head = f0;
    for &fl in &f[1..] {
        let tail = 1.0 - head;
        if fl > 0.0 && tail > 0.0 {
            bound += fl * tail.log2();
        }
        head += fl;
    }
    bound
}

/// Laplace residual model for the per-round rate bound.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LaplaceRateModel {
    /// Laplace diversity (scale) of the residual entries.
    pub rho: f64,
    /// Quantizer range.
    pub range_r: f64,
    pub levels_count: u32,
}

impl LaplaceRateModel {
    /// `r / (2 L rho)`: half a quantization step in units of `rho`.
    pub fn delta(&self) -> f64 {
        self.range_r / (2.0 * f64::from(self.levels_count) * self.rho)
    }
}

/// `2.914 e^-D + 2 sinh(D) (1 - log2(1 - e^-2D)) / (e^2D - 1)` with
/// `D = r / (2 L rho)`, in bits per coordinate.
pub fn laplace_rate_bound(model: &LaplaceRateModel) -> Result<f64> {
    let delta = model.delta();
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::invalid(format!(
            "rate model needs a positive finite delta, got {delta}"
        )));
    }
    let first = GOLOMB_OVERHEAD * (-delta).exp();
    let denom = (2.0 * delta).exp_m1();
    if denom.is_infinite() {
        return Ok(first);
    }
    let log_term = 1.0 - (-(-2.0 * delta).exp_m1()).log2();
    Ok(first + 2.0 * delta.sinh() * log_term / denom)
}

/// Quantizer range that covers a `d`-sample Laplace(`rho`) vector with
/// probability at least `1 - epsilon`: `2 rho ln(d / epsilon)`.
pub fn adaptive_range_rule(rho: f64, dim: usize, epsilon: f64) -> Result<f64> {
    if !(rho > 0.0) || dim == 0 || !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(Error::invalid(format!(
            "adaptive range needs rho > 0, d >= 1, 0 < epsilon <= 1 (got {rho}, {dim}, {epsilon})"
        )));
    }
    Ok(2.0 * rho * (dim as f64 / epsilon).ln())
}
