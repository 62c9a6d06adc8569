//! Dithered uniform quantization with adaptive range.
//!
//! The input vector is normalized into `[0, 1]` by its own extremes, each
//! entry is mapped to one of `L` levels by `floor(p_hat * L + u)` with a
//! uniform dither `u`, and exact zeros get a dedicated symbol so they come
//! back as exact zeros. The receiver reconstructs
//! `(range * level / L + min) / tau` with `tau = 1 + d / L^2`, which makes
//! the round trip a contraction in expectation:
//! `E |Q(p) - p|^2 <= (1 - 1/tau) |p|^2`.

use std::fmt;

use crate::error::{Error, Result};
use crate::rng::{self, Dither, Purpose};

/// One entry of a quantized residual: either the exact-zero marker or a
/// level index in `0..L`.
///
/// On the wire and in type vectors symbols are addressed by their alphabet
/// index: zero is index 0 and level `l` is index `l + 1`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Symbol(u16);

impl Symbol {
    pub const ZERO: Symbol = Symbol(0);

    pub fn level(level: u16) -> Symbol {
        Symbol(level + 1)
    }

    pub fn from_index(index: u16) -> Symbol {
        Symbol(index)
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0
    }

    /// Level index, or `None` for the exact-zero symbol.
    pub fn as_level(self) -> Option<u16> {
        self.0.checked_sub(1)
    }
}

impl fmt::Debug for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.as_level() {
            None => write!(f, "Z"),
            Some(l) => write!(f, "{l}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct QuantizedResidual {
    pub symbols: Vec<Symbol>,
    pub min_val: f64,
    pub range: f64,
    pub levels_count: u16,
}

impl QuantizedResidual {
    pub fn dim(&self) -> usize {
        self.symbols.len()
    }

    /// Size of the coder alphabet: `L` levels plus the zero marker.
    pub fn alphabet_len(&self) -> usize {
        self.levels_count as usize + 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.symbols.is_empty() {
            return Err(Error::invalid("quantized residual has dimension 0"));
        }
        if self.levels_count < 2 {
            return Err(Error::invalid(format!(
                "levels_count must be at least 2, got {}",
                self.levels_count
            )));
        }
        if !self.min_val.is_finite() || !self.range.is_finite() || self.range < 0.0 {
            return Err(Error::invalid(format!(
                "bad normalization metadata: min {} range {}",
                self.min_val, self.range
            )));
        }
        if let Some((i, s)) = self
            .symbols
            .iter()
            .enumerate()
            .find(|(_, s)| s.index() > self.levels_count as usize)
        {
            return Err(Error::invalid(format!(
                "symbol {s:?} at entry {i} outside alphabet of {} levels",
                self.levels_count
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ContractionParams {
    pub tau: f64,
    pub bound: f64,
}

/// `tau = 1 + d / L^2` and the contraction bound `1 - 1/tau`.
pub fn contraction_params(dim: usize, levels: u32) -> ContractionParams {
    let l = f64::from(levels);
    let tau = 1.0 + dim as f64 / (l * l);
    // 1 - 1/tau, written to stay accurate when d/L^2 is tiny.
    let ratio = dim as f64 / (l * l);
    ContractionParams {
        tau,
        bound: ratio / (1.0 + ratio),
    }
}

/// Quantize `p` with `levels` levels, drawing one dither value per entry.
///
/// A dither value is consumed for every entry, including exact zeros, so
/// entry `i` always sees the `i`-th draw of the stream.
pub fn quantize<D: Dither + ?Sized>(
    p: &[f64],
    levels: u16,
    dither: &mut D,
) -> Result<QuantizedResidual> {
    if p.is_empty() {
        return Err(Error::invalid("cannot quantize an empty vector"));
    }
    if levels < 2 {
        return Err(Error::invalid(format!(
            "levels must be at least 2, got {levels}"
        )));
    }
    if let Some(i) = p.iter().position(|v| !v.is_finite()) {
        return Err(Error::invalid(format!(
            "non-finite entry {} at index {i}",
            p[i]
        )));
    }

    let (min_val, max_val) = p
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let range = max_val - min_val;
    let l = f64::from(levels);
    let top = levels - 1;

    let symbols = p
        .iter()
        .map(|&v| {
            let u = dither.next_uniform();
            if v == 0.0 {
                Symbol::ZERO
            } else if range == 0.0 {
                Symbol::level(0)
            } else {
                let normalized = (v - min_val) / range;
                let raw = (normalized * l + u).floor();
                // raw lands in [0, L]; L is folded onto the top level.
                let level = if raw <= 0.0 {
                    0
                } else if raw >= f64::from(top) {
                    top
                } else {
                    raw as u16
                };
                Symbol::level(level)
            }
        })
        .collect();

    Ok(QuantizedResidual {
        symbols,
        min_val,
        range,
        levels_count: levels,
    })
}

/// Receiver-side reconstruction: zero for the zero symbol, otherwise
/// `(range * level / L + min) / tau`.
pub fn dequantize(q: &QuantizedResidual) -> Vec<f64> {
    let ContractionParams { tau, .. } = contraction_params(q.dim(), u32::from(q.levels_count));
    let l = f64::from(q.levels_count);
    q.symbols
        .iter()
        .map(|s| match s.as_level() {
            None => 0.0,
            Some(level) => (q.range * (f64::from(level) / l) + q.min_val) / tau,
        })
        .collect()
}

/// Monte-Carlo estimate of `E |dequantize(quantize(p)) - p|^2 / |p|^2`.
///
/// Trial `k` uses the dither stream `(seed, Dither, u64::MAX, k)`.
pub fn empirical_contraction(p: &[f64], levels: u16, trials: usize, seed: u64) -> Result<f64> {
    let norm_sq: f64 = p.iter().map(|v| v * v).sum();
    if norm_sq == 0.0 {
        return Err(Error::invalid(
            "contraction ratio is undefined for the zero vector",
        ));
    }
    if trials == 0 {
        return Err(Error::invalid("at least one trial is required"));
    }
    let mut total = 0.0;
    for k in 0..trials {
        let mut dither = rng::stream(seed, Purpose::Dither, u64::MAX, k as u64);
        let q = quantize(p, levels, &mut dither)?;
        let err: f64 = dequantize(&q)
            .iter()
            .zip(p)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        total += err / norm_sq;
    }
    Ok(total / trials as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::ConstantDither;

    fn lv(l: u16) -> Symbol {
        Symbol::level(l)
    }

    #[test]
    fn hand_example_with_half_dither() {
        // p_hat = [0, 1/3, 2/3, 1]; floor(2 p_hat + 0.5) = [-, 1, 1, 2 -> 1]
        let q = quantize(&[0.0, 1.0, 2.0, 3.0], 2, &mut ConstantDither(0.5)).unwrap();
        assert_eq!(q.symbols, vec![Symbol::ZERO, lv(1), lv(1), lv(1)]);
        assert_eq!(q.min_val, 0.0);
        assert_eq!(q.range, 3.0);
    }

    #[test]
    fn zero_vector_round_trips_exactly() {
        let p = [0.0; 8];
        let q = quantize(&p, 4, &mut ConstantDither(0.9)).unwrap();
        assert!(q.symbols.iter().all(|s| s.is_zero()));
        assert_eq!(dequantize(&q), vec![0.0; 8]);
    }

    #[test]
    fn constant_vector_maps_to_lowest_level() {
        let c = 1.7;
        let p = [c; 5];
        let q = quantize(&p, 4, &mut ConstantDither(0.99)).unwrap();
        assert_eq!(q.range, 0.0);
        assert!(q.symbols.iter().all(|&s| s == lv(0)));
        let tau = contraction_params(5, 4).tau;
        for v in dequantize(&q) {
            assert_eq!(v, c / tau);
        }
    }

    #[test]
    fn dequantize_hand_example() {
        let q = QuantizedResidual {
            symbols: vec![Symbol::ZERO, lv(1), lv(1), lv(1)],
            min_val: 0.0,
            range: 3.0,
            levels_count: 2,
        };
        // tau = 1 + 4/4 = 2; (3 * 1/2 + 0) / 2 = 0.75
        assert_eq!(dequantize(&q), vec![0.0, 0.75, 0.75, 0.75]);
    }

    #[test]
    fn lowest_level_maps_to_scaled_min() {
        let q = QuantizedResidual {
            symbols: vec![lv(0), Symbol::ZERO, lv(0)],
            min_val: -2.0,
            range: 5.0,
            levels_count: 3,
        };
        let tau = 1.0 + 3.0 / 9.0;
        assert_eq!(dequantize(&q), vec![-2.0 / tau, 0.0, -2.0 / tau]);
    }

    #[test]
    fn contraction_params_examples() {
        let c = contraction_params(100, 10);
        assert_eq!(c.tau, 2.0);
        assert_eq!(c.bound, 0.5);
        let c = contraction_params(4, 2);
        assert_eq!(c.tau, 2.0);
        assert_eq!(c.bound, 0.5);
        let c = contraction_params(10, 1_000_000);
        assert!(c.bound < 1e-10 && c.bound > 0.0);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(quantize(&[1.0, f64::NAN], 4, &mut ConstantDither(0.0)).is_err());
        assert!(quantize(&[1.0, f64::INFINITY], 4, &mut ConstantDither(0.0)).is_err());
        assert!(quantize(&[1.0], 1, &mut ConstantDither(0.0)).is_err());
        assert!(quantize(&[], 4, &mut ConstantDither(0.0)).is_err());
    }

    #[test]
    fn top_level_is_clamped() {
        // Max entry with dither just below 1 would reach level L.
        let q = quantize(&[1.0, 2.0], 4, &mut ConstantDither(0.999)).unwrap();
        assert_eq!(q.symbols[1], lv(3));
    }

    #[test]
    fn empirical_contraction_edge_cases() {
        assert!(empirical_contraction(&[0.0; 4], 4, 10, 1).is_err());
        let r = empirical_contraction(&[1.0, -2.0, 0.5], 4, 1, 1).unwrap();
        assert!(r >= 0.0);
    }

    #[test]
    fn empirical_contraction_gaussian_d100() {
        use rand_distr::{Distribution, StandardNormal};
        let mut g = rng::stream(42, Purpose::Data, 0, 0);
        let p: Vec<f64> = (0..100).map(|_| StandardNormal.sample(&mut g)).collect();
        let r = empirical_contraction(&p, 10, 2000, 5).unwrap();
        assert!(r <= 0.5 * 1.02, "ratio {r}");
    }
}
