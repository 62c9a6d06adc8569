//! Golomb code with truncated-binary remainders.
//!
//! `r` is split into `q = r / M` (unary: `q` ones and a zero) and
//! `rem = r % M`. With `b = ceil(log2 M)` and `cutoff = 2^b - M`,
//! remainders below the cutoff take `b - 1` bits and the rest are written
//! as `rem + cutoff` in `b` bits. `M = 1` degenerates to pure unary.

use super::bits::{BitReader, BitWriter};
use crate::error::{Error, Result};

fn params(m: u64) -> (u32, u64) {
    let b = 64 - (m - 1).leading_zeros();
    let cutoff = (1u64 << b) - m;
    (b, cutoff)
}

pub fn encode(r: u64, m: u64, out: &mut BitWriter) -> Result<()> {
    if m == 0 {
        return Err(Error::invalid("Golomb parameter must be at least 1"));
    }
    out.write_unary(r / m);
    let rem = r % m;
    let (b, cutoff) = params(m);
    if b == 0 {
        return Ok(());
    }
    if rem < cutoff {
        out.write_bits(rem, b - 1);
    } else {
        out.write_bits(rem + cutoff, b);
    }
    Ok(())
}

pub fn decode(input: &mut BitReader<'_>, m: u64) -> Result<u64> {
    if m == 0 {
        return Err(Error::decode(input.position(), "Golomb parameter 0"));
    }
    let start = input.position();
    let q = input.read_unary()?;
    let (b, cutoff) = params(m);
    let rem = if b == 0 {
        0
    } else {
        let head = input.read_bits(b - 1)?;
        if head < cutoff {
            head
        } else {
            ((head << 1) | u64::from(input.read_bit()?)) - cutoff
        }
    };
    q.checked_mul(m)
        .and_then(|v| v.checked_add(rem))
        .ok_or_else(|| Error::decode(start, "Golomb value overflows"))
}
