//! Elias omega code for positive integers.
//!
//! The code is built back to front: start with a terminating `0`, then
//! repeatedly prepend the binary form of `n` and continue with
//! `n <- bit_length(n) - 1` until `n == 1`.

use super::bits::{BitReader, BitWriter};
use crate::error::{Error, Result};

pub fn encode(n: u64, out: &mut BitWriter) -> Result<()> {
    if n == 0 {
        return Err(Error::invalid("Elias omega cannot encode 0"));
    }
    let mut groups: Vec<(u64, u32)> = Vec::new();
    let mut n = n;
    while n > 1 {
        let width = 64 - n.leading_zeros();
        groups.push((n, width));
        n = u64::from(width - 1);
    }
    for &(value, width) in groups.iter().rev() {
        out.write_bits(value, width);
    }
    out.push(false);
    Ok(())
}

pub fn decode(input: &mut BitReader<'_>) -> Result<u64> {
    let start = input.position();
    let mut n: u64 = 1;
    loop {
        if !input.read_bit()? {
            return Ok(n);
        }
        if n >= 64 {
            return Err(Error::decode(start, "Elias omega group wider than 64 bits"));
        }
        // The leading 1 was just consumed; read the remaining n bits.
        let width = n as u32;
        let rest = input.read_bits(width)?;
        n = (1u64 << width) | rest;
    }
}

/// Number of bits `encode(n)` writes.
pub fn code_len(n: u64) -> usize {
    let mut bits = 1;
    let mut n = n;
    while n > 1 {
        let width = 64 - n.leading_zeros();
        bits += width as usize;
        n = u64::from(width - 1);
    }
    bits
}
