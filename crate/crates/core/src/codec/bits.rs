//! MSB-first bit strings.

use crate::error::{Error, Result};

/// Append-only bit buffer, most significant bit first within each byte.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct BitWriter {
    bytes: Vec<u8>,
    len: usize,
}

impl BitWriter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, bit: bool) {
        if self.len.is_multiple_of(8) {
            self.bytes.push(0);
        }
        if bit {
            let last = self.bytes.len() - 1;
            self.bytes[last] |= 0x80 >> (self.len % 8);
        }
        self.len += 1;
    }

    /// Write the low `width` bits of `value`, most significant first.
    pub fn write_bits(&mut self, value: u64, width: u32) {
        debug_assert!(width <= 64);
        for shift in (0..width).rev() {
            self.push((value >> shift) & 1 == 1);
        }
    }

    pub fn write_unary(&mut self, ones: u64) {
        for _ in 0..ones {
            self.push(true);
        }
        self.push(false);
    }

    pub fn append(&mut self, other: &BitWriter) {
        for i in 0..other.len {
            self.push(other.bit(i));
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    fn bit(&self, i: usize) -> bool {
        self.bytes[i / 8] & (0x80 >> (i % 8)) != 0
    }

    /// Zero-padded bytes and the number of meaningful bits.
    pub fn finish(self) -> (Vec<u8>, usize) {
        (self.bytes, self.len)
    }

    /// Render as a string of `0`/`1`, for tests and debugging.
    pub fn to_bit_string(&self) -> String {
        (0..self.len)
            .map(|i| if self.bit(i) { '1' } else { '0' })
            .collect()
    }
}

/// Cursor over the first `len` bits of a byte slice.
#[derive(Clone, Debug)]
pub struct BitReader<'a> {
    bytes: &'a [u8],
    len: usize,
    pos: usize,
}

impl<'a> BitReader<'a> {
    pub fn new(bytes: &'a [u8], len: usize) -> Self {
        debug_assert!(len <= bytes.len() * 8);
        BitReader { bytes, len, pos: 0 }
    }

    pub fn position(&self) -> usize {
        self.pos
    }

    pub fn remaining(&self) -> usize {
        self.len - self.pos
    }

    pub fn read_bit(&mut self) -> Result<bool> {
        if self.pos >= self.len {
            return Err(Error::decode(self.pos, "unexpected end of payload"));
        }
        let bit = self.bytes[self.pos / 8] & (0x80 >> (self.pos % 8)) != 0;
        self.pos += 1;
        Ok(bit)
    }

    pub fn read_bits(&mut self, width: u32) -> Result<u64> {
        if width > 64 {
            return Err(Error::decode(self.pos, format!("field of {width} bits")));
        }
        let mut value = 0u64;
        for _ in 0..width {
            value = (value << 1) | u64::from(self.read_bit()?);
        }
        Ok(value)
    }

    pub fn read_unary(&mut self) -> Result<u64> {
        let mut ones = 0u64;
        while self.read_bit()? {
            ones += 1;
        }
        Ok(ones)
    }
}

/// Parse a `0`/`1` string into a writer. Test helper.
pub fn from_bit_string(s: &str) -> BitWriter {
    let mut w = BitWriter::new();
    for c in s.chars() {
        match c {
            '0' => w.push(false),
            '1' => w.push(true),
            _ => panic!("not a bit: {c:?}"),
        }
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn msb_first_and_padding() {
        let mut w = BitWriter::new();
        w.write_bits(0b101, 3);
        w.write_bits(0b1, 1);
        w.write_bits(0b11111, 5);
        assert_eq!(w.len(), 9);
        let (bytes, len) = w.finish();
        assert_eq!(len, 9);
        assert_eq!(bytes, vec![0b1011_1111, 0b1000_0000]);
    }

    #[test]
    fn reader_stops_at_bit_len() {
        let bytes = [0xFFu8];
        let mut r = BitReader::new(&bytes, 3);
        assert_eq!(r.read_bits(3).unwrap(), 0b111);
        let err = r.read_bit().unwrap_err();
        assert!(matches!(err, Error::Decode { offset: 3, .. }));
    }

    #[test]
    fn unary_round_trip() {
        let mut w = BitWriter::new();
        w.write_unary(0);
        w.write_unary(5);
        assert_eq!(w.to_bit_string(), "0111110");
        let (b, n) = w.finish();
        let mut r = BitReader::new(&b, n);
        assert_eq!(r.read_unary().unwrap(), 0);
        assert_eq!(r.read_unary().unwrap(), 5);
        assert_eq!(r.remaining(), 0);
    }
}
