//! Vector source coding of quantized residuals.
//!
//! A message is a fixed 24-byte header followed by an MSB-first payload:
//!
//! 1. the type vector: Elias omega of `count + 1` for every alphabet symbol
//!    in index order (zero marker first, then levels `0..L`);
//! 2. for every symbol except the implicit one (the most frequent, ties to
//!    the lower index), the Golomb-coded run-lengths of its support taken
//!    over the indices not yet claimed by earlier symbols. Supports are
//!    written in descending count order, ties to the lower index; the
//!    decoder derives the same order from the type vector.
//!
//! The implicit symbol fills whatever indices are left. Header layout, all
//! little-endian:
//!
//! | bytes  | field           |
//! |--------|-----------------|
//! | 0..4   | dim (u32)       |
//! | 4..6   | levels (u16)    |
//! | 6..8   | implicit (u16)  |
//! | 8..16  | min (f64)       |
//! | 16..24 | range (f64)     |

pub mod bits;
pub mod elias;
pub mod golomb;
pub mod rate;

use std::f64::consts::LN_2;

use bits::{BitReader, BitWriter};

use crate::error::{Error, Result};
use crate::quantizer::{QuantizedResidual, Symbol};

pub use rate::{adaptive_range_rule, bit_bound, laplace_rate_bound, LaplaceRateModel};

pub const HEADER_BYTES: usize = 24;
pub const HEADER_BITS: u64 = HEADER_BYTES as u64 * 8;

/// Per-symbol occurrence counts, indexed by alphabet index.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TypeVector {
    pub counts: Vec<u64>,
    pub dim: u64,
}

impl TypeVector {
    /// Alphabet index of the most frequent symbol; ties go to the lower index.
    pub fn implicit_symbol(&self) -> usize {
        let mut best = 0;
        for (i, &c) in self.counts.iter().enumerate() {
            if c > self.counts[best] {
                best = i;
            }
        }
        best
    }

    /// Symbols whose supports are written, most frequent first (ties to
    /// the lower index). Skips `implicit` and absent symbols.
    pub fn coding_order(&self, implicit: usize) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.counts.len())
            .filter(|&s| s != implicit && self.counts[s] > 0)
            .collect();
        order.sort_by(|&a, &b| self.counts[b].cmp(&self.counts[a]).then(a.cmp(&b)));
        order
    }

    /// Empirical frequencies `count / dim`.
    pub fn frequencies(&self) -> Vec<f64> {
        let d = self.dim as f64;
        self.counts.iter().map(|&c| c as f64 / d).collect()
    }
}

pub fn compute_type_vector(q: &QuantizedResidual) -> TypeVector {
    let mut counts = vec![0u64; q.alphabet_len()];
    for s in &q.symbols {
        counts[s.index()] += 1;
    }
    TypeVector {
        counts,
        dim: q.dim() as u64,
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Header {
    pub dim: u32,
    pub levels_count: u16,
    pub implicit_symbol: u16,
    pub min_val: f64,
    pub range: f64,
}

impl Header {
    fn write(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.dim.to_le_bytes());
        out.extend_from_slice(&self.levels_count.to_le_bytes());
        out.extend_from_slice(&self.implicit_symbol.to_le_bytes());
        out.extend_from_slice(&self.min_val.to_le_bytes());
        out.extend_from_slice(&self.range.to_le_bytes());
    }

    fn read(bytes: &[u8]) -> Result<Header> {
        if bytes.len() < HEADER_BYTES {
            return Err(Error::decode(
                bytes.len() * 8,
                format!("header needs {HEADER_BYTES} bytes, got {}", bytes.len()),
            ));
        }
        let u32_at = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
        let u16_at = |i: usize| u16::from_le_bytes(bytes[i..i + 2].try_into().unwrap());
        let f64_at = |i: usize| f64::from_le_bytes(bytes[i..i + 8].try_into().unwrap());
        Ok(Header {
            dim: u32_at(0),
            levels_count: u16_at(4),
            implicit_symbol: u16_at(6),
            min_val: f64_at(8),
            range: f64_at(16),
        })
    }

    fn check(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::decode(0, "header dim is 0"));
        }
        if self.levels_count < 2 {
            return Err(Error::decode(
                32,
                format!("header levels_count {} < 2", self.levels_count),
            ));
        }
        if self.implicit_symbol > self.levels_count {
            return Err(Error::decode(
                48,
                format!(
                    "implicit symbol {} outside alphabet of {} levels",
                    self.implicit_symbol, self.levels_count
                ),
            ));
        }
        Ok(())
    }
}

/// A self-describing encoded residual.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedMessage {
    pub header: Header,
    /// MSB-first payload, zero-padded to a byte boundary.
    pub payload: Vec<u8>,
    pub payload_bit_len: usize,
}

impl EncodedMessage {
    /// Header plus padded payload, in bits. This is what a link carries.
    pub fn wire_bits(&self) -> u64 {
        HEADER_BITS + 8 * self.payload.len() as u64
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_BYTES + self.payload.len());
        self.header.write(&mut out);
        out.extend_from_slice(&self.payload);
        out
    }

    /// Parse wire bytes. The payload bit length is taken to be the whole
    /// padded payload; the decoder stops on its own.
    pub fn from_bytes(bytes: &[u8]) -> Result<EncodedMessage> {
        let header = Header::read(bytes)?;
        let payload = bytes[HEADER_BYTES..].to_vec();
        let payload_bit_len = payload.len() * 8;
        Ok(EncodedMessage {
            header,
            payload,
            payload_bit_len,
        })
    }

    /// Drop the last `bits` payload bits. Used to exercise decoder errors.
    pub fn truncated(&self, bits: usize) -> EncodedMessage {
        let len = self.payload_bit_len.saturating_sub(bits);
        EncodedMessage {
            header: self.header,
            payload: self.payload[..len.div_ceil(8)].to_vec(),
            payload_bit_len: len,
        }
    }
}

/// Golomb parameter for a symbol with `count` occurrences among
/// `remaining` unclaimed indices.
fn golomb_parameter(remaining: u64, count: u64) -> u64 {
    let m = (LN_2 * (remaining - count) as f64 / count as f64).round();
    if m < 1.0 {
        1
    } else {
        m as u64
    }
}

fn header_for(q: &QuantizedResidual, implicit_symbol: u16) -> Result<Header> {
    let dim = u32::try_from(q.dim())
        .map_err(|_| Error::invalid(format!("dimension {} does not fit in u32", q.dim())))?;
    Ok(Header {
        dim,
        levels_count: q.levels_count,
        implicit_symbol,
        min_val: q.min_val,
        range: q.range,
    })
}

pub fn encode(q: &QuantizedResidual) -> Result<EncodedMessage> {
    q.validate()?;
    let tv = compute_type_vector(q);
    let implicit = tv.implicit_symbol();
    let mut out = BitWriter::new();

    for &c in &tv.counts {
        elias::encode(c + 1, &mut out)?;
    }

    // Indices not yet claimed by an explicitly coded symbol, in order.
    let mut open: Vec<usize> = (0..q.dim()).collect();
    for sym in tv.coding_order(implicit) {
        let count = tv.counts[sym];
        let m = golomb_parameter(open.len() as u64, count);
        let mut run = 0u64;
        let mut kept = Vec::with_capacity(open.len() - count as usize);
        for &idx in &open {
            if q.symbols[idx].index() == sym {
                golomb::encode(run, m, &mut out)?;
                run = 0;
            } else {
                run += 1;
                kept.push(idx);
            }
        }
        // The trailing run after the last occurrence is never written.
        open = kept;
    }

    let header = header_for(q, implicit as u16)?;
    let (payload, payload_bit_len) = out.finish();
    Ok(EncodedMessage {
        header,
        payload,
        payload_bit_len,
    })
}

pub fn decode(msg: &EncodedMessage) -> Result<QuantizedResidual> {
    let header = msg.header;
    header.check()?;
    check_payload_len(msg)?;
    let dim = header.dim as usize;
    let alphabet = header.levels_count as usize + 1;
    let mut input = BitReader::new(&msg.payload, msg.payload_bit_len);

    let mut counts = Vec::with_capacity(alphabet);
    let mut total: u64 = 0;
    for _ in 0..alphabet {
        let at = input.position();
        let c = elias::decode(&mut input)? - 1;
        total = total
            .checked_add(c)
            .ok_or_else(|| Error::decode(at, "type vector overflows"))?;
        counts.push(c);
    }
    if total != dim as u64 {
        return Err(Error::decode(
            input.position(),
            format!("type vector sums to {total}, header dim is {dim}"),
        ));
    }
    let implicit = header.implicit_symbol as usize;
    let tv = TypeVector {
        counts,
        dim: dim as u64,
    };

    let mut symbols: Vec<Option<Symbol>> = vec![None; dim];
    let mut open: Vec<usize> = (0..dim).collect();
    for sym in tv.coding_order(implicit) {
        let count = tv.counts[sym];
        let m = golomb_parameter(open.len() as u64, count);
        let mut cursor: usize = 0;
        for _ in 0..count {
            let at = input.position();
            let run = golomb::decode(&mut input, m)?;
            let slot = usize::try_from(run)
                .ok()
                .and_then(|r| cursor.checked_add(r))
                .filter(|&s| s < open.len())
                .ok_or_else(|| {
                    Error::decode(
                        at,
                        format!(
                            "run-length {run} overruns the {} open indices of symbol {sym}",
                            open.len()
                        ),
                    )
                })?;
            symbols[open[slot]] = Some(Symbol::from_index(sym as u16));
            cursor = slot + 1;
        }
        open.retain(|&idx| symbols[idx].is_none());
    }

    let fill = Symbol::from_index(implicit as u16);
    Ok(QuantizedResidual {
        symbols: symbols.into_iter().map(|s| s.unwrap_or(fill)).collect(),
        min_val: header.min_val,
        range: header.range,
        levels_count: header.levels_count,
    })
}

fn check_payload_len(msg: &EncodedMessage) -> Result<()> {
    if msg.payload_bit_len > msg.payload.len() * 8 {
        return Err(Error::decode(
            msg.payload.len() * 8,
            format!(
                "payload_bit_len {} exceeds {} payload bytes",
                msg.payload_bit_len,
                msg.payload.len()
            ),
        ));
    }
    Ok(())
}

/// Symbol-by-symbol comparator: each entry is Elias omega of its alphabet
/// index plus one. Same header as [`encode`], implicit symbol fixed at 0.
pub fn baseline_per_entry_encode(q: &QuantizedResidual) -> Result<EncodedMessage> {
    q.validate()?;
    let mut out = BitWriter::new();
    for s in &q.symbols {
        elias::encode(s.index() as u64 + 1, &mut out)?;
    }
    let header = header_for(q, 0)?;
    let (payload, payload_bit_len) = out.finish();
    Ok(EncodedMessage {
        header,
        payload,
        payload_bit_len,
    })
}

pub fn baseline_per_entry_decode(msg: &EncodedMessage) -> Result<QuantizedResidual> {
    let header = msg.header;
    header.check()?;
    check_payload_len(msg)?;
    let mut input = BitReader::new(&msg.payload, msg.payload_bit_len);
    let mut symbols = Vec::with_capacity(header.dim as usize);
    for _ in 0..header.dim {
        let at = input.position();
        let index = elias::decode(&mut input)? - 1;
        if index > u64::from(header.levels_count) {
            return Err(Error::decode(
                at,
                format!("symbol index {index} outside alphabet"),
            ));
        }
        symbols.push(Symbol::from_index(index as u16));
    }
    Ok(QuantizedResidual {
        symbols,
        min_val: header.min_val,
        range: header.range,
        levels_count: header.levels_count,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lv(l: u16) -> Symbol {
        Symbol::level(l)
    }

    fn residual(symbols: Vec<Symbol>, levels: u16) -> QuantizedResidual {
        QuantizedResidual {
            symbols,
            min_val: -0.25,
            range: 1.5,
            levels_count: levels,
        }
    }

    fn payload_string(msg: &EncodedMessage) -> String {
        (0..msg.payload_bit_len)
            .map(|i| {
                if msg.payload[i / 8] & (0x80 >> (i % 8)) != 0 {
                    '1'
                } else {
                    '0'
                }
            })
            .collect()
    }

    #[test]
    fn type_vector_examples() {
        let tv = compute_type_vector(&residual(vec![Symbol::ZERO, lv(1), lv(1), lv(1)], 2));
        assert_eq!(tv.counts, vec![1, 0, 3]);
        assert_eq!(tv.implicit_symbol(), 2);

        let tv = compute_type_vector(&residual(vec![Symbol::ZERO; 8], 4));
        assert_eq!(tv.counts, vec![8, 0, 0, 0, 0]);

        let tv = compute_type_vector(&residual(vec![lv(0)], 3));
        assert_eq!(tv.counts, vec![0, 1, 0, 0]);
    }

    #[test]
    fn implicit_ties_go_low() {
        let tv = TypeVector {
            counts: vec![2, 3, 3, 1],
            dim: 9,
        };
        assert_eq!(tv.implicit_symbol(), 1);
    }

    #[test]
    fn all_zero_has_no_positional_bits() {
        let q = residual(vec![Symbol::ZERO; 8], 4);
        let msg = encode(&q).unwrap();
        // omega(9) then four omega(1)
        assert_eq!(payload_string(&msg), "1110010".to_owned() + "0000");
        assert_eq!(decode(&msg).unwrap(), q);
    }

    #[test]
    fn small_mixed_example_bits() {
        let q = residual(vec![Symbol::ZERO, lv(1), lv(1), lv(1)], 2);
        let msg = encode(&q).unwrap();
        assert_eq!(msg.header.implicit_symbol, 2);
        // type vector omega(2) omega(1) omega(4); zero marker run 0 with M = 2
        assert_eq!(
            payload_string(&msg),
            "100".to_owned() + "0" + "101000" + "00"
        );
        assert_eq!(decode(&msg).unwrap(), q);
    }

    #[test]
    fn supports_follow_descending_counts() {
        // counts Z:0, 0:1, 1:2, 2:5; level 2 is implicit, level 1 goes
        // before level 0.
        let q = residual(
            vec![lv(2), lv(2), lv(0), lv(1), lv(2), lv(1), lv(2), lv(2)],
            3,
        );
        let msg = encode(&q).unwrap();
        assert_eq!(msg.header.implicit_symbol, 3);
        let type_vector = "0".to_owned() + "100" + "110" + "101100";
        // level 1 over 8 open indices, M = 2: runs 3 and 1
        let level1 = "101".to_owned() + "01";
        // level 0 over 6 open indices, M = 3: run 2
        let level0 = "011";
        assert_eq!(payload_string(&msg), type_vector + &level1 + level0);
        assert_eq!(decode(&msg).unwrap(), q);
    }

    #[test]
    fn truncation_is_an_error() {
        let q = residual(vec![lv(0), Symbol::ZERO, lv(2), lv(0), lv(1), lv(0)], 4);
        let msg = encode(&q).unwrap();
        for cut in 1..=msg.payload_bit_len {
            assert!(decode(&msg.truncated(cut)).is_err(), "cut {cut}");
        }
    }

    #[test]
    fn zero_dim_header_rejected() {
        let q = residual(vec![lv(0); 3], 2);
        let mut msg = encode(&q).unwrap();
        msg.header.dim = 0;
        assert!(matches!(decode(&msg), Err(Error::Decode { .. })));
    }

    #[test]
    fn type_vector_sum_mismatch_rejected() {
        let q = residual(vec![lv(0); 3], 2);
        let mut msg = encode(&q).unwrap();
        msg.header.dim = 4;
        let err = decode(&msg).unwrap_err();
        assert!(err.to_string().contains("sums to 3"), "{err}");
    }

    #[test]
    fn wire_bytes_round_trip() {
        let q = residual(vec![lv(3), Symbol::ZERO, lv(2), lv(3), lv(0)], 4);
        let msg = encode(&q).unwrap();
        let bytes = msg.to_bytes();
        assert_eq!(bytes.len(), HEADER_BYTES + msg.payload_bit_len.div_ceil(8));
        let parsed = EncodedMessage::from_bytes(&bytes).unwrap();
        assert_eq!(decode(&parsed).unwrap(), q);
        assert!(EncodedMessage::from_bytes(&bytes[..10]).is_err());
    }

    #[test]
    fn baseline_all_zero_is_one_bit_per_entry() {
        let q = residual(vec![Symbol::ZERO; 100], 8);
        let msg = baseline_per_entry_encode(&q).unwrap();
        assert_eq!(msg.payload_bit_len, 100);
        assert_eq!(baseline_per_entry_decode(&msg).unwrap(), q);
    }

    #[test]
    fn golomb_parameter_is_clamped() {
        assert_eq!(golomb_parameter(10, 10), 1);
        assert_eq!(golomb_parameter(4, 1), 2);
        assert_eq!(golomb_parameter(100, 1), 69);
    }
}
