//! Binary log of every message sent during a run.
//!
//! Each record is `round: u64`, `node: u32`, `len: u32` (little-endian)
//! followed by `len` bytes of wire message.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub struct MessageLog {
    out: BufWriter<File>,
}

impl MessageLog {
    pub fn create(path: &Path) -> Result<MessageLog> {
        Ok(MessageLog {
            out: BufWriter::new(File::create(path)?),
        })
    }

    pub fn append(&mut self, round: u64, node: usize, bytes: &[u8]) -> Result<()> {
        let node = u32::try_from(node).map_err(|_| Error::invalid("node id exceeds u32"))?;
        let len =
            u32::try_from(bytes.len()).map_err(|_| Error::invalid("message exceeds 4 GiB"))?;
        self.out.write_all(&round.to_le_bytes())?;
        self.out.write_all(&node.to_le_bytes())?;
        self.out.write_all(&len.to_le_bytes())?;
        self.out.write_all(bytes)?;
        self.out.flush()?;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LoggedMessage {
    pub round: u64,
    pub node: u32,
    pub bytes: Vec<u8>,
}

pub fn read_message_log(path: &Path) -> Result<Vec<LoggedMessage>> {
    let mut input = BufReader::new(File::open(path)?);
    let mut all = Vec::new();
    let mut offset = 0usize;
    loop {
        let mut head = [0u8; 16];
        match read_exact_or_eof(&mut input, &mut head)? {
            0 => break,
            16 => {}
            _ => return Err(Error::decode(offset * 8, "truncated record header")),
        }
        let round = u64::from_le_bytes(head[..8].try_into().expect("8 bytes"));
        let node = u32::from_le_bytes(head[8..12].try_into().expect("4 bytes"));
        let len = u32::from_le_bytes(head[12..].try_into().expect("4 bytes")) as usize;
        let mut bytes = vec![0u8; len];
        if read_exact_or_eof(&mut input, &mut bytes)? != len {
            return Err(Error::decode(offset * 8, "truncated record body"));
        }
        offset += 16 + len;
        all.push(LoggedMessage { round, node, bytes });
    }
    Ok(all)
}

fn read_exact_or_eof(input: &mut impl Read, buf: &mut [u8]) -> Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        let n = input.read(&mut buf[filled..])?;
        if n == 0 {
            break;
        }
        filled += n;
    }
    Ok(filled)
}
