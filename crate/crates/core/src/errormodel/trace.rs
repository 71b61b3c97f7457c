use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::ErrorModelError;

/// A bit-error trace stored sparsely as the positions of its `1` bits.
///
/// On disk: 8-byte little-endian bit count, then the bits packed eight per
/// byte, least-significant bit first.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BitErrorTrace {
    length_bits: u64,
    error_positions: Vec<u64>,
}

impl BitErrorTrace {
    pub fn new(length_bits: u64, error_positions: Vec<u64>) -> Result<Self, ErrorModelError> {
        if let Some(&last) = error_positions.last() {
            if last >= length_bits {
                return Err(ErrorModelError::InvalidTrace(format!(
                    "error position {last} outside trace of {length_bits} bits"
                )));
            }
        }
        if error_positions.windows(2).any(|w| w[0] >= w[1]) {
            return Err(ErrorModelError::InvalidTrace(
                "error positions must be strictly increasing".into(),
            ));
        }
        Ok(BitErrorTrace {
            length_bits,
            error_positions,
        })
    }

    /// Parses a string of `0`/`1` characters; other characters are ignored.
    pub fn from_bit_str(bits: &str) -> Self {
        let mut len = 0u64;
        let mut pos = Vec::new();
        for ch in bits.chars() {
            match ch {
                '0' => len += 1,
                '1' => {
                    pos.push(len);
                    len += 1;
                }
                _ => {}
            }
        }
        BitErrorTrace {
            length_bits: len,
            error_positions: pos,
        }
    }

    pub fn length_bits(&self) -> u64 {
        self.length_bits
    }

    pub fn error_positions(&self) -> &[u64] {
        &self.error_positions
    }

    pub fn error_count(&self) -> u64 {
        self.error_positions.len() as u64
    }

    pub fn ber(&self) -> f64 {
        if self.length_bits == 0 {
            0.0
        } else {
            self.error_count() as f64 / self.length_bits as f64
        }
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        w.write_all(&self.length_bits.to_le_bytes())?;
        let n_bytes = self.length_bits.div_ceil(8);
        let mut errors = self.error_positions.iter().peekable();
        let mut buf = Vec::with_capacity(1 << 16);
        for byte_idx in 0..n_bytes {
            let mut byte = 0u8;
            let base = byte_idx * 8;
            while let Some(&&p) = errors.peek() {
                if p >= base + 8 {
                    break;
                }
                byte |= 1 << (p - base);
                errors.next();
            }
            buf.push(byte);
            if buf.len() == buf.capacity() {
                w.write_all(&buf)?;
                buf.clear();
            }
        }
        w.write_all(&buf)
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self, ErrorModelError> {
        let mut header = [0u8; 8];
        r.read_exact(&mut header)
            .map_err(|e| ErrorModelError::InvalidTrace(format!("missing bit-count header: {e}")))?;
        let length_bits = u64::from_le_bytes(header);
        let n_bytes = length_bits.div_ceil(8);
        let mut positions = Vec::new();
        let mut buf = vec![0u8; 1 << 16];
        let mut consumed = 0u64;
        while consumed < n_bytes {
            let want = ((n_bytes - consumed) as usize).min(buf.len());
            r.read_exact(&mut buf[..want]).map_err(|e| {
                ErrorModelError::InvalidTrace(format!(
                    "trace truncated: expected {n_bytes} data bytes, failed after {consumed}: {e}"
                ))
            })?;
            for (i, &b) in buf[..want].iter().enumerate() {
                let mut bits = b;
                while bits != 0 {
                    let k = bits.trailing_zeros() as u64;
                    positions.push((consumed + i as u64) * 8 + k);
                    bits &= bits - 1;
                }
            }
            consumed += want as u64;
        }
        if let Some(&last) = positions.last() {
            if last >= length_bits {
                return Err(ErrorModelError::InvalidTrace(
                    "padding bits after the last trace bit must be zero".into(),
                ));
            }
        }
        Ok(BitErrorTrace {
            length_bits,
            error_positions: positions,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), ErrorModelError> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ErrorModelError> {
        let mut r = BufReader::new(File::open(path)?);
        Self::read_from(&mut r)
    }
}
