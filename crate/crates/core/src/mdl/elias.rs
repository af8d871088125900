//! Elias universal codes, extended to signed integers by a sign bit.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EliasCode {
    #[default]
    Gamma,
    Delta,
}

impl std::str::FromStr for EliasCode {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "gamma" => Ok(EliasCode::Gamma),
            "delta" => Ok(EliasCode::Delta),
            other => Err(crate::Error::Invalid(format!("unknown Elias code `{other}`"))),
        }
    }
}

fn floor_log2(m: u64) -> u32 {
    63 - m.leading_zeros()
}

/// Bits in the gamma code of `m ≥ 1`.
pub fn gamma_len(m: u64) -> u64 {
    assert!(m >= 1, "gamma codes start at 1");
    2 * floor_log2(m) as u64 + 1
}

/// Bits in the delta code of `m ≥ 1`.
pub fn delta_len(m: u64) -> u64 {
    assert!(m >= 1, "delta codes start at 1");
    let n = floor_log2(m) as u64;
    n + gamma_len(n + 1)
}

impl EliasCode {
    pub fn len(self, m: u64) -> u64 {
        match self {
            EliasCode::Gamma => gamma_len(m),
            EliasCode::Delta => delta_len(m),
        }
    }
}

/// Length of the signed code ω(x): one sign bit plus the code of |x| + 1.
pub fn signed_len(x: i64, code: EliasCode) -> u64 {
    1 + code.len(x.unsigned_abs() + 1)
}

/// Bit buffer, most significant bit first within each byte.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BitWriter {
    bytes: Vec<u8>,
    bits: usize,
}

impl BitWriter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, bit: bool) {
        if self.bits.is_multiple_of(8) {
            self.bytes.push(0);
        }
        if bit {
            *self.bytes.last_mut().expect("byte present") |= 0x80 >> (self.bits % 8);
        }
        self.bits += 1;
    }

    /// Pushes the low `n` bits of `v`, high to low.
    fn push_bits(&mut self, v: u64, n: u32) {
        for i in (0..n).rev() {
            self.push((v >> i) & 1 == 1);
        }
    }

    pub fn len(&self) -> usize {
        self.bits
    }

    pub fn is_empty(&self) -> bool {
        self.bits == 0
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.bytes
    }
}

#[derive(Debug, Clone)]
pub struct BitReader<'a> {
    bytes: &'a [u8],
    pos: usize,
    end: usize,
}

impl<'a> BitReader<'a> {
    pub fn new(bytes: &'a [u8], bits: usize) -> Self {
        Self { bytes, pos: 0, end: bits.min(bytes.len() * 8) }
    }

    pub fn next_bit(&mut self) -> Option<bool> {
        if self.pos >= self.end {
            return None;
        }
        let b = self.bytes[self.pos / 8] & (0x80 >> (self.pos % 8)) != 0;
        self.pos += 1;
        Some(b)
    }

    fn read_bits(&mut self, n: u32) -> Option<u64> {
        let mut v = 0u64;
        for _ in 0..n {
            v = (v << 1) | u64::from(self.next_bit()?);
        }
        Some(v)
    }

    pub fn position(&self) -> usize {
        self.pos
    }
}

fn write_gamma(w: &mut BitWriter, m: u64) {
    let n = floor_log2(m);
    for _ in 0..n {
        w.push(false);
    }
    w.push_bits(m, n + 1);
}

fn read_gamma(r: &mut BitReader) -> Option<u64> {
    let mut n = 0;
    while !r.next_bit()? {
        n += 1;
        if n > 63 {
            return None;
        }
    }
    Some((1 << n) | r.read_bits(n)?)
}

fn write_unsigned(w: &mut BitWriter, m: u64, code: EliasCode) {
    match code {
        EliasCode::Gamma => write_gamma(w, m),
        EliasCode::Delta => {
            let n = floor_log2(m);
            write_gamma(w, n as u64 + 1);
            w.push_bits(m, n);
        }
    }
}

fn read_unsigned(r: &mut BitReader, code: EliasCode) -> Option<u64> {
    match code {
        EliasCode::Gamma => read_gamma(r),
        EliasCode::Delta => {
            let n = read_gamma(r)? - 1;
            if n > 63 {
                return None;
            }
            let n = n as u32;
            Some((1u64.checked_shl(n)?) | r.read_bits(n)?)
        }
    }
}

/// Writes ω(x): a sign bit (set for negatives) then the code of |x| + 1.
pub fn encode_signed(w: &mut BitWriter, x: i64, code: EliasCode) {
    w.push(x < 0);
    write_unsigned(w, x.unsigned_abs() + 1, code);
}

pub fn decode_signed(r: &mut BitReader, code: EliasCode) -> Option<i64> {
    let negative = r.next_bit()?;
    let m = read_unsigned(r, code)? - 1;
    let m = i64::try_from(m).ok()?;
    Some(if negative { -m } else { m })
}
