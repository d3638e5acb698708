//! Concrete byte encodings.
//!
//! Literals encode as themselves. A pair `(x, y)` encodes as the length of
//! `x` in four big-endian bytes, followed by `x`, followed by `y`.

use std::fmt;

use thiserror::Error;

use crate::term::to_hex;

/// A finite byte sequence. Its encoding is its content.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct ConcreteBytes(Vec<u8>);

impl ConcreteBytes {
    pub fn new(data: impl Into<Vec<u8>>) -> ConcreteBytes {
        ConcreteBytes(data.into())
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_vec(self) -> Vec<u8> {
        self.0
    }

    pub fn to_hex(&self) -> String {
        to_hex(&self.0)
    }
}

impl From<Vec<u8>> for ConcreteBytes {
    fn from(v: Vec<u8>) -> ConcreteBytes {
        ConcreteBytes(v)
    }
}

impl From<&[u8]> for ConcreteBytes {
    fn from(v: &[u8]) -> ConcreteBytes {
        ConcreteBytes(v.to_vec())
    }
}

impl AsRef<[u8]> for ConcreteBytes {
    fn as_ref(&self) -> &[u8] {
        &self.0
    }
}

impl fmt::Debug for ConcreteBytes {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "0x{}", self.to_hex())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodecError {
    #[error("first pair component is {0} bytes, which does not fit the 32-bit length field")]
    LengthOverflow(usize),
    #[error("malformed pair: {0}")]
    MalformedPair(&'static str),
}

pub const LENGTH_FIELD: usize = 4;

pub fn pair_encode(b1: &ConcreteBytes, b2: &ConcreteBytes) -> Result<ConcreteBytes, CodecError> {
    let len = u32::try_from(b1.len()).map_err(|_| CodecError::LengthOverflow(b1.len()))?;
    let mut out = Vec::with_capacity(LENGTH_FIELD + b1.len() + b2.len());
    out.extend_from_slice(&len.to_be_bytes());
    out.extend_from_slice(b1.as_slice());
    out.extend_from_slice(b2.as_slice());
    Ok(ConcreteBytes(out))
}

pub fn pair_decode(b: &ConcreteBytes) -> Result<(ConcreteBytes, ConcreteBytes), CodecError> {
    let data = b.as_slice();
    let Some((len, rest)) = data.split_first_chunk::<LENGTH_FIELD>() else {
        return Err(CodecError::MalformedPair("shorter than the length field"));
    };
    let len = u32::from_be_bytes(*len) as usize;
    if len > rest.len() {
        return Err(CodecError::MalformedPair(
            "length field exceeds the remaining bytes",
        ));
    }
    let (x, y) = rest.split_at(len);
    Ok((x.into(), y.into()))
}

pub fn bytes_equal(b1: &ConcreteBytes, b2: &ConcreteBytes) -> bool {
    b1.as_slice() == b2.as_slice()
}
