//! Encoding of the bridging destination carried in an OP_RETURN output or
//! a burn service entry: a one-byte length and UTF-8 target chain id,
//! then a one-byte length and UTF-8 target address. Nothing may follow.

use thiserror::Error;

use crate::model::ChainId;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TargetDecodeError {
    #[error("payload truncated")]
    Truncated,
    #[error("field is not utf-8")]
    InvalidUtf8,
    #[error("empty field")]
    Empty,
    #[error("{0} trailing bytes")]
    Trailing(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TargetSpec {
    pub chain_id: ChainId,
    pub address: String,
}

/// Encodes a destination; `None` if a field exceeds 255 bytes or is empty.
pub fn encode_target(chain_id: &ChainId, address: &str) -> Option<Vec<u8>> {
    let c = chain_id.as_str().as_bytes();
    let a = address.as_bytes();
    if c.is_empty() || a.is_empty() || c.len() > 255 || a.len() > 255 {
        return None;
    }
    let mut out = Vec::with_capacity(2 + c.len() + a.len());
    out.push(c.len() as u8);
    out.extend_from_slice(c);
    out.push(a.len() as u8);
    out.extend_from_slice(a);
    Some(out)
}

fn field<'a>(data: &'a [u8], pos: &mut usize) -> Result<&'a str, TargetDecodeError> {
    let len = *data.get(*pos).ok_or(TargetDecodeError::Truncated)? as usize;
    *pos += 1;
    let bytes = data.get(*pos..*pos + len).ok_or(TargetDecodeError::Truncated)?;
    *pos += len;
    if bytes.is_empty() {
        return Err(TargetDecodeError::Empty);
    }
    std::str::from_utf8(bytes).map_err(|_| TargetDecodeError::InvalidUtf8)
}

pub fn decode_target(data: &[u8]) -> Result<TargetSpec, TargetDecodeError> {
    let mut pos = 0;
    let chain = field(data, &mut pos)?;
    let address = field(data, &mut pos)?;
    if pos != data.len() {
        return Err(TargetDecodeError::Trailing(data.len() - pos));
    }
    Ok(TargetSpec {
        chain_id: ChainId::new(chain),
        address: address.to_owned(),
    })
}
