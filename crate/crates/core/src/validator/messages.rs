//! Wire format of validator-to-validator messages.

use crate::codec::{DecodeError, Reader, Writer};
use crate::model::{DepositIdentifier, Hash32, ValidatorIndex};
use crate::simnet::RbMessage;
use crate::tss::Signature;

/// Values carried inside reliable-broadcast instances.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RbValue {
    Proposal {
        sid: u64,
        deposit_id: DepositIdentifier,
        sign_hash: Vec<Hash32>,
    },
    SignStart {
        sid: u64,
        deposit_id: DepositIdentifier,
        sign_hash: Vec<Hash32>,
        signers: Vec<ValidatorIndex>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ProtocolMessage {
    Rb(RbMessage),
    /// Point-to-point reply to the proposer.
    Acceptance {
        sid: u64,
        deposit_id: DepositIdentifier,
        sign_hash: Vec<Hash32>,
    },
    /// A signer relaying the threshold signature to everyone.
    Signature {
        sid: u64,
        deposit_id: DepositIdentifier,
        sign_hash: Vec<Hash32>,
        signature: Signature,
    },
    /// Forwarded client request.
    SubmitWithdrawal { deposit_id: DepositIdentifier },
}

fn put_hashes(w: &mut Writer, hashes: &[Hash32]) {
    w.u32(hashes.len() as u32);
    for h in hashes {
        w.hash(h);
    }
}

fn get_hashes(r: &mut Reader<'_>) -> Result<Vec<Hash32>, DecodeError> {
    let n = r.count(32)?;
    (0..n).map(|_| r.hash()).collect()
}

impl RbValue {
    pub fn sid(&self) -> u64 {
        match self {
            RbValue::Proposal { sid, .. } | RbValue::SignStart { sid, .. } => *sid,
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        match self {
            RbValue::Proposal {
                sid,
                deposit_id,
                sign_hash,
            } => {
                w.u8(0).u64(*sid);
                deposit_id.encode(&mut w);
                put_hashes(&mut w, sign_hash);
            }
            RbValue::SignStart {
                sid,
                deposit_id,
                sign_hash,
                signers,
            } => {
                w.u8(1).u64(*sid);
                deposit_id.encode(&mut w);
                put_hashes(&mut w, sign_hash);
                w.u32(signers.len() as u32);
                for s in signers {
                    w.u32(*s as u32);
                }
            }
        }
        w.finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(bytes);
        let value = match r.u8()? {
            0 => RbValue::Proposal {
                sid: r.u64()?,
                deposit_id: DepositIdentifier::decode(&mut r)?,
                sign_hash: get_hashes(&mut r)?,
            },
            1 => {
                let sid = r.u64()?;
                let deposit_id = DepositIdentifier::decode(&mut r)?;
                let sign_hash = get_hashes(&mut r)?;
                let n = r.count(4)?;
                let signers = (0..n)
                    .map(|_| r.u32().map(|v| v as ValidatorIndex))
                    .collect::<Result<_, _>>()?;
                RbValue::SignStart {
                    sid,
                    deposit_id,
                    sign_hash,
                    signers,
                }
            }
            t => return Err(DecodeError::UnknownTag(t)),
        };
        r.finish()?;
        Ok(value)
    }
}

impl ProtocolMessage {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        match self {
            ProtocolMessage::Rb(m) => {
                w.u8(0);
                m.encode(&mut w);
            }
            ProtocolMessage::Acceptance {
                sid,
                deposit_id,
                sign_hash,
            } => {
                w.u8(1).u64(*sid);
                deposit_id.encode(&mut w);
                put_hashes(&mut w, sign_hash);
            }
            ProtocolMessage::Signature {
                sid,
                deposit_id,
                sign_hash,
                signature,
            } => {
                w.u8(2).u64(*sid);
                deposit_id.encode(&mut w);
                put_hashes(&mut w, sign_hash);
                w.bytes(signature.as_bytes());
            }
            ProtocolMessage::SubmitWithdrawal { deposit_id } => {
                w.u8(3);
                deposit_id.encode(&mut w);
            }
        }
        w.finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(bytes);
        let msg = match r.u8()? {
            0 => ProtocolMessage::Rb(RbMessage::decode(&mut r)?),
            1 => ProtocolMessage::Acceptance {
                sid: r.u64()?,
                deposit_id: DepositIdentifier::decode(&mut r)?,
                sign_hash: get_hashes(&mut r)?,
            },
            2 => ProtocolMessage::Signature {
                sid: r.u64()?,
                deposit_id: DepositIdentifier::decode(&mut r)?,
                sign_hash: get_hashes(&mut r)?,
                signature: Signature(r.bytes()?.to_vec()),
            },
            3 => ProtocolMessage::SubmitWithdrawal {
                deposit_id: DepositIdentifier::decode(&mut r)?,
            },
            t => return Err(DecodeError::UnknownTag(t)),
        };
        r.finish()?;
        Ok(msg)
    }

    /// Short label for the event log.
    pub fn label(&self) -> String {
        match self {
            ProtocolMessage::Rb(m) => format!("{}/{:?}", m.instance, m.phase).to_lowercase(),
            ProtocolMessage::Acceptance { sid, .. } => format!("acceptance/sid={sid}"),
            ProtocolMessage::Signature { sid, .. } => format!("signature/sid={sid}"),
            ProtocolMessage::SubmitWithdrawal { deposit_id } => format!("submitWithdrawal/{deposit_id}"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simnet::{RbInstanceId, RbPhase};

    fn id() -> DepositIdentifier {
        DepositIdentifier::new("evm-sim", Hash32::digest(b"x"), 2)
    }

    #[test]
    fn roundtrips() {
        let hashes = vec![Hash32::digest(b"a"), Hash32::digest(b"b")];
        let values = [
            RbValue::Proposal { sid: 3, deposit_id: id(), sign_hash: hashes.clone() },
            RbValue::SignStart { sid: 3, deposit_id: id(), sign_hash: hashes.clone(), signers: vec![0, 2] },
        ];
        for v in values {
            assert_eq!(RbValue::decode(&v.encode()).unwrap(), v);
            let msg = ProtocolMessage::Rb(RbMessage {
                instance: RbInstanceId::new("proposal/sid=3", 1),
                phase: RbPhase::Ready,
                value: v.encode(),
            });
            assert_eq!(ProtocolMessage::decode(&msg.encode()).unwrap(), msg);
        }
        let msgs = [
            ProtocolMessage::Acceptance { sid: 1, deposit_id: id(), sign_hash: hashes.clone() },
            ProtocolMessage::Signature {
                sid: 1,
                deposit_id: id(),
                sign_hash: hashes,
                signature: Signature(vec![7; 128]),
            },
            ProtocolMessage::SubmitWithdrawal { deposit_id: id() },
        ];
        for m in msgs {
            assert_eq!(ProtocolMessage::decode(&m.encode()).unwrap(), m);
        }
    }

    #[test]
    fn rejects_garbage() {
        assert!(ProtocolMessage::decode(&[]).is_err());
        assert_eq!(ProtocolMessage::decode(&[9]), Err(DecodeError::UnknownTag(9)));
        let mut bytes = ProtocolMessage::SubmitWithdrawal { deposit_id: id() }.encode();
        bytes.push(0);
        assert_eq!(ProtocolMessage::decode(&bytes), Err(DecodeError::TrailingBytes(1)));
        assert!(RbValue::decode(&[1, 0, 0]).is_err());
    }

    #[test]
    fn labels() {
        let m = ProtocolMessage::Acceptance { sid: 4, deposit_id: id(), sign_hash: vec![] };
        assert_eq!(m.label(), "acceptance/sid=4");
    }
}
