//! Bracha reliable broadcast.
//!
//! The designated sender multicasts `Send(m)`. A node echoes the first
//! `Send` it gets from the sender, multicasts `Ready(m)` after
//! `⌈(n+t+1)/2⌉` matching echoes or `t+1` matching readies, and delivers
//! `m` after `2t+1` matching readies. With `n ≥ 3t+1` this gives validity,
//! agreement, integrity and termination without signatures. Among honest
//! nodes an instance completes three ticks after the broadcast.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::codec::{DecodeError, Reader, Writer};
use crate::model::ValidatorIndex;

/// An RB instance: a tag unique per session and message kind, plus the
/// validator allowed to send on it.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RbInstanceId {
    pub tag: String,
    pub sender: ValidatorIndex,
}

impl RbInstanceId {
    pub fn new(tag: impl Into<String>, sender: ValidatorIndex) -> Self {
        Self {
            tag: tag.into(),
            sender,
        }
    }
}

impl fmt::Display for RbInstanceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}", self.tag, self.sender)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RbPhase {
    Send,
    Echo,
    Ready,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RbMessage {
    pub instance: RbInstanceId,
    pub phase: RbPhase,
    pub value: Vec<u8>,
}

impl RbMessage {
    pub fn encode(&self, w: &mut Writer) {
        let phase = match self.phase {
            RbPhase::Send => 0,
            RbPhase::Echo => 1,
            RbPhase::Ready => 2,
        };
        w.str(&self.instance.tag)
            .u32(self.instance.sender as u32)
            .u8(phase)
            .bytes(&self.value);
    }

    pub fn decode(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        let tag = r.str()?.to_owned();
        let sender = r.u32()? as ValidatorIndex;
        let phase = match r.u8()? {
            0 => RbPhase::Send,
            1 => RbPhase::Echo,
            2 => RbPhase::Ready,
            other => return Err(DecodeError::UnknownTag(other)),
        };
        let value = r.bytes()?.to_vec();
        Ok(Self {
            instance: RbInstanceId { tag, sender },
            phase,
            value,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RbDelivery {
    pub value: Vec<u8>,
    pub sender: ValidatorIndex,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RbError {
    #[error("instance {0} already broadcast")]
    DuplicateBroadcast(RbInstanceId),
    #[error("validator {me} is not the sender of {instance}")]
    NotDesignatedSender {
        me: ValidatorIndex,
        instance: RbInstanceId,
    },
}

#[derive(Debug, Clone, Default)]
struct InstanceState {
    echoed: bool,
    readied: bool,
    echoes: Votes,
    readies: Votes,
    delivered: Option<Vec<u8>>,
}

/// First vote of each node, tallied per value.
#[derive(Debug, Clone, Default)]
struct Votes {
    voters: BTreeSet<ValidatorIndex>,
    tally: BTreeMap<Vec<u8>, usize>,
}

impl Votes {
    /// Matching votes for `value` after counting this one, or `None` for a
    /// repeat voter.
    fn add(&mut self, from: ValidatorIndex, value: &[u8]) -> Option<usize> {
        if !self.voters.insert(from) {
            return None;
        }
        let count = match self.tally.get_mut(value) {
            Some(c) => c,
            None => self.tally.entry(value.to_vec()).or_default(),
        };
        *count += 1;
        Some(*count)
    }
}

/// What handling one message produced: messages to multicast to every
/// node, and possibly a fresh delivery.
#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct RbStep {
    pub multicast: Vec<RbMessage>,
    pub delivered: Option<(RbInstanceId, RbDelivery)>,
}

/// One node's view of every RB instance.
#[derive(Debug, Clone)]
pub struct ReliableBroadcast {
    me: ValidatorIndex,
    n: usize,
    t: usize,
    started: BTreeSet<RbInstanceId>,
    instances: BTreeMap<RbInstanceId, InstanceState>,
}

impl ReliableBroadcast {
    pub fn new(me: ValidatorIndex, n: usize, t: usize) -> Self {
        Self {
            me,
            n,
            t,
            started: BTreeSet::new(),
            instances: BTreeMap::new(),
        }
    }

    pub fn echo_threshold(&self) -> usize {
        (self.n + self.t + 2) / 2
    }

    pub fn deliver_threshold(&self) -> usize {
        2 * self.t + 1
    }

    /// Starts `instance`; the returned `Send` must reach every node.
    pub fn broadcast(&mut self, instance: RbInstanceId, value: Vec<u8>) -> Result<RbMessage, RbError> {
        if instance.sender != self.me {
            return Err(RbError::NotDesignatedSender {
                me: self.me,
                instance,
            });
        }
        if !self.started.insert(instance.clone()) {
            return Err(RbError::DuplicateBroadcast(instance));
        }
        Ok(RbMessage {
            instance,
            phase: RbPhase::Send,
            value,
        })
    }

    pub fn handle(&mut self, from: ValidatorIndex, msg: RbMessage) -> RbStep {
        let mut step = RbStep::default();
        if from >= self.n {
            return step;
        }
        let echo_threshold = self.echo_threshold();
        let deliver_threshold = self.deliver_threshold();
        let amplify_threshold = self.t + 1;
        let state = self.instances.entry(msg.instance.clone()).or_default();
        match msg.phase {
            RbPhase::Send => {
                // Only the designated sender may send, and only its first send counts.
                if from == msg.instance.sender && !state.echoed {
                    state.echoed = true;
                    step.multicast.push(RbMessage {
                        instance: msg.instance.clone(),
                        phase: RbPhase::Echo,
                        value: msg.value.clone(),
                    });
                }
            }
            RbPhase::Echo => {
                // Echoes only matter until this node sends its ready.
                if state.readied {
                    return step;
                }
                let Some(matching) = state.echoes.add(from, &msg.value) else {
                    return step;
                };
                if matching >= echo_threshold {
                    state.readied = true;
                    step.multicast.push(RbMessage {
                        instance: msg.instance.clone(),
                        phase: RbPhase::Ready,
                        value: msg.value.clone(),
                    });
                }
            }
            RbPhase::Ready => {
                if state.readied && state.delivered.is_some() {
                    return step;
                }
                let Some(matching) = state.readies.add(from, &msg.value) else {
                    return step;
                };
                if !state.readied && matching >= amplify_threshold {
                    state.readied = true;
                    step.multicast.push(RbMessage {
                        instance: msg.instance.clone(),
                        phase: RbPhase::Ready,
                        value: msg.value.clone(),
                    });
                }
                if state.delivered.is_none() && matching >= deliver_threshold {
                    state.delivered = Some(msg.value.clone());
                    step.delivered = Some((
                        msg.instance.clone(),
                        RbDelivery {
                            value: msg.value,
                            sender: msg.instance.sender,
                        },
                    ));
                }
            }
        }
        step
    }

    /// The delivered value of `instance`, stable once set.
    pub fn delivered(&self, instance: &RbInstanceId) -> Option<RbDelivery> {
        let value = self.instances.get(instance)?.delivered.clone()?;
        Some(RbDelivery {
            value,
            sender: instance.sender,
        })
    }

    /// Drops state for instances whose tag satisfies `stale`.
    pub fn prune(&mut self, mut stale: impl FnMut(&RbInstanceId) -> bool) {
        self.instances.retain(|id, _| !stale(id));
        self.started.retain(|id| !stale(id));
    }
}
