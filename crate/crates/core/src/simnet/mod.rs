//! Synchronous message fabric among validators.
//!
//! Time advances in ticks. A message sent during tick `k` is delivered at
//! tick `k + 1`; within a tick, deliveries are ordered by
//! `(from, to, sequence number)` so runs are reproducible.

pub mod rb;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use crate::model::{Tick, ValidatorIndex};

pub use rb::{RbDelivery, RbError, RbInstanceId, RbMessage, RbPhase, ReliableBroadcast};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord)]
pub struct SimClock {
    pub tick: Tick,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Envelope {
    pub from: ValidatorIndex,
    pub to: ValidatorIndex,
    pub payload: Vec<u8>,
    pub deliver_at: Tick,
    /// Instance or message label for the event log.
    pub label: String,
}

/// Append-only event log, one line per event.
#[derive(Debug, Clone, Default)]
pub struct EventLog {
    enabled: bool,
    lines: Vec<String>,
}

impl EventLog {
    pub fn new(enabled: bool) -> Self {
        Self {
            enabled,
            lines: Vec::new(),
        }
    }

    pub fn is_enabled(&self) -> bool {
        self.enabled
    }

    pub fn push(&mut self, line: impl FnOnce() -> String) {
        if self.enabled {
            self.lines.push(line());
        }
    }

    pub fn record(
        &mut self,
        tick: Tick,
        kind: &str,
        from: ValidatorIndex,
        to: ValidatorIndex,
        instance: &str,
        bytes: usize,
    ) {
        self.push(|| {
            let mut s = String::new();
            let _ = write!(
                s,
                "tick={tick} kind={kind} from={from} to={to} instance={instance} bytes={bytes}"
            );
            s
        });
    }

    pub fn lines(&self) -> &[String] {
        &self.lines
    }

    pub fn into_lines(self) -> Vec<String> {
        self.lines
    }
}

#[derive(Debug, Clone)]
pub struct Network {
    n: usize,
    clock: SimClock,
    seq: u64,
    queue: BTreeMap<(Tick, ValidatorIndex, ValidatorIndex, u64), Envelope>,
    /// Senders whose messages are suppressed.
    dropped: BTreeSet<ValidatorIndex>,
    pub log: EventLog,
}

impl Network {
    pub fn new(n: usize, log: bool) -> Self {
        Self {
            n,
            clock: SimClock::default(),
            seq: 0,
            queue: BTreeMap::new(),
            dropped: BTreeSet::new(),
            log: EventLog::new(log),
        }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn now(&self) -> Tick {
        self.clock.tick
    }

    /// Suppresses every later message from `validator`.
    pub fn drop_outgoing(&mut self, validator: ValidatorIndex) {
        self.dropped.insert(validator);
    }

    pub fn send(&mut self, from: ValidatorIndex, to: ValidatorIndex, payload: Vec<u8>, label: &str) {
        let at = self.clock.tick + 1;
        self.send_at(from, to, payload, label, at);
    }

    /// Schedules delivery at `deliver_at`. Only adversarial senders delay
    /// beyond the next tick.
    pub fn send_at(
        &mut self,
        from: ValidatorIndex,
        to: ValidatorIndex,
        payload: Vec<u8>,
        label: &str,
        deliver_at: Tick,
    ) {
        assert!(from < self.n && to < self.n, "unknown endpoint {from}->{to}");
        let now = self.clock.tick;
        assert!(deliver_at > now, "cannot deliver into the past");
        self.log.record(now, "send", from, to, label, payload.len());
        if self.dropped.contains(&from) {
            return;
        }
        let seq = self.seq;
        self.seq += 1;
        self.queue.insert(
            (deliver_at, from, to, seq),
            Envelope {
                from,
                to,
                payload,
                deliver_at,
                label: label.to_owned(),
            },
        );
    }

    pub fn broadcast(&mut self, from: ValidatorIndex, payload: &[u8], label: &str) {
        for to in 0..self.n {
            self.send(from, to, payload.to_vec(), label);
        }
    }

    /// Advances the clock and returns every envelope due at the new tick.
    pub fn advance_tick(&mut self) -> Vec<Envelope> {
        self.clock.tick += 1;
        let now = self.clock.tick;
        let later = self.queue.split_off(&(now + 1, 0, 0, 0));
        let due = std::mem::replace(&mut self.queue, later);
        due.into_values()
            .inspect(|e| {
                debug_assert_eq!(e.deliver_at, now);
                self.log.record(now, "deliver", e.from, e.to, &e.label, e.payload.len());
            })
            .collect()
    }

    pub fn in_flight(&self) -> usize {
        self.queue.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn honest_send_arrives_next_tick() {
        let mut net = Network::new(3, false);
        for _ in 0..5 {
            net.advance_tick();
        }
        net.send(1, 2, b"x".to_vec(), "m");
        let out = net.advance_tick();
        assert_eq!(net.now(), 6);
        assert_eq!(out.len(), 1);
        assert_eq!((out[0].from, out[0].to, out[0].deliver_at), (1, 2, 6));
    }

    #[test]
    fn dropped_sender_never_delivers() {
        let mut net = Network::new(3, false);
        net.drop_outgoing(0);
        net.send(0, 1, vec![1], "m");
        assert!(net.advance_tick().is_empty());
        assert!(net.advance_tick().is_empty());
    }

    #[test]
    fn self_send_and_ordering() {
        let mut net = Network::new(3, false);
        assert!(net.advance_tick().is_empty());
        net.send(2, 0, vec![3], "c");
        net.send(1, 1, vec![2], "b");
        net.send(1, 0, vec![1], "a");
        net.send(1, 0, vec![0], "a2");
        let order: Vec<_> = net.advance_tick().into_iter().map(|e| (e.from, e.to, e.payload[0])).collect();
        assert_eq!(order, vec![(1, 0, 1), (1, 0, 0), (1, 1, 2), (2, 0, 3)]);
    }

    #[test]
    fn later_envelope_waits() {
        let mut net = Network::new(2, false);
        net.send_at(0, 1, vec![9], "late", 2);
        assert!(net.advance_tick().is_empty());
        assert_eq!(net.in_flight(), 1);
        assert_eq!(net.advance_tick().len(), 1);
    }

    #[test]
    fn log_format() {
        let mut net = Network::new(2, true);
        net.send(0, 1, vec![0; 4], "proposal/sid=1@0");
        net.advance_tick();
        assert_eq!(
            net.log.lines(),
            &[
                "tick=0 kind=send from=0 to=1 instance=proposal/sid=1@0 bytes=4".to_owned(),
                "tick=1 kind=deliver from=0 to=1 instance=proposal/sid=1@0 bytes=4".to_owned(),
            ]
        );
    }
}
