//! Exhaustive equivocation patterns for reliable broadcast with n = 4,
//! t = 1 and a two-value domain.
//!
//! Node 3 is Byzantine. As sender it may send `Send`, `Echo` and `Ready`
//! with either value, or nothing, to each honest node independently. As a
//! non-sender it may echo and ready either value, or nothing, to each
//! honest node. Every pattern runs under two delivery orders.

use bridgeless_core::model::ValidatorIndex;
use bridgeless_core::simnet::rb::{RbInstanceId, RbMessage, RbPhase, ReliableBroadcast};

use super::SuiteReport;

const N: usize = 4;
const T: usize = 1;
const BYZ: ValidatorIndex = 3;
const HONEST: [ValidatorIndex; 3] = [0, 1, 2];
const VALUES: [&[u8]; 2] = [b"a", b"b"];

type Envelope = (ValidatorIndex, ValidatorIndex, RbMessage);

/// Deliveries per node after running to quiescence.
fn run(initial: Vec<Envelope>, reverse: bool) -> (Vec<Vec<Vec<u8>>>, Vec<ReliableBroadcast>) {
    let mut nodes: Vec<_> = (0..N).map(|i| ReliableBroadcast::new(i, N, T)).collect();
    let mut delivered = vec![Vec::new(); N];
    let mut in_flight = initial;
    while !in_flight.is_empty() {
        if reverse {
            in_flight.reverse();
        }
        let mut next = Vec::new();
        for (from, to, msg) in in_flight {
            if to == BYZ {
                continue;
            }
            let step = nodes[to].handle(from, msg);
            if let Some((_, d)) = step.delivered {
                delivered[to].push(d.value);
            }
            for m in step.multicast {
                next.extend((0..N).map(|dest| (to, dest, m.clone())));
            }
        }
        in_flight = next;
    }
    (delivered, nodes)
}

fn msg(instance: &RbInstanceId, phase: RbPhase, value: &[u8]) -> RbMessage {
    RbMessage {
        instance: instance.clone(),
        phase,
        value: value.to_vec(),
    }
}

/// Choice 0 sends nothing, 1 and 2 pick a value.
fn choice(code: usize) -> Option<&'static [u8]> {
    code.checked_sub(1).map(|i| VALUES[i])
}

fn check_common(delivered: &[Vec<Vec<u8>>], nodes: &[ReliableBroadcast], id: &RbInstanceId) -> Option<String> {
    for &h in &HONEST {
        if delivered[h].len() > 1 {
            return Some(format!("node {h} delivered {} times", delivered[h].len()));
        }
        if let Some(v) = delivered[h].first() {
            if !VALUES.contains(&v.as_slice()) {
                return Some(format!("node {h} delivered a value nobody sent"));
            }
            if nodes[h].delivered(id).map(|d| d.value) != Some(v.clone()) {
                return Some(format!("node {h} reports a different delivered value"));
            }
        }
    }
    let firsts: Vec<_> = HONEST.iter().map(|&h| delivered[h].first()).collect();
    if firsts.iter().any(Option::is_some) && firsts.iter().any(Option::is_none) {
        return Some(format!("only some honest nodes delivered: {firsts:?}"));
    }
    if firsts.windows(2).any(|w| w[0] != w[1]) {
        return Some(format!("honest nodes delivered different values: {firsts:?}"));
    }
    None
}

pub fn rb_equivocation_suite() -> SuiteReport {
    let mut report = SuiteReport::new("reliable broadcast equivocation (n=4, t=1)");
    let byz_id = RbInstanceId::new("eq", BYZ);
    // Byzantine sender: 27 choices (send, echo, ready) per honest node.
    for pattern in 0..27usize.pow(3) {
        let mut initial = Vec::new();
        for (k, &h) in HONEST.iter().enumerate() {
            let code = pattern / 27usize.pow(k as u32) % 27;
            let phases = [(RbPhase::Send, code % 3), (RbPhase::Echo, code / 3 % 3), (RbPhase::Ready, code / 9)];
            for (phase, c) in phases {
                if let Some(v) = choice(c) {
                    initial.push((BYZ, h, msg(&byz_id, phase, v)));
                }
            }
        }
        for reverse in [false, true] {
            let (delivered, nodes) = run(initial.clone(), reverse);
            report.case(check_common(&delivered, &nodes, &byz_id).map(|e| format!("byzantine sender pattern {pattern} reverse={reverse}: {e}")));
        }
    }
    // Honest sender 0: 9 choices (echo, ready) per honest node from node 3.
    let sender = 0;
    let id = RbInstanceId::new("eq", sender);
    for value in VALUES {
        for pattern in 0..9usize.pow(3) {
            let mut initial = Vec::new();
            let mut origin = ReliableBroadcast::new(sender, N, T);
            let send = origin.broadcast(id.clone(), value.to_vec()).expect("designated sender");
            initial.extend((0..N).map(|dest| (sender, dest, send.clone())));
            for (k, &h) in HONEST.iter().enumerate() {
                let code = pattern / 9usize.pow(k as u32) % 9;
                for (phase, c) in [(RbPhase::Echo, code % 3), (RbPhase::Ready, code / 3)] {
                    if let Some(v) = choice(c) {
                        initial.push((BYZ, h, msg(&id, phase, v)));
                    }
                }
                // A forged Send on the honest sender's instance.
                initial.push((BYZ, h, msg(&id, RbPhase::Send, VALUES[k % 2])));
            }
            for reverse in [false, true] {
                let (delivered, nodes) = run(initial.clone(), reverse);
                let failure = check_common(&delivered, &nodes, &id).or_else(|| {
                    HONEST
                        .iter()
                        .find(|&&h| delivered[h].first().map(Vec::as_slice) != Some(value))
                        .map(|h| format!("node {h} did not deliver the sender's value"))
                });
                report.case(failure.map(|e| format!("honest sender value={value:?} pattern {pattern} reverse={reverse}: {e}")));
            }
        }
    }
    report
}
