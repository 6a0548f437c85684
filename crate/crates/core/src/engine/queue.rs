//! Event queue ordered by `(time, seq)`.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::topology::NodeId;
use crate::twoway::{ReplyMsg, RequestMsg};

/// Payload of a simulation event.
#[derive(Debug, Clone, PartialEq)]
pub enum EventKind {
    /// Hardware rate of `node` changes.
    RateChange { node: NodeId },
    CycleBoundary { node: NodeId, cycle: u64 },
    Evaluate { node: NodeId, cycle: u64 },
    RequestArrival {
        from: NodeId,
        to: NodeId,
        msg: RequestMsg,
        cycle: u64,
        sent_real: f64,
        fwd_delay: f64,
    },
    /// The responder finished processing and sends its reply.
    ReplyEmit {
        responder: NodeId,
        requester: NodeId,
        msg: RequestMsg,
        l_w_t2: f64,
        cycle: u64,
        sent_real: f64,
        fwd_delay: f64,
        processing: f64,
    },
    ReplyArrival {
        from: NodeId,
        to: NodeId,
        reply: ReplyMsg,
        cycle: u64,
        sent_real: f64,
        fwd_delay: f64,
        processing: f64,
        bwd_delay: f64,
    },
    SampleTick { k: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub time: f64,
    pub seq: u64,
    pub kind: EventKind,
}

impl Eq for Event {}

impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        // reversed: BinaryHeap is a max-heap
        other
            .time
            .total_cmp(&self.time)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Default)]
pub struct EventQueue {
    heap: BinaryHeap<Event>,
    next_seq: u64,
}

impl EventQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, time: f64, kind: EventKind) {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Event { time, seq, kind });
    }

    pub fn pop(&mut self) -> Option<Event> {
        self.heap.pop()
    }

    pub fn peek_time(&self) -> Option<f64> {
        self.heap.peek().map(|e| e.time)
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }
}
