//! Event kernel: virtual clock, priority queue and cancellation handles.
//!
//! Time is integer microseconds from run start. Events fire in
//! `(fire_at_us, seq)` order, so two events scheduled for the same instant
//! fire in the order they were scheduled. Scheduling into the past is a
//! programming error and panics.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};

/// Convert a millisecond quantity from config space into integer microseconds.
///
/// Grid values like 12.5 ms land exactly on 12500 us; anything below
/// microsecond resolution rounds to the nearest microsecond.
pub fn ms_to_us(ms: f64) -> u64 {
    debug_assert!(ms >= 0.0 && ms.is_finite(), "negative or non-finite ms: {ms}");
    (ms * 1000.0).round() as u64
}

/// Convert whole seconds into microseconds.
pub const fn s_to_us(s: u64) -> u64 {
    s * 1_000_000
}

/// Network payload carried by a `MessageArrival` event.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Message {
    /// Request finished the client->headnode hop and is at ingress.
    RequestAtHeadnode { user: u32, issue: u64 },
    /// Request finished the headnode->worker hop.
    RequestAtWorker { user: u32, issue: u64, replica: u32 },
    /// Response finished the worker->headnode hop.
    ResponseAtHeadnode { user: u32, issue: u64, replica: u32 },
    /// Response finished the headnode->client hop.
    ResponseAtTester { user: u32, issue: u64 },
    /// Concurrency sample from a worker-hosted replica reaching the
    /// autoscaler after the intra-cluster metric hop. The average is carried
    /// in thousandths so the message stays integer-valued on the wire.
    MetricSample { replica: u32, epoch_us: u64, concurrency_milli: u64 },
}

/// What an event does when it fires.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    /// A virtual user issues its next request.
    UserIssue { user: u32 },
    /// A message finished traversing a link.
    MessageArrival { message: Message },
    /// A replica finished servicing a request.
    ServiceComplete { user: u32, issue: u64, replica: u32 },
    /// Periodic autoscaler evaluation.
    AutoscalerTick,
    /// A provisioning replica finished its cold start.
    ReplicaReady { replica: u32 },
    /// Client-side timeout for an outstanding request.
    RequestTimeout { user: u32, issue: u64 },
    /// The ingress proxy finished forwarding one request and can take the
    /// next queued one.
    IngressPump,
    /// The measurement window ended; users stop issuing.
    RunEnd,
}

impl EventKind {
    /// Short name used by the event trace.
    pub fn name(&self) -> &'static str {
        match self {
            EventKind::UserIssue { .. } => "user_issue",
            EventKind::MessageArrival { .. } => "message_arrival",
            EventKind::ServiceComplete { .. } => "service_complete",
            EventKind::AutoscalerTick => "autoscaler_tick",
            EventKind::ReplicaReady { .. } => "replica_ready",
            EventKind::RequestTimeout { .. } => "request_timeout",
            EventKind::IngressPump => "ingress_pump",
            EventKind::RunEnd => "run_end",
        }
    }

    /// Primary id of the payload, for the trace dump.
    pub fn payload_id(&self) -> u64 {
        match self {
            EventKind::UserIssue { user } => *user as u64,
            EventKind::MessageArrival { message } => match message {
                Message::RequestAtHeadnode { issue, .. } => *issue,
                Message::RequestAtWorker { issue, .. } => *issue,
                Message::ResponseAtHeadnode { issue, .. } => *issue,
                Message::ResponseAtTester { issue, .. } => *issue,
                Message::MetricSample { replica, .. } => *replica as u64,
            },
            EventKind::ServiceComplete { issue, .. } => *issue,
            EventKind::AutoscalerTick => 0,
            EventKind::ReplicaReady { replica } => *replica as u64,
            EventKind::RequestTimeout { issue, .. } => *issue,
            EventKind::IngressPump => 0,
            EventKind::RunEnd => 0,
        }
    }
}

/// A scheduled event. Ordering is `(fire_at_us, seq)`, smallest first.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Event {
    pub fire_at_us: u64,
    pub seq: u64,
    pub kind: EventKind,
}

impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        // Reversed so the std max-heap pops the earliest event first.
        other
            .fire_at_us
            .cmp(&self.fire_at_us)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Token returned by `schedule`, usable to cancel the event before it fires.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EventHandle(pub u64);

/// One line of the optional event trace.
#[derive(Debug, Clone)]
pub struct TraceRecord {
    pub time_us: u64,
    pub kind: &'static str,
    pub payload_id: u64,
}

/// Virtual clock plus pending-event queue.
#[derive(Debug)]
pub struct Kernel {
    now_us: u64,
    next_seq: u64,
    queue: BinaryHeap<Event>,
    cancelled: HashSet<u64>,
    processed: u64,
    trace: Option<Vec<TraceRecord>>,
}

impl Default for Kernel {
    fn default() -> Self {
        Self::new()
    }
}

impl Kernel {
    pub fn new() -> Self {
        Kernel {
            now_us: 0,
            next_seq: 0,
            queue: BinaryHeap::new(),
            cancelled: HashSet::new(),
            processed: 0,
            trace: None,
        }
    }

    /// Record every processed event into an in-memory trace (debug aid).
    pub fn enable_trace(&mut self) {
        self.trace = Some(Vec::new());
    }

    pub fn take_trace(&mut self) -> Vec<TraceRecord> {
        self.trace.take().unwrap_or_default()
    }

    pub fn now_us(&self) -> u64 {
        self.now_us
    }

    /// Total events handed to a handler so far (cancelled events excluded).
    pub fn processed(&self) -> u64 {
        self.processed
    }

    pub fn pending(&self) -> usize {
        self.queue.len() - self.cancelled.len()
    }

    /// Schedule `kind` at absolute time `fire_at_us`.
    ///
    /// Panics if the time is in the past; a simulation that tries to rewrite
    /// history is broken and must fail loudly.
    pub fn schedule(&mut self, fire_at_us: u64, kind: EventKind) -> EventHandle {
        assert!(
            fire_at_us >= self.now_us,
            "event scheduled in the past: fire_at={} now={}",
            fire_at_us,
            self.now_us
        );
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queue.push(Event { fire_at_us, seq, kind });
        EventHandle(seq)
    }

    /// Schedule `kind` after a relative delay.
    pub fn schedule_in(&mut self, delay_us: u64, kind: EventKind) -> EventHandle {
        self.schedule(self.now_us + delay_us, kind)
    }

    /// Cancel a pending event. Cancelling an already-fired or already
    /// cancelled event is a no-op.
    pub fn cancel(&mut self, handle: EventHandle) {
        self.cancelled.insert(handle.0);
    }

    fn pop_live(&mut self, t_end_us: u64) -> Option<Event> {
        while let Some(ev) = self.queue.peek() {
            if ev.fire_at_us > t_end_us {
                return None;
            }
            let ev = self.queue.pop().expect("peeked event vanished");
            if self.cancelled.remove(&ev.seq) {
                continue;
            }
            return Some(ev);
        }
        None
    }

    /// Process events up to and including `t_end_us`, in `(fire_at, seq)`
    /// order. The clock jumps to each event's time and is left at `t_end_us`
    /// on return, even when the queue ran dry earlier. Returns the number of
    /// events processed.
    pub fn run_until(
        &mut self,
        t_end_us: u64,
        mut handler: impl FnMut(&mut Kernel, Event),
    ) -> u64 {
        assert!(t_end_us >= self.now_us, "run_until into the past");
        let before = self.processed;
        while let Some(ev) = self.pop_live(t_end_us) {
            self.now_us = ev.fire_at_us;
            self.processed += 1;
            if let Some(trace) = self.trace.as_mut() {
                trace.push(TraceRecord {
                    time_us: ev.fire_at_us,
                    kind: ev.kind.name(),
                    payload_id: ev.kind.payload_id(),
                });
            }
            handler(self, ev);
        }
        self.now_us = t_end_us;
        self.processed - before
    }

    /// Process events until the queue is empty. The clock is left at the last
    /// event's fire time.
    pub fn drain(&mut self, mut handler: impl FnMut(&mut Kernel, Event)) -> u64 {
        let before = self.processed;
        while let Some(ev) = self.pop_live(u64::MAX) {
            self.now_us = ev.fire_at_us;
            self.processed += 1;
            if let Some(trace) = self.trace.as_mut() {
                trace.push(TraceRecord {
                    time_us: ev.fire_at_us,
                    kind: ev.kind.name(),
                    payload_id: ev.kind.payload_id(),
                });
            }
            handler(self, ev);
        }
        self.processed - before
    }
}
