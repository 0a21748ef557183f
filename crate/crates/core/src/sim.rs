//! The simulation proper: wires users, links, ingress, replicas and the
//! autoscaler onto the event kernel.
//!
//! Request path: tester --access link--> ingress on the headnode -->
//! least-outstanding replica (headnode-local, or across the intra link to a
//! worker) --> service --> back the same way. Outstanding-request accounting
//! happens at the ingress, so a replica behind a slow link stays "busy" for
//! the wire time too; the autoscaler samples that same view, which is what
//! couples inter-node latency to scaling behavior.

use std::collections::VecDeque;

use rand_chacha::ChaCha8Rng;

use crate::autoscaler::{Autoscaler, ConcurrencySample, Mode};
use crate::cluster::{ClusterState, ReplicaState, HEADNODE};
use crate::kernel::{ms_to_us, s_to_us, Event, EventKind, Kernel, Message, TraceRecord};
use crate::loadgen::{LoadGen, Resolution, TimeoutResolution};
use crate::metrics::{LatencyHistogram, RunResult};
use crate::network::{Link, Traversal};
use crate::rng::{stream_rng, uniform01, StreamId};
use crate::scenario::RunPlan;

/// Busy-time integral for one scrape target (a replica's in-flight count or
/// the ingress buffer depth) since the last scrape. Dividing by the epoch
/// length gives the average concurrency a sidecar proxy would report;
/// instantaneous gauges alias badly against synchronized closed-loop users.
#[derive(Clone, Copy)]
struct EpochLoad {
    integral_us: u64,
    last_update_us: u64,
}

impl EpochLoad {
    fn starting_at(now_us: u64) -> Self {
        EpochLoad { integral_us: 0, last_update_us: now_us }
    }

    /// Accrue time spent at `level` since the last change; call with the old
    /// level just before it changes (or at a scrape).
    fn advance(&mut self, now_us: u64, level: u32) {
        self.integral_us += level as u64 * (now_us - self.last_update_us);
        self.last_update_us = now_us;
    }

    /// Close the epoch: average over its length and reset the integral.
    fn take_average(&mut self, now_us: u64, level: u32, epoch_len_us: u64) -> f64 {
        self.advance(now_us, level);
        let avg = self.integral_us as f64 / epoch_len_us as f64;
        self.integral_us = 0;
        avg
    }
}

/// Everything but the kernel, so the event loop can borrow both sides.
struct World {
    plan: RunPlan,
    access: Link,
    intra: Link,
    service_us: u64,
    /// Span of the uniform per-request service wobble, in integer µs.
    exec_jitter_us: u64,
    cold_start_us: u64,
    timeout_us: u64,
    /// Per-request timeout events are only scheduled when a timeout can
    /// actually fire (lossy or jittery links, or a timeout shorter than the
    /// worst-case deterministic path). On the common deterministic grids this
    /// keeps millions of never-firing events out of the queue.
    timeouts_enabled: bool,
    duration_end_us: u64,
    tick_us: u64,
    /// Hard stop for autoscaler ticks, comfortably after scale-to-zero.
    ticks_end_us: u64,
    cluster: ClusterState,
    loadgen: LoadGen,
    autoscaler: Option<Autoscaler>,
    /// Requests parked at the ingress: behind the busy proxy, waiting for a
    /// replica, or both.
    buffer: VecDeque<(u32, u64)>,
    /// Forwarding time the ingress proxy spends per request.
    ingress_cost_us: u64,
    /// Instant the proxy finishes its current forward.
    ingress_free_at_us: u64,
    /// An IngressPump event is pending at `ingress_free_at_us`.
    pump_scheduled: bool,
    /// Per-replica concurrency integrals for metric scraping, indexed by
    /// replica id (ids are small, monotone and never reused).
    replica_load: Vec<EpochLoad>,
    buffer_load: EpochLoad,
    access_rng: ChaCha8Rng,
    intra_rng: ChaCha8Rng,
    metrics_rng: ChaCha8Rng,
    service_rng: ChaCha8Rng,
    hist: LatencyHistogram,
    successes: u64,
    timeouts: u64,
    drops: u64,
    stragglers: u64,
    headnode_served: u64,
    worker_served: u64,
    // Time integral of outstanding user requests over the load window, for
    // the Little's-law cross-check.
    outstanding: u32,
    last_outstanding_change_us: u64,
    outstanding_integral: u128,
    max_ready: u32,
    last_timeline_ready: u32,
    timeline: Vec<(u64, u32)>,
}

/// A fully wired run, ready to execute.
pub struct Simulation {
    kernel: Kernel,
    world: World,
}

/// Jitter and loss belong to the emulated delay; a link with zero base
/// delay stands for a local, un-emulated interface and passes through
/// untouched (e.g. the intra hop of a single-site cluster).
fn emulated_link(one_way_delay_us: u64, jitter_us: u64, loss_prob: f64) -> Link {
    if one_way_delay_us == 0 {
        Link::new(0, 0, 0.0)
    } else {
        Link::new(one_way_delay_us, jitter_us, loss_prob)
    }
}

impl Simulation {
    pub fn new(plan: RunPlan) -> Self {
        let access = emulated_link(
            ms_to_us(plan.delays.access_delay_ms),
            ms_to_us(plan.delays.jitter_ms),
            plan.delays.loss_prob,
        );
        let intra = emulated_link(
            ms_to_us(plan.delays.intra_delay_ms),
            ms_to_us(plan.delays.jitter_ms),
            plan.delays.loss_prob,
        );
        let service_us = ms_to_us(plan.processing_ms + plan.function.base_overhead_ms);
        let exec_jitter_us = ms_to_us(plan.function.exec_jitter_ms);
        let ingress_cost_us = ms_to_us(plan.ingress_cost_ms);
        let cold_start_us = ms_to_us(plan.function.cold_start_ms);
        let timeout_us = plan.workload.request_timeout_ms * 1000;
        let duration_end_us = s_to_us(plan.workload.duration_s);
        let tick_us = s_to_us(plan.autoscaler.tick_interval_s);

        // Worst-case deterministic response time: both wire round trips at
        // maximum jitter, service, one cold start while buffered, the whole
        // user population serialized through the ingress, plus tick slack.
        // If the timeout exceeds this and links are lossless, no timeout can
        // ever fire and the events are skipped wholesale.
        let path_bound_us = 2 * (access.one_way_delay_us + access.jitter_us)
            + 2 * (intra.one_way_delay_us + intra.jitter_us)
            + service_us
            + 8 * exec_jitter_us
            + plan.users as u64 * ingress_cost_us
            + cold_start_us
            + 2 * tick_us;
        let dead_cluster = plan.initial_replicas == 0 && !plan.autoscaler.enabled;
        let timeouts_enabled = plan.delays.loss_prob > 0.0
            || timeout_us <= path_bound_us
            || plan.autoscaler.hard_concurrency_limit > 0
            || dead_cluster;

        let mut cluster = ClusterState::new(
            plan.worker_count,
            plan.headnode_hosts_replicas,
            plan.placement,
            plan.autoscaler.hard_concurrency_limit,
        );
        // Pre-warmed replicas skip the cold start entirely.
        for id in cluster.begin_scale_up(plan.initial_replicas) {
            cluster.mark_ready(id);
        }

        let autoscaler = if plan.autoscaler.enabled {
            let mut a = Autoscaler::new(plan.autoscaler);
            a.enable_decision_log();
            Some(a)
        } else {
            None
        };

        let mut kernel = Kernel::new();
        for user in 0..plan.users {
            kernel.schedule(0, EventKind::UserIssue { user });
        }
        kernel.schedule(duration_end_us, EventKind::RunEnd);
        if autoscaler.is_some() {
            kernel.schedule(tick_us, EventKind::AutoscalerTick);
        }

        let grace_us = s_to_us(plan.autoscaler.stable_window_s + plan.autoscaler.scale_to_zero_grace_s);
        let initial_ready = cluster.ready_count();
        let world = World {
            access,
            intra,
            service_us,
            exec_jitter_us,
            cold_start_us,
            timeout_us,
            timeouts_enabled,
            duration_end_us,
            tick_us,
            ticks_end_us: duration_end_us + grace_us + 5 * tick_us,
            cluster,
            loadgen: LoadGen::new(plan.users, duration_end_us),
            autoscaler,
            buffer: VecDeque::new(),
            ingress_cost_us,
            ingress_free_at_us: 0,
            pump_scheduled: false,
            replica_load: Vec::new(),
            buffer_load: EpochLoad::starting_at(0),
            access_rng: stream_rng(plan.seed, StreamId::AccessLink),
            intra_rng: stream_rng(plan.seed, StreamId::IntraLink),
            metrics_rng: stream_rng(plan.seed, StreamId::Metrics),
            service_rng: stream_rng(plan.seed, StreamId::Service),
            hist: LatencyHistogram::new(),
            successes: 0,
            timeouts: 0,
            drops: 0,
            stragglers: 0,
            headnode_served: 0,
            worker_served: 0,
            outstanding: 0,
            last_outstanding_change_us: 0,
            outstanding_integral: 0,
            max_ready: initial_ready,
            last_timeline_ready: initial_ready,
            timeline: if initial_ready > 0 { vec![(0, initial_ready)] } else { Vec::new() },
            plan,
        };
        Simulation { kernel, world }
    }

    /// Record every event into a trace alongside the run. Only sensible for
    /// small runs: the trace grows with the event count.
    pub fn enable_trace(&mut self) {
        self.kernel.enable_trace();
    }

    /// Run to completion (the queue drains once load stops and the cluster
    /// has wound down) and report.
    pub fn run(self) -> (RunResult, Vec<TraceRecord>) {
        let Simulation { mut kernel, mut world } = self;
        kernel.drain(|k, ev| world.handle(k, ev));
        let trace = kernel.take_trace();
        (world.finish(), trace)
    }
}

/// Simulate one plan.
pub fn simulate(plan: &RunPlan) -> RunResult {
    Simulation::new(plan.clone()).run().0
}

impl World {
    fn handle(&mut self, kernel: &mut Kernel, ev: Event) {
        match ev.kind {
            EventKind::UserIssue { user } => self.start_request(kernel, user),
            EventKind::MessageArrival { message } => self.on_message(kernel, message),
            EventKind::ServiceComplete { user, issue, replica } => {
                self.on_service_complete(kernel, user, issue, replica)
            }
            EventKind::AutoscalerTick => self.on_tick(kernel),
            EventKind::ReplicaReady { replica } => {
                if self.cluster.mark_ready(replica) {
                    self.note_ready_change(kernel.now_us());
                    self.pump(kernel);
                }
            }
            EventKind::IngressPump => {
                self.pump_scheduled = false;
                self.pump(kernel);
            }
            EventKind::RequestTimeout { user, issue } => self.on_timeout(kernel, user, issue),
            EventKind::RunEnd => {
                self.stragglers = self.loadgen.outstanding_count() as u64;
                self.accumulate_outstanding(self.duration_end_us);
            }
        }
    }

    /// Deliver a message after a link traversal. Zero-delay hops (un-emulated
    /// local interfaces) are handled inline instead of through the queue;
    /// on the zero-delay grids this is most of the event volume.
    fn send(&mut self, kernel: &mut Kernel, delay_us: u64, message: Message) {
        if delay_us == 0 {
            self.on_message(kernel, message);
        } else {
            kernel.schedule(kernel.now_us() + delay_us, EventKind::MessageArrival { message });
        }
    }

    fn start_request(&mut self, kernel: &mut Kernel, user: u32) {
        let now = kernel.now_us();
        let issue = self.loadgen.issue(user, now);
        self.note_outstanding(now, 1);
        if self.timeouts_enabled {
            kernel.schedule(now + self.timeout_us, EventKind::RequestTimeout { user, issue });
        }
        match self.access.sample(&mut self.access_rng) {
            Traversal::Delivered { delay_us } => {
                self.send(kernel, delay_us, Message::RequestAtHeadnode { user, issue });
            }
            Traversal::Dropped => {
                debug_assert!(self.timeouts_enabled, "lossy link requires timeouts");
                self.drops += 1;
            }
        }
    }

    fn on_message(&mut self, kernel: &mut Kernel, message: Message) {
        let now = kernel.now_us();
        match message {
            Message::RequestAtHeadnode { user, issue } => {
                // A request whose user already gave up dies at the ingress.
                if !self.loadgen.is_current(user, issue) {
                    return;
                }
                // An idle proxy with nothing queued forwards straight through.
                // Everything else waits its turn; the proxy works the queue
                // off one forwarding slot at a time.
                if self.buffer.is_empty() && now >= self.ingress_free_at_us {
                    if let Some(replica) = self.cluster.route() {
                        self.ingress_free_at_us = now + self.ingress_cost_us;
                        self.dispatch(kernel, user, issue, replica);
                        return;
                    }
                }
                self.buffer_load.advance(now, self.buffer.len() as u32);
                self.buffer.push_back((user, issue));
                // First request against an empty service: provision
                // immediately instead of waiting for the next tick.
                if self.autoscaler.is_some() && self.cluster.live_count() == 0 {
                    self.scale_up(kernel, 1);
                }
                self.pump(kernel);
            }
            Message::RequestAtWorker { user, issue, replica } => {
                // The worker serves whatever arrives, current or stale; its
                // outstanding slot is held either way.
                let service = self.sample_service_us();
                kernel.schedule(
                    now + service,
                    EventKind::ServiceComplete { user, issue, replica },
                );
            }
            Message::ResponseAtHeadnode { user, issue, replica } => {
                self.release_replica(kernel, replica);
                self.forward_response(kernel, user, issue);
            }
            Message::ResponseAtTester { user, issue } => {
                match self.loadgen.on_response(user, issue, now) {
                    Resolution::Success { latency_us, reissue } => {
                        debug_assert!(
                            self.timeouts_enabled || latency_us <= self.timeout_us,
                            "timeout events were skipped but a request exceeded the timeout"
                        );
                        self.successes += 1;
                        self.hist.record(latency_us);
                        self.note_outstanding(now, -1);
                        if reissue {
                            self.start_request(kernel, user);
                        }
                    }
                    Resolution::LateResponse => self.note_outstanding(now, -1),
                    Resolution::Stale => {}
                }
            }
            Message::MetricSample { replica, epoch_us, concurrency_milli } => {
                if let Some(a) = self.autoscaler.as_mut() {
                    a.record_sample(&ConcurrencySample::new(
                        replica,
                        epoch_us,
                        now,
                        concurrency_milli as f64 / 1000.0,
                    ));
                }
            }
        }
    }

    /// Service time for one execution: the configured base plus an
    /// exponential draw with mean `exec_jitter_us`, truncated at eight means
    /// so the deterministic worst-case path bound stays finite. The
    /// exponential shape matters: occasional multi-millisecond stalls are
    /// what real stacks show, and they are what keeps closed-loop users from
    /// marching in lockstep.
    fn sample_service_us(&mut self) -> u64 {
        if self.exec_jitter_us == 0 {
            return self.service_us;
        }
        let u = uniform01(&mut self.service_rng);
        let draw = -(1.0 - u).ln() * self.exec_jitter_us as f64;
        self.service_us + (draw as u64).min(8 * self.exec_jitter_us)
    }

    /// Accrue a replica's concurrency integral up to `now` at its current
    /// level; call just before the level changes and at scrapes.
    fn track_replica_load(&mut self, replica: u32, now_us: u64) {
        let level = self.cluster.replica(replica).map_or(0, |r| r.in_flight);
        let idx = replica as usize;
        if idx >= self.replica_load.len() {
            self.replica_load.resize(idx + 1, EpochLoad::starting_at(now_us));
        }
        self.replica_load[idx].advance(now_us, level);
    }

    fn dispatch(&mut self, kernel: &mut Kernel, user: u32, issue: u64, replica: u32) {
        let now = kernel.now_us();
        self.track_replica_load(replica, now);
        self.cluster.admit(replica);
        let node = self.cluster.replica(replica).expect("routed replica exists").node;
        if node == HEADNODE {
            let service = self.sample_service_us();
            kernel.schedule(
                now + service,
                EventKind::ServiceComplete { user, issue, replica },
            );
        } else {
            match self.intra.sample(&mut self.intra_rng) {
                Traversal::Delivered { delay_us } => {
                    self.send(kernel, delay_us, Message::RequestAtWorker { user, issue, replica });
                }
                Traversal::Dropped => {
                    // The proxied stream is gone; the replica slot frees, the
                    // user recovers via its timeout.
                    self.drops += 1;
                    self.release_replica(kernel, replica);
                }
            }
        }
    }

    fn on_service_complete(&mut self, kernel: &mut Kernel, user: u32, issue: u64, replica: u32) {
        let node = self.cluster.replica(replica).expect("serving replica exists").node;
        if node == HEADNODE {
            self.headnode_served += 1;
            // Local replica: the response is already at the ingress.
            self.release_replica(kernel, replica);
            self.forward_response(kernel, user, issue);
        } else {
            self.worker_served += 1;
            match self.intra.sample(&mut self.intra_rng) {
                Traversal::Delivered { delay_us } => {
                    self.send(kernel, delay_us, Message::ResponseAtHeadnode { user, issue, replica });
                }
                Traversal::Dropped => {
                    self.drops += 1;
                    self.release_replica(kernel, replica);
                }
            }
        }
    }

    fn forward_response(&mut self, kernel: &mut Kernel, user: u32, issue: u64) {
        match self.access.sample(&mut self.access_rng) {
            Traversal::Delivered { delay_us } => {
                self.send(kernel, delay_us, Message::ResponseAtTester { user, issue });
            }
            Traversal::Dropped => self.drops += 1,
        }
    }

    fn on_timeout(&mut self, kernel: &mut Kernel, user: u32, issue: u64) {
        let now = kernel.now_us();
        match self.loadgen.on_timeout(user, issue, now) {
            TimeoutResolution::TimedOut { reissue, in_window } => {
                if in_window {
                    self.timeouts += 1;
                }
                self.note_outstanding(now, -1);
                if reissue {
                    self.start_request(kernel, user);
                }
            }
            TimeoutResolution::Stale => {}
        }
    }

    fn release_replica(&mut self, kernel: &mut Kernel, replica: u32) {
        self.track_replica_load(replica, kernel.now_us());
        self.cluster.release(replica);
        // Freed capacity may unblock parked requests.
        if !self.buffer.is_empty() {
            self.pump(kernel);
        }
    }

    /// Work the ingress queue. A busy proxy only arranges a wake-up for the
    /// moment its current forward ends; an idle one forwards the front
    /// request, charges the forwarding cost, and chains the next wake-up.
    /// With zero cost this collapses to draining everything route() accepts.
    fn pump(&mut self, kernel: &mut Kernel) {
        let now = kernel.now_us();
        if self.ingress_cost_us > 0 && now < self.ingress_free_at_us {
            if !self.pump_scheduled && !self.buffer.is_empty() {
                self.pump_scheduled = true;
                kernel.schedule(self.ingress_free_at_us, EventKind::IngressPump);
            }
            return;
        }
        while let Some(&(user, issue)) = self.buffer.front() {
            if !self.loadgen.is_current(user, issue) {
                self.buffer_load.advance(now, self.buffer.len() as u32);
                self.buffer.pop_front();
                continue;
            }
            let Some(replica) = self.cluster.route() else { return };
            self.buffer_load.advance(now, self.buffer.len() as u32);
            self.buffer.pop_front();
            self.dispatch(kernel, user, issue, replica);
            if self.ingress_cost_us > 0 {
                self.ingress_free_at_us = now + self.ingress_cost_us;
                if !self.buffer.is_empty() && !self.pump_scheduled {
                    self.pump_scheduled = true;
                    kernel.schedule(self.ingress_free_at_us, EventKind::IngressPump);
                }
                return;
            }
        }
    }

    fn scale_up(&mut self, kernel: &mut Kernel, count: u32) {
        let now = kernel.now_us();
        for id in self.cluster.begin_scale_up(count) {
            let handle =
                kernel.schedule(now + self.cold_start_us, EventKind::ReplicaReady { replica: id });
            self.cluster.set_ready_event(id, handle);
        }
    }

    fn on_tick(&mut self, kernel: &mut Kernel) {
        let now = kernel.now_us();

        // Evaluate first, against epochs whose samples have fully arrived
        // (this tick's scrape below is keyed to `now` and lands afterwards),
        // so local and remote replicas are weighed uniformly.
        let ready = self.cluster.ready_count();
        let provisioning = self.cluster.provisioning_count();
        let desired = self
            .autoscaler
            .as_mut()
            .expect("ticks only run with the autoscaler on")
            .evaluate(now, ready, provisioning);

        let live = self.cluster.live_count();
        if desired > live {
            self.scale_up(kernel, desired - live);
        } else if desired < live {
            for handle in self.cluster.begin_scale_down(live - desired) {
                kernel.cancel(handle);
            }
            self.note_ready_change(now);
        }

        // Scrape concurrency: each target reports its average over the epoch
        // that just closed. The ingress buffer and headnode replicas report
        // instantly; worker replicas report across the intra link, so their
        // samples arrive late (and can be lost on a lossy link). Ready
        // replicas report even when idle — those zero epochs are what ages
        // load out of the window.
        let buffer_avg =
            self.buffer_load.take_average(now, self.buffer.len() as u32, self.tick_us);
        let mut local: Vec<f64> = Vec::new();
        let mut remote: Vec<(u32, f64)> = Vec::new();
        for r in self.cluster.replicas() {
            if r.state != ReplicaState::Ready {
                continue;
            }
            let idx = r.id as usize;
            if idx >= self.replica_load.len() {
                self.replica_load.resize(idx + 1, EpochLoad::starting_at(now));
            }
            let avg = self.replica_load[idx].take_average(now, r.in_flight, self.tick_us);
            if r.node == HEADNODE {
                local.push(avg);
            } else {
                remote.push((r.id, avg));
            }
        }
        for (replica, avg) in remote {
            if let Traversal::Delivered { delay_us } = self.intra.sample(&mut self.metrics_rng) {
                kernel.schedule(
                    now + delay_us,
                    EventKind::MessageArrival {
                        message: Message::MetricSample {
                            replica,
                            epoch_us: now,
                            concurrency_milli: (avg * 1000.0).round() as u64,
                        },
                    },
                );
            }
        }
        let scaler = self.autoscaler.as_mut().expect("checked above");
        if buffer_avg > 0.0 {
            scaler.record_concurrency(now, buffer_avg);
        }
        for avg in local {
            scaler.record_concurrency(now, avg);
        }

        // Keep ticking while the load window is open or the cluster still
        // has replicas to wind down, with a hard stop well past the point
        // where scale-to-zero must have finished.
        let next = now + self.tick_us;
        let winding_down = !self.cluster.replicas().is_empty() || !self.buffer.is_empty();
        if next <= self.ticks_end_us && (next <= self.duration_end_us || winding_down) {
            kernel.schedule(next, EventKind::AutoscalerTick);
        }
    }

    /// Advance the outstanding-requests integral, clipped to the load window.
    fn accumulate_outstanding(&mut self, now_us: u64) {
        let now = now_us.min(self.duration_end_us);
        let last = self.last_outstanding_change_us.min(self.duration_end_us);
        self.outstanding_integral += (now - last) as u128 * self.outstanding as u128;
        self.last_outstanding_change_us = now_us;
    }

    fn note_outstanding(&mut self, now_us: u64, delta: i32) {
        self.accumulate_outstanding(now_us);
        self.outstanding = self.outstanding.checked_add_signed(delta).expect("outstanding >= 0");
    }

    fn note_ready_change(&mut self, now_us: u64) {
        let ready = self.cluster.ready_count();
        if ready != self.last_timeline_ready {
            self.last_timeline_ready = ready;
            self.max_ready = self.max_ready.max(ready);
            self.timeline.push((now_us, ready));
        }
    }

    fn finish(mut self) -> RunResult {
        // Everything dispatched must have come back: outstanding-slot
        // accounting survives drops, staleness and scale-down.
        debug_assert_eq!(self.cluster.total_in_flight(), 0, "leaked replica slots");
        debug_assert_eq!(self.loadgen.outstanding_count(), 0, "user never resolved");

        let duration_s = self.plan.workload.duration_s;
        let decisions = self
            .autoscaler
            .as_mut()
            .map(|a| a.take_decisions())
            .unwrap_or_default();
        RunResult {
            topology: self.plan.topology,
            x_total_ms: self.plan.delays.x_total_ms,
            access_delay_ms: self.plan.delays.access_delay_ms,
            intra_delay_ms: self.plan.delays.intra_delay_ms,
            users: self.plan.users,
            processing_ms: self.plan.processing_ms,
            duration_s,
            successes: self.successes,
            timeouts: self.timeouts,
            drops: self.drops,
            throughput_rps: self.successes as f64 / duration_s as f64,
            p50_ms: self.hist.percentile_us(50.0) as f64 / 1000.0,
            p95_ms: self.hist.percentile_us(95.0) as f64 / 1000.0,
            p99_ms: self.hist.percentile_us(99.0) as f64 / 1000.0,
            mean_latency_ms: self.hist.mean_us() / 1000.0,
            max_ready_replicas: self.max_ready,
            seed: self.plan.seed,
            mean_outstanding: self.outstanding_integral as f64 / self.duration_end_us as f64,
            headnode_served: self.headnode_served,
            worker_served: self.worker_served,
            stragglers: self.stragglers,
            final_ready_replicas: self.cluster.ready_count(),
            replica_timeline: self.timeline,
            autoscaler_decisions: decisions,
        }
    }
}

/// True when a run's autoscaler entered panic mode at least once.
pub fn ever_panicked(result: &RunResult) -> bool {
    result.autoscaler_decisions.iter().any(|d| d.mode == Mode::Panic)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{
        derive_delays, expand_grid, PlacementPolicy, ScenarioConfig, TopologyKind,
    };

    /// Build a plan straight from config fields, bypassing the grid. The
    /// function timings are pinned (2 ms overhead, no wobble, free ingress)
    /// rather than taken from the default calibration so the hand-walked
    /// expectations stay exact whatever the shipped defaults are.
    fn plan(
        kind: TopologyKind,
        x_total_ms: f64,
        users: u32,
        processing_ms: f64,
    ) -> RunPlan {
        let mut cfg = ScenarioConfig::default();
        cfg.function.base_overhead_ms = 2.0;
        cfg.function.exec_jitter_ms = 0.0;
        cfg.cluster.ingress_cost_ms = 0.0;
        RunPlan {
            index: 0,
            topology: kind,
            delays: derive_delays(x_total_ms, kind).unwrap(),
            users,
            processing_ms,
            repetition: 0,
            seed: 7,
            worker_count: cfg.topology.worker_count,
            headnode_hosts_replicas: cfg.topology.headnode_hosts_replicas,
            function: cfg.function,
            autoscaler: cfg.autoscaler,
            workload: cfg.workload,
            placement: cfg.cluster.placement,
            initial_replicas: cfg.cluster.initial_replicas,
            ingress_cost_ms: cfg.cluster.ingress_cost_ms,
        }
    }

    #[test]
    fn single_user_x25_matches_hand_walked_event_sequence() {
        // Cold start path: issue 0, ingress 25ms, ready 825ms, service 2ms,
        // response at 852ms. Thereafter one request per 52ms.
        // successes = 1 + floor((300_000 - 852) / 52) = 5753.
        let r = simulate(&plan(TopologyKind::SingleSite, 25.0, 1, 0.0));
        assert_eq!(r.successes, 5753);
        assert!((r.throughput_rps - 19.1767).abs() < 1e-3);
        assert_eq!(r.timeouts, 0);
        assert_eq!(r.drops, 0);
        assert_eq!(r.p50_ms, 52.0);
        assert_eq!(r.max_ready_replicas, 1);
        assert_eq!(r.stragglers, 1, "one request in flight when the window closed");
    }

    #[test]
    fn single_user_decays_with_processing_time() {
        // RT = 50 + 65 + 2 = 117 ms -> ~8.5 req/s.
        let r = simulate(&plan(TopologyKind::SingleSite, 25.0, 1, 65.0));
        assert!(r.throughput_rps > 8.0 && r.throughput_rps < 9.0, "{}", r.throughput_rps);
    }

    #[test]
    fn multi_site_worker_path_pays_the_intra_link_twice() {
        // x=50 multi: access one-way 25, intra one-way 25. Worker-hosted
        // replica: RT = 50 + 50 + 2 = 102ms. First response at
        // 25 + 800 + 25 + 2 + 25 + 25 = 902ms, then every 102ms.
        let r = simulate(&plan(TopologyKind::MultiSite, 50.0, 1, 0.0));
        assert_eq!(r.successes, 1 + (300_000 - 902) / 102);
        assert_eq!(r.successes, 2933);
        assert_eq!(r.worker_served, r.successes + r.stragglers);
        assert_eq!(r.headnode_served, 0);
    }

    #[test]
    fn paired_interface_delay_halves_single_user_throughput() {
        // The texture behind the single-user plots: multi-site with d on each
        // interface (x_total = 2d) against single-site with the same d.
        let single = simulate(&plan(TopologyKind::SingleSite, 25.0, 1, 0.0));
        let multi = simulate(&plan(TopologyKind::MultiSite, 50.0, 1, 0.0));
        let ratio = multi.throughput_rps / single.throughput_rps;
        assert!((0.45..=0.55).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn headnode_first_placement_skips_the_intra_link() {
        let mut p = plan(TopologyKind::MultiSite, 50.0, 1, 0.0);
        p.placement = PlacementPolicy::HeadnodeFirst;
        p.initial_replicas = 1;
        // Pre-warmed headnode replica: RT = 50 + 2 = 52ms from t=0.
        let r = simulate(&p);
        assert_eq!(r.successes, (300_000 / 52) as u64);
        assert_eq!(r.worker_served, 0, "headnode path never crosses the intra link");
        assert!(r.headnode_served > 0);
    }

    #[test]
    fn single_site_headnode_first_never_uses_workers() {
        let mut p = plan(TopologyKind::SingleSite, 100.0, 10, 4.0);
        p.placement = PlacementPolicy::HeadnodeFirst;
        let r = simulate(&p);
        assert_eq!(r.worker_served, 0);
    }

    #[test]
    fn prewarmed_replica_with_frozen_autoscaler_matches_the_oracle() {
        let mut p = plan(TopologyKind::SingleSite, 20.0, 3, 10.0);
        p.autoscaler.enabled = false;
        p.initial_replicas = 1;
        p.workload.duration_s = 60;
        // RT = 40 + 10 + 2 = 52ms; 3 users, no cold start: each user
        // completes floor(60_000/52) = 1153 requests.
        let r = simulate(&p);
        assert_eq!(r.successes, 3 * 1153);
        let oracle = crate::metrics::analytic_closed_loop_oracle(3, 40.0, 10.0, 2.0);
        assert!((r.throughput_rps - oracle).abs() / oracle < 0.02);
        assert_eq!(r.max_ready_replicas, 1);
        assert_eq!(r.final_ready_replicas, 1, "frozen autoscaler never scales down");
    }

    #[test]
    fn ingress_serializes_overlapping_arrivals() {
        // Two users issue at t=0 against a warm replica, zero wire delay,
        // 12ms cycles (10 proc + 2 overhead), 5ms forwarding cost. User A
        // goes straight through (responses at 12k+12: 83 in 1s). User B
        // queues behind A's forward, dispatches at 5ms, and then never
        // collides again (responses at 17+12k: 82). One success lost to
        // pacing versus the free-ingress control.
        let mut p = plan(TopologyKind::SingleSite, 0.0, 2, 10.0);
        p.autoscaler.enabled = false;
        p.initial_replicas = 1;
        p.workload.duration_s = 1;
        p.ingress_cost_ms = 5.0;
        let r = simulate(&p);
        assert_eq!(r.successes, 83 + 82);

        p.ingress_cost_ms = 0.0;
        let control = simulate(&p);
        assert_eq!(control.successes, 83 + 83);
    }

    #[test]
    fn single_user_is_never_paced_by_the_ingress() {
        // A lone closed-loop user always finds the proxy idle, so even an
        // absurd forwarding cost leaves the hand-walked sequence intact.
        let mut p = plan(TopologyKind::SingleSite, 25.0, 1, 0.0);
        p.ingress_cost_ms = 5.0;
        let r = simulate(&p);
        assert_eq!(r.successes, 5753);
    }

    #[test]
    fn burst_from_zero_panics_and_scales_out() {
        let mut p = plan(TopologyKind::MultiSite, 100.0, 500, 0.0);
        p.workload.duration_s = 40;
        let r = simulate(&p);
        assert!(ever_panicked(&r), "500-user burst must trip the panic window");
        let panic_at = r
            .autoscaler_decisions
            .iter()
            .find(|d| d.mode == Mode::Panic)
            .map(|d| d.at_us)
            .unwrap();
        assert!(panic_at <= 6_000_000, "panic at {panic_at}us");
        assert!(r.max_ready_replicas > 1);
        assert!(r.max_ready_replicas <= 100);
        // While panicking the scaler never asks for less than it has.
        for d in &r.autoscaler_decisions {
            if d.mode == Mode::Panic {
                assert!(d.desired >= d.ready, "panic shrank capacity: {d:?}");
            }
        }
    }

    #[test]
    fn idle_cluster_scales_to_zero_within_window_plus_grace() {
        let mut p = plan(TopologyKind::SingleSite, 25.0, 1, 0.0);
        p.workload.duration_s = 10;
        let r = simulate(&p);
        assert_eq!(r.final_ready_replicas, 0);
        let (zero_at, count) = *r.replica_timeline.last().unwrap();
        assert_eq!(count, 0);
        // Last traffic at 10s; samples age out of the 60s window, then the
        // 30s grace runs: zero must land by 10 + 60 + 30 s (plus a tick).
        assert!(zero_at <= s_to_us(10 + 60 + 30) + s_to_us(2), "zero at {zero_at}us");
    }

    #[test]
    fn short_timeout_under_long_paths_collapses_throughput() {
        let mut p = plan(TopologyKind::MultiSite, 800.0, 50, 0.0);
        p.workload.duration_s = 30;
        // Fastest modeled path (headnode-served) is 800 + 2 = 802ms; an
        // 800ms timeout beats every response.
        p.workload.request_timeout_ms = 800;
        let r = simulate(&p);
        assert_eq!(r.successes, 0);
        assert_eq!(r.throughput_rps, 0.0);
        assert!(r.timeouts > 0);
    }

    #[test]
    fn little_law_holds_on_a_scaling_run() {
        let mut p = plan(TopologyKind::MultiSite, 100.0, 50, 8.0);
        p.workload.duration_s = 120;
        let r = simulate(&p);
        assert_eq!(r.timeouts, 0);
        let predicted = r.throughput_rps * r.mean_latency_ms / 1000.0;
        let rel = (r.mean_outstanding - predicted).abs() / r.mean_outstanding;
        assert!(rel < 0.05, "Little's law off by {rel}: L={} λW={predicted}", r.mean_outstanding);
    }

    #[test]
    fn lossy_links_drop_and_recover_deterministically() {
        let mut p = plan(TopologyKind::SingleSite, 10.0, 5, 0.0);
        p.delays = p.delays.with_network(0.0, 0.05);
        p.workload.duration_s = 20;
        p.workload.request_timeout_ms = 2_000;
        let a = simulate(&p);
        assert!(a.drops > 0);
        assert!(a.timeouts > 0, "dropped requests must surface as timeouts");
        assert!(a.successes > 0);
        let b = simulate(&p);
        assert_eq!(a, b, "identical seed must reproduce identical results");
    }

    #[test]
    fn jitter_spreads_latency_but_respects_percentile_order() {
        let mut p = plan(TopologyKind::SingleSite, 25.0, 10, 4.0);
        p.delays = p.delays.with_network(5.0, 0.0);
        p.workload.duration_s = 60;
        let r = simulate(&p);
        assert!(r.p50_ms <= r.p95_ms && r.p95_ms <= r.p99_ms);
        // 2 legs of U[20,30]ms jittered delay + 6ms service: bounds.
        assert!(r.p50_ms >= 46.0 && r.p99_ms <= 66.0 + 0.01, "{} {}", r.p50_ms, r.p99_ms);
    }

    #[test]
    fn grid_plans_simulate_deterministically() {
        let mut cfg = ScenarioConfig::default();
        cfg.delay_grid_ms = vec![12.5];
        cfg.user_grid = vec![50];
        cfg.processing_grid_ms = vec![1.0];
        cfg.workload.duration_s = 30;
        let p = &expand_grid(&cfg, TopologyKind::MultiSite)[0];
        assert_eq!(simulate(p), simulate(p));
    }

    #[test]
    fn traced_run_records_the_event_stream() {
        let mut p = plan(TopologyKind::SingleSite, 25.0, 1, 0.0);
        p.workload.duration_s = 2;
        let mut sim = Simulation::new(p);
        sim.enable_trace();
        let (r, trace) = sim.run();
        assert!(r.successes > 0);
        // Zero-delay hops are delivered inline and do not appear; every
        // queued event does.
        assert!(trace.len() > 50, "{} trace records", trace.len());
        assert!(trace.windows(2).all(|w| w[0].time_us <= w[1].time_us));
        assert_eq!(trace[0].kind, "user_issue");
    }
}
