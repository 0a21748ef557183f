//! Cluster membership and request routing.
//!
//! A cluster is one headnode (node 0, running the ingress) plus a fixed set
//! of workers. Replicas live on nodes, hold an outstanding-request count, and
//! move through provisioning -> ready -> terminating. The ingress routes each
//! request to the ready replica with the fewest outstanding requests, which
//! is the load-balancing rule under emulation: outstanding counts include
//! time on the wire, so replicas behind a slow link look busier and
//! organically receive less traffic.

use crate::kernel::EventHandle;
use crate::scenario::PlacementPolicy;

/// Node id of the headnode. Workers are `1..=worker_count`.
pub const HEADNODE: u32 = 0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReplicaState {
    /// Cold-starting; becomes ready after the provisioning delay.
    Provisioning,
    Ready,
    /// Being scaled down: finishes outstanding work, accepts nothing new.
    Terminating,
}

#[derive(Debug, Clone)]
pub struct Replica {
    pub id: u32,
    pub node: u32,
    pub state: ReplicaState,
    /// Requests dispatched to this replica whose responses have not yet made
    /// it back to the ingress. For remote replicas this includes both
    /// intra-site wire legs, not just time in service.
    pub in_flight: u32,
    /// Pending readiness event, for cancellation if scaled down while
    /// provisioning.
    pub ready_event: Option<EventHandle>,
}

impl Replica {
    pub fn on_headnode(&self) -> bool {
        self.node == HEADNODE
    }
}

#[derive(Debug)]
pub struct ClusterState {
    replicas: Vec<Replica>,
    // Replica ids start at 1; 0 is reserved for the ingress buffer in
    // concurrency reports.
    next_replica_id: u32,
    worker_count: u32,
    headnode_hosts_replicas: bool,
    placement: PlacementPolicy,
    hard_limit: u32,
}

impl ClusterState {
    pub fn new(
        worker_count: u32,
        headnode_hosts_replicas: bool,
        placement: PlacementPolicy,
        hard_limit: u32,
    ) -> Self {
        ClusterState {
            replicas: Vec::new(),
            next_replica_id: 1,
            worker_count,
            headnode_hosts_replicas,
            placement,
            hard_limit,
        }
    }

    pub fn replicas(&self) -> &[Replica] {
        &self.replicas
    }

    pub fn replica(&self, id: u32) -> Option<&Replica> {
        self.replicas.iter().find(|r| r.id == id)
    }

    fn replica_mut(&mut self, id: u32) -> Option<&mut Replica> {
        self.replicas.iter_mut().find(|r| r.id == id)
    }

    pub fn ready_count(&self) -> u32 {
        self.replicas.iter().filter(|r| r.state == ReplicaState::Ready).count() as u32
    }

    pub fn provisioning_count(&self) -> u32 {
        self.replicas.iter().filter(|r| r.state == ReplicaState::Provisioning).count() as u32
    }

    /// Capacity the autoscaler reconciles against: ready plus provisioning.
    pub fn live_count(&self) -> u32 {
        self.ready_count() + self.provisioning_count()
    }

    pub fn total_in_flight(&self) -> u64 {
        self.replicas.iter().map(|r| r.in_flight as u64).sum()
    }

    /// Pick the replica for the next request: fewest outstanding among ready
    /// replicas, ties to the lowest node id (headnode first), then the lowest
    /// replica id. `None` when nothing can take the request.
    pub fn route(&self) -> Option<u32> {
        let mut best: Option<(u32, u32, u32)> = None;
        for r in &self.replicas {
            if r.state != ReplicaState::Ready {
                continue;
            }
            if self.hard_limit > 0 && r.in_flight >= self.hard_limit {
                continue;
            }
            let key = (r.in_flight, r.node, r.id);
            if best.map_or(true, |b| key < b) {
                best = Some(key);
            }
        }
        best.map(|(_, _, id)| id)
    }

    /// Node for the next new replica.
    fn place_node(&self) -> u32 {
        let head_ok = self.headnode_hosts_replicas;
        let live: Vec<&Replica> =
            self.replicas.iter().filter(|r| r.state != ReplicaState::Terminating).collect();
        // First replica under worker-first placement goes to the least
        // loaded worker, keeping the sole replica of an idle service off the
        // control-plane node.
        let workers_only = self.placement == PlacementPolicy::WorkerFirst
            && live.is_empty()
            && self.worker_count > 0;
        let mut best: Option<(usize, u32)> = None;
        for node in 0..=self.worker_count {
            if node == HEADNODE && (!head_ok || workers_only) {
                continue;
            }
            let count = live.iter().filter(|r| r.node == node).count();
            let key = (count, node);
            if best.map_or(true, |b| key < b) {
                best = Some(key);
            }
        }
        best.expect("at least one schedulable node").1
    }

    /// Add `count` provisioning replicas, assigning nodes as we go so each
    /// placement sees the previous one. Returns the new replica ids; the
    /// caller schedules their readiness events.
    pub fn begin_scale_up(&mut self, count: u32) -> Vec<u32> {
        let mut ids = Vec::with_capacity(count as usize);
        for _ in 0..count {
            let node = self.place_node();
            let id = self.next_replica_id;
            self.next_replica_id += 1;
            self.replicas.push(Replica {
                id,
                node,
                state: ReplicaState::Provisioning,
                in_flight: 0,
                ready_event: None,
            });
            ids.push(id);
        }
        ids
    }

    pub fn set_ready_event(&mut self, id: u32, handle: EventHandle) {
        if let Some(r) = self.replica_mut(id) {
            r.ready_event = Some(handle);
        }
    }

    /// Provisioning finished. Returns false if the replica was already gone
    /// or not provisioning (stale event).
    pub fn mark_ready(&mut self, id: u32) -> bool {
        match self.replica_mut(id) {
            Some(r) if r.state == ReplicaState::Provisioning => {
                r.state = ReplicaState::Ready;
                r.ready_event = None;
                true
            }
            _ => false,
        }
    }

    /// Remove `count` replicas, least-loaded first (ties: newest first, so
    /// still-provisioning replicas go before warm ones). Idle replicas leave
    /// immediately; busy ones drain. Returns readiness events to cancel.
    pub fn begin_scale_down(&mut self, count: u32) -> Vec<EventHandle> {
        // Kubernetes-style victim ranking: pods that never became ready go
        // first, then the newest ready pods. Load is deliberately not
        // consulted — the controller doesn't see per-pod in-flight counts,
        // and older (often faster-placed) replicas surviving is part of the
        // behavior being modeled.
        let mut victims: Vec<(bool, std::cmp::Reverse<u32>, u32)> = self
            .replicas
            .iter()
            .filter(|r| r.state != ReplicaState::Terminating)
            .map(|r| (r.state == ReplicaState::Ready, std::cmp::Reverse(r.id), r.id))
            .collect();
        victims.sort();
        victims.truncate(count as usize);
        let mut cancel = Vec::new();
        for (_, _, id) in victims {
            let r = self.replica_mut(id).expect("victim exists");
            if let Some(handle) = r.ready_event.take() {
                cancel.push(handle);
            }
            if r.in_flight == 0 {
                self.replicas.retain(|x| x.id != id);
            } else {
                r.state = ReplicaState::Terminating;
            }
        }
        cancel
    }

    /// Account a dispatch to a ready replica.
    pub fn admit(&mut self, id: u32) {
        let r = self.replica_mut(id).expect("dispatch to known replica");
        debug_assert_eq!(r.state, ReplicaState::Ready, "dispatch to non-ready replica");
        r.in_flight += 1;
    }

    /// Account a response arriving back at the ingress. Returns true if this
    /// removed a draining replica.
    pub fn release(&mut self, id: u32) -> bool {
        let r = self.replica_mut(id).expect("release on known replica");
        debug_assert!(r.in_flight > 0, "release without matching admit");
        r.in_flight -= 1;
        if r.state == ReplicaState::Terminating && r.in_flight == 0 {
            self.replicas.retain(|x| x.id != id);
            true
        } else {
            false
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cluster(placement: PlacementPolicy) -> ClusterState {
        ClusterState::new(2, true, placement, 0)
    }

    #[test]
    fn first_replica_lands_on_a_worker_by_default() {
        let mut c = cluster(PlacementPolicy::WorkerFirst);
        let ids = c.begin_scale_up(1);
        assert_eq!(ids, vec![1]);
        assert_eq!(c.replica(1).unwrap().node, 1);
    }

    #[test]
    fn headnode_first_placement_starts_on_the_headnode() {
        let mut c = cluster(PlacementPolicy::HeadnodeFirst);
        c.begin_scale_up(1);
        assert_eq!(c.replica(1).unwrap().node, HEADNODE);
    }

    #[test]
    fn growth_spreads_across_nodes_and_reaches_the_headnode() {
        let mut c = cluster(PlacementPolicy::WorkerFirst);
        c.begin_scale_up(1);
        // Second and third replicas balance node counts; ties prefer the
        // headnode, so 1 -> 3 covers every node exactly once.
        c.begin_scale_up(2);
        let mut nodes: Vec<u32> = c.replicas().iter().map(|r| r.node).collect();
        assert_eq!(nodes.remove(0), 1);
        nodes.sort_unstable();
        assert_eq!(nodes, vec![0, 2]);
    }

    #[test]
    fn headnode_excluded_when_not_schedulable() {
        let mut c = ClusterState::new(2, false, PlacementPolicy::HeadnodeFirst, 0);
        c.begin_scale_up(4);
        assert!(c.replicas().iter().all(|r| r.node != HEADNODE));
    }

    #[test]
    fn routing_picks_fewest_outstanding_with_headnode_tiebreak() {
        let mut c = cluster(PlacementPolicy::WorkerFirst);
        c.begin_scale_up(2); // replica 1 on worker 1, replica 2 on headnode
        assert!(c.mark_ready(1));
        assert!(c.mark_ready(2));
        assert_eq!(c.replica(2).unwrap().node, HEADNODE);
        // Both idle: headnode replica wins the tie despite its higher id.
        assert_eq!(c.route(), Some(2));
        c.admit(2);
        assert_eq!(c.route(), Some(1));
        c.admit(1);
        // 1 vs 1 outstanding: back to the headnode.
        assert_eq!(c.route(), Some(2));
        c.release(2);
        assert_eq!(c.route(), Some(2));
    }

    #[test]
    fn provisioning_replicas_never_receive_traffic() {
        let mut c = cluster(PlacementPolicy::WorkerFirst);
        c.begin_scale_up(1);
        assert_eq!(c.route(), None);
        c.mark_ready(1);
        assert_eq!(c.route(), Some(1));
    }

    #[test]
    fn hard_concurrency_limit_gates_admission() {
        let mut c = ClusterState::new(2, true, PlacementPolicy::WorkerFirst, 1);
        c.begin_scale_up(1);
        c.mark_ready(1);
        c.admit(1);
        assert_eq!(c.route(), None, "sole replica is at its limit");
        c.release(1);
        assert_eq!(c.route(), Some(1));
    }

    #[test]
    fn scale_down_removes_unready_then_newest_replicas() {
        let mut c = cluster(PlacementPolicy::WorkerFirst);
        c.begin_scale_up(3);
        c.mark_ready(1);
        c.mark_ready(2);
        c.set_ready_event(3, EventHandle(99));
        c.admit(1);
        // Victim order ignores load: replica 3 (still provisioning) before
        // replica 2 (newest ready); the oldest replica survives even though
        // it is the busy one.
        let cancel = c.begin_scale_down(2);
        assert_eq!(cancel, vec![EventHandle(99)]);
        assert_eq!(c.replicas().len(), 1);
        assert_eq!(c.replicas()[0].id, 1);
    }

    #[test]
    fn scale_down_victims_are_age_ordered_not_load_ordered() {
        let mut c = cluster(PlacementPolicy::WorkerFirst);
        c.begin_scale_up(3);
        for id in 1..=3 {
            c.mark_ready(id);
        }
        // Newest replica is the busiest; it still goes first and drains.
        c.admit(3);
        c.admit(3);
        let cancel = c.begin_scale_down(2);
        assert!(cancel.is_empty());
        let ids: Vec<u32> = c.replicas().iter().map(|r| r.id).collect();
        assert_eq!(ids, vec![1, 3], "idle replica 2 went, busy replica 3 drains");
        assert_eq!(c.replicas()[1].state, ReplicaState::Terminating);
        assert!(c.release(3) == false, "still one in flight");
        assert!(c.release(3), "drained terminating replica is removed");
        assert_eq!(c.replicas().len(), 1);
    }

    #[test]
    fn busy_replicas_drain_instead_of_vanishing() {
        let mut c = cluster(PlacementPolicy::WorkerFirst);
        c.begin_scale_up(1);
        c.mark_ready(1);
        c.admit(1);
        c.admit(1);
        c.begin_scale_down(1);
        assert_eq!(c.replica(1).unwrap().state, ReplicaState::Terminating);
        assert_eq!(c.route(), None, "draining replica takes no new work");
        assert!(!c.release(1));
        assert!(c.release(1), "last release removes the drained replica");
        assert_eq!(c.replicas().len(), 0);
    }

    #[test]
    fn in_flight_totals_stay_conserved() {
        let mut c = cluster(PlacementPolicy::WorkerFirst);
        c.begin_scale_up(2);
        c.mark_ready(1);
        c.mark_ready(2);
        let mut outstanding = 0u64;
        for step in 0..100u32 {
            if step % 3 == 2 {
                let target = if c.replica(1).map_or(0, |r| r.in_flight) > 0 { 1 } else { 2 };
                if c.replica(target).map_or(0, |r| r.in_flight) > 0 {
                    c.release(target);
                    outstanding -= 1;
                }
            } else if let Some(id) = c.route() {
                c.admit(id);
                outstanding += 1;
            }
            assert_eq!(c.total_in_flight(), outstanding);
        }
    }
}
