//! Link model: symmetric one-way delay per direction, optional uniform
//! jitter, optional Bernoulli loss — the same knobs a tc/netem qdisc exposes.
//!
//! A configured delay of d adds d one way, so a request/response pair over a
//! link pays 2d. Jitter draws the delay uniformly from [d-j, d+j] (clamped at
//! zero) independently per traversal. Lost messages simply never arrive;
//! recovery is the requester's timeout.

use rand::Rng;

use crate::rng::uniform01;

/// Outcome of pushing one message across a link.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Traversal {
    Delivered { delay_us: u64 },
    Dropped,
}

/// One direction-symmetric point-to-point link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Link {
    pub one_way_delay_us: u64,
    pub jitter_us: u64,
    pub loss_prob: f64,
}

impl Link {
    pub fn new(one_way_delay_us: u64, jitter_us: u64, loss_prob: f64) -> Self {
        debug_assert!((0.0..=1.0).contains(&loss_prob));
        Link { one_way_delay_us, jitter_us, loss_prob }
    }

    /// True when the link never consumes randomness (no jitter, no loss).
    pub fn is_deterministic(&self) -> bool {
        self.jitter_us == 0 && self.loss_prob == 0.0
    }

    /// Sample one traversal. Draws from `rng` only for the features that are
    /// enabled, so deterministic links consume no randomness.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> Traversal {
        if self.loss_prob > 0.0 && uniform01(rng) < self.loss_prob {
            return Traversal::Dropped;
        }
        let delay_us = if self.jitter_us == 0 {
            self.one_way_delay_us
        } else {
            // Uniform over the inclusive integer range [d-j, d+j], clamped at 0.
            let lo = self.one_way_delay_us.saturating_sub(self.jitter_us);
            let hi = self.one_way_delay_us + self.jitter_us;
            let span = hi - lo + 1;
            lo + (uniform01(rng) * span as f64) as u64
        };
        Traversal::Delivered { delay_us }
    }
}
