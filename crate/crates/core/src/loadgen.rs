//! Closed-loop load generation.
//!
//! Each simulated user keeps exactly one request outstanding: issue, wait
//! for the response (or a timeout), immediately issue again while the load
//! window is open. Requests are identified by a globally unique issue id so
//! that late responses to a request the user already gave up on are
//! recognized and ignored instead of corrupting the loop.

#[derive(Debug, Clone, Copy)]
struct Outstanding {
    issue: u64,
    issued_at_us: u64,
}

/// What a response arrival meant to its user.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Resolution {
    /// Counted response; `reissue` says whether the loop continues.
    Success { latency_us: u64, reissue: bool },
    /// Response to a live request that arrived after the load window closed:
    /// resolves the user but is not counted as a success.
    LateResponse,
    /// Response to a request the user no longer waits for (timed out).
    Stale,
}

/// What a timeout firing meant to its user.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeoutResolution {
    TimedOut { reissue: bool, in_window: bool },
    /// The request already completed (or this timeout was superseded).
    Stale,
}

#[derive(Debug)]
pub struct LoadGen {
    users: Vec<Option<Outstanding>>,
    next_issue: u64,
    duration_end_us: u64,
}

impl LoadGen {
    pub fn new(user_count: u32, duration_end_us: u64) -> Self {
        LoadGen {
            users: vec![None; user_count as usize],
            next_issue: 0,
            duration_end_us,
        }
    }

    pub fn user_count(&self) -> u32 {
        self.users.len() as u32
    }

    pub fn duration_end_us(&self) -> u64 {
        self.duration_end_us
    }

    /// Start a request for `user`; returns its issue id.
    pub fn issue(&mut self, user: u32, now_us: u64) -> u64 {
        let slot = &mut self.users[user as usize];
        debug_assert!(slot.is_none(), "closed loop: one outstanding request per user");
        let issue = self.next_issue;
        self.next_issue += 1;
        *slot = Some(Outstanding { issue, issued_at_us: now_us });
        issue
    }

    pub fn on_response(&mut self, user: u32, issue: u64, now_us: u64) -> Resolution {
        let slot = &mut self.users[user as usize];
        match *slot {
            Some(out) if out.issue == issue => {
                *slot = None;
                if now_us < self.duration_end_us {
                    Resolution::Success {
                        latency_us: now_us - out.issued_at_us,
                        reissue: true,
                    }
                } else {
                    Resolution::LateResponse
                }
            }
            _ => Resolution::Stale,
        }
    }

    pub fn on_timeout(&mut self, user: u32, issue: u64, now_us: u64) -> TimeoutResolution {
        let slot = &mut self.users[user as usize];
        match *slot {
            Some(out) if out.issue == issue => {
                *slot = None;
                let in_window = now_us < self.duration_end_us;
                TimeoutResolution::TimedOut { reissue: in_window, in_window }
            }
            _ => TimeoutResolution::Stale,
        }
    }

    /// Whether `issue` is still the request `user` is waiting on. Used to
    /// drop requests that died (timed out) while sitting in a buffer or on
    /// the wire, instead of wasting replica capacity on them.
    pub fn is_current(&self, user: u32, issue: u64) -> bool {
        matches!(self.users[user as usize], Some(out) if out.issue == issue)
    }

    /// Users still waiting on a request (the stragglers, when asked at the
    /// end of the load window).
    pub fn outstanding_count(&self) -> u32 {
        self.users.iter().filter(|s| s.is_some()).count() as u32
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const END: u64 = 10_000_000; // 10s window

    #[test]
    fn response_within_window_counts_and_reissues() {
        let mut lg = LoadGen::new(2, END);
        let a = lg.issue(0, 0);
        let b = lg.issue(1, 0);
        assert_ne!(a, b, "issue ids are globally unique");
        assert_eq!(
            lg.on_response(0, a, 52_050),
            Resolution::Success { latency_us: 52_050, reissue: true }
        );
        let a2 = lg.issue(0, 52_050);
        assert!(a2 > b);
        assert_eq!(lg.outstanding_count(), 2);
    }

    #[test]
    fn response_after_window_resolves_without_counting() {
        let mut lg = LoadGen::new(1, END);
        let issue = lg.issue(0, END - 1_000);
        assert_eq!(lg.on_response(0, issue, END + 5_000), Resolution::LateResponse);
        assert_eq!(lg.outstanding_count(), 0);
    }

    #[test]
    fn timeout_supersedes_the_request_and_late_response_is_stale() {
        let mut lg = LoadGen::new(1, END);
        let first = lg.issue(0, 0);
        assert_eq!(
            lg.on_timeout(0, first, 800_000),
            TimeoutResolution::TimedOut { reissue: true, in_window: true }
        );
        let second = lg.issue(0, 800_000);
        // The original response eventually arrives: nobody is waiting.
        assert_eq!(lg.on_response(0, first, 900_000), Resolution::Stale);
        // And a stale timeout for the finished first request is ignored too.
        assert_eq!(lg.on_timeout(0, first, 1_000_000), TimeoutResolution::Stale);
        assert_eq!(
            lg.on_response(0, second, 1_100_000),
            Resolution::Success { latency_us: 300_000, reissue: true }
        );
    }

    #[test]
    fn timeout_after_window_does_not_reissue() {
        let mut lg = LoadGen::new(1, END);
        let issue = lg.issue(0, END - 100);
        assert_eq!(
            lg.on_timeout(0, issue, END + 100),
            TimeoutResolution::TimedOut { reissue: false, in_window: false }
        );
    }

    #[test]
    fn response_exactly_at_window_end_is_late() {
        let mut lg = LoadGen::new(1, END);
        let issue = lg.issue(0, END - 50_000);
        // The window is [0, end): a response landing exactly at the end
        // boundary no longer counts.
        assert_eq!(lg.on_response(0, issue, END), Resolution::LateResponse);
    }
}
