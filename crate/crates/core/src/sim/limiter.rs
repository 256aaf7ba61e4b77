use std::collections::BTreeMap;

/// Fixed-window admission counter per sender.
#[derive(Debug, Clone)]
pub struct RateLimiter {
    limit: u32,
    window: u64,
    current: BTreeMap<String, (u64, u32)>,
    max_accepts: u32,
    rejected: u64,
}

impl RateLimiter {
    pub fn new(limit: u32, window: u64) -> Self {
        assert!(window > 0, "window must be positive");
        RateLimiter {
            limit,
            window,
            current: BTreeMap::new(),
            max_accepts: 0,
            rejected: 0,
        }
    }

    /// Counts one submission from `sender` at `now`; false when over the limit.
    pub fn admit(&mut self, sender: &str, now: u64) -> bool {
        let index = now / self.window;
        let slot = self.current.entry(sender.to_string()).or_insert((index, 0));
        if slot.0 != index {
            *slot = (index, 0);
        }
        if slot.1 >= self.limit {
            self.rejected += 1;
            return false;
        }
        slot.1 += 1;
        self.max_accepts = self.max_accepts.max(slot.1);
        true
    }

    /// Largest accepted count seen for any sender in any window.
    pub fn max_window_accepts(&self) -> u32 {
        self.max_accepts
    }

    pub fn rejected(&self) -> u64 {
        self.rejected
    }

    pub fn limit(&self) -> u32 {
        self.limit
    }
}
