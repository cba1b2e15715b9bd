use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{SystemTime, UNIX_EPOCH};

/// Milliseconds since the Unix epoch.
pub trait Clock: Send + Sync {
    fn now_ms(&self) -> u64;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now_ms(&self) -> u64 {
        SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as u64)
    }
}

/// Starts at `start` and advances by `tick` on every reading.
#[derive(Debug)]
pub struct ManualClock {
    next: AtomicU64,
    tick: u64,
}

impl ManualClock {
    pub fn new(start: u64, tick: u64) -> Self {
        Self { next: AtomicU64::new(start), tick }
    }
}

impl Clock for ManualClock {
    fn now_ms(&self) -> u64 {
        self.next.fetch_add(self.tick, Ordering::SeqCst)
    }
}
