use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{Duration, Instant};

use botboard_core::time::now_micros;
use chrono::{DateTime, TimeZone, Utc};

/// Timestamps for transcripts plus a monotonic reading for wall time.
pub trait Clock: Send + Sync {
    fn now(&self) -> DateTime<Utc>;
    fn monotonic(&self) -> Duration;
}

pub struct SystemClock {
    origin: Instant,
}

impl SystemClock {
    pub fn new() -> Self {
        Self { origin: Instant::now() }
    }
}

impl Default for SystemClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for SystemClock {
    fn now(&self) -> DateTime<Utc> {
        now_micros()
    }

    fn monotonic(&self) -> Duration {
        self.origin.elapsed()
    }
}

/// Advances by a fixed step on every reading, for reproducible records.
pub struct SteppingClock {
    start: DateTime<Utc>,
    step: Duration,
    ticks: AtomicU64,
}

impl SteppingClock {
    pub fn new(start_unix_s: i64, step: Duration) -> Self {
        Self {
            start: Utc.timestamp_opt(start_unix_s, 0).single().expect("valid start"),
            step,
            ticks: AtomicU64::new(0),
        }
    }

    fn tick(&self) -> Duration {
        let n = self.ticks.fetch_add(1, Ordering::SeqCst);
        self.step * n as u32
    }
}

impl Clock for SteppingClock {
    fn now(&self) -> DateTime<Utc> {
        let d = self.tick();
        self.start + chrono::Duration::from_std(d).expect("in range")
    }

    fn monotonic(&self) -> Duration {
        self.tick()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stepping_clock_advances() {
        let c = SteppingClock::new(1_700_000_000, Duration::from_millis(5));
        let a = c.now();
        let b = c.now();
        assert_eq!((b - a).num_milliseconds(), 5);
        assert_eq!(c.monotonic(), Duration::from_millis(10));
    }

    #[test]
    fn system_clock_is_monotone() {
        let c = SystemClock::new();
        let a = c.monotonic();
        assert!(c.monotonic() >= a);
    }
}
