use std::cell::Cell;
use std::time::{Duration, Instant};

/// Time source of a run. The engine calls [`Clock::combo_done`] after each
/// searched combination and reads [`Clock::now`] for deadlines and event
/// timestamps.
pub trait Clock {
    fn now(&self) -> Duration;
    fn combo_done(&self) {}
}

/// Monotonic wall-clock time since construction.
#[derive(Debug, Clone, Copy)]
pub struct WallClock {
    start: Instant,
}

impl WallClock {
    pub fn start() -> Self {
        Self { start: Instant::now() }
    }
}

impl Clock for WallClock {
    fn now(&self) -> Duration {
        self.start.elapsed()
    }
}

/// Virtual time advancing by a fixed unit per searched combination, so
/// curves and deadlines are exact in tests.
#[derive(Debug, Clone)]
pub struct ComboClock {
    combos: Cell<u64>,
    unit: Duration,
}

impl ComboClock {
    pub fn new(unit: Duration) -> Self {
        Self {
            combos: Cell::new(0),
            unit,
        }
    }

    /// One millisecond per combination.
    pub fn millis() -> Self {
        Self::new(Duration::from_millis(1))
    }
}

impl Clock for ComboClock {
    fn now(&self) -> Duration {
        self.unit * u32::try_from(self.combos.get()).unwrap_or(u32::MAX)
    }

    fn combo_done(&self) {
        self.combos.set(self.combos.get() + 1);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn combo_clock_counts() {
        let c = ComboClock::millis();
        assert_eq!(c.now(), Duration::ZERO);
        c.combo_done();
        c.combo_done();
        assert_eq!(c.now(), Duration::from_millis(2));
    }

    #[test]
    fn wall_clock_is_monotonic() {
        let c = WallClock::start();
        let a = c.now();
        assert!(c.now() >= a);
    }
}
