//! Multiply accounting.
//!
//! Every kernel routine adds the number of scalar floating-point multiplies it
//! performs to a per-thread tally. A [`FlopCounter`] snapshots the tally when
//! created and reports the difference, so counters nest freely and two threads
//! never see each other's work. Adds and divisions are not counted.

use std::cell::Cell;

thread_local! {
    static MULTIPLIES: Cell<u64> = const { Cell::new(0) };
}

#[inline]
pub(crate) fn record(multiplies: u64) {
    MULTIPLIES.with(|c| c.set(c.get().wrapping_add(multiplies)));
}

fn current() -> u64 {
    MULTIPLIES.with(|c| c.get())
}

/// Counts multiplies performed on the current thread since construction.
#[derive(Debug, Clone, Copy)]
pub struct FlopCounter {
    start: u64,
}

impl FlopCounter {
    pub fn start() -> Self {
        FlopCounter { start: current() }
    }

    pub fn multiplies(&self) -> u64 {
        current().wrapping_sub(self.start)
    }
}

/// Runs `f` and returns its result together with the multiplies it performed.
pub fn measure<R>(f: impl FnOnce() -> R) -> (R, u64) {
    let counter = FlopCounter::start();
    let out = f();
    (out, counter.multiplies())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nested_counters() {
        let outer = FlopCounter::start();
        record(5);
        let (_, inner) = measure(|| record(7));
        assert_eq!(inner, 7);
        assert_eq!(outer.multiplies(), 12);
    }

    #[test]
    fn threads_are_isolated() {
        let c = FlopCounter::start();
        std::thread::spawn(|| record(1000)).join().unwrap();
        assert_eq!(c.multiplies(), 0);
    }
}
