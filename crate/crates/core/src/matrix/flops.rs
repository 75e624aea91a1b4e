use std::sync::atomic::{AtomicU64, Ordering};

/// Sink for floating-point operation counts.
///
/// Counted products report `2·m·k·n` flops for an `(m×k)·(k×n)` product.
pub trait FlopCounter: Send + Sync {
    fn add_flops(&self, flops: u64);
}

/// Discards every count.
#[derive(Debug, Default, Clone, Copy)]
pub struct NoFlops;

impl FlopCounter for NoFlops {
    fn add_flops(&self, _flops: u64) {}
}

/// Contention-safe running total.
#[derive(Debug, Default)]
pub struct AtomicFlops(AtomicU64);

impl AtomicFlops {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self) -> u64 {
        self.0.load(Ordering::Relaxed)
    }
}

impl FlopCounter for AtomicFlops {
    fn add_flops(&self, flops: u64) {
        self.0.fetch_add(flops, Ordering::Relaxed);
    }
}
