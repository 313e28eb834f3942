//! Operation counters used to check the complexity claims empirically.

/// Running count of elementary operations (symbol reads/writes, comparisons,
/// table lookups, node visits).
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct OpCount(pub u64);

impl OpCount {
    #[inline]
    pub fn add(&mut self, n: u64) {
        self.0 += n;
    }

    #[inline]
    pub fn tick(&mut self) {
        self.0 += 1;
    }
}
