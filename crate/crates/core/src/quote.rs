use crate::scalar::Scalar;

/// An ask/bid pair in price units. `ask >= bid` for every quote a maker posts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quote<T: Scalar = f64> {
    pub ask: T,
    pub bid: T,
}

impl<T: Scalar> Quote<T> {
    pub fn new(ask: T, bid: T) -> Self {
        debug_assert!(ask >= bid, "ask {ask} below bid {bid}");
        Quote { ask, bid }
    }

    /// Quote with zero spread at `price`.
    pub fn flat(price: T) -> Self {
        Quote { ask: price, bid: price }
    }

    pub fn spread(&self) -> T {
        self.ask - self.bid
    }

    pub fn mid(&self) -> T {
        (self.ask + self.bid) / T::of(2.0)
    }
}
