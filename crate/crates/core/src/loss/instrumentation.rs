//! Per-thread call counters for the adaptive weight map and the
//! gradient-difference loss, used to check that disabled terms are never
//! evaluated.

use std::cell::Cell;

thread_local! {
    static WEIGHT_MAP: Cell<u64> = const { Cell::new(0) };
    static GDC: Cell<u64> = const { Cell::new(0) };
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Counts {
    pub weight_map: u64,
    pub gdc_loss: u64,
}

pub(crate) fn bump_weight_map() {
    WEIGHT_MAP.with(|c| c.set(c.get() + 1));
}

pub(crate) fn bump_gdc() {
    GDC.with(|c| c.set(c.get() + 1));
}

/// Counts on the calling thread since the last [`reset`].
pub fn snapshot() -> Counts {
    Counts {
        weight_map: WEIGHT_MAP.with(Cell::get),
        gdc_loss: GDC.with(Cell::get),
    }
}

pub fn reset() {
    WEIGHT_MAP.with(|c| c.set(0));
    GDC.with(|c| c.set(0));
}
