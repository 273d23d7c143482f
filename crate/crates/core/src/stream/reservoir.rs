//! Weighted sampling with replacement in one pass.
//!
//! Each slot is an independent size-one weighted reservoir driven by
//! exponential jumps: a slot holding key `T` skips ahead until the
//! cumulative weight of the skipped rows reaches `ln(r) / ln(T)`, so the
//! work per slot is logarithmic in the stream length rather than linear.
//! Pending jumps of all slots live in one min-heap keyed by the absolute
//! cumulative weight at which they fire.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;
use std::sync::Arc;

use rand::distr::Open01;
use rand::Rng;

use super::source::DatasetSource;
use crate::error::{Error, Result};
use crate::seed::{self, SeededRng};

/// One filled slot.
#[derive(Clone, Debug, PartialEq)]
pub struct ReservoirDraw {
    pub source_id: usize,
    /// `ln` of the slot's key `r^(1/w)`.
    pub key: f64,
    pub point: Arc<[f64]>,
}

#[derive(Clone, Copy, Debug)]
struct Pending {
    at: f64,
    slot: usize,
}

impl PartialEq for Pending {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Pending {}

impl PartialOrd for Pending {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Pending {
    fn cmp(&self, other: &Self) -> Ordering {
        self.at
            .total_cmp(&other.at)
            .then(self.slot.cmp(&other.slot))
    }
}

/// A bank of `slots` independent weighted reservoirs fed by one stream.
pub struct ReservoirBank {
    slots: Vec<Option<ReservoirDraw>>,
    heap: BinaryHeap<Reverse<Pending>>,
    cumulative: f64,
    rng: SeededRng,
}

impl ReservoirBank {
    pub fn new(slots: usize, rng: SeededRng) -> Self {
        ReservoirBank {
            slots: vec![None; slots],
            heap: BinaryHeap::with_capacity(slots),
            cumulative: 0.0,
            rng,
        }
    }

    pub fn slots(&self) -> usize {
        self.slots.len()
    }

    /// Total weight offered so far.
    pub fn total_weight(&self) -> f64 {
        self.cumulative
    }

    /// Offers row `id` with weight `w`. Rows with zero weight are never
    /// drawn.
    pub fn offer(&mut self, id: usize, row: &[f64], w: f64) -> Result<()> {
        if !(w.is_finite() && w >= 0.0) {
            return Err(Error::param(format!(
                "sampling weight of row {id} must be finite and non-negative, got {w}"
            )));
        }
        if w == 0.0 || self.slots.is_empty() {
            return Ok(());
        }
        let before = self.cumulative;
        let after = before + w;
        self.cumulative = after;
        if before == 0.0 {
            let point: Arc<[f64]> = row.into();
            for s in 0..self.slots.len() {
                let r: f64 = self.rng.sample(Open01);
                self.fill(s, id, r.ln() / w, &point, after);
            }
            return Ok(());
        }
        let mut point: Option<Arc<[f64]>> = None;
        while let Some(&Reverse(top)) = self.heap.peek() {
            if top.at > after {
                break;
            }
            self.heap.pop();
            let old = self.slots[top.slot].as_ref().expect("pending slot is filled").key;
            // the new key is uniform on (T^w, 1) raised to 1/w
            let floor = (w * old).exp();
            let u: f64 = self.rng.sample(Open01);
            let r2 = floor + (1.0 - floor) * u;
            let key = if r2 < 1.0 { r2.ln() / w } else { -f64::MIN_POSITIVE };
            let point = point.get_or_insert_with(|| row.into()).clone();
            self.fill(top.slot, id, key, &point, after);
        }
        Ok(())
    }

    fn fill(&mut self, slot: usize, id: usize, key: f64, point: &Arc<[f64]>, at: f64) {
        let r: f64 = self.rng.sample(Open01);
        let jump = r.ln() / key;
        self.slots[slot] = Some(ReservoirDraw {
            source_id: id,
            key,
            point: point.clone(),
        });
        self.heap.push(Reverse(Pending { at: at + jump, slot }));
    }

    pub fn finish(self) -> Result<Vec<ReservoirDraw>> {
        if self.cumulative == 0.0 && !self.slots.is_empty() {
            return Err(Error::DegenerateWeights);
        }
        Ok(self.slots.into_iter().map(|s| s.expect("filled")).collect())
    }
}

/// `slots` independent draws with probability proportional to `weight`, in
/// exactly one pass over `source`.
pub fn weighted_reservoir_sample<W>(
    source: &mut DatasetSource,
    label: &str,
    mut weight: W,
    slots: usize,
    seed: u64,
) -> Result<Vec<ReservoirDraw>>
where
    W: FnMut(&[f64]) -> f64,
{
    if slots == 0 {
        return Err(Error::param("need at least one slot"));
    }
    let mut bank = ReservoirBank::new(slots, seed::rng(seed, seed::WEIGHTED_BANK, 0));
    source.stream_pass(label, |i, x| bank.offer(i, x, weight(x)))?;
    bank.finish()
}
