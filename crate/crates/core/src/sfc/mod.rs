//! Hilbert space-filling curve indexing for the distributed memory store.
//!
//! The codec walks the curve one level at a time. At each level the `n` bits
//! taken from the coordinates select a sub-cube; the sub-cube's position on
//! the curve is the inverse Gray code of those bits after they are moved
//! into the frame given by the current entry corner and intra-cube
//! direction. Entry and direction are then refined for the next level.

mod domain;
mod intervals;

pub use domain::{owner_shards, CellGrid, ShardTable, VirtualDomainMap};
pub use intervals::bbox_to_intervals;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SfcError {
    #[error("out of range: {0}")]
    Range(String),
    #[error("curve index {0} is not part of the occupied domain")]
    NotOccupied(u64),
    #[error("invalid curve parameters: {0}")]
    Params(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HilbertParams {
    dims: u32,
    order: u32,
}

impl HilbertParams {
    pub const MAX_ORDER: u32 = 20;

    pub fn new(dims: u32, order: u32) -> Result<Self, SfcError> {
        if !(2..=3).contains(&dims) {
            return Err(SfcError::Params(format!("dims must be 2 or 3, got {dims}")));
        }
        if !(1..=Self::MAX_ORDER).contains(&order) {
            return Err(SfcError::Params(format!(
                "order must be in 1..={}, got {order}",
                Self::MAX_ORDER
            )));
        }
        if dims * order > 63 {
            return Err(SfcError::Params(format!("{dims}x{order} index bits exceed 63")));
        }
        Ok(Self { dims, order })
    }

    pub fn dims(&self) -> u32 {
        self.dims
    }

    pub fn order(&self) -> u32 {
        self.order
    }

    /// Grid cells per axis.
    pub fn side(&self) -> u64 {
        1 << self.order
    }

    /// Total grid cells, one past the largest index.
    pub fn cell_count(&self) -> u64 {
        1 << (self.dims * self.order)
    }

    fn check_point(&self, p: &[u64]) -> Result<(), SfcError> {
        if p.len() != self.dims as usize {
            return Err(SfcError::Range(format!(
                "point has {} axes, curve has {}",
                p.len(),
                self.dims
            )));
        }
        if let Some(c) = p.iter().find(|&&c| c >= self.side()) {
            return Err(SfcError::Range(format!(
                "coordinate {c} outside 0..{}",
                self.side()
            )));
        }
        Ok(())
    }
}

#[inline]
pub(crate) fn gray(i: u64) -> u64 {
    i ^ (i >> 1)
}

#[inline]
fn gray_inverse(mut g: u64) -> u64 {
    let mut shift = 1;
    while shift < 64 {
        g ^= g >> shift;
        shift <<= 1;
    }
    g
}

#[inline]
fn rotl(x: u64, s: u32, n: u32) -> u64 {
    let s = s % n;
    if s == 0 {
        return x;
    }
    ((x << s) | (x >> (n - s))) & ((1 << n) - 1)
}

#[inline]
fn rotr(x: u64, s: u32, n: u32) -> u64 {
    rotl(x, n - s % n, n)
}

/// Curve state carried from one level to the next.
#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct Frame {
    entry: u64,
    dir: u32,
}

impl Frame {
    /// Sub-cube corner bits visited at position `w` of this frame.
    #[inline]
    pub(crate) fn corner(self, w: u64, n: u32) -> u64 {
        rotl(gray(w), self.dir + 1, n) ^ self.entry
    }

    /// Position on the curve of the sub-cube with corner bits `corner`.
    #[inline]
    fn position(self, corner: u64, n: u32) -> u64 {
        gray_inverse(rotr(corner ^ self.entry, self.dir + 1, n))
    }

    #[inline]
    pub(crate) fn child(self, w: u64, n: u32) -> Frame {
        let entry_w = if w == 0 { 0 } else { gray(2 * ((w - 1) / 2)) };
        let dir_w = if w == 0 {
            0
        } else if w % 2 == 0 {
            (w - 1).trailing_ones() % n
        } else {
            w.trailing_ones() % n
        };
        Frame {
            entry: self.entry ^ rotl(entry_w, self.dir + 1, n),
            dir: (self.dir + dir_w + 1) % n,
        }
    }
}

pub fn sfc_encode(p: &[u64], params: HilbertParams) -> Result<u64, SfcError> {
    params.check_point(p)?;
    let n = params.dims;
    let mut frame = Frame::default();
    let mut h = 0u64;
    for level in (0..params.order).rev() {
        let corner = p
            .iter()
            .enumerate()
            .fold(0u64, |acc, (axis, &c)| acc | (((c >> level) & 1) << axis));
        let w = frame.position(corner, n);
        h = (h << n) | w;
        frame = frame.child(w, n);
    }
    Ok(h)
}

pub fn sfc_decode(h: u64, params: HilbertParams) -> Result<Vec<u64>, SfcError> {
    if h >= params.cell_count() {
        return Err(SfcError::Range(format!(
            "index {h} outside 0..{}",
            params.cell_count()
        )));
    }
    let n = params.dims;
    let mut frame = Frame::default();
    let mut p = vec![0u64; n as usize];
    for level in (0..params.order).rev() {
        let w = (h >> (level * n)) & ((1 << n) - 1);
        let corner = frame.corner(w, n);
        for (axis, c) in p.iter_mut().enumerate() {
            *c |= ((corner >> axis) & 1) << level;
        }
        frame = frame.child(w, n);
    }
    Ok(p)
}

/// Inclusive range of curve indices.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SfcInterval {
    pub start: u64,
    pub end: u64,
}

impl SfcInterval {
    pub fn new(start: u64, end: u64) -> Self {
        debug_assert!(start <= end);
        Self { start, end }
    }

    pub fn len(&self) -> u64 {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, h: u64) -> bool {
        self.start <= h && h <= self.end
    }

    pub fn overlaps(&self, other: &SfcInterval) -> bool {
        self.start <= other.end && other.start <= self.end
    }
}

/// Sort and merge overlapping or touching intervals.
pub fn merge_intervals(mut v: Vec<SfcInterval>) -> Vec<SfcInterval> {
    v.sort_unstable();
    let mut out: Vec<SfcInterval> = Vec::with_capacity(v.len());
    for iv in v {
        match out.last_mut() {
            Some(last) if iv.start <= last.end.saturating_add(1) => last.end = last.end.max(iv.end),
            _ => out.push(iv),
        }
    }
    out
}

#[cfg(test)]
#[path = "../../tests/common/hilbert_oracle.rs"]
mod oracle;
