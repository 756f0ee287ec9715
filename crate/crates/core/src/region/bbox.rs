use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::RegionError;

/// Axis-aligned integer box, inclusive on both ends.
///
/// Up to three spatial axes plus one temporal axis; when a box has four
/// axes the last one is time. A box with zero axes is the empty sentinel
/// used by templates that hold no regions yet.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct BoundingBox {
    lo: Vec<i64>,
    hi: Vec<i64>,
}

impl BoundingBox {
    pub const MAX_DIMS: usize = 4;

    pub fn new(lo: impl Into<Vec<i64>>, hi: impl Into<Vec<i64>>) -> Result<Self, RegionError> {
        let (lo, hi) = (lo.into(), hi.into());
        if lo.len() != hi.len() {
            return Err(RegionError::Dimension {
                expected: lo.len(),
                found: hi.len(),
            });
        }
        if lo.is_empty() || lo.len() > Self::MAX_DIMS {
            return Err(RegionError::InvalidBox(format!(
                "a box needs 1 to {} axes, got {}",
                Self::MAX_DIMS,
                lo.len()
            )));
        }
        if let Some(axis) = (0..lo.len()).find(|&i| lo[i] > hi[i]) {
            return Err(RegionError::InvalidBox(format!(
                "lo {} > hi {} on axis {axis}",
                lo[axis], hi[axis]
            )));
        }
        Ok(Self { lo, hi })
    }

    /// The zero-axis sentinel.
    pub fn empty() -> Self {
        Self {
            lo: Vec::new(),
            hi: Vec::new(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.lo.is_empty()
    }

    pub fn dims(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[i64] {
        &self.lo
    }

    pub fn hi(&self) -> &[i64] {
        &self.hi
    }

    /// Number of cells along `axis`.
    pub fn extent(&self, axis: usize) -> u64 {
        (self.hi[axis] - self.lo[axis]) as u64 + 1
    }

    pub fn extents(&self) -> Vec<u64> {
        (0..self.dims()).map(|a| self.extent(a)).collect()
    }

    /// Cell count. The empty sentinel has volume 0.
    pub fn volume(&self) -> u64 {
        if self.is_empty() {
            return 0;
        }
        (0..self.dims()).map(|a| self.extent(a)).product()
    }

    fn check_dims(&self, other: &Self) -> Result<(), RegionError> {
        if self.dims() != other.dims() {
            return Err(RegionError::Dimension {
                expected: self.dims(),
                found: other.dims(),
            });
        }
        Ok(())
    }

    /// True when `other` lies entirely inside `self`. Boxes of different
    /// dimensionality never contain one another.
    pub fn contains(&self, other: &Self) -> bool {
        self.dims() == other.dims()
            && !self.is_empty()
            && (0..self.dims()).all(|i| self.lo[i] <= other.lo[i] && other.hi[i] <= self.hi[i])
    }

    pub fn contains_point(&self, p: &[i64]) -> bool {
        p.len() == self.dims()
            && !self.is_empty()
            && (0..self.dims()).all(|i| self.lo[i] <= p[i] && p[i] <= self.hi[i])
    }

    /// Minimal box enclosing both. The empty sentinel is the identity.
    pub fn union(&self, other: &Self) -> Result<Self, RegionError> {
        if self.is_empty() {
            return Ok(other.clone());
        }
        if other.is_empty() {
            return Ok(self.clone());
        }
        self.check_dims(other)?;
        let lo = (0..self.dims()).map(|i| self.lo[i].min(other.lo[i])).collect::<Vec<_>>();
        let hi = (0..self.dims()).map(|i| self.hi[i].max(other.hi[i])).collect::<Vec<_>>();
        Ok(Self { lo, hi })
    }

    /// Largest box inside both, or `None` when they are disjoint.
    pub fn intersect(&self, other: &Self) -> Result<Option<Self>, RegionError> {
        self.check_dims(other)?;
        if self.is_empty() {
            return Ok(None);
        }
        let lo = (0..self.dims()).map(|i| self.lo[i].max(other.lo[i])).collect::<Vec<_>>();
        let hi = (0..self.dims()).map(|i| self.hi[i].min(other.hi[i])).collect::<Vec<_>>();
        if (0..lo.len()).any(|i| lo[i] > hi[i]) {
            return Ok(None);
        }
        Ok(Some(Self { lo, hi }))
    }

    pub fn intersects(&self, other: &Self) -> bool {
        matches!(self.intersect(other), Ok(Some(_)))
    }

    /// Contract every face by `ghost[axis]` cells. `None` if nothing is left.
    pub fn shrink(&self, ghost: &[i64]) -> Option<Self> {
        if ghost.len() != self.dims() || ghost.iter().any(|&g| g < 0) {
            return None;
        }
        let lo = (0..self.dims()).map(|i| self.lo[i] + ghost[i]).collect::<Vec<_>>();
        let hi = (0..self.dims()).map(|i| self.hi[i] - ghost[i]).collect::<Vec<_>>();
        Self::new(lo, hi).ok()
    }

    /// Expand every face by `margin[axis]` cells.
    pub fn grow(&self, margin: &[i64]) -> Self {
        let lo = (0..self.dims()).map(|i| self.lo[i] - margin[i]).collect();
        let hi = (0..self.dims()).map(|i| self.hi[i] + margin[i]).collect();
        Self { lo, hi }
    }

    /// Row-major offset of `p` inside the box, last axis fastest.
    pub fn linear_index(&self, p: &[i64]) -> usize {
        let mut idx = 0u64;
        for (axis, &coord) in p.iter().enumerate() {
            idx = idx * self.extent(axis) + (coord - self.lo[axis]) as u64;
        }
        idx as usize
    }

    /// Every cell in row-major order.
    pub fn cells(&self) -> Cells<'_> {
        Cells {
            bbox: self,
            next: if self.is_empty() {
                None
            } else {
                Some(self.lo.clone())
            },
        }
    }
}

pub struct Cells<'a> {
    bbox: &'a BoundingBox,
    next: Option<Vec<i64>>,
}

impl Iterator for Cells<'_> {
    type Item = Vec<i64>;

    fn next(&mut self) -> Option<Vec<i64>> {
        let current = self.next.take()?;
        let mut succ = current.clone();
        for axis in (0..succ.len()).rev() {
            if succ[axis] < self.bbox.hi[axis] {
                succ[axis] += 1;
                self.next = Some(succ);
                break;
            }
            succ[axis] = self.bbox.lo[axis];
        }
        Some(current)
    }
}

/// Copy the cells of `region` (which must lie in both boxes) from a dense
/// row-major `src` laid out over `src_box` into `dst` laid out over `dst_box`.
pub fn copy_dense(
    src_box: &BoundingBox,
    src: &[u8],
    dst_box: &BoundingBox,
    dst: &mut [u8],
    region: &BoundingBox,
    elem_size: usize,
) {
    let dims = region.dims();
    let last = dims - 1;
    let run = region.extent(last) as usize * elem_size;
    let outer = if dims == 1 {
        BoundingBox::new(vec![0], vec![0]).expect("unit box")
    } else {
        BoundingBox::new(region.lo()[..last].to_vec(), region.hi()[..last].to_vec())
            .expect("sub-box of a valid box")
    };
    let mut point = region.lo().to_vec();
    for prefix in outer.cells() {
        if dims > 1 {
            point[..last].copy_from_slice(&prefix);
        }
        let s = src_box.linear_index(&point) * elem_size;
        let d = dst_box.linear_index(&point) * elem_size;
        dst[d..d + run].copy_from_slice(&src[s..s + run]);
    }
}

impl fmt::Display for BoundingBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |v: &[i64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        write!(f, "<{};{}>", join(&self.lo), join(&self.hi))
    }
}

impl FromStr for BoundingBox {
    type Err = RegionError;

    /// Parses the `<lo0,lo1;hi0,hi1>` notation; `<>` is the empty sentinel.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || RegionError::InvalidBox(format!("cannot parse bounding box {s:?}"));
        let inner = s
            .trim()
            .strip_prefix('<')
            .and_then(|r| r.strip_suffix('>'))
            .ok_or_else(bad)?;
        if inner.trim().is_empty() {
            return Ok(Self::empty());
        }
        let (lo, hi) = inner.split_once(';').ok_or_else(bad)?;
        let parse = |part: &str| {
            part.split(',')
                .map(|x| x.trim().parse::<i64>().map_err(|_| bad()))
                .collect::<Result<Vec<_>, _>>()
        };
        Self::new(parse(lo)?, parse(hi)?)
    }
}

impl TryFrom<String> for BoundingBox {
    type Error = RegionError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<BoundingBox> for String {
    fn from(b: BoundingBox) -> String {
        b.to_string()
    }
}
