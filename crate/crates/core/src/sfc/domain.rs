use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{bbox_to_intervals, merge_intervals, HilbertParams, SfcError, SfcInterval};
use crate::region::BoundingBox;

/// Maps data coordinates onto curve grid cells: one cell per
/// `cell_extent` block, counted from `origin`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellGrid {
    pub origin: Vec<i64>,
    pub cell_extent: Vec<i64>,
}

impl CellGrid {
    pub fn unit(dims: usize) -> Self {
        Self {
            origin: vec![0; dims],
            cell_extent: vec![1; dims],
        }
    }

    pub fn to_cells(&self, b: &BoundingBox) -> Result<BoundingBox, SfcError> {
        if b.dims() != self.origin.len() {
            return Err(SfcError::Range(format!(
                "box {b} has {} axes, grid has {}",
                b.dims(),
                self.origin.len()
            )));
        }
        let conv = |v: &[i64]| -> Vec<i64> {
            (0..v.len())
                .map(|a| (v[a] - self.origin[a]).div_euclid(self.cell_extent[a]))
                .collect()
        };
        BoundingBox::new(conv(b.lo()), conv(b.hi())).map_err(|e| SfcError::Range(e.to_string()))
    }
}

/// Contiguous renumbering of the (possibly gapped) occupied curve range.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VirtualDomainMap {
    occupied: Vec<SfcInterval>,
    offsets: Vec<u64>,
    total: u64,
}

impl VirtualDomainMap {
    pub fn build(occupied_boxes: &[BoundingBox], params: HilbertParams) -> Result<Self, SfcError> {
        let mut all = Vec::new();
        for b in occupied_boxes {
            all.extend(bbox_to_intervals(b, params)?);
        }
        Ok(Self::from_intervals(all))
    }

    pub fn from_intervals(intervals: Vec<SfcInterval>) -> Self {
        let occupied = merge_intervals(intervals);
        let mut offsets = Vec::with_capacity(occupied.len());
        let mut total = 0u64;
        for iv in &occupied {
            offsets.push(total);
            total += iv.len();
        }
        Self {
            occupied,
            offsets,
            total,
        }
    }

    pub fn occupied(&self) -> &[SfcInterval] {
        &self.occupied
    }

    pub fn offsets(&self) -> &[u64] {
        &self.offsets
    }

    /// Length of the virtual domain.
    pub fn total(&self) -> u64 {
        self.total
    }

    fn slot(&self, raw: u64) -> Result<usize, SfcError> {
        let i = self.occupied.partition_point(|iv| iv.end < raw);
        match self.occupied.get(i) {
            Some(iv) if iv.start <= raw => Ok(i),
            _ => Err(SfcError::NotOccupied(raw)),
        }
    }

    pub fn to_virtual(&self, raw: u64) -> Result<u64, SfcError> {
        let i = self.slot(raw)?;
        Ok(self.offsets[i] + (raw - self.occupied[i].start))
    }

    /// Virtual image of a raw interval, which must be fully occupied.
    pub fn interval_to_virtual(&self, iv: SfcInterval) -> Result<SfcInterval, SfcError> {
        let i = self.slot(iv.start)?;
        let occ = self.occupied[i];
        if iv.end > occ.end {
            return Err(SfcError::NotOccupied(occ.end + 1));
        }
        let start = self.offsets[i] + (iv.start - occ.start);
        Ok(SfcInterval::new(start, start + (iv.end - iv.start)))
    }

    /// Raw curve pieces of the virtual range `[v.start, v.end]`.
    pub fn virtual_to_raw(&self, v: SfcInterval) -> Vec<SfcInterval> {
        let mut out = Vec::new();
        for (i, occ) in self.occupied.iter().enumerate() {
            let vs = self.offsets[i];
            let ve = vs + occ.len() - 1;
            if ve < v.start || vs > v.end {
                continue;
            }
            let a = v.start.max(vs) - vs + occ.start;
            let b = v.end.min(ve) - vs + occ.start;
            out.push(SfcInterval::new(a, b));
        }
        out
    }
}

/// Equal-length contiguous slices of the virtual domain, one per shard.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShardTable {
    shard_count: usize,
    total: u64,
    boundaries: Vec<u64>,
}

impl ShardTable {
    pub fn new(shard_count: usize, total: u64) -> Result<Self, SfcError> {
        if shard_count == 0 {
            return Err(SfcError::Params("shard count must be positive".into()));
        }
        let boundaries = (0..=shard_count)
            .map(|i| ((i as u128 * total as u128) / shard_count as u128) as u64)
            .collect();
        Ok(Self {
            shard_count,
            total,
            boundaries,
        })
    }

    pub fn shard_count(&self) -> usize {
        self.shard_count
    }

    /// Split points: shard `i` owns `[boundaries[i], boundaries[i+1])`.
    pub fn boundaries(&self) -> &[u64] {
        &self.boundaries
    }

    pub fn slice(&self, shard: usize) -> Option<SfcInterval> {
        let (a, b) = (self.boundaries[shard], self.boundaries[shard + 1]);
        (a < b).then(|| SfcInterval::new(a, b - 1))
    }

    pub fn owner(&self, v: u64) -> Result<usize, SfcError> {
        if v >= self.total {
            return Err(SfcError::Range(format!("virtual index {v} outside 0..{}", self.total)));
        }
        Ok(self.boundaries[..self.shard_count].partition_point(|&s| s <= v) - 1)
    }

    /// Shards whose slice intersects the virtual interval.
    pub fn owners_of(&self, v: SfcInterval) -> Result<Vec<usize>, SfcError> {
        let (a, b) = (self.owner(v.start)?, self.owner(v.end)?);
        Ok((a..=b).filter(|&s| self.slice(s).is_some()).collect())
    }
}

/// Shards holding metadata for any cell of `b` (grid coordinates).
pub fn owner_shards(
    b: &BoundingBox,
    vmap: &VirtualDomainMap,
    shards: &ShardTable,
    params: HilbertParams,
) -> Result<BTreeSet<usize>, SfcError> {
    let mut out = BTreeSet::new();
    for iv in bbox_to_intervals(b, params)? {
        let v = vmap.interval_to_virtual(iv)?;
        out.extend(shards.owners_of(v)?);
    }
    Ok(out)
}
