use std::collections::{BTreeMap, BTreeSet};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{assemble, staged_chunks, Completion, SequenceCounter, StagedChunk, StorageBackend, StorageError, StorageStats};
use crate::region::{BoundingBox, DataRegion, DataRegionId};
use crate::sfc::{bbox_to_intervals, CellGrid, HilbertParams, SfcInterval, ShardTable, VirtualDomainMap};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DmsConfig {
    pub shard_count: usize,
    pub params: HilbertParams,
    pub grid: CellGrid,
    /// Occupied application domain, in data coordinates.
    pub domain: Vec<BoundingBox>,
}

impl DmsConfig {
    /// Smallest curve covering `domain` with one cell per `cell_extent` block.
    pub fn for_domain(domain: &BoundingBox, cell_extent: &[i64], shard_count: usize) -> Result<Self, StorageError> {
        if !(2..=3).contains(&domain.dims()) || cell_extent.len() != domain.dims() {
            return Err(StorageError::Config(format!(
                "memory store needs a 2-D or 3-D domain with matching cell extents, got {domain}"
            )));
        }
        if cell_extent.iter().any(|&c| c <= 0) {
            return Err(StorageError::Config("cell extents must be positive".into()));
        }
        let cells_per_axis = (0..domain.dims())
            .map(|a| (domain.extent(a) as i64 + cell_extent[a] - 1) / cell_extent[a])
            .max()
            .unwrap_or(1) as u64;
        let order = (64 - (cells_per_axis.max(2) - 1).leading_zeros()).max(1);
        Ok(Self {
            shard_count,
            params: HilbertParams::new(domain.dims() as u32, order)?,
            grid: CellGrid {
                origin: domain.lo().to_vec(),
                cell_extent: cell_extent.to_vec(),
            },
            domain: vec![domain.clone()],
        })
    }
}

/// Metadata record installed on every shard whose virtual slice covers part
/// of a staged chunk. `intervals` are the raw curve pieces inside that slice.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MetaEntry {
    pub id: DataRegionId,
    pub bbox: BoundingBox,
    pub seq: u64,
    pub owner: usize,
    pub intervals: Vec<SfcInterval>,
}

#[derive(Debug, Default)]
pub struct DmsShard {
    data: BTreeMap<(DataRegionId, u64), StagedChunk>,
    metadata: BTreeMap<DataRegionId, Vec<MetaEntry>>,
}

impl DmsShard {
    pub fn payload_count(&self, id: &DataRegionId) -> usize {
        self.data.keys().filter(|(i, _)| i == id).count()
    }

    pub fn metadata_count(&self, id: &DataRegionId) -> usize {
        self.metadata.get(id).map_or(0, Vec::len)
    }

    pub fn metadata_for(&self, id: &DataRegionId) -> &[MetaEntry] {
        self.metadata.get(id).map(Vec::as_slice).unwrap_or(&[])
    }
}

/// Distributed memory store: payload on the inserting shard, metadata on the
/// shards owning the curve intervals the payload covers.
pub struct DmsStore {
    name: String,
    params: HilbertParams,
    grid: CellGrid,
    vmap: VirtualDomainMap,
    table: ShardTable,
    shards: Vec<Mutex<DmsShard>>,
    seq: SequenceCounter,
    stats: Mutex<StorageStats>,
}

impl DmsStore {
    pub fn new(name: impl Into<String>, cfg: &DmsConfig, seq: SequenceCounter) -> Result<Self, StorageError> {
        let cell_boxes = cfg
            .domain
            .iter()
            .map(|b| cfg.grid.to_cells(b))
            .collect::<Result<Vec<_>, _>>()?;
        let vmap = VirtualDomainMap::build(&cell_boxes, cfg.params)?;
        let table = ShardTable::new(cfg.shard_count, vmap.total())?;
        Ok(Self {
            name: name.into(),
            params: cfg.params,
            grid: cfg.grid.clone(),
            vmap,
            table,
            shards: (0..cfg.shard_count).map(|_| Mutex::new(DmsShard::default())).collect(),
            seq,
            stats: Mutex::new(StorageStats::default()),
        })
    }

    pub fn shard_count(&self) -> usize {
        self.shards.len()
    }

    pub fn virtual_map(&self) -> &VirtualDomainMap {
        &self.vmap
    }

    pub fn shard_table(&self) -> &ShardTable {
        &self.table
    }

    pub fn with_shard<R>(&self, shard: usize, f: impl FnOnce(&DmsShard) -> R) -> R {
        f(&self.shards[shard].lock().expect("shard lock"))
    }

    /// Per owning shard, the raw curve pieces of `bbox` inside its slice.
    fn placement(&self, bbox: &BoundingBox) -> Result<BTreeMap<usize, Vec<SfcInterval>>, StorageError> {
        let cells = self.grid.to_cells(bbox)?;
        let mut out: BTreeMap<usize, Vec<SfcInterval>> = BTreeMap::new();
        for raw in bbox_to_intervals(&cells, self.params)? {
            let v = self.vmap.interval_to_virtual(raw)?;
            for shard in self.table.owners_of(v)? {
                let slice = self.table.slice(shard).expect("owners have slices");
                let clipped = SfcInterval::new(v.start.max(slice.start), v.end.min(slice.end));
                out.entry(shard).or_default().extend(self.vmap.virtual_to_raw(clipped));
            }
        }
        Ok(out)
    }

    /// Shards that would hold metadata for `bbox`.
    pub fn metadata_shards(&self, bbox: &BoundingBox) -> Result<BTreeSet<usize>, StorageError> {
        Ok(self.placement(bbox)?.into_keys().collect())
    }

    /// Install one metadata record on `shard` (the META_PUT message).
    pub fn install_metadata(&self, shard: usize, entry: MetaEntry) -> Result<(), StorageError> {
        let s = self
            .shards
            .get(shard)
            .ok_or_else(|| StorageError::Config(format!("no shard {shard}")))?;
        s.lock().expect("shard lock").metadata.entry(entry.id.clone()).or_default().push(entry);
        Ok(())
    }

    fn stage(&self, region: &DataRegion, home: usize) -> Result<u64, StorageError> {
        let home = home % self.shards.len();
        // validate placement before drawing sequence numbers
        let placements = region
            .chunks()
            .map(|c| self.placement(&c.bbox))
            .collect::<Result<Vec<_>, _>>()?;
        let chunks = staged_chunks(region, &self.seq)?;
        let mut bytes = 0;
        for (chunk, placement) in chunks.into_iter().zip(placements) {
            bytes += chunk.payload.len() as u64;
            let (id, bbox, seq) = (chunk.id.clone(), chunk.bbox.clone(), chunk.seq);
            self.shards[home]
                .lock()
                .expect("shard lock")
                .data
                .insert((id.clone(), seq), chunk);
            for (shard, intervals) in placement {
                self.install_metadata(
                    shard,
                    MetaEntry {
                        id: id.clone(),
                        bbox: bbox.clone(),
                        seq,
                        owner: home,
                        intervals,
                    },
                )?;
            }
        }
        self.stats.lock().expect("stats lock").staged_bytes += bytes;
        Ok(bytes)
    }

    fn read(&self, id: &DataRegionId, query: &BoundingBox) -> Result<DataRegion, StorageError> {
        let placement = self.placement(query)?;
        let mut wanted: BTreeMap<u64, (usize, BoundingBox)> = BTreeMap::new();
        for (shard, query_ivs) in &placement {
            let s = self.shards[*shard].lock().expect("shard lock");
            for e in s.metadata_for(id) {
                let hit = e.intervals.iter().any(|a| query_ivs.iter().any(|b| a.overlaps(b)));
                if hit && e.bbox.intersects(query) {
                    wanted.insert(e.seq, (e.owner, e.bbox.clone()));
                }
            }
        }
        let mut pieces = Vec::with_capacity(wanted.len());
        for (seq, (owner, _)) in wanted {
            let s = self.shards[owner].lock().expect("shard lock");
            if let Some(c) = s.data.get(&(id.clone(), seq)) {
                pieces.push(c.clone());
            }
        }
        let region = assemble(id, query, pieces)?;
        self.stats.lock().expect("stats lock").read_bytes += region.payload_bytes();
        Ok(region)
    }

    fn delete(&self, id: &DataRegionId) {
        for s in &self.shards {
            let mut s = s.lock().expect("shard lock");
            s.metadata.remove(id);
            s.data.retain(|(i, _), _| i != id);
        }
    }
}

impl StorageBackend for DmsStore {
    fn name(&self) -> &str {
        &self.name
    }

    fn stage_region(&self, region: &DataRegion, origin: usize) -> Completion<u64> {
        Completion::ready(self.stage(region, origin))
    }

    fn read_region(&self, id: &DataRegionId, query: &BoundingBox) -> Completion<DataRegion> {
        Completion::ready(self.read(id, query))
    }

    fn delete_region(&self, id: &DataRegionId) -> Completion<()> {
        self.delete(id);
        Completion::ready(Ok(()))
    }

    fn stats(&self) -> StorageStats {
        self.stats.lock().expect("stats lock").clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::region::{ElementKind, RegionKind};

    fn bb(s: &str) -> BoundingBox {
        s.parse().unwrap()
    }

    fn store(shards: usize) -> DmsStore {
        let cfg = DmsConfig::for_domain(&bb("<0,0;15,15>"), &[1, 1], shards).unwrap();
        DmsStore::new("DMS", &cfg, SequenceCounter::new()).unwrap()
    }

    fn region(b: &str, fill: impl Fn(usize) -> u8) -> DataRegion {
        let bbox = bb(b);
        let payload = (0..bbox.volume() as usize).map(fill).collect();
        DataRegion::dense_from(
            DataRegionId::new("", "Mask", "dense2d", 0, 0),
            RegionKind::Dense2D,
            ElementKind::U8,
            bbox,
            payload,
        )
        .unwrap()
    }

    #[test]
    fn config_picks_smallest_order() {
        let cfg = DmsConfig::for_domain(&bb("<0,0;99,99>"), &[50, 50], 2).unwrap();
        assert_eq!(cfg.params.order(), 1);
        let cfg = DmsConfig::for_domain(&bb("<0,0;63,63>"), &[1, 1], 2).unwrap();
        assert_eq!(cfg.params.order(), 6);
        let cfg = DmsConfig::for_domain(&bb("<0,0;64,3>"), &[1, 1], 2).unwrap();
        assert_eq!(cfg.params.order(), 7);
    }

    #[test]
    fn stage_then_read_roundtrip() {
        let s = store(4);
        let r = region("<2,3;9,12>", |i| i as u8);
        s.stage_region(&r, 0).wait().unwrap();
        let back = s.read_region(r.id(), r.bbox()).wait().unwrap();
        assert_eq!(back.dense_payload(r.bbox()).unwrap(), r.dense_payload(r.bbox()).unwrap());
    }

    #[test]
    fn payload_on_home_shard_metadata_on_owners() {
        let s = store(4);
        let r = region("<0,0;15,15>", |_| 3);
        s.stage_region(&r, 2).wait().unwrap();
        for shard in 0..4 {
            s.with_shard(shard, |sh| {
                assert_eq!(sh.payload_count(r.id()), usize::from(shard == 2));
                assert_eq!(sh.metadata_count(r.id()), 1);
                assert_eq!(sh.metadata_for(r.id())[0].owner, 2);
            });
        }
        // a query entirely in shard 0's slice still finds the payload on shard 2
        let slice0 = s.shard_table().slice(0).unwrap();
        let raw = s.virtual_map().virtual_to_raw(slice0)[0];
        let p = crate::sfc::sfc_decode(raw.start, s.params).unwrap();
        let q = BoundingBox::new(vec![p[0] as i64, p[1] as i64], vec![p[0] as i64, p[1] as i64]).unwrap();
        assert_eq!(s.metadata_shards(&q).unwrap(), BTreeSet::from([0]));
        assert_eq!(s.read_region(r.id(), &q).wait().unwrap().dense_payload(&q).unwrap(), vec![3]);
    }

    #[test]
    fn overlapping_stages_last_writer_wins() {
        let s = store(3);
        s.stage_region(&region("<0,0;7,7>", |_| 1), 0).wait().unwrap();
        s.stage_region(&region("<4,4;11,11>", |_| 2), 1).wait().unwrap();
        let q = bb("<3,3;4,4>");
        let got = s.read_region(&DataRegionId::new("", "Mask", "dense2d", 0, 0), &q).wait().unwrap();
        assert_eq!(got.dense_payload(&q).unwrap(), vec![1, 1, 1, 2]);
    }

    #[test]
    fn sub_box_read_is_clipped() {
        let s = store(2);
        let r = region("<0,0;3,3>", |i| i as u8);
        s.stage_region(&r, 0).wait().unwrap();
        let q = bb("<1,1;2,3>");
        let got = s.read_region(r.id(), &q).wait().unwrap();
        assert_eq!(got.payload_bytes(), q.volume());
        assert_eq!(got.dense_payload(&q).unwrap(), vec![5, 6, 7, 9, 10, 11]);
    }

    #[test]
    fn delete_is_idempotent_and_isolated() {
        let s = store(2);
        let a = region("<0,0;3,3>", |_| 1);
        let b = DataRegion::dense_from(
            DataRegionId::new("", "Other", "dense2d", 0, 0),
            RegionKind::Dense2D,
            ElementKind::U8,
            bb("<0,0;3,3>"),
            vec![2; 16],
        )
        .unwrap();
        s.stage_region(&a, 0).wait().unwrap();
        s.stage_region(&b, 1).wait().unwrap();
        s.delete_region(a.id()).wait().unwrap();
        s.delete_region(a.id()).wait().unwrap();
        assert!(matches!(s.read_region(a.id(), a.bbox()).wait(), Err(StorageError::NotFound(_))));
        assert!(s.read_region(b.id(), b.bbox()).wait().is_ok());
    }

    #[test]
    fn unoccupied_domain_rejected() {
        let cfg = DmsConfig {
            shard_count: 2,
            params: HilbertParams::new(2, 3).unwrap(),
            grid: CellGrid::unit(2),
            domain: vec![bb("<0,0;3,3>")],
        };
        let s = DmsStore::new("DMS", &cfg, SequenceCounter::new()).unwrap();
        let r = region("<0,0;5,5>", |_| 0);
        assert!(matches!(s.stage_region(&r, 0).wait(), Err(StorageError::NotOccupied(_))));
        assert!(matches!(
            s.read_region(r.id(), &bb("<6,6;6,6>")).wait(),
            Err(StorageError::NotOccupied(_))
        ));
    }
}
