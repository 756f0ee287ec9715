use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{BoundingBox, DataRegion, RegionError};

/// Named container of data regions sharing a spatial-temporal scope.
///
/// The template box is always the minimal box enclosing every region box;
/// an empty template has the zero-axis sentinel box.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionTemplate {
    name: String,
    bbox: BoundingBox,
    regions: BTreeMap<String, Vec<DataRegion>>,
}

impl RegionTemplate {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            bbox: BoundingBox::empty(),
            regions: BTreeMap::new(),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn bbox(&self) -> &BoundingBox {
        &self.bbox
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }

    pub fn len(&self) -> usize {
        self.regions.values().map(Vec::len).sum()
    }

    /// All regions, grouped by name in name order, insertion order within a name.
    pub fn regions(&self) -> impl Iterator<Item = &DataRegion> {
        self.regions.values().flatten()
    }

    pub fn regions_named<'a>(&'a self, name: &str) -> &'a [DataRegion] {
        self.regions.get(name).map(Vec::as_slice).unwrap_or(&[])
    }

    fn slot_index(&self, name: &str, type_tag: &str, timestamp: i64, version: i64) -> Option<usize> {
        self.regions.get(name)?.iter().position(|r| {
            let id = r.id();
            id.type_tag == type_tag && id.timestamp == timestamp && id.version == version
        })
    }

    pub fn insert(&mut self, region: DataRegion) -> Result<(), RegionError> {
        let id = region.id().clone();
        let name = id.name();
        if self.slot_index(&name, &id.type_tag, id.timestamp, id.version).is_some() {
            return Err(RegionError::DuplicateRegion(id.to_string()));
        }
        let bbox = self.bbox.union(region.bbox())?;
        self.bbox = bbox;
        self.regions.entry(name).or_default().push(region);
        Ok(())
    }

    /// Exact tuple lookup; never returns a partial match.
    pub fn get(&self, name: &str, type_tag: &str, timestamp: i64, version: i64) -> Option<&DataRegion> {
        let i = self.slot_index(name, type_tag, timestamp, version)?;
        Some(&self.regions[name][i])
    }

    pub fn get_mut(
        &mut self,
        name: &str,
        type_tag: &str,
        timestamp: i64,
        version: i64,
    ) -> Option<&mut DataRegion> {
        let i = self.slot_index(name, type_tag, timestamp, version)?;
        self.regions.get_mut(name).map(|v| &mut v[i])
    }

    pub fn get_by_id(&self, id: &super::DataRegionId) -> Option<&DataRegion> {
        self.get(&id.name(), &id.type_tag, id.timestamp, id.version)
    }

    pub fn get_by_id_mut(&mut self, id: &super::DataRegionId) -> Option<&mut DataRegion> {
        self.get_mut(&id.name(), &id.type_tag, id.timestamp, id.version)
    }

    pub fn remove(&mut self, id: &super::DataRegionId) -> Option<DataRegion> {
        let name = id.name();
        let i = self.slot_index(&name, &id.type_tag, id.timestamp, id.version)?;
        let slot = self.regions.get_mut(&name)?;
        let removed = slot.remove(i);
        if slot.is_empty() {
            self.regions.remove(&name);
        }
        self.recompute_bbox();
        Some(removed)
    }

    fn recompute_bbox(&mut self) {
        let bbox = self
            .regions()
            .try_fold(BoundingBox::empty(), |acc, r| acc.union(r.bbox()))
            .expect("regions in one template share dimensionality");
        self.bbox = bbox;
    }

    pub(crate) fn from_parts(
        name: String,
        bbox: BoundingBox,
        regions: Vec<DataRegion>,
    ) -> Result<Self, RegionError> {
        let mut t = Self::new(name);
        for r in regions {
            t.insert(r)?;
        }
        if t.bbox != bbox {
            return Err(RegionError::Decode(format!(
                "template box {bbox} does not enclose its regions minimally ({})",
                t.bbox
            )));
        }
        Ok(t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::region::{DataRegionId, ElementKind, RegionKind};

    fn bb(s: &str) -> BoundingBox {
        s.parse().unwrap()
    }

    fn region(key: &str, ts: i64, ver: i64, b: &str) -> DataRegion {
        DataRegion::new(
            DataRegionId::new("", key, "dense2d", ts, ver),
            RegionKind::Dense2D,
            ElementKind::U8,
            bb(b),
        )
        .unwrap()
    }

    #[test]
    fn bbox_tracks_inserts() {
        let mut t = RegionTemplate::new("tile");
        assert!(t.bbox().is_empty());
        t.insert(region("RGB", 0, 0, "<0,0;49,49>")).unwrap();
        assert_eq!(t.bbox(), &bb("<0,0;49,49>"));
        t.insert(region("Mask", 0, 0, "<50,50;99,99>")).unwrap();
        assert_eq!(t.bbox(), &bb("<0,0;99,99>"));
    }

    #[test]
    fn duplicate_tuple_rejected() {
        let mut t = RegionTemplate::new("tile");
        t.insert(region("RGB", 0, 0, "<0,0;9,9>")).unwrap();
        assert!(matches!(
            t.insert(region("RGB", 0, 0, "<0,0;9,9>")),
            Err(RegionError::DuplicateRegion(_))
        ));
        t.insert(region("RGB", 0, 1, "<0,0;9,9>")).unwrap();
        assert_eq!(t.regions_named("RGB").len(), 2);
    }

    #[test]
    fn lookup_discriminates_tuple() {
        let mut t = RegionTemplate::new("tile");
        t.insert(region("RGB", 0, 0, "<0,0;9,9>")).unwrap();
        t.insert(region("RGB", 1, 0, "<0,0;19,19>")).unwrap();
        assert_eq!(t.get("RGB", "dense2d", 0, 0).unwrap().bbox(), &bb("<0,0;9,9>"));
        assert_eq!(t.get("RGB", "dense2d", 1, 0).unwrap().bbox(), &bb("<0,0;19,19>"));
        assert!(t.get("RGB", "dense2d", 0, 1).is_none());
        assert!(t.get("RGB", "sparse", 0, 0).is_none());
    }

    #[test]
    fn remove_shrinks_bbox() {
        let mut t = RegionTemplate::new("tile");
        t.insert(region("A", 0, 0, "<0,0;9,9>")).unwrap();
        t.insert(region("B", 0, 0, "<50,50;59,59>")).unwrap();
        let id = DataRegionId::new("", "B", "dense2d", 0, 0);
        assert!(t.remove(&id).is_some());
        assert_eq!(t.bbox(), &bb("<0,0;9,9>"));
        assert!(t.remove(&id).is_none());
        t.remove(&DataRegionId::new("", "A", "dense2d", 0, 0));
        assert!(t.bbox().is_empty());
    }

    #[test]
    fn mixed_dims_rejected() {
        let mut t = RegionTemplate::new("tile");
        t.insert(region("A", 0, 0, "<0,0;9,9>")).unwrap();
        let r3 = DataRegion::new(
            DataRegionId::new("", "V", "dense3d", 0, 0),
            RegionKind::Dense3D,
            ElementKind::U8,
            bb("<0,0,0;1,1,1>"),
        )
        .unwrap();
        assert!(matches!(t.insert(r3), Err(RegionError::Dimension { .. })));
        assert_eq!(t.len(), 1);
    }
}
