use super::stage::{RegionDescriptor, StageInstance};
use super::RuntimeError;
use crate::region::{DataRegion, DataRegionId, IoMode, RegionTemplate};
use crate::storage::{StorageError, StorageRegistry};

fn failed(stage: &StageInstance, cause: StorageError) -> RuntimeError {
    RuntimeError::StageFailed {
        stage: stage.stage_id,
        cause,
    }
}

fn localize(d: &RegionDescriptor, read: DataRegion) -> Result<DataRegion, RuntimeError> {
    let mut r = read
        .with_io_mode(d.io_mode)
        .with_binding(d.binding.clone())
        .with_lazy(d.lazy);
    if r.bbox().contains(&d.query) {
        r.set_roi(d.query.clone())?;
    }
    Ok(r)
}

/// Build the stage's local template.
///
/// Non-lazy inputs are requested together and then awaited, lazy inputs are
/// installed metadata-only, and outputs are created empty.
pub fn worker_prepare(stage: &StageInstance, registry: &StorageRegistry) -> Result<RegionTemplate, RuntimeError> {
    let mut template = RegionTemplate::new(format!("stage-{}", stage.stage_id));
    let mut pending = Vec::new();
    for d in &stage.regions {
        let backend = registry.get(&d.binding).map_err(|e| failed(stage, e))?;
        if d.io_mode.reads() && !d.lazy {
            pending.push((d, backend.read_region(&d.id, &d.query)));
        } else {
            let mut r = d.empty_region()?;
            if d.io_mode == IoMode::Output {
                r.mark_materialized();
            }
            template.insert(r)?;
        }
    }
    for (d, completion) in pending {
        let read = completion.wait().map_err(|e| failed(stage, e))?;
        template.insert(localize(d, read)?)?;
    }
    Ok(template)
}

/// Materialize a lazily installed region on first access.
pub fn touch_region<'a>(
    template: &'a mut RegionTemplate,
    id: &DataRegionId,
    registry: &StorageRegistry,
) -> Result<&'a DataRegion, RuntimeError> {
    let region = template
        .get_by_id(id)
        .ok_or_else(|| RuntimeError::Config(format!("region {id} is not part of the template")))?;
    if !region.is_materialized() {
        let backend = registry.get(region.storage_binding())?;
        let read = backend.read_region(id, region.roi()).wait()?;
        template.get_by_id_mut(id).expect("checked above").fill_from(read)?;
    }
    Ok(template.get_by_id(id).expect("checked above"))
}

/// Stage Output and InputOutput regions to their backends and drop
/// input-only regions from the local template. Returns bytes staged.
pub fn worker_finalize(
    stage: &StageInstance,
    template: &mut RegionTemplate,
    registry: &StorageRegistry,
    origin: usize,
) -> Result<u64, RuntimeError> {
    let mut pending = Vec::new();
    for d in stage.outputs() {
        let region = template
            .get_by_id(&d.id)
            .ok_or_else(|| RuntimeError::Config(format!("output {} missing from the local template", d.id)))?;
        let backend = registry.get(&d.binding).map_err(|e| failed(stage, e))?;
        pending.push(backend.stage_region(region, origin));
    }
    let mut bytes = 0;
    for c in pending {
        bytes += c.wait().map_err(|e| failed(stage, e))?;
    }
    for d in stage.regions.iter().filter(|d| d.io_mode == IoMode::Input) {
        template.remove(&d.id);
    }
    Ok(bytes)
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::region::{BoundingBox, ElementKind, RegionKind};
    use crate::storage::{DmsConfig, DmsStore, StorageBackend};

    fn registry() -> (StorageRegistry, Arc<DmsStore>) {
        let mut reg = StorageRegistry::new();
        let domain: BoundingBox = "<0,0;15,15>".parse().unwrap();
        let cfg = DmsConfig::for_domain(&domain, &[4, 4], 2).unwrap();
        let dms = Arc::new(DmsStore::new("DMS", &cfg, reg.sequence().clone()).unwrap());
        reg.register("DMS", dms.clone());
        reg.register("DISK", dms.clone());
        (reg, dms)
    }

    fn rid(key: &str) -> DataRegionId {
        DataRegionId::new("", key, "dense2d", 0, 0)
    }

    fn seed(dms: &DmsStore, key: &str, bbox: &BoundingBox) {
        let r = DataRegion::dense_from(rid(key), RegionKind::Dense2D, ElementKind::U8, bbox.clone(), vec![9; bbox.volume() as usize])
            .unwrap();
        dms.stage_region(&r, 0).wait().unwrap();
    }

    #[test]
    fn prepare_reads_inputs_and_creates_outputs() {
        let (reg, dms) = registry();
        let tile: BoundingBox = "<0,0;7,7>".parse().unwrap();
        seed(&dms, "RGB", &tile);
        let stage = StageInstance::new(1, "seg")
            .with_region(RegionDescriptor::new(rid("RGB"), tile.clone(), IoMode::Input, "DISK"))
            .with_region(RegionDescriptor::new(rid("Mask"), tile.clone(), IoMode::Output, "DMS"));
        let t = worker_prepare(&stage, &reg).unwrap();
        let rgb = t.get_by_id(&rid("RGB")).unwrap();
        assert!(rgb.is_materialized());
        assert_eq!(rgb.dense_payload(&tile).unwrap(), vec![9; 64]);
        let mask = t.get_by_id(&rid("Mask")).unwrap();
        assert_eq!(mask.chunk_count(), 0);
        assert_eq!(mask.io_mode(), IoMode::Output);
    }

    #[test]
    fn lazy_input_read_on_touch() {
        let (reg, dms) = registry();
        let tile: BoundingBox = "<0,0;3,3>".parse().unwrap();
        seed(&dms, "RGB", &tile);
        let stage = StageInstance::new(1, "seg").with_region(RegionDescriptor::new(rid("RGB"), tile.clone(), IoMode::Input, "DMS").lazy());
        let mut t = worker_prepare(&stage, &reg).unwrap();
        assert!(!t.get_by_id(&rid("RGB")).unwrap().is_materialized());
        let r = touch_region(&mut t, &rid("RGB"), &reg).unwrap();
        assert!(r.is_materialized());
        assert_eq!(r.dense_payload(&tile).unwrap(), vec![9; 16]);
    }

    #[test]
    fn missing_input_fails_the_stage() {
        let (reg, _) = registry();
        let stage = StageInstance::new(4, "seg").with_region(RegionDescriptor::new(
            rid("Nope"),
            "<0,0;1,1>".parse().unwrap(),
            IoMode::Input,
            "DMS",
        ));
        match worker_prepare(&stage, &reg) {
            Err(RuntimeError::StageFailed { stage: 4, cause: StorageError::NotFound(_) }) => {}
            other => panic!("{:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn finalize_stages_outputs_and_drops_inputs() {
        let (reg, dms) = registry();
        let tile: BoundingBox = "<0,0;3,3>".parse().unwrap();
        seed(&dms, "RGB", &tile);
        let stage = StageInstance::new(1, "seg")
            .with_region(RegionDescriptor::new(rid("RGB"), tile.clone(), IoMode::InputOutput, "DMS"))
            .with_region(RegionDescriptor::new(rid("Other"), tile.clone(), IoMode::Input, "DMS"))
            .with_region(RegionDescriptor::new(rid("Mask"), tile.clone(), IoMode::Output, "DMS"));
        seed(&dms, "Other", &tile);
        let mut t = worker_prepare(&stage, &reg).unwrap();
        let mask = t.get_by_id_mut(&rid("Mask")).unwrap();
        mask.insert_chunk(tile.clone(), vec![1; 16]).unwrap();
        let before = dms.stats().staged_bytes;
        assert_eq!(worker_finalize(&stage, &mut t, &reg, 1).unwrap(), 32);
        assert_eq!(dms.stats().staged_bytes - before, 32);
        assert!(t.get_by_id(&rid("Other")).is_none());
        assert!(t.get_by_id(&rid("RGB")).is_some());
        let back = dms.read_region(&rid("Mask"), &tile).wait().unwrap();
        assert_eq!(back.dense_payload(&tile).unwrap(), vec![1; 16]);
    }
}
