use super::{BoundingBox, RegionError};

/// Tile `bbox` with boxes of `tile` extent per axis, row-major (last axis
/// fastest). Edge tiles are clipped.
pub fn partition_regular(bbox: &BoundingBox, tile: &[i64]) -> Result<Vec<BoundingBox>, RegionError> {
    if tile.len() != bbox.dims() {
        return Err(RegionError::Dimension {
            expected: bbox.dims(),
            found: tile.len(),
        });
    }
    if let Some(t) = tile.iter().find(|&&t| t <= 0) {
        return Err(RegionError::Partition(format!("tile extent must be positive, got {t}")));
    }
    let counts: Vec<i64> = (0..bbox.dims())
        .map(|a| (bbox.extent(a) as i64 + tile[a] - 1) / tile[a])
        .collect();
    let grid = BoundingBox::new(vec![0; counts.len()], counts.iter().map(|c| c - 1).collect::<Vec<_>>())?;
    Ok(grid
        .cells()
        .map(|cell| {
            let lo: Vec<i64> = (0..cell.len()).map(|a| bbox.lo()[a] + cell[a] * tile[a]).collect();
            let hi: Vec<i64> = (0..cell.len())
                .map(|a| (lo[a] + tile[a] - 1).min(bbox.hi()[a]))
                .collect();
            BoundingBox::new(lo, hi).expect("tile inside a valid box")
        })
        .collect())
}

/// Validate an application-supplied partition. Boxes may be irregular and
/// may overlap; they only have to stay inside `bbox`.
pub fn partition_custom(bbox: &BoundingBox, boxes: &[BoundingBox]) -> Result<Vec<BoundingBox>, RegionError> {
    for b in boxes {
        if b.dims() != bbox.dims() {
            return Err(RegionError::Dimension {
                expected: bbox.dims(),
                found: b.dims(),
            });
        }
        if !bbox.contains(b) {
            return Err(RegionError::Partition(format!("{b} escapes {bbox}")));
        }
    }
    Ok(boxes.to_vec())
}
