//! Region templates: spatial-temporal containers of tuple-identified,
//! chunked data regions.

mod bbox;
mod data_region;
pub(crate) mod pack;
mod partition;
mod template;

pub use bbox::{copy_dense, BoundingBox, Cells};
pub use data_region::{Chunk, DataRegion, DataRegionId, ElementKind, IoMode, RegionKind};
pub use pack::{pack_template, unpack_template};
pub use partition::{partition_custom, partition_regular};
pub use template::RegionTemplate;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RegionError {
    #[error("dimension mismatch: expected {expected} axes, found {found}")]
    Dimension { expected: usize, found: usize },
    #[error("invalid bounding box: {0}")]
    InvalidBox(String),
    #[error("duplicate data region {0}")]
    DuplicateRegion(String),
    #[error("partition error: {0}")]
    Partition(String),
    #[error("ghost width {ghost:?} leaves no region of interest inside {roi}")]
    EmptyRoi { roi: BoundingBox, ghost: Vec<i64> },
    #[error("chunk {chunk} lies outside region bounding box {region}")]
    ChunkOutsideRegion { chunk: BoundingBox, region: BoundingBox },
    #[error("payload is {found} bytes, expected {expected}")]
    PayloadSize { expected: usize, found: usize },
    #[error("decode error: {0}")]
    Decode(String),
}
