use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{BoundingBox, RegionError};

/// Tuple identifier of a data region.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DataRegionId {
    pub namespace: String,
    pub key: String,
    pub type_tag: String,
    pub timestamp: i64,
    pub version: i64,
}

impl DataRegionId {
    pub fn new(
        namespace: impl Into<String>,
        key: impl Into<String>,
        type_tag: impl Into<String>,
        timestamp: i64,
        version: i64,
    ) -> Self {
        Self {
            namespace: namespace.into(),
            key: key.into(),
            type_tag: type_tag.into(),
            timestamp,
            version,
        }
    }

    /// The logical name `namespace::key`, or just `key` without a namespace.
    pub fn name(&self) -> String {
        if self.namespace.is_empty() {
            self.key.clone()
        } else {
            format!("{}::{}", self.namespace, self.key)
        }
    }

    pub fn with_version(&self, version: i64) -> Self {
        Self {
            version,
            ..self.clone()
        }
    }
}

impl fmt::Display for DataRegionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "({}, {}, {}, {})",
            self.name(),
            self.type_tag,
            self.timestamp,
            self.version
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegionKind {
    Dense1D,
    Dense2D,
    Dense3D,
    Sparse,
    Polygon,
}

impl RegionKind {
    pub fn is_dense(self) -> bool {
        matches!(self, Self::Dense1D | Self::Dense2D | Self::Dense3D)
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            Self::Dense1D => 1,
            Self::Dense2D => 2,
            Self::Dense3D => 3,
            Self::Sparse => 4,
            Self::Polygon => 5,
        }
    }

    pub(crate) fn from_code(c: u8) -> Option<Self> {
        Some(match c {
            1 => Self::Dense1D,
            2 => Self::Dense2D,
            3 => Self::Dense3D,
            4 => Self::Sparse,
            5 => Self::Polygon,
            _ => return None,
        })
    }

    /// Spatial axes a dense region of this kind spans, excluding time.
    fn dense_axes(self) -> Option<usize> {
        match self {
            Self::Dense1D => Some(1),
            Self::Dense2D => Some(2),
            Self::Dense3D => Some(3),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ElementKind {
    U8,
    U16,
    I32,
    F32,
    F64,
}

impl ElementKind {
    pub fn size(self) -> usize {
        match self {
            Self::U8 => 1,
            Self::U16 => 2,
            Self::I32 | Self::F32 => 4,
            Self::F64 => 8,
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            Self::U8 => 1,
            Self::U16 => 2,
            Self::I32 => 3,
            Self::F32 => 4,
            Self::F64 => 5,
        }
    }

    pub(crate) fn from_code(c: u8) -> Option<Self> {
        Some(match c {
            1 => Self::U8,
            2 => Self::U16,
            3 => Self::I32,
            4 => Self::F32,
            5 => Self::F64,
            _ => return None,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IoMode {
    Input,
    Output,
    InputOutput,
}

impl IoMode {
    pub fn reads(self) -> bool {
        matches!(self, Self::Input | Self::InputOutput)
    }

    pub fn writes(self) -> bool {
        matches!(self, Self::Output | Self::InputOutput)
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            Self::Input => 1,
            Self::Output => 2,
            Self::InputOutput => 3,
        }
    }

    pub(crate) fn from_code(c: u8) -> Option<Self> {
        Some(match c {
            1 => Self::Input,
            2 => Self::Output,
            3 => Self::InputOutput,
            _ => return None,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub chunk_id: u64,
    pub bbox: BoundingBox,
    pub payload: Vec<u8>,
    pub element_kind: ElementKind,
}

impl Chunk {
    /// Encode polygon vertices as a vertex count followed by interleaved
    /// coordinates.
    pub fn encode_polygon(vertices: &[Vec<i64>]) -> Vec<u8> {
        let mut out = Vec::with_capacity(4 + vertices.iter().map(|v| v.len() * 8).sum::<usize>());
        out.extend_from_slice(&(vertices.len() as u32).to_le_bytes());
        for v in vertices {
            for c in v {
                out.extend_from_slice(&c.to_le_bytes());
            }
        }
        out
    }

    pub fn decode_polygon(payload: &[u8], dims: usize) -> Result<Vec<Vec<i64>>, RegionError> {
        let bad = |m: &str| RegionError::Decode(format!("polygon payload: {m}"));
        let count = u32::from_le_bytes(
            payload
                .get(..4)
                .ok_or_else(|| bad("missing vertex count"))?
                .try_into()
                .expect("4 bytes"),
        ) as usize;
        let body = &payload[4..];
        if body.len() != count * dims * 8 {
            return Err(bad("length does not match vertex count"));
        }
        Ok(body
            .chunks_exact(dims * 8)
            .map(|v| {
                v.chunks_exact(8)
                    .map(|c| i64::from_le_bytes(c.try_into().expect("8 bytes")))
                    .collect()
            })
            .collect())
    }
}

/// A storage materialization of one data product, chunked over its box.
///
/// The box is fixed at construction; chunks must stay inside it. A region
/// that is not materialized carries metadata only and has no chunks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataRegion {
    id: DataRegionId,
    kind: RegionKind,
    element_kind: ElementKind,
    bbox: BoundingBox,
    roi: BoundingBox,
    io_mode: IoMode,
    storage_binding: String,
    lazy: bool,
    chunks: BTreeMap<BoundingBox, Chunk>,
    materialized: bool,
    next_chunk_id: u64,
}

impl DataRegion {
    pub fn new(
        id: DataRegionId,
        kind: RegionKind,
        element_kind: ElementKind,
        bbox: BoundingBox,
    ) -> Result<Self, RegionError> {
        if bbox.is_empty() {
            return Err(RegionError::InvalidBox("a data region needs a non-empty box".into()));
        }
        if let Some(axes) = kind.dense_axes() {
            // one optional trailing time axis
            if bbox.dims() != axes && bbox.dims() != axes + 1 {
                return Err(RegionError::Dimension {
                    expected: axes,
                    found: bbox.dims(),
                });
            }
        }
        Ok(Self {
            id,
            kind,
            element_kind,
            roi: bbox.clone(),
            bbox,
            io_mode: IoMode::Input,
            storage_binding: String::new(),
            lazy: false,
            chunks: BTreeMap::new(),
            materialized: false,
            next_chunk_id: 0,
        })
    }

    pub fn with_io_mode(mut self, mode: IoMode) -> Self {
        self.io_mode = mode;
        self
    }

    pub fn with_binding(mut self, binding: impl Into<String>) -> Self {
        self.storage_binding = binding.into();
        self
    }

    pub fn with_lazy(mut self, lazy: bool) -> Self {
        self.lazy = lazy;
        self
    }

    /// A dense region filled from one row-major buffer covering its box.
    pub fn dense_from(
        id: DataRegionId,
        kind: RegionKind,
        element_kind: ElementKind,
        bbox: BoundingBox,
        payload: Vec<u8>,
    ) -> Result<Self, RegionError> {
        let mut r = Self::new(id, kind, element_kind, bbox.clone())?;
        r.insert_chunk(bbox, payload)?;
        Ok(r)
    }

    pub fn id(&self) -> &DataRegionId {
        &self.id
    }

    pub fn name(&self) -> String {
        self.id.name()
    }

    pub fn kind(&self) -> RegionKind {
        self.kind
    }

    pub fn element_kind(&self) -> ElementKind {
        self.element_kind
    }

    pub fn bbox(&self) -> &BoundingBox {
        &self.bbox
    }

    pub fn roi(&self) -> &BoundingBox {
        &self.roi
    }

    pub fn io_mode(&self) -> IoMode {
        self.io_mode
    }

    pub fn storage_binding(&self) -> &str {
        &self.storage_binding
    }

    pub fn is_lazy(&self) -> bool {
        self.lazy
    }

    pub fn is_materialized(&self) -> bool {
        self.materialized
    }

    pub fn chunks(&self) -> impl Iterator<Item = &Chunk> {
        self.chunks.values()
    }

    pub fn chunk_count(&self) -> usize {
        self.chunks.len()
    }

    pub fn chunk(&self, bbox: &BoundingBox) -> Option<&Chunk> {
        self.chunks.get(bbox)
    }

    pub fn next_chunk_id(&self) -> u64 {
        self.next_chunk_id
    }

    pub fn payload_bytes(&self) -> u64 {
        self.chunks.values().map(|c| c.payload.len() as u64).sum()
    }

    /// Bytes a dense copy of the whole region would occupy.
    pub fn nominal_bytes(&self) -> u64 {
        self.bbox.volume() * self.element_kind.size() as u64
    }

    pub fn set_roi(&mut self, roi: BoundingBox) -> Result<(), RegionError> {
        if !self.bbox.contains(&roi) {
            return Err(RegionError::InvalidBox(format!(
                "roi {roi} is not inside {}",
                self.bbox
            )));
        }
        self.roi = roi;
        Ok(())
    }

    /// Contract the ROI by `ghost` cells on every face, leaving the box alone.
    pub fn shrink_roi(&self, ghost: &[i64]) -> Result<Self, RegionError> {
        if ghost.len() != self.roi.dims() {
            return Err(RegionError::Dimension {
                expected: self.roi.dims(),
                found: ghost.len(),
            });
        }
        let roi = self.roi.shrink(ghost).ok_or_else(|| RegionError::EmptyRoi {
            roi: self.roi.clone(),
            ghost: ghost.to_vec(),
        })?;
        Ok(Self {
            roi,
            ..self.clone()
        })
    }

    /// Add or replace the chunk at `bbox`; assigns the next sequential id.
    pub fn insert_chunk(&mut self, bbox: BoundingBox, payload: Vec<u8>) -> Result<u64, RegionError> {
        if !self.bbox.contains(&bbox) {
            return Err(RegionError::ChunkOutsideRegion {
                chunk: bbox,
                region: self.bbox.clone(),
            });
        }
        match self.kind {
            k if k.is_dense() => {
                let expected = bbox.volume() as usize * self.element_kind.size();
                if payload.len() != expected {
                    return Err(RegionError::PayloadSize {
                        expected,
                        found: payload.len(),
                    });
                }
            }
            RegionKind::Polygon => {
                Chunk::decode_polygon(&payload, self.bbox.dims())?;
            }
            _ => {}
        }
        let chunk_id = self.next_chunk_id;
        self.next_chunk_id += 1;
        self.chunks.insert(
            bbox.clone(),
            Chunk {
                chunk_id,
                bbox,
                payload,
                element_kind: self.element_kind,
            },
        );
        self.materialized = true;
        Ok(chunk_id)
    }

    /// Drop all chunks and fall back to the metadata-only state.
    pub fn dematerialize(&mut self) {
        self.chunks.clear();
        self.materialized = false;
    }

    /// Copy without chunks, as shipped in metadata-only mode.
    pub fn metadata_only(&self) -> Self {
        Self {
            chunks: BTreeMap::new(),
            materialized: false,
            next_chunk_id: 0,
            ..self.clone()
        }
    }

    /// Mark an empty region as materialized (a freshly created output).
    pub fn mark_materialized(&mut self) {
        self.materialized = true;
    }

    /// Replace chunk contents with those of `other`, which must describe the
    /// same region (used when a lazy region is read on first touch).
    pub fn fill_from(&mut self, other: DataRegion) -> Result<(), RegionError> {
        for chunk in other.chunks.into_values() {
            self.insert_chunk(chunk.bbox, chunk.payload)?;
        }
        self.materialized = true;
        Ok(())
    }

    /// Dense row-major payload covering `query`, assembled from the chunks.
    /// Cells not covered by any chunk are zero.
    pub fn dense_payload(&self, query: &BoundingBox) -> Result<Vec<u8>, RegionError> {
        if !self.kind.is_dense() {
            return Err(RegionError::InvalidBox(format!(
                "{:?} regions have no dense layout",
                self.kind
            )));
        }
        let elem = self.element_kind.size();
        let mut out = vec![0u8; query.volume() as usize * elem];
        for chunk in self.chunks.values() {
            if let Some(overlap) = chunk.bbox.intersect(query)? {
                super::copy_dense(&chunk.bbox, &chunk.payload, query, &mut out, &overlap, elem);
            }
        }
        Ok(out)
    }

    pub(crate) fn from_parts(parts: DataRegionParts) -> Result<Self, RegionError> {
        let mut r = Self::new(parts.id, parts.kind, parts.element_kind, parts.bbox)?;
        r.io_mode = parts.io_mode;
        r.storage_binding = parts.storage_binding;
        r.lazy = parts.lazy;
        r.set_roi(parts.roi)?;
        for (bbox, id, payload) in parts.chunks {
            r.insert_chunk(bbox.clone(), payload)?;
            if let Some(c) = r.chunks.get_mut(&bbox) {
                c.chunk_id = id;
            }
        }
        r.materialized = parts.materialized;
        r.next_chunk_id = parts.next_chunk_id;
        if !r.materialized && !r.chunks.is_empty() {
            return Err(RegionError::Decode("chunks present on a metadata-only region".into()));
        }
        Ok(r)
    }
}

pub(crate) struct DataRegionParts {
    pub id: DataRegionId,
    pub kind: RegionKind,
    pub element_kind: ElementKind,
    pub bbox: BoundingBox,
    pub roi: BoundingBox,
    pub io_mode: IoMode,
    pub storage_binding: String,
    pub lazy: bool,
    pub chunks: Vec<(BoundingBox, u64, Vec<u8>)>,
    pub materialized: bool,
    pub next_chunk_id: u64,
}
