//! Template wire format.
//!
//! All integers little-endian. `str` is a `u32` byte length followed by
//! UTF-8; `bbox` is a `u8` axis count followed by that many `i64` lows and
//! then that many `i64` highs.
//!
//! ```text
//! template := "RTPL" u16:version(=1) u8:flags str:name bbox:bbox u32:count region*
//! region   := str:namespace str:key str:type_tag i64:timestamp i64:version
//!             u8:kind u8:element u8:io_mode str:binding u8:lazy
//!             bbox:bbox bbox:roi u8:materialized
//!             [ u64:next_chunk_id u32:chunks (u64:chunk_id bbox u64:len bytes)* ]
//! ```
//!
//! `flags` bit 0 marks an included payload. The bracketed section is only
//! present when that bit is set and the region is materialized; without a
//! payload every region decodes as metadata-only.

use super::data_region::DataRegionParts;
use super::{DataRegion, DataRegionId, ElementKind, IoMode, RegionError, RegionKind, RegionTemplate};
use crate::codec::{Reader, Writer};

const MAGIC: &[u8; 4] = b"RTPL";
const VERSION: u16 = 1;
const FLAG_PAYLOAD: u8 = 1;

pub fn pack_template(t: &RegionTemplate, include_payload: bool) -> Vec<u8> {
    let mut w = Writer::new();
    w.bytes(MAGIC);
    w.u16(VERSION);
    w.u8(if include_payload { FLAG_PAYLOAD } else { 0 });
    w.str(t.name());
    w.bbox(t.bbox());
    w.u32(t.len() as u32);
    for r in t.regions() {
        pack_region(&mut w, r, include_payload);
    }
    w.into_inner()
}

pub(crate) fn pack_region(w: &mut Writer, r: &DataRegion, include_payload: bool) {
    let id = r.id();
    w.str(&id.namespace);
    w.str(&id.key);
    w.str(&id.type_tag);
    w.i64(id.timestamp);
    w.i64(id.version);
    w.u8(r.kind().code());
    w.u8(r.element_kind().code());
    w.u8(r.io_mode().code());
    w.str(r.storage_binding());
    w.u8(r.is_lazy() as u8);
    w.bbox(r.bbox());
    w.bbox(r.roi());
    let with_chunks = include_payload && r.is_materialized();
    w.u8(with_chunks as u8);
    if with_chunks {
        w.u64(r.next_chunk_id());
        w.u32(r.chunk_count() as u32);
        for c in r.chunks() {
            w.u64(c.chunk_id);
            w.bbox(&c.bbox);
            w.blob(&c.payload);
        }
    }
}

pub fn unpack_template(bytes: &[u8]) -> Result<RegionTemplate, RegionError> {
    unpack_inner(bytes).map_err(RegionError::Decode)
}

fn unpack_inner(bytes: &[u8]) -> Result<RegionTemplate, String> {
    let mut r = Reader::new(bytes);
    if r.take(4)? != MAGIC {
        return Err("bad magic".into());
    }
    let version = r.u16()?;
    if version != VERSION {
        return Err(format!("unsupported pack version {version}"));
    }
    let flags = r.u8()?;
    let with_payload = flags & FLAG_PAYLOAD != 0;
    let name = r.str()?;
    let bbox = r.bbox()?;
    let count = r.u32()?;
    let mut regions = Vec::new();
    for _ in 0..count {
        regions.push(unpack_region(&mut r, with_payload)?);
    }
    r.expect_end()?;
    RegionTemplate::from_parts(name, bbox, regions).map_err(|e| e.to_string())
}

pub(crate) fn unpack_region(r: &mut Reader<'_>, with_payload: bool) -> Result<DataRegion, String> {
    let id = DataRegionId {
        namespace: r.str()?,
        key: r.str()?,
        type_tag: r.str()?,
        timestamp: r.i64()?,
        version: r.i64()?,
    };
    let kind = RegionKind::from_code(r.u8()?).ok_or("unknown region kind")?;
    let element_kind = ElementKind::from_code(r.u8()?).ok_or("unknown element kind")?;
    let io_mode = IoMode::from_code(r.u8()?).ok_or("unknown io mode")?;
    let storage_binding = r.str()?;
    let lazy = r.u8()? != 0;
    let bbox = r.bbox()?;
    let roi = r.bbox()?;
    let materialized = r.u8()? != 0;
    if materialized && !with_payload {
        return Err("materialized region in a metadata-only buffer".into());
    }
    let mut chunks = Vec::new();
    let mut next_chunk_id = 0;
    if materialized {
        next_chunk_id = r.u64()?;
        let n = r.u32()?;
        for _ in 0..n {
            let chunk_id = r.u64()?;
            let cb = r.bbox()?;
            chunks.push((cb, chunk_id, r.blob()?));
        }
    }
    DataRegion::from_parts(DataRegionParts {
        id,
        kind,
        element_kind,
        bbox,
        roi,
        io_mode,
        storage_binding,
        lazy,
        chunks,
        materialized,
        next_chunk_id,
    })
    .map_err(|e| e.to_string())
}
