//! Wire format for remote storage access.
//!
//! Every message is a frame `u32:len u8:type body`, where `len` counts the
//! type byte and the body. Integers are little-endian.
//!
//! | type | name     | body                                   |
//! |------|----------|----------------------------------------|
//! | 1    | STAGE    | u64:origin region                      |
//! | 2    | READ     | id bbox                                |
//! | 3    | DELETE   | id                                     |
//! | 4    | META_PUT | u32:shard meta                         |
//! | 5    | ACK      | u64:value                              |
//! | 6    | DATA     | region                                 |
//! | 7    | ERR      | u8:code str:message                    |
//!
//! `region` uses the template pack encoding of a single region with payload,
//! `id` is `str str str i64 i64`, and `meta` is
//! `id bbox u64:seq u64:owner u32:n (u64 u64)*n`.

use std::io::{Read, Write};

use super::{MetaEntry, StorageError};
use crate::codec::{Reader, Writer};
use crate::region::pack::{pack_region, unpack_region};
use crate::region::{BoundingBox, DataRegion, DataRegionId};
use crate::sfc::SfcInterval;

/// Largest frame accepted, to bound allocation on corrupt input.
pub const MAX_FRAME: u32 = 1 << 30;

pub const STAGE: u8 = 1;
pub const READ: u8 = 2;
pub const DELETE: u8 = 3;
pub const META_PUT: u8 = 4;
pub const ACK: u8 = 5;
pub const DATA: u8 = 6;
pub const ERR: u8 = 7;

#[derive(Clone, Debug, PartialEq)]
pub enum Message {
    Stage { origin: u64, region: DataRegion },
    Read { id: DataRegionId, query: BoundingBox },
    Delete { id: DataRegionId },
    MetaPut { shard: u32, entry: MetaEntry },
    Ack(u64),
    Data(DataRegion),
    Err(StorageError),
}

fn error_code(e: &StorageError) -> (u8, String) {
    match e {
        StorageError::NotFound(m) => (1, m.clone()),
        StorageError::NotOccupied(h) => (2, h.to_string()),
        StorageError::Io(m) => (3, m.clone()),
        StorageError::Decode(m) => (4, m.clone()),
        StorageError::Config(m) => (5, m.clone()),
        StorageError::Region(r) => (6, r.to_string()),
        StorageError::Protocol(m) => (7, m.clone()),
    }
}

fn error_from_code(code: u8, msg: String) -> Result<StorageError, String> {
    Ok(match code {
        1 => StorageError::NotFound(msg),
        2 => StorageError::NotOccupied(msg.parse().map_err(|_| "bad curve index in error frame")?),
        3 => StorageError::Io(msg),
        4 => StorageError::Decode(msg),
        5 => StorageError::Config(msg),
        // region errors lose their structure on the wire
        6 => StorageError::Protocol(format!("remote region error: {msg}")),
        7 => StorageError::Protocol(msg),
        c => return Err(format!("unknown error code {c}")),
    })
}

fn write_id(w: &mut Writer, id: &DataRegionId) {
    w.str(&id.namespace);
    w.str(&id.key);
    w.str(&id.type_tag);
    w.i64(id.timestamp);
    w.i64(id.version);
}

fn read_id(r: &mut Reader<'_>) -> Result<DataRegionId, String> {
    Ok(DataRegionId {
        namespace: r.str()?,
        key: r.str()?,
        type_tag: r.str()?,
        timestamp: r.i64()?,
        version: r.i64()?,
    })
}

impl Message {
    pub fn type_code(&self) -> u8 {
        match self {
            Self::Stage { .. } => STAGE,
            Self::Read { .. } => READ,
            Self::Delete { .. } => DELETE,
            Self::MetaPut { .. } => META_PUT,
            Self::Ack(_) => ACK,
            Self::Data(_) => DATA,
            Self::Err(_) => ERR,
        }
    }

    /// Full frame including the length prefix.
    pub fn encode(&self) -> Vec<u8> {
        let mut body = Writer::new();
        body.u8(self.type_code());
        match self {
            Self::Stage { origin, region } => {
                body.u64(*origin);
                pack_region(&mut body, region, true);
            }
            Self::Read { id, query } => {
                write_id(&mut body, id);
                body.bbox(query);
            }
            Self::Delete { id } => write_id(&mut body, id),
            Self::MetaPut { shard, entry } => {
                body.u32(*shard);
                write_id(&mut body, &entry.id);
                body.bbox(&entry.bbox);
                body.u64(entry.seq);
                body.u64(entry.owner as u64);
                body.u32(entry.intervals.len() as u32);
                for iv in &entry.intervals {
                    body.u64(iv.start);
                    body.u64(iv.end);
                }
            }
            Self::Ack(v) => body.u64(*v),
            Self::Data(region) => pack_region(&mut body, region, true),
            Self::Err(e) => {
                let (code, msg) = error_code(e);
                body.u8(code);
                body.str(&msg);
            }
        }
        let body = body.into_inner();
        let mut w = Writer::new();
        w.u32(body.len() as u32);
        w.bytes(&body);
        w.into_inner()
    }

    /// Decode a frame body (type byte onwards).
    pub fn decode(body: &[u8]) -> Result<Self, StorageError> {
        Self::decode_inner(body).map_err(StorageError::Protocol)
    }

    fn decode_inner(body: &[u8]) -> Result<Self, String> {
        let mut r = Reader::new(body);
        let msg = match r.u8()? {
            STAGE => Self::Stage {
                origin: r.u64()?,
                region: unpack_region(&mut r, true)?,
            },
            READ => Self::Read {
                id: read_id(&mut r)?,
                query: r.bbox()?,
            },
            DELETE => Self::Delete { id: read_id(&mut r)? },
            META_PUT => {
                let shard = r.u32()?;
                let id = read_id(&mut r)?;
                let bbox = r.bbox()?;
                let seq = r.u64()?;
                let owner = r.u64()? as usize;
                let n = r.u32()?;
                let mut intervals = Vec::new();
                for _ in 0..n {
                    let (start, end) = (r.u64()?, r.u64()?);
                    if start > end {
                        return Err("inverted interval".into());
                    }
                    intervals.push(SfcInterval { start, end });
                }
                Self::MetaPut {
                    shard,
                    entry: MetaEntry {
                        id,
                        bbox,
                        seq,
                        owner,
                        intervals,
                    },
                }
            }
            ACK => Self::Ack(r.u64()?),
            DATA => Self::Data(unpack_region(&mut r, true)?),
            ERR => {
                let code = r.u8()?;
                Self::Err(error_from_code(code, r.str()?)?)
            }
            t => return Err(format!("unknown message type {t}")),
        };
        r.expect_end()?;
        Ok(msg)
    }
}

pub fn write_message(w: &mut impl Write, msg: &Message) -> Result<(), StorageError> {
    w.write_all(&msg.encode())?;
    w.flush()?;
    Ok(())
}

/// Read one frame. `Ok(None)` on a clean end of stream.
pub fn read_message(r: &mut impl Read) -> Result<Option<Message>, StorageError> {
    let mut len = [0u8; 4];
    // end of stream is clean only before the first byte of a frame
    loop {
        match r.read(&mut len[..1]) {
            Ok(0) => return Ok(None),
            Ok(_) => break,
            Err(e) if e.kind() == std::io::ErrorKind::Interrupted => continue,
            Err(e) => return Err(e.into()),
        }
    }
    r.read_exact(&mut len[1..])
        .map_err(|e| StorageError::Protocol(format!("truncated frame length: {e}")))?;
    let len = u32::from_le_bytes(len);
    if len == 0 || len > MAX_FRAME {
        return Err(StorageError::Protocol(format!("bad frame length {len}")));
    }
    let mut body = vec![0u8; len as usize];
    r.read_exact(&mut body)
        .map_err(|e| StorageError::Protocol(format!("truncated frame: {e}")))?;
    Message::decode(&body).map(Some)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::region::{ElementKind, RegionKind};

    fn id() -> DataRegionId {
        DataRegionId::new("ns", "mask", "dense2d", 3, 1)
    }

    #[test]
    fn roundtrip_all_types() {
        let bbox: BoundingBox = "<0,0;1,2>".parse().unwrap();
        let region = DataRegion::dense_from(id(), RegionKind::Dense2D, ElementKind::U8, bbox.clone(), (0..6).collect()).unwrap();
        let msgs = vec![
            Message::Stage { origin: 4, region: region.clone() },
            Message::Read { id: id(), query: bbox.clone() },
            Message::Delete { id: id() },
            Message::MetaPut {
                shard: 2,
                entry: MetaEntry {
                    id: id(),
                    bbox: bbox.clone(),
                    seq: 11,
                    owner: 1,
                    intervals: vec![SfcInterval::new(0, 3), SfcInterval::new(8, 9)],
                },
            },
            Message::Ack(77),
            Message::Data(region),
            Message::Err(StorageError::NotFound("x".into())),
            Message::Err(StorageError::NotOccupied(42)),
        ];
        for m in msgs {
            let frame = m.encode();
            let back = read_message(&mut frame.as_slice()).unwrap().unwrap();
            assert_eq!(back, m);
        }
    }

    #[test]
    fn golden_ack_and_delete() {
        assert_eq!(Message::Ack(1).encode(), vec![9, 0, 0, 0, ACK, 1, 0, 0, 0, 0, 0, 0, 0]);
        let frame = Message::Delete {
            id: DataRegionId::new("", "k", "t", 0, 0),
        }
        .encode();
        let mut expected = vec![];
        expected.extend_from_slice(&31u32.to_le_bytes());
        expected.push(DELETE);
        expected.extend_from_slice(&[0, 0, 0, 0]);
        expected.extend_from_slice(&[1, 0, 0, 0, b'k']);
        expected.extend_from_slice(&[1, 0, 0, 0, b't']);
        expected.extend_from_slice(&[0; 16]);
        assert_eq!(frame, expected);
    }

    #[test]
    fn malformed_frames_rejected() {
        assert_eq!(read_message(&mut [].as_slice()).unwrap(), None);
        assert!(matches!(read_message(&mut [0, 0, 0, 0].as_slice()), Err(StorageError::Protocol(_))));
        assert!(matches!(read_message(&mut [5, 0, 0, 0, 5].as_slice()), Err(StorageError::Protocol(_))));
        assert!(matches!(read_message(&mut [1, 0, 0, 0, 99].as_slice()), Err(StorageError::Protocol(_))));
        // trailing bytes after a complete body
        assert!(matches!(
            read_message(&mut [10, 0, 0, 0, ACK, 1, 0, 0, 0, 0, 0, 0, 0, 0].as_slice()),
            Err(StorageError::Protocol(_))
        ));
    }
}
