//! C interface to `region_templates`.
//!
//! Every entry point returns an [`RtStatus`]. On failure the message is kept
//! per thread and can be fetched with [`rt_last_error`] until the next call
//! on that thread. Handles are opaque and must be released with their
//! matching `_free` function. Panics are caught at the boundary and reported
//! as `RT_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use region_templates::config::{ConfigError, LoadedConfig, Overrides};
use region_templates::region::{BoundingBox, DataRegion, DataRegionId, ElementKind, RegionError, RegionKind};
use region_templates::sfc::{sfc_decode, sfc_encode, HilbertParams, SfcError};
use region_templates::sim::{run_sim, RunMetrics, SimError};
use region_templates::storage::{DmsConfig, DmsStore, SequenceCounter, StorageBackend, StorageError};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RtStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidArgument = 2,
    NotFound = 3,
    NotOccupied = 4,
    Io = 5,
    Config = 6,
    Decode = 7,
    BufferTooSmall = 8,
    Panic = 9,
}

struct Error {
    status: RtStatus,
    msg: String,
}

impl Error {
    fn new(status: RtStatus, msg: impl Into<String>) -> Self {
        Self { status, msg: msg.into() }
    }
}

impl From<SfcError> for Error {
    fn from(e: SfcError) -> Self {
        let status = match e {
            SfcError::NotOccupied(_) => RtStatus::NotOccupied,
            SfcError::Range(_) | SfcError::Params(_) => RtStatus::InvalidArgument,
        };
        Self::new(status, e.to_string())
    }
}

impl From<RegionError> for Error {
    fn from(e: RegionError) -> Self {
        Self::new(RtStatus::InvalidArgument, e.to_string())
    }
}

impl From<StorageError> for Error {
    fn from(e: StorageError) -> Self {
        let status = match e {
            StorageError::NotFound(_) => RtStatus::NotFound,
            StorageError::NotOccupied(_) => RtStatus::NotOccupied,
            StorageError::Io(_) => RtStatus::Io,
            StorageError::Decode(_) | StorageError::Protocol(_) => RtStatus::Decode,
            StorageError::Config(_) => RtStatus::Config,
            StorageError::Region(_) => RtStatus::InvalidArgument,
        };
        Self::new(status, e.to_string())
    }
}

impl From<ConfigError> for Error {
    fn from(e: ConfigError) -> Self {
        let status = match e {
            ConfigError::Read { .. } => RtStatus::Io,
            ConfigError::Parse { .. } | ConfigError::Invalid { .. } => RtStatus::Config,
        };
        Self::new(status, e.to_string())
    }
}

impl From<SimError> for Error {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Storage(s) => s.into(),
            SimError::Io(m) => Self::new(RtStatus::Io, m),
            other => Self::new(RtStatus::Config, other.to_string()),
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: &str) {
    // interior NULs would truncate the C string anyway
    let msg = CString::new(msg.replace('\0', " ")).expect("NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

/// Run `f`, record its error or panic, and map it to a status.
fn guard(f: impl FnOnce() -> Result<(), Error>) -> RtStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => RtStatus::Ok,
        Ok(Err(e)) => {
            set_last_error(&e.msg);
            e.status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(&format!("panic: {msg}"));
            RtStatus::Panic
        }
    }
}

fn null(what: &str) -> Error {
    Error::new(RtStatus::NullArgument, format!("{what} is null"))
}

unsafe fn slice<'a, T>(p: *const T, n: usize, what: &str) -> Result<&'a [T], Error> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

unsafe fn slice_mut<'a, T>(p: *mut T, n: usize, what: &str) -> Result<&'a mut [T], Error> {
    if n == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, n))
}

unsafe fn string<'a>(p: *const c_char, what: &str) -> Result<&'a str, Error> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Error::new(RtStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn bbox(dims: usize, lo: *const i64, hi: *const i64) -> Result<BoundingBox, Error> {
    if dims == 0 {
        return Err(Error::new(RtStatus::InvalidArgument, "box needs at least one axis"));
    }
    let lo = slice(lo, dims, "lo")?;
    let hi = slice(hi, dims, "hi")?;
    let b = BoundingBox::new(lo.to_vec(), hi.to_vec())?;
    if b.is_empty() {
        return Err(Error::new(RtStatus::InvalidArgument, format!("box {b} is empty")));
    }
    Ok(b)
}

/// Message of the last failed call on this thread, or NULL. Valid until the
/// next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn rt_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Hilbert index of `coords[0..dims]` on a curve of side `2^order`.
///
/// # Safety
/// `coords` must point to `dims` values and `out` to one writable value.
#[no_mangle]
pub unsafe extern "C" fn rt_sfc_encode(dims: u32, order: u32, coords: *const u64, out: *mut u64) -> RtStatus {
    guard(|| {
        let params = HilbertParams::new(dims, order)?;
        let pt = slice(coords, dims as usize, "coords")?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = sfc_encode(pt, params)?;
        Ok(())
    })
}

/// Inverse of [`rt_sfc_encode`]; writes `dims` coordinates.
///
/// # Safety
/// `coords_out` must point to `dims` writable values.
#[no_mangle]
pub unsafe extern "C" fn rt_sfc_decode(dims: u32, order: u32, index: u64, coords_out: *mut u64) -> RtStatus {
    guard(|| {
        let params = HilbertParams::new(dims, order)?;
        let out = slice_mut(coords_out, dims as usize, "coords_out")?;
        out.copy_from_slice(&sfc_decode(index, params)?);
        Ok(())
    })
}

/// In-memory staging store sharded along a Hilbert curve.
pub struct RtDms {
    store: DmsStore,
}

/// Create a memory store over the box `[lo, hi]` with one curve cell per
/// `cell_extent` block. Only 2 and 3 axes are supported.
///
/// # Safety
/// `lo`, `hi` and `cell_extent` must point to `dims` values; `out` to one
/// writable pointer.
#[no_mangle]
pub unsafe extern "C" fn rt_dms_new(
    dims: usize,
    lo: *const i64,
    hi: *const i64,
    cell_extent: *const i64,
    shards: usize,
    out: *mut *mut RtDms,
) -> RtStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let domain = bbox(dims, lo, hi)?;
        let cells = slice(cell_extent, dims, "cell_extent")?;
        if shards == 0 {
            return Err(Error::new(RtStatus::InvalidArgument, "shard count must be positive"));
        }
        let cfg = DmsConfig::for_domain(&domain, cells, shards)?;
        let store = DmsStore::new("dms", &cfg, SequenceCounter::new())?;
        *out = Box::into_raw(Box::new(RtDms { store }));
        Ok(())
    })
}

/// # Safety
/// `dms` must come from [`rt_dms_new`] and not be used afterwards. NULL is
/// ignored.
#[no_mangle]
pub unsafe extern "C" fn rt_dms_free(dms: *mut RtDms) {
    if !dms.is_null() {
        drop(Box::from_raw(dms));
    }
}

fn region_id(key: &str) -> DataRegionId {
    DataRegionId::new("", key, "f32", 0, 0)
}

fn dense_kind(dims: usize) -> Result<RegionKind, Error> {
    match dims {
        2 => Ok(RegionKind::Dense2D),
        3 => Ok(RegionKind::Dense3D),
        d => Err(Error::new(RtStatus::InvalidArgument, format!("dense regions here have 2 or 3 axes, got {d}"))),
    }
}

/// Stage a dense f32 region named `key` covering `[lo, hi]`. `data` holds
/// `len` values in row-major order and `len` must equal the box volume.
/// `origin` is the shard that keeps the payload.
///
/// # Safety
/// `dms` must be a live handle, `key` a NUL-terminated string, `lo`/`hi`
/// `dims` values each and `data` `len` values.
#[no_mangle]
pub unsafe extern "C" fn rt_dms_stage_f32(
    dms: *const RtDms,
    key: *const c_char,
    dims: usize,
    lo: *const i64,
    hi: *const i64,
    data: *const f32,
    len: usize,
    origin: usize,
) -> RtStatus {
    guard(|| {
        let dms = dms.as_ref().ok_or_else(|| null("dms"))?;
        let key = string(key, "key")?;
        let b = bbox(dims, lo, hi)?;
        let values = slice(data, len, "data")?;
        if len as u64 != b.volume() {
            return Err(Error::new(
                RtStatus::InvalidArgument,
                format!("box {b} holds {} values, got {len}", b.volume()),
            ));
        }
        if origin >= dms.store.shard_count() {
            return Err(Error::new(
                RtStatus::InvalidArgument,
                format!("origin {origin} outside 0..{}", dms.store.shard_count()),
            ));
        }
        let payload: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
        let region = DataRegion::dense_from(region_id(key), dense_kind(dims)?, ElementKind::F32, b, payload)?;
        dms.store.stage_region(&region, origin).wait()?;
        Ok(())
    })
}

/// Read the latest staged values of `key` over `[lo, hi]` into `out`, which
/// must hold at least the box volume.
///
/// # Safety
/// As for [`rt_dms_stage_f32`]; `out` must point to `len` writable values.
#[no_mangle]
pub unsafe extern "C" fn rt_dms_read_f32(
    dms: *const RtDms,
    key: *const c_char,
    dims: usize,
    lo: *const i64,
    hi: *const i64,
    out: *mut f32,
    len: usize,
) -> RtStatus {
    guard(|| {
        let dms = dms.as_ref().ok_or_else(|| null("dms"))?;
        let key = string(key, "key")?;
        let b = bbox(dims, lo, hi)?;
        dense_kind(dims)?;
        let volume = b.volume() as usize;
        if len < volume {
            return Err(Error::new(
                RtStatus::BufferTooSmall,
                format!("box {b} holds {volume} values, buffer has {len}"),
            ));
        }
        let out = slice_mut(out, volume, "out")?;
        let region = dms.store.read_region(&region_id(key), &b).wait()?;
        let chunk = region
            .chunk(&b)
            .ok_or_else(|| Error::new(RtStatus::Decode, format!("read of {b} returned no chunk for the box")))?;
        for (dst, src) in out.iter_mut().zip(chunk.payload.chunks_exact(4)) {
            *dst = f32::from_le_bytes(src.try_into().expect("4-byte chunks"));
        }
        Ok(())
    })
}

/// Drop every staged version of `key`. Deleting an absent key succeeds.
///
/// # Safety
/// `dms` must be a live handle and `key` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn rt_dms_delete(dms: *const RtDms, key: *const c_char) -> RtStatus {
    guard(|| {
        let dms = dms.as_ref().ok_or_else(|| null("dms"))?;
        let key = string(key, "key")?;
        dms.store.delete_region(&region_id(key)).wait()?;
        Ok(())
    })
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RtMetrics {
    pub makespan: f64,
    pub cpu_busy: f64,
    pub gpu_busy: f64,
    pub cpu_slots: usize,
    pub gpu_slots: usize,
    pub stages: usize,
    pub tasks: usize,
    pub gpu_tasks: usize,
    pub transfer_bytes: u64,
    pub staged_bytes: u64,
    pub read_bytes: u64,
    pub sessions: u64,
    pub flushed_buffers: u64,
}

impl From<&RunMetrics> for RtMetrics {
    fn from(m: &RunMetrics) -> Self {
        Self {
            makespan: m.makespan,
            cpu_busy: m.cpu_busy,
            gpu_busy: m.gpu_busy,
            cpu_slots: m.cpu_slots,
            gpu_slots: m.gpu_slots,
            stages: m.stages,
            tasks: m.tasks,
            gpu_tasks: m.gpu_tasks,
            transfer_bytes: m.transfer_bytes,
            staged_bytes: m.staged_bytes,
            read_bytes: m.read_bytes,
            sessions: m.sessions,
            flushed_buffers: m.flushed_buffers,
        }
    }
}

/// Outcome of one simulated run.
pub struct RtSimResult {
    metrics: RtMetrics,
    trace: CString,
}

/// Simulate the run described by the TOML config at `config_path`, the same
/// file `rtsim run` takes. Nothing is written to the output directory.
///
/// # Safety
/// `config_path` must be a NUL-terminated string and `out` point to one
/// writable pointer.
#[no_mangle]
pub unsafe extern "C" fn rt_sim_run(config_path: *const c_char, out: *mut *mut RtSimResult) -> RtStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let path = string(config_path, "config_path")?;
        let cfg = LoadedConfig::load(Path::new(path), &Overrides::default())?;
        let workload = cfg.workload(cfg.config.error_pct)?;
        let r = run_sim(&workload, &cfg.nodes, &cfg.options())?;
        let trace = CString::new(r.trace.render())
            .map_err(|_| Error::new(RtStatus::Decode, "trace contains a NUL byte"))?;
        *out = Box::into_raw(Box::new(RtSimResult {
            metrics: (&r.metrics).into(),
            trace,
        }));
        Ok(())
    })
}

/// # Safety
/// `result` must be a live handle and `out` point to one writable struct.
#[no_mangle]
pub unsafe extern "C" fn rt_sim_metrics(result: *const RtSimResult, out: *mut RtMetrics) -> RtStatus {
    guard(|| {
        let r = result.as_ref().ok_or_else(|| null("result"))?;
        *out.as_mut().ok_or_else(|| null("out"))? = r.metrics;
        Ok(())
    })
}

/// The run's trace as tab-separated text, owned by `result`. NULL if
/// `result` is NULL.
///
/// # Safety
/// `result` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn rt_sim_trace(result: *const RtSimResult) -> *const c_char {
    result.as_ref().map_or(ptr::null(), |r| r.trace.as_ptr())
}

/// # Safety
/// `result` must come from [`rt_sim_run`] and not be used afterwards. NULL
/// is ignored.
#[no_mangle]
pub unsafe extern "C" fn rt_sim_free(result: *mut RtSimResult) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}
