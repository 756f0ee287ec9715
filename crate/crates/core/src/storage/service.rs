//! Serving a backend over a Unix socket, and the matching client.

use std::os::unix::net::{UnixListener, UnixStream};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;

use super::protocol::{read_message, write_message, Message};
use super::{Completion, DmsStore, MetaEntry, StorageBackend, StorageError};
use crate::region::{BoundingBox, DataRegion, DataRegionId};

/// Accepts connections and answers one reply per request frame.
pub struct StorageServer {
    path: PathBuf,
    stop: Arc<AtomicBool>,
    accept: Option<JoinHandle<()>>,
}

impl StorageServer {
    /// Serve `backend` at `path`. META_PUT frames are only accepted when a
    /// memory store is supplied.
    pub fn bind(
        path: impl AsRef<Path>,
        backend: Arc<dyn StorageBackend>,
        dms: Option<Arc<DmsStore>>,
    ) -> Result<Self, StorageError> {
        let path = path.as_ref().to_path_buf();
        let listener = UnixListener::bind(&path).map_err(|e| StorageError::Io(format!("{}: {e}", path.display())))?;
        let stop = Arc::new(AtomicBool::new(false));
        let stop_flag = stop.clone();
        let accept = std::thread::spawn(move || {
            for conn in listener.incoming() {
                if stop_flag.load(Ordering::SeqCst) {
                    break;
                }
                let Ok(conn) = conn else { continue };
                let backend = backend.clone();
                let dms = dms.clone();
                std::thread::spawn(move || serve_connection(conn, backend.as_ref(), dms.as_deref()));
            }
        });
        Ok(Self {
            path,
            stop,
            accept: Some(accept),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn shutdown(mut self) {
        self.stop_accepting();
    }

    fn stop_accepting(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        // wake the accept loop
        let _ = UnixStream::connect(&self.path);
        if let Some(h) = self.accept.take() {
            let _ = h.join();
        }
        let _ = std::fs::remove_file(&self.path);
    }
}

impl Drop for StorageServer {
    fn drop(&mut self) {
        if self.accept.is_some() {
            self.stop_accepting();
        }
    }
}

fn serve_connection(mut conn: UnixStream, backend: &dyn StorageBackend, dms: Option<&DmsStore>) {
    loop {
        let reply = match read_message(&mut conn) {
            Ok(None) => return,
            Ok(Some(req)) => handle(req, backend, dms),
            Err(e) => {
                let _ = write_message(&mut conn, &Message::Err(e));
                return;
            }
        };
        if write_message(&mut conn, &reply).is_err() {
            return;
        }
    }
}

fn handle(req: Message, backend: &dyn StorageBackend, dms: Option<&DmsStore>) -> Message {
    let result = match req {
        Message::Stage { origin, region } => backend.stage_region(&region, origin as usize).wait().map(Message::Ack),
        Message::Read { id, query } => backend.read_region(&id, &query).wait().map(Message::Data),
        Message::Delete { id } => backend.delete_region(&id).wait().map(|()| Message::Ack(0)),
        Message::MetaPut { shard, entry } => match dms {
            Some(d) => d.install_metadata(shard as usize, entry).map(|()| Message::Ack(0)),
            None => Err(StorageError::Protocol("this server holds no metadata shards".into())),
        },
        other => Err(StorageError::Protocol(format!(
            "unexpected request type {}",
            other.type_code()
        ))),
    };
    result.unwrap_or_else(Message::Err)
}

/// Client side: each request runs on its own connection and thread.
pub struct RemoteBackend {
    name: String,
    path: PathBuf,
}

impl RemoteBackend {
    pub fn new(name: impl Into<String>, path: impl Into<PathBuf>) -> Self {
        Self {
            name: name.into(),
            path: path.into(),
        }
    }

    fn call(path: &Path, req: &Message) -> Result<Message, StorageError> {
        let mut conn = UnixStream::connect(path).map_err(|e| StorageError::Io(format!("{}: {e}", path.display())))?;
        write_message(&mut conn, req)?;
        match read_message(&mut conn)? {
            Some(Message::Err(e)) => Err(e),
            Some(m) => Ok(m),
            None => Err(StorageError::Protocol("connection closed before reply".into())),
        }
    }

    fn spawn<T: Send + 'static>(
        &self,
        req: Message,
        map: impl FnOnce(Message) -> Result<T, StorageError> + Send + 'static,
    ) -> Completion<T> {
        let (completion, done) = Completion::pending();
        let path = self.path.clone();
        std::thread::spawn(move || done.complete(Self::call(&path, &req).and_then(map)));
        completion
    }

    pub fn put_metadata(&self, shard: u32, entry: MetaEntry) -> Completion<()> {
        self.spawn(Message::MetaPut { shard, entry }, expect_ack).map_ok()
    }
}

fn expect_ack(m: Message) -> Result<u64, StorageError> {
    match m {
        Message::Ack(v) => Ok(v),
        other => Err(StorageError::Protocol(format!("expected ACK, got type {}", other.type_code()))),
    }
}

impl Completion<u64> {
    fn map_ok(self) -> Completion<()> {
        Completion::ready(self.wait().map(|_| ()))
    }
}

impl StorageBackend for RemoteBackend {
    fn name(&self) -> &str {
        &self.name
    }

    fn stage_region(&self, region: &DataRegion, origin: usize) -> Completion<u64> {
        self.spawn(
            Message::Stage {
                origin: origin as u64,
                region: region.clone(),
            },
            expect_ack,
        )
    }

    fn read_region(&self, id: &DataRegionId, query: &BoundingBox) -> Completion<DataRegion> {
        self.spawn(
            Message::Read {
                id: id.clone(),
                query: query.clone(),
            },
            |m| match m {
                Message::Data(r) => Ok(r),
                other => Err(StorageError::Protocol(format!("expected DATA, got type {}", other.type_code()))),
            },
        )
    }

    fn delete_region(&self, id: &DataRegionId) -> Completion<()> {
        self.spawn(Message::Delete { id: id.clone() }, |m| expect_ack(m).map(|_| ()))
    }
}
