use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use super::StorageError;

struct Slot<T> {
    value: Mutex<Option<Result<T, StorageError>>>,
    cv: Condvar,
}

/// Handle to the outcome of a storage operation; may be waited on from any
/// thread.
pub struct Completion<T> {
    slot: Arc<Slot<T>>,
}

/// Producer side of a pending [`Completion`].
pub struct Completer<T> {
    slot: Arc<Slot<T>>,
}

impl<T> Completion<T> {
    pub fn ready(result: Result<T, StorageError>) -> Self {
        Self {
            slot: Arc::new(Slot {
                value: Mutex::new(Some(result)),
                cv: Condvar::new(),
            }),
        }
    }

    pub fn pending() -> (Self, Completer<T>) {
        let slot = Arc::new(Slot {
            value: Mutex::new(None),
            cv: Condvar::new(),
        });
        (Self { slot: slot.clone() }, Completer { slot })
    }

    pub fn is_complete(&self) -> bool {
        self.slot.value.lock().expect("completion lock").is_some()
    }

    pub fn wait(self) -> Result<T, StorageError> {
        let mut guard = self.slot.value.lock().expect("completion lock");
        loop {
            if let Some(v) = guard.take() {
                return v;
            }
            guard = self.slot.cv.wait(guard).expect("completion lock");
        }
    }

    /// Wait at most `timeout`; gives the handle back if still pending.
    pub fn wait_timeout(self, timeout: Duration) -> Result<Result<T, StorageError>, Self> {
        let guard = self.slot.value.lock().expect("completion lock");
        let (mut guard, _) = self
            .slot
            .cv
            .wait_timeout_while(guard, timeout, |v| v.is_none())
            .expect("completion lock");
        match guard.take() {
            Some(v) => Ok(v),
            None => {
                drop(guard);
                Err(self)
            }
        }
    }
}

impl<T> Completer<T> {
    pub fn complete(self, result: Result<T, StorageError>) {
        *self.slot.value.lock().expect("completion lock") = Some(result);
        self.slot.cv.notify_all();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn completes_across_threads() {
        let (c, done) = Completion::<u32>::pending();
        assert!(!c.is_complete());
        let t = std::thread::spawn(move || done.complete(Ok(7)));
        assert_eq!(c.wait().unwrap(), 7);
        t.join().unwrap();
    }

    #[test]
    fn timeout_returns_handle() {
        let (c, done) = Completion::<u32>::pending();
        let c = c.wait_timeout(Duration::from_millis(1)).unwrap_err();
        done.complete(Err(StorageError::NotFound("x".into())));
        assert!(c.wait().is_err());
    }
}
