//! In-memory dataset and session store with LRU eviction.
//!
//! An evicted session is parked as its export and replayed from the dataset
//! bytes on next access. Parking keeps the committed actions only; the redo
//! stack of an evicted session is dropped.

use std::collections::HashMap;
use std::sync::Arc;

use parking_lot::Mutex;
use serde::Serialize;

use crate::error::Result;
use crate::session::{Extensions, Session, SessionExport};
use crate::table::{ColumnKind, CsvOptions};

pub const DEFAULT_SESSION_CAP: usize = 32;

#[derive(Debug, Clone, Serialize)]
pub struct ColumnSchema {
    pub name: String,
    pub kind: ColumnKind,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub name: String,
    pub bytes: Arc<[u8]>,
    pub csv_options: CsvOptions,
    pub schema: Vec<ColumnSchema>,
    pub row_count: usize,
}

pub type SessionHandle = Arc<Mutex<Session>>;

struct Live {
    session: SessionHandle,
    dataset: String,
    last_used: u64,
}

struct Parked {
    export: SessionExport,
    dataset: String,
}

#[derive(Default)]
struct Inner {
    datasets: HashMap<String, Arc<Dataset>>,
    live: HashMap<String, Live>,
    parked: HashMap<String, Parked>,
    tick: u64,
}

pub struct Store {
    inner: Mutex<Inner>,
    cap: usize,
    extensions: Extensions,
}

impl Store {
    pub fn new(cap: usize, extensions: Extensions) -> Self {
        Store {
            inner: Mutex::new(Inner::default()),
            cap: cap.max(1),
            extensions,
        }
    }

    pub fn extensions(&self) -> &Extensions {
        &self.extensions
    }

    pub fn add_dataset(&self, dataset: Dataset) -> String {
        let id = uuid::Uuid::new_v4().to_string();
        self.inner.lock().datasets.insert(id.clone(), Arc::new(dataset));
        id
    }

    pub fn dataset(&self, id: &str) -> Option<Arc<Dataset>> {
        self.inner.lock().datasets.get(id).cloned()
    }

    pub fn add_session(&self, dataset: &str, session: Session) -> (String, SessionHandle) {
        let id = session.id().to_string();
        let handle = Arc::new(Mutex::new(session));
        let mut inner = self.inner.lock();
        inner.tick += 1;
        let tick = inner.tick;
        inner.live.insert(
            id.clone(),
            Live {
                session: handle.clone(),
                dataset: dataset.to_string(),
                last_used: tick,
            },
        );
        self.evict(&mut inner);
        (id, handle)
    }

    pub fn session(&self, id: &str) -> Result<Option<SessionHandle>> {
        let mut inner = self.inner.lock();
        inner.tick += 1;
        let tick = inner.tick;
        if let Some(live) = inner.live.get_mut(id) {
            live.last_used = tick;
            return Ok(Some(live.session.clone()));
        }
        let Some(parked) = inner.parked.get(id) else {
            return Ok(None);
        };
        let Some(dataset) = inner.datasets.get(&parked.dataset).cloned() else {
            return Ok(None);
        };
        let session = Session::replay(&dataset.bytes, &parked.export, self.extensions.clone())?;
        let parked = inner.parked.remove(id).expect("checked above");
        let handle = Arc::new(Mutex::new(session));
        inner.live.insert(
            id.to_string(),
            Live {
                session: handle.clone(),
                dataset: parked.dataset,
                last_used: tick,
            },
        );
        self.evict(&mut inner);
        Ok(Some(handle))
    }

    pub fn live_count(&self) -> usize {
        self.inner.lock().live.len()
    }

    pub fn parked_count(&self) -> usize {
        self.inner.lock().parked.len()
    }

    /// Parks least recently used sessions until under the cap. Sessions
    /// currently held by a request are skipped.
    fn evict(&self, inner: &mut Inner) {
        while inner.live.len() > self.cap {
            let victim = inner
                .live
                .iter()
                .filter(|(_, l)| Arc::strong_count(&l.session) == 1)
                .min_by_key(|(_, l)| l.last_used)
                .map(|(id, _)| id.clone());
            let Some(id) = victim else { return };
            let live = inner.live.remove(&id).expect("victim is live");
            let export = live.session.lock().export();
            log::debug!("parking session {id}");
            inner.parked.insert(
                id,
                Parked {
                    export,
                    dataset: live.dataset,
                },
            );
        }
    }
}
