//! Streaming filter sessions: each session owns one filter instance and
//! enforces strictly increasing sample times.

use std::collections::HashMap;

use parking_lot::Mutex;
use uuid::Uuid;

use ahrs_core::filters::AttitudeFilter;

pub struct Session {
    pub filter: Box<dyn AttitudeFilter>,
    pub filter_name: &'static str,
    pub steps: u64,
    pub last_t: Option<f64>,
}

#[derive(Default)]
pub struct SessionStore {
    inner: Mutex<HashMap<Uuid, Session>>,
}

impl SessionStore {
    pub fn create(&self, filter: Box<dyn AttitudeFilter>) -> Uuid {
        let id = Uuid::new_v4();
        let session = Session {
            filter_name: filter.kind().name(),
            filter,
            steps: 0,
            last_t: None,
        };
        self.inner.lock().insert(id, session);
        id
    }

    pub fn with_session<T>(&self, id: &Uuid, f: impl FnOnce(&mut Session) -> T) -> Option<T> {
        self.inner.lock().get_mut(id).map(f)
    }

    pub fn remove(&self, id: &Uuid) -> bool {
        self.inner.lock().remove(id).is_some()
    }

    pub fn len(&self) -> usize {
        self.inner.lock().len()
    }

    pub fn is_empty(&self) -> bool {
        self.inner.lock().is_empty()
    }
}
