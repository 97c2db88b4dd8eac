//! Per-user live event buffers feeding the SSE stream.

use std::collections::{HashMap, VecDeque};
use std::sync::Mutex;

use pds_core::live::{EventSink, LiveEvent};
use pds_core::UserId;
use tokio::sync::broadcast;

pub const BUFFER_PER_USER: usize = 500;

/// One buffered event. Ids increase by one per user.
#[derive(Debug, Clone, PartialEq)]
pub struct Sequenced {
    pub id: u64,
    pub event: LiveEvent,
}

struct UserStream {
    next_id: u64,
    buffer: VecDeque<Sequenced>,
    tx: broadcast::Sender<Sequenced>,
}

impl UserStream {
    fn new() -> Self {
        Self {
            next_id: 1,
            buffer: VecDeque::new(),
            tx: broadcast::channel(BUFFER_PER_USER).0,
        }
    }
}

/// What a (re)connecting client gets: buffered events after its last id,
/// whether some were already dropped, and a live receiver.
pub struct Subscription {
    pub replay: Vec<Sequenced>,
    /// The last id the client is taken to have seen.
    pub after: u64,
    pub gap: bool,
    pub live: broadcast::Receiver<Sequenced>,
}

#[derive(Default)]
pub struct EventHub {
    users: Mutex<HashMap<UserId, UserStream>>,
}

impl EventHub {
    pub fn subscribe(&self, user: UserId, last_id: Option<u64>) -> Subscription {
        let mut users = self.users.lock().expect("hub lock");
        let stream = users.entry(user).or_insert_with(UserStream::new);
        let requested = last_id.unwrap_or(0);
        // ids from before a restart are ahead of this hub; start over
        let stale = requested >= stream.next_id;
        let after = if stale { 0 } else { requested };
        let oldest = stream.buffer.front().map_or(stream.next_id, |e| e.id);
        Subscription {
            replay: stream
                .buffer
                .iter()
                .filter(|e| e.id > after)
                .cloned()
                .collect(),
            after,
            gap: stale || (last_id.is_some() && after + 1 < oldest),
            // subscribing under the lock: nothing published in between is lost or repeated
            live: stream.tx.subscribe(),
        }
    }

    /// Everything still buffered for `user`.
    pub fn buffered(&self, user: UserId) -> Vec<Sequenced> {
        let users = self.users.lock().expect("hub lock");
        users
            .get(&user)
            .map(|s| s.buffer.iter().cloned().collect())
            .unwrap_or_default()
    }
}

impl EventSink for EventHub {
    fn publish(&self, recipient: UserId, event: LiveEvent) {
        let mut users = self.users.lock().expect("hub lock");
        let stream = users.entry(recipient).or_insert_with(UserStream::new);
        let item = Sequenced {
            id: stream.next_id,
            event,
        };
        stream.next_id += 1;
        stream.buffer.push_back(item.clone());
        if stream.buffer.len() > BUFFER_PER_USER {
            stream.buffer.pop_front();
        }
        // no receivers is fine
        let _ = stream.tx.send(item);
    }
}
