//! Realtime events handed to the gateway after each commit.

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use crate::feeds::NotificationKind;
use crate::ids::{ExperimentId, NotificationId, PostId, UserId};

/// Payloads carry ids only; clients refetch details.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum LiveEvent {
    Notification {
        notification: NotificationId,
        kind: NotificationKind,
    },
    PostCreated {
        experiment: ExperimentId,
        post: PostId,
    },
}

impl LiveEvent {
    pub fn name(&self) -> &'static str {
        match self {
            LiveEvent::Notification { .. } => "notification",
            LiveEvent::PostCreated { .. } => "post_created",
        }
    }
}

pub trait EventSink: Send + Sync {
    fn publish(&self, recipient: UserId, event: LiveEvent);
}

#[derive(Debug, Default, Clone, Copy)]
pub struct NullSink;

impl EventSink for NullSink {
    fn publish(&self, _: UserId, _: LiveEvent) {}
}

/// Records every published event, for tests.
#[derive(Debug, Default)]
pub struct RecordingSink {
    events: Mutex<Vec<(UserId, LiveEvent)>>,
}

impl RecordingSink {
    pub fn events(&self) -> Vec<(UserId, LiveEvent)> {
        self.events.lock().clone()
    }

    pub fn for_user(&self, user: UserId) -> Vec<LiveEvent> {
        self.events
            .lock()
            .iter()
            .filter(|(u, _)| *u == user)
            .map(|(_, e)| e.clone())
            .collect()
    }
}

impl EventSink for RecordingSink {
    fn publish(&self, recipient: UserId, event: LiveEvent) {
        self.events.lock().push((recipient, event));
    }
}
