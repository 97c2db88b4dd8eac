use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

macro_rules! id_type {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub u64);

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}", self.0)
            }
        }

        impl FromStr for $name {
            type Err = std::num::ParseIntError;
            fn from_str(s: &str) -> Result<Self, Self::Err> {
                s.parse().map($name)
            }
        }
    };
}

id_type!(
    /// A human account or an agent account. Agents share the account id space.
    UserId
);
id_type!(ExperimentId);
id_type!(
    /// Globally monotonic, and therefore also monotonic within each experiment.
    PostId
);
id_type!(NotificationId);
id_type!(RequestId);
id_type!(DeviceId);
id_type!(ReportId);
id_type!(FlagId);
id_type!(EventId);
id_type!(TaskId);
id_type!(MediaId);

/// Monotonic id allocation for every id family.
#[derive(Debug, Default, Clone, Serialize, Deserialize)]
pub struct IdSequences {
    user: u64,
    experiment: u64,
    post: u64,
    notification: u64,
    request: u64,
    device: u64,
    report: u64,
    flag: u64,
    event: u64,
    task: u64,
    media: u64,
}

macro_rules! next_fn {
    ($fn_name:ident, $field:ident, $ty:ident) => {
        pub fn $fn_name(&mut self) -> $ty {
            self.$field += 1;
            $ty(self.$field)
        }
    };
}

impl IdSequences {
    next_fn!(next_user, user, UserId);
    next_fn!(next_experiment, experiment, ExperimentId);
    next_fn!(next_post, post, PostId);
    next_fn!(next_notification, notification, NotificationId);
    next_fn!(next_request, request, RequestId);
    next_fn!(next_device, device, DeviceId);
    next_fn!(next_report, report, ReportId);
    next_fn!(next_flag, flag, FlagId);
    next_fn!(next_event, event, EventId);
    next_fn!(next_task, task, TaskId);
    next_fn!(next_media, media, MediaId);

    /// Used by bundle import, which keeps the source ids.
    pub(crate) fn observe_user(&mut self, id: UserId) {
        self.user = self.user.max(id.0);
    }

    pub(crate) fn observe_post(&mut self, id: PostId) {
        self.post = self.post.max(id.0);
    }

    pub(crate) fn observe_experiment(&mut self, id: ExperimentId) {
        self.experiment = self.experiment.max(id.0);
    }

    pub(crate) fn observe_notification(&mut self, id: NotificationId) {
        self.notification = self.notification.max(id.0);
    }

    pub(crate) fn observe_report(&mut self, id: ReportId) {
        self.report = self.report.max(id.0);
    }

    pub(crate) fn observe_flag(&mut self, id: FlagId) {
        self.flag = self.flag.max(id.0);
    }
}

/// Hex encoding of `bytes` random bytes from the OS-seeded generator.
pub(crate) fn random_token(bytes: usize) -> String {
    use rand::RngCore;
    let mut buf = vec![0u8; bytes];
    rand::rng().fill_bytes(&mut buf);
    buf.iter().map(|b| format!("{b:02x}")).collect()
}
