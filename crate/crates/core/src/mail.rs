//! Outbound email: the message record, the provider abstraction, and the
//! dev sink that writes messages to a directory.

use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};

use chrono::{DateTime, Utc};
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use crate::store::Platform;

/// Attempts after the first one before a message is marked failed.
pub const MAX_RETRIES: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmailKind {
    Invitation,
    PasswordReset,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmailState {
    Queued,
    Sent,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutboundEmail {
    pub to: String,
    pub subject: String,
    pub body: String,
    pub kind: EmailKind,
    pub queued_at: DateTime<Utc>,
    pub state: EmailState,
    pub attempts: u32,
}

impl OutboundEmail {
    pub fn new(
        to: String,
        subject: String,
        body: String,
        kind: EmailKind,
        at: DateTime<Utc>,
    ) -> Self {
        Self {
            to,
            subject,
            body,
            kind,
            queued_at: at,
            state: EmailState::Queued,
            attempts: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{message}")]
pub struct ProviderError {
    pub message: String,
}

impl ProviderError {
    pub fn new(message: impl Into<String>) -> Self {
        Self {
            message: message.into(),
        }
    }
}

pub trait EmailProvider: Send + Sync {
    fn deliver(&self, email: &OutboundEmail) -> Result<(), ProviderError>;
}

/// Calls the provider once plus up to [`MAX_RETRIES`] retries.
pub fn deliver_with_retry(provider: &dyn EmailProvider, email: &mut OutboundEmail) -> EmailState {
    for _ in 0..=MAX_RETRIES {
        email.attempts += 1;
        match provider.deliver(email) {
            Ok(()) => {
                email.state = EmailState::Sent;
                return email.state;
            }
            Err(err) => {
                tracing::warn!(to = %email.to, attempt = email.attempts, error = %err, "email delivery failed");
            }
        }
    }
    email.state = EmailState::Failed;
    email.state
}

/// Keeps delivered messages in memory.
#[derive(Debug, Default)]
pub struct MemoryProvider {
    sent: Mutex<Vec<OutboundEmail>>,
}

impl MemoryProvider {
    pub fn sent(&self) -> Vec<OutboundEmail> {
        self.sent.lock().clone()
    }
}

impl EmailProvider for MemoryProvider {
    fn deliver(&self, email: &OutboundEmail) -> Result<(), ProviderError> {
        self.sent.lock().push(email.clone());
        Ok(())
    }
}

/// Dev/test provider: one plain-text file per message in `dir`.
#[derive(Debug)]
pub struct SinkProvider {
    dir: PathBuf,
    counter: AtomicUsize,
}

impl SinkProvider {
    pub fn new(dir: impl Into<PathBuf>) -> std::io::Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        Ok(Self {
            dir,
            counter: AtomicUsize::new(0),
        })
    }
}

impl EmailProvider for SinkProvider {
    fn deliver(&self, email: &OutboundEmail) -> Result<(), ProviderError> {
        let n = self.counter.fetch_add(1, Ordering::Relaxed);
        let kind = match email.kind {
            EmailKind::Invitation => "invitation",
            EmailKind::PasswordReset => "password_reset",
        };
        let name = format!(
            "{}-{n:05}-{kind}.txt",
            email.queued_at.format("%Y%m%dT%H%M%S")
        );
        let contents = format!(
            "To: {}\nSubject: {}\n\n{}",
            email.to, email.subject, email.body
        );
        std::fs::write(self.dir.join(name), contents).map_err(|e| ProviderError::new(e.to_string()))
    }
}

impl Platform {
    /// Delivers through the configured provider and records the outcome in the outbox.
    pub(crate) fn send_email(&self, mut email: OutboundEmail) -> EmailState {
        let state = deliver_with_retry(self.mailer.as_ref(), &mut email);
        self.write().outbox.push(email);
        state
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::AtomicU32;

    struct Flaky {
        failures_left: AtomicU32,
        calls: AtomicU32,
    }

    impl EmailProvider for Flaky {
        fn deliver(&self, _: &OutboundEmail) -> Result<(), ProviderError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            if self
                .failures_left
                .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |n| n.checked_sub(1))
                .is_ok()
            {
                Err(ProviderError::new("503 service unavailable"))
            } else {
                Ok(())
            }
        }
    }

    fn msg() -> OutboundEmail {
        OutboundEmail::new(
            "a@b.org".into(),
            "s".into(),
            "b".into(),
            EmailKind::Invitation,
            Utc::now(),
        )
    }

    #[test]
    fn transient_failures_then_success() {
        let p = Flaky {
            failures_left: AtomicU32::new(2),
            calls: AtomicU32::new(0),
        };
        let mut m = msg();
        assert_eq!(deliver_with_retry(&p, &mut m), EmailState::Sent);
        assert_eq!(m.attempts, 3);
    }

    #[test]
    fn permanent_failure() {
        let p = Flaky {
            failures_left: AtomicU32::new(u32::MAX),
            calls: AtomicU32::new(0),
        };
        let mut m = msg();
        assert_eq!(deliver_with_retry(&p, &mut m), EmailState::Failed);
        assert_eq!(p.calls.load(Ordering::SeqCst), 1 + MAX_RETRIES as u32);
    }

    #[test]
    fn sink_writes_files() {
        let dir = tempfile::tempdir().unwrap();
        let sink = SinkProvider::new(dir.path()).unwrap();
        let mut m = msg();
        m.body = "Accept: http://x/invitations/abc".into();
        assert_eq!(deliver_with_retry(&sink, &mut m), EmailState::Sent);
        let files: Vec<_> = std::fs::read_dir(dir.path()).unwrap().collect();
        assert_eq!(files.len(), 1);
        let text = std::fs::read_to_string(files[0].as_ref().unwrap().path()).unwrap();
        assert!(text.contains("http://x/invitations/abc"));
    }
}
