//! SMTP delivery for production; the dev sink lives in the core crate.

use lettre::message::header::ContentType;
use lettre::message::Mailbox;
use lettre::{Message, SmtpTransport, Transport};
use pds_core::mail::{EmailProvider, OutboundEmail, ProviderError};

pub struct SmtpProvider {
    transport: SmtpTransport,
    from: Mailbox,
}

impl SmtpProvider {
    pub fn new(url: &str, from: &str) -> anyhow::Result<Self> {
        Ok(Self {
            transport: SmtpTransport::from_url(url)?.build(),
            from: from.parse()?,
        })
    }
}

pub fn build_message(from: &Mailbox, email: &OutboundEmail) -> Result<Message, ProviderError> {
    let to: Mailbox = email
        .to
        .parse()
        .map_err(|e| ProviderError::new(format!("bad recipient: {e}")))?;
    Message::builder()
        .from(from.clone())
        .to(to)
        .subject(&email.subject)
        .header(ContentType::TEXT_PLAIN)
        .body(email.body.clone())
        .map_err(|e| ProviderError::new(e.to_string()))
}

impl EmailProvider for SmtpProvider {
    fn deliver(&self, email: &OutboundEmail) -> Result<(), ProviderError> {
        let message = build_message(&self.from, email)?;
        self.transport
            .send(&message)
            .map(|_| ())
            .map_err(|e| ProviderError::new(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use pds_core::mail::EmailKind;

    #[test]
    fn plain_text_message() {
        let email = OutboundEmail::new(
            "ada@example.org".into(),
            "Invitation".into(),
            "Accept at http://x/accept".into(),
            EmailKind::Invitation,
            chrono::Utc::now(),
        );
        let from: Mailbox = "PDS <no-reply@localhost>".parse().unwrap();
        let raw = String::from_utf8(build_message(&from, &email).unwrap().formatted()).unwrap();
        assert!(raw.contains("To: ada@example.org"));
        assert!(raw.contains("Content-Type: text/plain"));
        assert!(raw.contains("Accept at http://x/accept"));
    }

    #[test]
    fn bad_recipient_is_a_provider_error() {
        let mut email = OutboundEmail::new(
            "not an address".into(),
            "s".into(),
            "b".into(),
            EmailKind::PasswordReset,
            chrono::Utc::now(),
        );
        let from: Mailbox = "a@b.c".parse().unwrap();
        assert!(build_message(&from, &email).is_err());
        email.to = "x@y.z".into();
        assert!(build_message(&from, &email).is_ok());
    }
}
