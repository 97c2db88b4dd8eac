use base64::Engine;
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{PdsError, Result};
use crate::ids::{MediaId, UserId};
use crate::store::State;

pub const MAX_IMAGE_BYTES: usize = 2 * 1024 * 1024;
pub const MAX_DOCUMENT_BYTES: usize = 10 * 1024 * 1024;

/// Bytes received from a client along with their declared content type.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MediaUpload {
    pub content_type: String,
    pub bytes: Vec<u8>,
}

impl MediaUpload {
    pub fn new(content_type: &str, bytes: Vec<u8>) -> Self {
        Self {
            content_type: content_type.trim().to_ascii_lowercase(),
            bytes,
        }
    }

    /// Profile and banner photos: png or jpeg, at most 2 MiB.
    pub fn validate_image(&self) -> Result<()> {
        let sniffed_ok = match self.content_type.as_str() {
            "image/png" => self.bytes.starts_with(b"\x89PNG\r\n\x1a\n"),
            "image/jpeg" | "image/jpg" => self.bytes.starts_with(&[0xff, 0xd8, 0xff]),
            other => return Err(PdsError::UnsupportedMediaType(other.into())),
        };
        if self.bytes.len() > MAX_IMAGE_BYTES {
            return Err(PdsError::MediaTooLarge {
                max_bytes: MAX_IMAGE_BYTES,
            });
        }
        if !sniffed_ok {
            return Err(PdsError::UnsupportedMediaType(format!(
                "{} (content does not match)",
                self.content_type
            )));
        }
        Ok(())
    }

    /// IRB documents: pdf, at most 10 MiB.
    pub fn validate_pdf(&self) -> Result<()> {
        if self.content_type != "application/pdf" || !self.bytes.starts_with(b"%PDF-") {
            return Err(PdsError::UnsupportedMediaType(self.content_type.clone()));
        }
        if self.bytes.len() > MAX_DOCUMENT_BYTES {
            return Err(PdsError::MediaTooLarge {
                max_bytes: MAX_DOCUMENT_BYTES,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MediaObject {
    pub id: MediaId,
    pub owner: UserId,
    pub content_type: String,
    #[serde(with = "b64")]
    pub bytes: Vec<u8>,
    pub created_at: DateTime<Utc>,
}

mod b64 {
    use base64::engine::general_purpose::STANDARD;
    use base64::Engine;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&STANDARD.encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let text = String::deserialize(d)?;
        STANDARD.decode(text).map_err(serde::de::Error::custom)
    }
}

/// Decodes a base64 payload as sent by JSON clients.
pub fn decode_base64(data: &str) -> Result<Vec<u8>> {
    base64::engine::general_purpose::STANDARD
        .decode(data.trim())
        .map_err(|_| PdsError::UnsupportedMediaType("invalid base64 payload".into()))
}

impl State {
    pub(crate) fn store_media(
        &mut self,
        owner: UserId,
        upload: MediaUpload,
        at: DateTime<Utc>,
    ) -> MediaId {
        let id = self.ids.next_media();
        self.media.insert(
            id,
            MediaObject {
                id,
                owner,
                content_type: upload.content_type,
                bytes: upload.bytes,
                created_at: at,
            },
        );
        id
    }
}

impl crate::store::Platform {
    pub fn media(&self, id: MediaId) -> Result<MediaObject> {
        self.read()
            .media
            .get(&id)
            .cloned()
            .ok_or(PdsError::UnsupportedMediaType("missing media".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn image_rules() {
        let png = MediaUpload::new("image/png", b"\x89PNG\r\n\x1a\n".to_vec());
        assert!(png.validate_image().is_ok());
        let jpeg = MediaUpload::new("IMAGE/JPEG", vec![0xff, 0xd8, 0xff, 0xe0]);
        assert!(jpeg.validate_image().is_ok());
        let lying = MediaUpload::new("image/png", b"GIF89a".to_vec());
        assert!(lying.validate_image().is_err());
        let mut exact = b"\x89PNG\r\n\x1a\n".to_vec();
        exact.resize(MAX_IMAGE_BYTES, 0);
        assert!(MediaUpload::new("image/png", exact)
            .validate_image()
            .is_ok());
    }

    #[test]
    fn pdf_rules() {
        assert!(MediaUpload::new("application/pdf", b"%PDF-1.7".to_vec())
            .validate_pdf()
            .is_ok());
        assert!(MediaUpload::new("application/pdf", b"hello".to_vec())
            .validate_pdf()
            .is_err());
    }
}
