use std::collections::HashMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use parking_lot::RwLock;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::domain::{DraftId, UserId};

pub const DEFAULT_MEDIA_CAP_BYTES: usize = 20 * 1024 * 1024;

#[derive(Debug, Error)]
pub enum MediaError {
    #[error("media of {size} bytes exceeds the {cap}-byte cap")]
    Oversize { size: usize, cap: usize },
    #[error("media payload is empty")]
    Empty,
    #[error("no media stored under `{0}`")]
    MissingKey(String),
    #[error("invalid media key `{0}`")]
    InvalidKey(String),
    #[error("media io error: {0}")]
    Io(#[from] io::Error),
}

/// Handle to stored media bytes.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MediaRef {
    pub key: String,
    pub mime: String,
    pub size_bytes: u64,
}

/// Minimal key/value blob backend.
pub trait ObjectStore: Send + Sync {
    fn put(&self, key: &str, bytes: &[u8]) -> io::Result<()>;
    fn get(&self, key: &str) -> io::Result<Option<Vec<u8>>>;
    fn delete(&self, key: &str) -> io::Result<()>;
}

/// Objects as files under a root directory.
#[derive(Debug, Clone)]
pub struct FsObjectStore {
    root: PathBuf,
}

impl FsObjectStore {
    pub fn new(root: impl Into<PathBuf>) -> io::Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root)?;
        Ok(FsObjectStore { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }
}

impl ObjectStore for FsObjectStore {
    fn put(&self, key: &str, bytes: &[u8]) -> io::Result<()> {
        let path = self.root.join(key);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        let tmp = path.with_extension(format!("tmp-{}", uuid::Uuid::new_v4()));
        fs::write(&tmp, bytes)?;
        fs::rename(&tmp, &path)
    }

    fn get(&self, key: &str) -> io::Result<Option<Vec<u8>>> {
        match fs::read(self.root.join(key)) {
            Ok(b) => Ok(Some(b)),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e),
        }
    }

    fn delete(&self, key: &str) -> io::Result<()> {
        match fs::remove_file(self.root.join(key)) {
            Err(e) if e.kind() != io::ErrorKind::NotFound => Err(e),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Default)]
pub struct MemoryObjectStore {
    objects: RwLock<HashMap<String, Vec<u8>>>,
}

impl MemoryObjectStore {
    pub fn new() -> Self {
        Self::default()
    }
}

impl ObjectStore for MemoryObjectStore {
    fn put(&self, key: &str, bytes: &[u8]) -> io::Result<()> {
        self.objects.write().insert(key.to_string(), bytes.to_vec());
        Ok(())
    }

    fn get(&self, key: &str) -> io::Result<Option<Vec<u8>>> {
        Ok(self.objects.read().get(key).cloned())
    }

    fn delete(&self, key: &str) -> io::Result<()> {
        self.objects.write().remove(key);
        Ok(())
    }
}

fn extension_for(mime: &str) -> &'static str {
    match mime.split(';').next().unwrap_or("").trim() {
        "image/jpeg" | "image/jpg" => "jpg",
        "image/png" => "png",
        "image/webp" => "webp",
        "image/heic" => "heic",
        "image/gif" => "gif",
        "audio/mpeg" | "audio/mp3" => "mp3",
        "audio/wav" | "audio/x-wav" | "audio/wave" => "wav",
        "audio/mp4" | "audio/m4a" | "audio/x-m4a" => "m4a",
        "audio/webm" => "webm",
        "audio/ogg" => "ogg",
        "text/plain" => "txt",
        _ => "bin",
    }
}

/// `media/{user_id}/{draft_id}/{sha256}.{ext}`
pub fn media_key(user_id: UserId, draft_id: DraftId, bytes: &[u8], mime: &str) -> String {
    let hash = hex::encode(Sha256::digest(bytes));
    format!("media/{user_id}/{draft_id}/{hash}.{}", extension_for(mime))
}

fn check_key(key: &str) -> Result<(), MediaError> {
    let ok = key.starts_with("media/")
        && !key.contains('\\')
        && key.split('/').all(|seg| !seg.is_empty() && seg != "." && seg != "..");
    if ok {
        Ok(())
    } else {
        Err(MediaError::InvalidKey(key.to_string()))
    }
}

/// Content-addressed media storage with a size cap.
#[derive(Clone)]
pub struct MediaStore {
    backend: Arc<dyn ObjectStore>,
    cap_bytes: usize,
}

impl std::fmt::Debug for MediaStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MediaStore")
            .field("cap_bytes", &self.cap_bytes)
            .finish()
    }
}

impl MediaStore {
    pub fn new(backend: Arc<dyn ObjectStore>, cap_bytes: usize) -> Self {
        MediaStore { backend, cap_bytes }
    }

    pub fn in_memory() -> Self {
        Self::new(Arc::new(MemoryObjectStore::new()), DEFAULT_MEDIA_CAP_BYTES)
    }

    pub fn cap_bytes(&self) -> usize {
        self.cap_bytes
    }

    pub fn put_media(
        &self,
        user_id: UserId,
        draft_id: DraftId,
        bytes: &[u8],
        mime: &str,
    ) -> Result<MediaRef, MediaError> {
        if bytes.is_empty() {
            return Err(MediaError::Empty);
        }
        if bytes.len() > self.cap_bytes {
            return Err(MediaError::Oversize {
                size: bytes.len(),
                cap: self.cap_bytes,
            });
        }
        let key = media_key(user_id, draft_id, bytes, mime);
        self.backend.put(&key, bytes)?;
        Ok(MediaRef {
            key,
            mime: mime.to_string(),
            size_bytes: bytes.len() as u64,
        })
    }

    pub fn get_media(&self, key: &str) -> Result<Vec<u8>, MediaError> {
        check_key(key)?;
        self.backend
            .get(key)?
            .ok_or_else(|| MediaError::MissingKey(key.to_string()))
    }

    pub fn delete_media(&self, key: &str) -> Result<(), MediaError> {
        check_key(key)?;
        Ok(self.backend.delete(key)?)
    }
}
