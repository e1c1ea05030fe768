use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{LlmError, LlmRequest};

/// One JSON file per response, named by `sha256(model, prompt[, attempt])`.
#[derive(Debug, Clone)]
pub struct ResponseCache {
    dir: PathBuf,
}

#[derive(Serialize, Deserialize)]
struct Entry {
    model: String,
    response: String,
}

impl ResponseCache {
    pub fn new(dir: impl AsRef<Path>) -> Result<Self, LlmError> {
        let dir = dir.as_ref().to_owned();
        fs::create_dir_all(&dir).map_err(|e| LlmError::Cache(format!("{}: {e}", dir.display())))?;
        Ok(ResponseCache { dir })
    }

    pub fn key(req: &LlmRequest) -> String {
        let mut h = Sha256::new();
        h.update(req.model_name.as_bytes());
        h.update([0]);
        h.update(req.prompt.as_bytes());
        if req.attempt > 0 {
            h.update([0]);
            h.update(req.attempt.to_le_bytes());
        }
        hex::encode(h.finalize())
    }

    fn path(&self, req: &LlmRequest) -> PathBuf {
        self.dir.join(format!("{}.json", Self::key(req)))
    }

    pub fn get(&self, req: &LlmRequest) -> Result<Option<String>, LlmError> {
        let path = self.path(req);
        match fs::read(&path) {
            Ok(bytes) => {
                let e: Entry =
                    serde_json::from_slice(&bytes).map_err(|e| LlmError::Cache(format!("{}: {e}", path.display())))?;
                Ok(Some(e.response))
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(LlmError::Cache(format!("{}: {e}", path.display()))),
        }
    }

    /// Writes via a temp file + rename so readers never see partial entries.
    pub fn put(&self, req: &LlmRequest, response: &str) -> Result<(), LlmError> {
        let path = self.path(req);
        let tmp = path.with_extension(format!("tmp{}", std::process::id()));
        let body = serde_json::to_vec(&Entry { model: req.model_name.clone(), response: response.to_owned() })
            .expect("cache entry serializes");
        fs::write(&tmp, body).map_err(|e| LlmError::Cache(format!("{}: {e}", tmp.display())))?;
        fs::rename(&tmp, &path).map_err(|e| LlmError::Cache(format!("{}: {e}", path.display())))
    }
}
