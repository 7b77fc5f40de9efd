use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ChannelDescriptorSet, ScaleSpaceParams};

/// Hex SHA-256 of raw bytes.
pub fn content_hash(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Hex SHA-256 of the canonical JSON form of the extraction parameters.
pub fn params_hash(p: &ScaleSpaceParams) -> String {
    content_hash(serde_json::to_string(p).expect("params serialize").as_bytes())
}

/// One cached extraction result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureCacheRecord {
    pub image_hash: String,
    pub params_hash: String,
    pub channels: ChannelDescriptorSet,
}

/// Directory of descriptor caches keyed by image content and parameters.
#[derive(Debug, Clone)]
pub struct FeatureCache {
    dir: PathBuf,
}

impl FeatureCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        FeatureCache { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, image_hash: &str, params_hash: &str) -> PathBuf {
        self.dir.join(format!("{image_hash}-{}.json", &params_hash[..16.min(params_hash.len())]))
    }

    /// A cached record whose hashes both match, if present and readable.
    pub fn get(&self, image_hash: &str, params_hash: &str) -> Option<ChannelDescriptorSet> {
        let text = fs::read_to_string(self.path(image_hash, params_hash)).ok()?;
        let rec: FeatureCacheRecord = serde_json::from_str(&text).ok()?;
        (rec.image_hash == image_hash && rec.params_hash == params_hash).then_some(rec.channels)
    }

    /// Publishes a record by writing a temporary file and renaming it.
    pub fn put(&self, record: &FeatureCacheRecord) -> io::Result<()> {
        fs::create_dir_all(&self.dir)?;
        let dest = self.path(&record.image_hash, &record.params_hash);
        let tmp = dest.with_extension(format!("tmp{}", std::process::id()));
        fs::write(&tmp, serde_json::to_vec(record).map_err(io::Error::other)?)?;
        fs::rename(tmp, dest)
    }
}
