// SPDX-License-Identifier: MIT OR Apache-2.0

//! On-disk artifacts: JSON metadata envelopes, raw little-endian f32 blobs,
//! content-addressed cache keys, and the activation cache.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{ActivationAddress, CapturedRun};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Env var overriding the cache directory.
pub const CACHE_ENV: &str = "PHONOLENS_CACHE";

/// Write via a temporary sibling and rename, so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let tmp = path.with_extension(format!(
        "{}.tmp{}",
        path.extension().and_then(|e| e.to_str()).unwrap_or(""),
        std::process::id()
    ));
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn write_f32_blob(path: &Path, data: &[f32]) -> Result<()> {
    let bytes: Vec<u8> = data.iter().flat_map(|v| v.to_le_bytes()).collect();
    write_atomic(path, &bytes)
}

pub fn read_f32_blob(path: &Path) -> Result<Vec<f32>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() % 4 != 0 {
        return Err(Error::Load(format!("{}: length not a multiple of 4", path.display())));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect())
}

/// Compact JSON with object keys sorted at every level.
pub fn canonical_json(value: &Value) -> String {
    fn write(v: &Value, out: &mut String) {
        match v {
            Value::Object(map) => {
                let mut keys: Vec<&String> = map.keys().collect();
                keys.sort();
                out.push('{');
                for (i, k) in keys.into_iter().enumerate() {
                    if i > 0 {
                        out.push(',');
                    }
                    out.push_str(&Value::String(k.clone()).to_string());
                    out.push(':');
                    write(&map[k], out);
                }
                out.push('}');
            }
            Value::Array(items) => {
                out.push('[');
                for (i, item) in items.iter().enumerate() {
                    if i > 0 {
                        out.push(',');
                    }
                    write(item, out);
                }
                out.push(']');
            }
            other => out.push_str(&other.to_string()),
        }
    }
    let mut out = String::new();
    write(value, &mut out);
    out
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Stable content hash of `(model id, prompt template, parameters)`.
pub fn cache_key(model_id: &str, template: &str, params: &Value) -> String {
    let doc = serde_json::json!({
        "model": model_id,
        "template": template,
        "params": params,
    });
    sha256_hex(canonical_json(&doc).as_bytes())
}

/// Metadata wrapper embedded in every artifact file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Envelope<T> {
    pub kind: String,
    pub tool_version: String,
    pub config_hash: String,
    pub seed: u64,
    pub payload: T,
}

impl<T: Serialize + DeserializeOwned> Envelope<T> {
    pub fn new(kind: &str, config_hash: &str, seed: u64, payload: T) -> Self {
        Self {
            kind: kind.to_string(),
            tool_version: TOOL_VERSION.to_string(),
            config_hash: config_hash.to_string(),
            seed,
            payload,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        write_atomic(path, text.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Cache of captured runs keyed by `(model id, prompt, address set)`.
#[derive(Debug, Clone)]
pub struct ActivationCache {
    dir: PathBuf,
}

#[derive(Serialize, Deserialize)]
struct CachedRunMeta {
    prompt: String,
    tokens: Vec<u32>,
    vocab: usize,
    addresses: Vec<(ActivationAddress, usize)>,
}

impl ActivationCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn key(model_id: &str, prompt: &str, addresses: &BTreeSet<ActivationAddress>) -> String {
        let addrs = serde_json::to_value(addresses).expect("addresses serialize");
        cache_key(model_id, prompt, &addrs)
    }

    fn paths(&self, key: &str) -> (PathBuf, PathBuf) {
        let base = self.dir.join("activations");
        (base.join(format!("{key}.json")), base.join(format!("{key}.bin")))
    }

    pub fn get(
        &self,
        model_id: &str,
        prompt: &str,
        addresses: &BTreeSet<ActivationAddress>,
    ) -> Result<Option<CapturedRun>> {
        let (meta_path, blob_path) = self.paths(&Self::key(model_id, prompt, addresses));
        if !meta_path.exists() || !blob_path.exists() {
            return Ok(None);
        }
        let text = std::fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
        let meta: CachedRunMeta = serde_json::from_str(&text)?;
        let blob = read_f32_blob(&blob_path)?;
        let total: usize = meta.vocab + meta.addresses.iter().map(|(_, n)| n).sum::<usize>();
        if blob.len() != total {
            return Err(Error::Load(format!("{}: truncated blob", blob_path.display())));
        }
        let logits = blob[..meta.vocab].to_vec();
        let mut off = meta.vocab;
        let mut captures = std::collections::BTreeMap::new();
        for (a, n) in meta.addresses {
            captures.insert(a, blob[off..off + n].to_vec());
            off += n;
        }
        Ok(Some(CapturedRun {
            prompt: meta.prompt,
            tokens: meta.tokens,
            logits,
            captures,
        }))
    }

    pub fn put(&self, model_id: &str, addresses: &BTreeSet<ActivationAddress>, run: &CapturedRun) -> Result<()> {
        let (meta_path, blob_path) = self.paths(&Self::key(model_id, &run.prompt, addresses));
        let mut blob = run.logits.clone();
        let mut addrs = Vec::with_capacity(run.captures.len());
        for (a, v) in &run.captures {
            blob.extend_from_slice(v);
            addrs.push((*a, v.len()));
        }
        write_f32_blob(&blob_path, &blob)?;
        let meta = CachedRunMeta {
            prompt: run.prompt.clone(),
            tokens: run.tokens.clone(),
            vocab: run.logits.len(),
            addresses: addrs,
        };
        write_atomic(&meta_path, serde_json::to_string(&meta)?.as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_json_sorts_nested_keys() {
        let v = serde_json::json!({"b": 1, "a": {"z": [1, {"y": 2, "x": 3}], "c": null}});
        assert_eq!(canonical_json(&v), r#"{"a":{"c":null,"z":[1,{"x":3,"y":2}]},"b":1}"#);
    }

    #[test]
    fn cache_key_is_stable_and_sensitive() {
        let p = serde_json::json!({"k": 10});
        let a = cache_key("m", "rhyme with <word>:", &p);
        assert_eq!(a, cache_key("m", "rhyme with <word>:", &p));
        assert_ne!(a, cache_key("m", "rhyme with <word>;", &p));
        assert_eq!(a.len(), 64);
    }

    #[test]
    fn blob_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.bin");
        let data = vec![1.5f32, -0.0, f32::MAX, 3.25e-8];
        write_f32_blob(&p, &data).unwrap();
        let back = read_f32_blob(&p).unwrap();
        assert_eq!(
            back.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            data.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }
}
