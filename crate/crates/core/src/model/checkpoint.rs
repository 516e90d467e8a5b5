//! Binary checkpoint: header, JSON metadata, named little-endian f64 tensors,
//! and a trailing SHA-256 over everything before it.
//!
//! ```text
//! "GRIDCAST" | u32 version | u64 meta_len | meta JSON
//! u32 tensor_count | { u32 name_len | name | u64 len | len × f64 }*
//! [32-byte SHA-256]
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::adam::{AdamConfig, AdamState};
use super::seq2seq::{ModelConfig, ModelParams, Seq2SeqModel};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"GRIDCAST";
pub const CHECKPOINT_VERSION: u32 = 1;
const DIGEST_LEN: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Metadata {
    model: ModelConfig,
    generation: u64,
    adam: AdamConfig,
    adam_t: u64,
    config_hash: String,
    /// Caller-supplied context (pipeline config, scaler/PCA references).
    extra: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: Seq2SeqModel,
    pub adam: AdamState,
    pub extra: serde_json::Value,
    /// SHA-256 of the model config and `extra`.
    pub config_hash: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn config_hash(model: &ModelConfig, extra: &serde_json::Value) -> Result<String> {
    let text = serde_json::to_string(&(model, extra))?;
    Ok(sha256_hex(text.as_bytes()))
}

fn tensor_list(model: &Seq2SeqModel, adam: &AdamState) -> Vec<(String, Vec<f64>)> {
    let names = ModelParams::tensor_names();
    let mut out: Vec<(String, Vec<f64>)> = names
        .iter()
        .zip(model.params.tensors())
        .map(|(n, t)| (n.clone(), t.to_vec()))
        .collect();
    for (prefix, moments) in [("adam.m", &adam.m), ("adam.v", &adam.v)] {
        for (n, t) in names.iter().zip(moments) {
            out.push((format!("{prefix}.{n}"), t.clone()));
        }
    }
    out
}

pub fn checkpoint_to_bytes(model: &Seq2SeqModel, adam: &AdamState, extra: &serde_json::Value) -> Result<Vec<u8>> {
    let meta = Metadata {
        model: model.config.clone(),
        generation: model.generation,
        adam: adam.config,
        adam_t: adam.t,
        config_hash: config_hash(&model.config, extra)?,
        extra: extra.clone(),
    };
    let meta_json = serde_json::to_vec(&meta)?;
    let mut buf = Vec::new();
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(meta_json.len() as u64).to_le_bytes());
    buf.extend_from_slice(&meta_json);
    let tensors = tensor_list(model, adam);
    buf.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, data) in &tensors {
        buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        buf.extend_from_slice(&(data.len() as u64).to_le_bytes());
        for v in data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let digest = Sha256::digest(&buf);
    buf.extend_from_slice(&digest);
    Ok(buf)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Integrity("unexpected end of checkpoint body".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn len(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| Error::Integrity("length overflow".into()))
    }
}

pub fn checkpoint_from_bytes(bytes: &[u8]) -> Result<Checkpoint> {
    let header = CHECKPOINT_MAGIC.len() + 4;
    if bytes.len() < header + DIGEST_LEN {
        return Err(Error::Integrity(format!("checkpoint is only {} bytes", bytes.len())));
    }
    if &bytes[..CHECKPOINT_MAGIC.len()] != CHECKPOINT_MAGIC {
        return Err(Error::Integrity("not a checkpoint file (bad magic)".into()));
    }
    let (body, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
    if Sha256::digest(body).as_slice() != digest {
        return Err(Error::Integrity("checksum mismatch (file truncated or corrupt)".into()));
    }
    let mut r = Reader { bytes: body, pos: CHECKPOINT_MAGIC.len() };
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Migration {
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let meta_len = r.len()?;
    let meta: Metadata = serde_json::from_slice(r.take(meta_len)?)
        .map_err(|e| Error::Integrity(format!("metadata: {e}")))?;
    meta.model.validate()?;
    if config_hash(&meta.model, &meta.extra)? != meta.config_hash {
        return Err(Error::Integrity("config hash mismatch".into()));
    }

    let mut model = Seq2SeqModel::zeros(&meta.model)?;
    model.generation = meta.generation;
    let mut adam = AdamState::for_params(meta.adam, &model.params);
    adam.t = meta.adam_t;
    let expected = tensor_list(&model, &adam);
    let count = r.u32()? as usize;
    if count != expected.len() {
        return Err(Error::Integrity(format!(
            "{count} tensors stored, {} expected",
            expected.len()
        )));
    }
    let mut loaded = Vec::with_capacity(count);
    for (name, template) in &expected {
        let name_len = r.u32()? as usize;
        let stored = std::str::from_utf8(r.take(name_len)?)
            .map_err(|_| Error::Integrity("tensor name is not UTF-8".into()))?;
        if stored != name {
            return Err(Error::Integrity(format!("expected tensor `{name}`, found `{stored}`")));
        }
        let len = r.len()?;
        if len != template.len() {
            return Err(Error::Integrity(format!(
                "tensor `{name}` has {len} values, expected {}",
                template.len()
            )));
        }
        let raw = r.take(len.checked_mul(8).ok_or_else(|| Error::Integrity("length overflow".into()))?)?;
        loaded.push(
            raw.chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect::<Vec<f64>>(),
        );
    }
    if r.pos != body.len() {
        return Err(Error::Integrity("trailing bytes after tensors".into()));
    }
    let n = ModelParams::tensor_names().len();
    let mut it = loaded.into_iter();
    for dst in model.params.tensors_mut() {
        dst.copy_from_slice(&it.next().expect("count checked"));
    }
    adam.m = it.by_ref().take(n).collect();
    adam.v = it.collect();
    Ok(Checkpoint {
        model,
        adam,
        extra: meta.extra,
        config_hash: meta.config_hash,
    })
}

pub fn checkpoint_save(model: &Seq2SeqModel, adam: &AdamState, extra: &serde_json::Value, path: &Path) -> Result<()> {
    let bytes = checkpoint_to_bytes(model, adam, extra)?;
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn checkpoint_load(path: &Path) -> Result<Checkpoint> {
    checkpoint_from_bytes(&std::fs::read(path)?)
}
