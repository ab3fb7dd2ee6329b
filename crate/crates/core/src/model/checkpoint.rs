//! Checkpoint files.
//!
//! Layout (little-endian):
//!
//! ```text
//! "TSCK" | version u8 = 1 | header_len u32 | header JSON {"config": ModelConfig}
//! param_count u32
//! per parameter: name_len u32 | name UTF-8 | TTEN record (f32 payload)
//! ```

use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ModelConfig, TwoStreamNet};
use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};
use crate::tten::{self, AnyTensor};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"TSCK";
const VERSION: u8 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
}

pub fn checkpoint_bytes<F: Element>(net: &TwoStreamNet<F>) -> Vec<u8> {
    let header = serde_json::to_vec(&Header {
        config: net.config().clone(),
    })
    .expect("config serializes");
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.push(VERSION);
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    out.extend_from_slice(&(net.params().len() as u32).to_le_bytes());
    for p in net.params() {
        out.extend_from_slice(&(p.name.len() as u32).to_le_bytes());
        out.extend_from_slice(p.name.as_bytes());
        let as_f32: Tensor<f32> = p.value.cast();
        tten::encode(&as_f32, &mut out).expect("writing to a Vec cannot fail");
    }
    out
}

pub fn save_checkpoint<F: Element>(net: &TwoStreamNet<F>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = checkpoint_bytes(net);
    // write-then-rename so a crash never leaves a half-written checkpoint
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn take<'a>(input: &mut &'a [u8], n: usize, what: &str) -> Result<&'a [u8]> {
    if input.len() < n {
        return Err(Error::Format(format!("checkpoint truncated while reading {what}")));
    }
    let (head, rest) = input.split_at(n);
    *input = rest;
    Ok(head)
}

fn take_u32(input: &mut &[u8], what: &str) -> Result<u32> {
    let b = take(input, 4, what)?;
    Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
}

/// First top-level config field whose JSON differs.
fn first_difference(expected: &ModelConfig, found: &ModelConfig) -> Option<(String, String, String)> {
    let (a, b) = (
        serde_json::to_value(expected).ok()?,
        serde_json::to_value(found).ok()?,
    );
    let (a, b) = (a.as_object()?, b.as_object()?);
    a.iter().find_map(|(k, va)| {
        let vb = b.get(k).cloned().unwrap_or(serde_json::Value::Null);
        (va != &vb).then(|| (k.clone(), va.to_string(), vb.to_string()))
    })
}

/// Decodes a checkpoint; with `expected`, the stored config must match it.
pub fn read_checkpoint<F: Element>(bytes: &[u8], expected: Option<&ModelConfig>) -> Result<TwoStreamNet<F>> {
    let mut input = bytes;
    if take(&mut input, 4, "magic")? != CHECKPOINT_MAGIC {
        return Err(Error::Format("not a checkpoint (bad magic)".into()));
    }
    let version = take(&mut input, 1, "version")?[0];
    if version != VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let header_len = take_u32(&mut input, "header length")? as usize;
    let header: Header = serde_json::from_slice(take(&mut input, header_len, "header")?)?;
    if let Some(exp) = expected {
        if exp != &header.config {
            let (field, expected, found) =
                first_difference(exp, &header.config).unwrap_or_else(|| ("config".into(), "?".into(), "?".into()));
            return Err(Error::ConfigMismatch { field, expected, found });
        }
    }
    let mut net = TwoStreamNet::<F>::zeroed(&header.config)?;
    let count = take_u32(&mut input, "parameter count")? as usize;
    if count != net.params().len() {
        return Err(Error::Format(format!(
            "checkpoint holds {count} parameters, model has {}",
            net.params().len()
        )));
    }
    for p in net.params_mut() {
        let name_len = take_u32(&mut input, "parameter name")? as usize;
        let name = std::str::from_utf8(take(&mut input, name_len, "parameter name")?)
            .map_err(|_| Error::Format("parameter name is not UTF-8".into()))?;
        if name != p.name {
            return Err(Error::Format(format!("expected parameter {}, found {name}", p.name)));
        }
        let t = match tten::decode(&mut input)? {
            AnyTensor::F32(t) => t,
            AnyTensor::F64(_) => return Err(Error::Format(format!("parameter {name} is not f32"))),
        };
        if t.shape() != p.value.shape() {
            return Err(Error::Format(format!(
                "parameter {name} has shape {:?}, expected {:?}",
                t.shape(),
                p.value.shape()
            )));
        }
        p.value = t.cast();
    }
    if !input.is_empty() {
        return Err(Error::Format(format!("{} trailing bytes after checkpoint", input.len())));
    }
    Ok(net)
}

pub fn load_checkpoint<F: Element>(path: impl AsRef<Path>, expected: Option<&ModelConfig>) -> Result<TwoStreamNet<F>> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    read_checkpoint(&bytes, expected)
}
