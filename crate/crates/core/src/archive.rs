//! Model checkpoints: named `f64` tensors plus a JSON header in a single
//! safetensors file.
//!
//! The safetensors metadata map carries one key, `header`, whose value is
//! `{"format": <tag>, "config": <model config>}`. A single key keeps the file
//! byte-identical across runs.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use safetensors::tensor::TensorView;
use safetensors::{Dtype, SafeTensors};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::nn::Param;

#[derive(Clone, Debug)]
pub struct Archive {
    pub tag: String,
    pub config: Value,
    pub tensors: BTreeMap<String, (Vec<usize>, Vec<f64>)>,
}

impl Archive {
    pub fn config_as<T: DeserializeOwned>(&self) -> Result<T> {
        Ok(serde_json::from_value(self.config.clone())?)
    }

    /// Copies stored values into `params`, matching by name and shape.
    pub fn restore(&self, params: Vec<&mut Param>) -> Result<()> {
        if params.len() != self.tensors.len() {
            return Err(Error::ShapeMismatch {
                what: "checkpoint tensor count".into(),
                expected: vec![params.len()],
                actual: vec![self.tensors.len()],
            });
        }
        for p in params {
            let (shape, data) = self
                .tensors
                .get(&p.name)
                .ok_or_else(|| Error::Format(format!("checkpoint lacks tensor '{}'", p.name)))?;
            if *shape != p.shape {
                return Err(Error::ShapeMismatch {
                    what: p.name.clone(),
                    expected: p.shape.clone(),
                    actual: shape.clone(),
                });
            }
            p.value.copy_from_slice(data);
        }
        Ok(())
    }
}

pub fn encode_archive<C: Serialize>(tag: &str, config: &C, params: &[&Param]) -> Result<Vec<u8>> {
    let header = json!({ "format": tag, "config": config });
    let bytes: Vec<(String, Vec<usize>, Vec<u8>)> = params
        .iter()
        .map(|p| {
            let raw: Vec<u8> = p.value.iter().flat_map(|v| v.to_le_bytes()).collect();
            (p.name.clone(), p.shape.clone(), raw)
        })
        .collect();
    let mut seen = std::collections::HashSet::new();
    if let Some((dup, _, _)) = bytes.iter().find(|(n, _, _)| !seen.insert(n.clone())) {
        return Err(Error::invalid(format!("duplicate tensor name '{dup}'")));
    }
    let views = bytes
        .iter()
        .map(|(name, shape, raw)| {
            TensorView::new(Dtype::F64, shape.clone(), raw)
                .map(|v| (name.clone(), v))
                .map_err(|e| Error::Format(e.to_string()))
        })
        .collect::<Result<Vec<_>>>()?;
    let meta = HashMap::from([("header".to_string(), header.to_string())]);
    safetensors::serialize(views, Some(meta)).map_err(|e| Error::Format(e.to_string()))
}

pub fn decode_archive(bytes: &[u8], expected_tag: &str) -> Result<Archive> {
    let (_, metadata) = SafeTensors::read_metadata(bytes).map_err(|e| Error::Format(e.to_string()))?;
    let header: Value = metadata
        .metadata()
        .as_ref()
        .and_then(|m| m.get("header"))
        .ok_or_else(|| Error::Format("checkpoint has no header".into()))
        .and_then(|h| serde_json::from_str(h).map_err(Error::from))?;
    let tag = header
        .get("format")
        .and_then(Value::as_str)
        .unwrap_or_default()
        .to_string();
    if tag != expected_tag {
        return Err(Error::Format(format!("expected a '{expected_tag}' checkpoint, found '{tag}'")));
    }
    let st = SafeTensors::deserialize(bytes).map_err(|e| Error::Format(e.to_string()))?;
    let mut tensors = BTreeMap::new();
    for (name, view) in st.tensors() {
        if view.dtype() != Dtype::F64 {
            return Err(Error::Format(format!("tensor '{name}' is not f64")));
        }
        let data = view
            .data()
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        tensors.insert(name, (view.shape().to_vec(), data));
    }
    Ok(Archive {
        tag,
        config: header.get("config").cloned().unwrap_or(Value::Null),
        tensors,
    })
}

/// Writes via a temporary sibling and a rename so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn save_archive<C: Serialize>(path: &Path, tag: &str, config: &C, params: &[&Param]) -> Result<()> {
    write_atomic(path, &encode_archive(tag, config, params)?)
}

pub fn load_archive(path: &Path, expected_tag: &str) -> Result<Archive> {
    decode_archive(&fs::read(path)?, expected_tag)
}
