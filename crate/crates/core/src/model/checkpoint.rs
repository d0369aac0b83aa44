//! Checkpoints: a text manifest (`name → dtype, shape, byte offset`) next to one
//! flat little-endian blob.
//!
//! ```text
//! vlac-checkpoint 1
//! blob ckpt.bin
//! meta	step	200
//! tensor	layer1.encoder.0.weight	f64	768,64	0
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::real::{Dtype, Real};
use crate::tensor::{numel, Tensor};

const MAGIC: &str = "vlac-checkpoint 1";

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint<S> {
    pub meta: Vec<(String, String)>,
    pub tensors: Vec<(String, Tensor<S>)>,
}

impl<S: Real> Checkpoint<S> {
    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn tensor(&self, name: &str) -> Option<&Tensor<S>> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }
}

pub fn blob_path(manifest: &Path) -> PathBuf {
    manifest.with_extension("bin")
}

fn clean(field: &str, what: &str) -> Result<()> {
    if field.is_empty() || field.contains(['\t', '\n', '\r']) {
        return Err(Error::invalid(format!("checkpoint {what} `{field}` is empty or holds tabs/newlines")));
    }
    Ok(())
}

pub fn save<S: Real>(manifest: &Path, ckpt: &Checkpoint<S>) -> Result<()> {
    let blob = blob_path(manifest);
    let blob_name = blob
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| Error::invalid(format!("bad checkpoint path {}", manifest.display())))?
        .to_string();
    let mut text = format!("{MAGIC}\nblob {blob_name}\n");
    for (k, v) in &ckpt.meta {
        clean(k, "meta key")?;
        if v.contains(['\t', '\n', '\r']) {
            return Err(Error::invalid(format!("meta value for `{k}` holds tabs/newlines")));
        }
        text.push_str(&format!("meta\t{k}\t{v}\n"));
    }
    let mut bytes = Vec::new();
    for (name, t) in &ckpt.tensors {
        clean(name, "tensor name")?;
        let shape: Vec<String> = t.shape().iter().map(usize::to_string).collect();
        text.push_str(&format!(
            "tensor\t{name}\t{}\t{}\t{}\n",
            S::DTYPE,
            shape.join(","),
            bytes.len()
        ));
        for &v in t.data() {
            v.write_le(&mut bytes);
        }
    }
    if let Some(dir) = manifest.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(&blob, &bytes).map_err(|e| Error::io(&blob, e))?;
    fs::write(manifest, text).map_err(|e| Error::io(manifest, e))
}

/// Loads a checkpoint, converting stored values to `S` when the precision differs.
pub fn load<S: Real>(manifest: &Path) -> Result<Checkpoint<S>> {
    let text = fs::read_to_string(manifest).map_err(|e| Error::io(manifest, e))?;
    let mut lines = text.lines();
    let bad = |offset: usize, detail: String| Error::Format {
        offset: offset as u64,
        detail: format!("{}: {detail}", manifest.display()),
    };
    if lines.next() != Some(MAGIC) {
        return Err(bad(0, "missing checkpoint header".into()));
    }
    let mut offset = MAGIC.len() + 1;
    let blob_line = lines.next().unwrap_or_default();
    let blob_name = blob_line
        .strip_prefix("blob ")
        .ok_or_else(|| bad(offset, "missing blob line".into()))?;
    offset += blob_line.len() + 1;
    let blob = manifest.with_file_name(blob_name);
    let bytes = fs::read(&blob).map_err(|e| Error::io(&blob, e))?;

    let mut ckpt = Checkpoint {
        meta: Vec::new(),
        tensors: Vec::new(),
    };
    for line in lines {
        let fields: Vec<&str> = line.split('\t').collect();
        match fields.as_slice() {
            ["meta", k, v] => ckpt.meta.push((k.to_string(), v.to_string())),
            ["tensor", name, dtype, shape, start] => {
                let dtype = Dtype::parse(dtype).ok_or_else(|| bad(offset, format!("unknown dtype `{dtype}`")))?;
                let shape: Vec<usize> = if shape.is_empty() {
                    Vec::new()
                } else {
                    shape
                        .split(',')
                        .map(|d| d.parse().map_err(|_| bad(offset, format!("bad extent `{d}`"))))
                        .collect::<Result<_>>()?
                };
                let start: usize = start.parse().map_err(|_| bad(offset, format!("bad offset `{start}`")))?;
                let width = dtype.size();
                let end = start + numel(&shape) * width;
                let raw = bytes.get(start..end).ok_or_else(|| Error::Format {
                    offset: start as u64,
                    detail: format!("{}: tensor `{name}` runs past the end of the blob", blob.display()),
                })?;
                let data: Vec<S> = raw
                    .chunks_exact(width)
                    .map(|c| match dtype {
                        Dtype::F32 => S::lit(f32::read_le(c) as f64),
                        Dtype::F64 if S::DTYPE == Dtype::F64 => S::read_le(c),
                        Dtype::F64 => S::lit(f64::read_le(c)),
                    })
                    .collect();
                ckpt.tensors.push((name.to_string(), Tensor::new(shape, data)?));
            }
            [""] => {}
            _ => return Err(bad(offset, format!("unrecognised line `{line}`"))),
        }
        offset += line.len() + 1;
    }
    Ok(ckpt)
}
