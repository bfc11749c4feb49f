//! Binary checkpoint container.
//!
//! Layout (little endian):
//!
//! ```text
//! b"PAAECKPT" | u32 version | u64 header length | JSON header | f64 tensor data
//! ```
//!
//! The JSON header carries the architecture, pathway masks, gene names and the
//! shape of every tensor; tensor data follows in [`ModelParams::tensors`] order.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ndcore::Matrix;

use super::{ArchitectureConfig, Dense, LayerStack, Model, ModelParams, PathwayMask};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"PAAECKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    arch: ArchitectureConfig,
    gene_names: Vec<String>,
    pathways: Vec<PathwayMask>,
    tensors: Vec<(usize, usize)>,
}

pub fn checkpoint_to_bytes(model: &Model) -> Result<Vec<u8>> {
    model.validate()?;
    let tensors = model.params.tensors();
    let header = Header {
        arch: model.arch.clone(),
        gene_names: model.gene_names.clone(),
        pathways: model.masks.clone(),
        tensors: tensors.iter().map(|t| t.shape()).collect(),
    };
    let json = serde_json::to_vec(&header).map_err(|e| Error::Serde(e.to_string()))?;
    let payload: usize = tensors.iter().map(|t| t.len()).sum();
    let mut out = Vec::with_capacity(20 + json.len() + 8 * payload);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for t in tensors {
        for v in t.as_slice() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn checkpoint_from_bytes(bytes: &[u8]) -> Result<Model> {
    let bad = |msg: &str| Error::Data(format!("invalid checkpoint: {msg}"));
    if bytes.len() < 20 || &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(bad("missing magic header"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(bad(&format!("unsupported version {version}")));
    }
    let header_len = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
    let body = &bytes[20..];
    if body.len() < header_len {
        return Err(bad("truncated header"));
    }
    let header: Header = serde_json::from_slice(&body[..header_len]).map_err(|e| bad(&e.to_string()))?;
    let mut data = &body[header_len..];

    let mut tensors = Vec::with_capacity(header.tensors.len());
    for &(r, c) in &header.tensors {
        let need = r * c * 8;
        if data.len() < need {
            return Err(bad("truncated tensor data"));
        }
        let values = data[..need].chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes"))).collect();
        tensors.push(Matrix::new(r, c, values)?);
        data = &data[need..];
    }
    if !data.is_empty() {
        return Err(bad("trailing bytes after tensor data"));
    }

    let arch = header.arch;
    let pathway_layers = arch.pathway_hidden_sizes.len() + 1;
    let stacks = if arch.kind.uses_pathways() { header.pathways.len() } else { 0 };
    let expected = 2 * (stacks * pathway_layers + arch.encoder_layer_sizes.len() + arch.decoder_hidden().len() + 1);
    if tensors.len() != expected {
        return Err(bad(&format!("expected {expected} tensors, found {}", tensors.len())));
    }
    let mut it = tensors.into_iter();
    let mut take_stack = |layers: usize| LayerStack {
        layers: (0..layers)
            .map(|_| Dense { weight: it.next().expect("counted"), bias: it.next().expect("counted") })
            .collect(),
    };
    let pathway_encoders = (0..stacks).map(|_| take_stack(pathway_layers)).collect();
    let encoder = take_stack(arch.encoder_layer_sizes.len());
    let decoder = take_stack(arch.decoder_hidden().len() + 1);
    let model = Model {
        arch,
        masks: header.pathways,
        gene_names: header.gene_names,
        params: ModelParams { pathway_encoders, encoder, decoder },
    };
    model.validate()?;
    Ok(model)
}

pub fn save_checkpoint(model: &Model, path: &Path) -> Result<()> {
    let bytes = checkpoint_to_bytes(model)?;
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Model> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    checkpoint_from_bytes(&bytes)
}
