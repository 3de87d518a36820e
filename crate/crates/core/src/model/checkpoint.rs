//! Checkpoint layout:
//!
//! ```text
//! u64 LE   header length H
//! H bytes  JSON header {"layers": [...], "global_len": N_u, "personalized_len": N_v}
//! f64 LE   N_u global parameters, then N_v personalized parameters
//! ```

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{ModelSpec, PartitionedModel};
use crate::{Error, Result};

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    layers: ModelSpec,
    global_len: usize,
    personalized_len: usize,
}

pub fn save_checkpoint<W: Write>(model: &PartitionedModel, mut out: W) -> Result<()> {
    let header = serde_json::to_vec(&Header {
        layers: model.spec.clone(),
        global_len: model.global_params.len(),
        personalized_len: model.personalized_params.len(),
    })?;
    out.write_all(&(header.len() as u64).to_le_bytes())?;
    out.write_all(&header)?;
    for w in model.global_params.iter().chain(&model.personalized_params) {
        out.write_all(&w.to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

pub fn load_checkpoint<R: Read>(mut input: R) -> Result<PartitionedModel> {
    let mut len = [0u8; 8];
    input
        .read_exact(&mut len)
        .map_err(|e| Error::Checkpoint(format!("reading header length: {e}")))?;
    let len = usize::try_from(u64::from_le_bytes(len))
        .map_err(|_| Error::Checkpoint("header length overflows".into()))?;
    let mut header = vec![0u8; len];
    input
        .read_exact(&mut header)
        .map_err(|e| Error::Checkpoint(format!("reading header: {e}")))?;
    let header: Header = serde_json::from_slice(&header)?;
    let sizes = header.layers.sizes();
    if sizes.global != header.global_len || sizes.personalized != header.personalized_len {
        return Err(Error::Checkpoint(
            "header lengths disagree with the layer list".into(),
        ));
    }
    let mut read_vec = |n: usize| -> Result<Vec<f64>> {
        let mut buf = vec![0u8; n * 8];
        input
            .read_exact(&mut buf)
            .map_err(|e| Error::Checkpoint(format!("reading parameters: {e}")))?;
        Ok(buf
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    };
    let global = read_vec(header.global_len)?;
    let personalized = read_vec(header.personalized_len)?;
    PartitionedModel::from_parts(header.layers, personalized, global)
}
