//! PPRC checkpoint container.
//!
//! Layout: magic `PPRC`; u32 little-endian JSON header length; the header
//! (layer specs, network-size parameter, input side, seed, epoch); u32
//! tensor count; then each parameter in declaration order as a u16 name
//! length + name, a trainable flag byte, u8 rank + u32 dims, and the values
//! as little-endian f32. Round-trips are bit-exact.

use super::network::LayerSpec;
use super::params::ParamStore;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

const MAGIC: &[u8; 4] = b"PPRC";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointHeader {
    /// Network config as embedded in run configs: "ppr" or "ae".
    pub kind: String,
    pub m: usize,
    pub input_side: usize,
    pub block_variant: String,
    pub seed: u64,
    pub epoch: usize,
    pub layers: Vec<LayerSpec>,
}

pub fn save_checkpoint(path: &Path, header: &CheckpointHeader, store: &ParamStore<f32>) -> Result<()> {
    let file = fs::File::create(path).map_err(Error::io(path))?;
    let mut w = BufWriter::new(file);
    let io_err = |e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    };

    w.write_all(MAGIC).map_err(io_err)?;
    let header_json = serde_json::to_vec(header)?;
    w.write_all(&(header_json.len() as u32).to_le_bytes())
        .map_err(io_err)?;
    w.write_all(&header_json).map_err(io_err)?;

    w.write_all(&(store.len() as u32).to_le_bytes()).map_err(io_err)?;
    for e in store.entries() {
        let name = e.name.as_bytes();
        w.write_all(&(name.len() as u16).to_le_bytes()).map_err(io_err)?;
        w.write_all(name).map_err(io_err)?;
        w.write_all(&[e.trainable as u8]).map_err(io_err)?;
        w.write_all(&[e.shape.len() as u8]).map_err(io_err)?;
        for &d in &e.shape {
            w.write_all(&(d as u32).to_le_bytes()).map_err(io_err)?;
        }
        let mut payload = Vec::with_capacity(e.value.len() * 4);
        for &x in &e.value {
            payload.extend_from_slice(&x.to_le_bytes());
        }
        w.write_all(&payload).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

pub fn load_checkpoint(path: &Path) -> Result<(CheckpointHeader, ParamStore<f32>)> {
    let file = fs::File::open(path).map_err(Error::io(path))?;
    let mut r = BufReader::new(file);
    let mut offset = 0u64;
    let format_err = |offset: u64, reason: String| Error::Format {
        path: path.to_path_buf(),
        offset,
        reason,
    };
    let mut read = |r: &mut BufReader<fs::File>, buf: &mut [u8], what: &str| -> Result<u64> {
        let start = offset;
        r.read_exact(buf)
            .map_err(|_| format_err(start, format!("truncated while reading {what}")))?;
        offset += buf.len() as u64;
        Ok(start)
    };

    let mut magic = [0u8; 4];
    read(&mut r, &mut magic, "magic")?;
    if &magic != MAGIC {
        return Err(format_err(0, format!("bad magic {magic:?}, expected \"PPRC\"")));
    }

    let mut len4 = [0u8; 4];
    read(&mut r, &mut len4, "header length")?;
    let header_len = u32::from_le_bytes(len4) as usize;
    let mut header_bytes = vec![0u8; header_len];
    read(&mut r, &mut header_bytes, "header")?;
    let header: CheckpointHeader = serde_json::from_slice(&header_bytes)?;

    read(&mut r, &mut len4, "tensor count")?;
    let n_tensors = u32::from_le_bytes(len4) as usize;

    let mut store = ParamStore::new();
    for _ in 0..n_tensors {
        let mut len2 = [0u8; 2];
        read(&mut r, &mut len2, "name length")?;
        let name_len = u16::from_le_bytes(len2) as usize;
        let mut name_bytes = vec![0u8; name_len];
        let name_offset = read(&mut r, &mut name_bytes, "name")?;
        let name = String::from_utf8(name_bytes)
            .map_err(|_| format_err(name_offset, "parameter name is not UTF-8".into()))?;
        let mut flag = [0u8; 1];
        read(&mut r, &mut flag, "trainable flag")?;
        let mut rank = [0u8; 1];
        read(&mut r, &mut rank, "rank")?;
        let mut shape = Vec::with_capacity(rank[0] as usize);
        for _ in 0..rank[0] {
            read(&mut r, &mut len4, "dim")?;
            shape.push(u32::from_le_bytes(len4) as usize);
        }
        let numel: usize = shape.iter().product();
        let mut payload = vec![0u8; numel * 4];
        read(&mut r, &mut payload, &format!("values of {name}"))?;
        let values: Vec<f32> = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        store.add_or_bind(&name, shape, || values, flag[0] != 0)?;
    }

    Ok((header, store))
}
