//! VOL1 volume files and the dataset manifest.
//!
//! VOL1 layout: magic `VOL1`; three u32 little-endian dims (x, y, z); one
//! mask-count byte (0-4); voxels as little-endian f32, x fastest, then y,
//! then z; then each mask as a 16-byte null-padded ASCII name followed by
//! packed 0/1 bytes in voxel order.

use super::{CaseLabel, Dims, MaskSet, Volume};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

const MAGIC: &[u8; 4] = b"VOL1";
const MASK_NAME_LEN: usize = 16;
const MASK_NAMES: [&str; 4] = ["foreground", "skull", "hemi_left", "hemi_right"];

pub fn write_volume(path: &Path, v: &Volume, masks: Option<&MaskSet>) -> Result<()> {
    let file = fs::File::create(path).map_err(Error::io(path))?;
    let mut w = BufWriter::new(file);
    let io_err = |e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    };

    w.write_all(MAGIC).map_err(io_err)?;
    for d in v.dims.as_array() {
        w.write_all(&(d as u32).to_le_bytes()).map_err(io_err)?;
    }
    let mask_count = if masks.is_some() { 4u8 } else { 0u8 };
    w.write_all(&[mask_count]).map_err(io_err)?;

    let mut payload = Vec::with_capacity(v.voxels.len() * 4);
    for &x in &v.voxels {
        payload.extend_from_slice(&x.to_le_bytes());
    }
    w.write_all(&payload).map_err(io_err)?;

    if let Some(m) = masks {
        if m.dims != v.dims {
            return Err(Error::Shape(format!(
                "mask dims {:?} do not match volume dims {:?}",
                m.dims.as_array(),
                v.dims.as_array()
            )));
        }
        for (name, mask) in m.iter_named() {
            let mut name_bytes = [0u8; MASK_NAME_LEN];
            name_bytes[..name.len()].copy_from_slice(name.as_bytes());
            w.write_all(&name_bytes).map_err(io_err)?;
            let bytes: Vec<u8> = mask.iter().map(|&b| b as u8).collect();
            w.write_all(&bytes).map_err(io_err)?;
        }
    }
    w.flush().map_err(io_err)
}

pub fn read_volume(path: &Path) -> Result<(Volume, Option<MaskSet>)> {
    let file = fs::File::open(path).map_err(Error::io(path))?;
    let mut r = BufReader::new(file);
    let mut offset = 0u64;

    let format_err = |offset: u64, reason: String| Error::Format {
        path: path.to_path_buf(),
        offset,
        reason,
    };
    let mut read_exact = |r: &mut BufReader<fs::File>, buf: &mut [u8], what: &str| -> Result<u64> {
        let start = offset;
        r.read_exact(buf).map_err(|_| {
            format_err(start, format!("truncated while reading {what}"))
        })?;
        offset += buf.len() as u64;
        Ok(start)
    };

    let mut magic = [0u8; 4];
    read_exact(&mut r, &mut magic, "magic")?;
    if &magic != MAGIC {
        return Err(format_err(0, format!("bad magic {magic:?}, expected \"VOL1\"")));
    }

    let mut dim_bytes = [0u8; 12];
    read_exact(&mut r, &mut dim_bytes, "dims")?;
    let d = |i: usize| u32::from_le_bytes(dim_bytes[i * 4..i * 4 + 4].try_into().unwrap()) as usize;
    let dims = Dims {
        x: d(0),
        y: d(1),
        z: d(2),
    };
    if dims.count() == 0 || dims.count() > (1usize << 31) {
        return Err(format_err(4, format!("implausible dims {:?}", dims.as_array())));
    }

    let mut mask_count = [0u8; 1];
    read_exact(&mut r, &mut mask_count, "mask count")?;
    let mask_count = mask_count[0];
    if mask_count > 4 {
        return Err(format_err(16, format!("mask count {mask_count} exceeds 4")));
    }

    let n = dims.count();
    let mut voxel_bytes = vec![0u8; n * 4];
    read_exact(&mut r, &mut voxel_bytes, "voxel payload")?;
    let voxels: Vec<f32> = voxel_bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let volume = Volume::new(dims, voxels)?;

    let masks = if mask_count == 0 {
        None
    } else {
        let mut named: Vec<(String, Vec<bool>)> = Vec::new();
        for _ in 0..mask_count {
            let mut name_bytes = [0u8; MASK_NAME_LEN];
            let name_offset = read_exact(&mut r, &mut name_bytes, "mask name")?;
            let end = name_bytes.iter().position(|&b| b == 0).unwrap_or(MASK_NAME_LEN);
            let name = std::str::from_utf8(&name_bytes[..end])
                .map_err(|_| format_err(name_offset, "mask name is not ASCII".into()))?
                .to_string();
            let mut mask_bytes = vec![0u8; n];
            read_exact(&mut r, &mut mask_bytes, &format!("mask \"{name}\" payload"))?;
            named.push((name, mask_bytes.into_iter().map(|b| b != 0).collect()));
        }
        let mut find = |want: &str| -> Result<Vec<bool>> {
            named
                .iter()
                .position(|(name, _)| name == want)
                .map(|i| named.swap_remove(i).1)
                .ok_or_else(|| format_err(17 + n as u64 * 4, format!("missing mask \"{want}\"")))
        };
        Some(MaskSet {
            dims,
            foreground: find(MASK_NAMES[0])?,
            skull: find(MASK_NAMES[1])?,
            hemisphere_left: find(MASK_NAMES[2])?,
            hemisphere_right: find(MASK_NAMES[3])?,
        })
    };

    Ok((volume, masks))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// One dataset entry: a volume file, its labels, and the split it belongs to.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub labels: CaseLabel,
    pub split: Split,
}

pub fn write_manifest(path: &Path, entries: &[ManifestEntry]) -> Result<()> {
    let json = serde_json::to_string_pretty(entries)?;
    fs::write(path, json).map_err(Error::io(path))
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let data = fs::read_to_string(path).map_err(Error::io(path))?;
    Ok(serde_json::from_str(&data)?)
}

/// A manifest entry with its volume and masks loaded into memory.
pub struct LoadedCase {
    pub entry: ManifestEntry,
    pub volume: Volume,
    pub masks: Option<MaskSet>,
}

/// Loads every volume of the requested split. Relative manifest paths are
/// resolved against the manifest's directory.
pub fn load_dataset(manifest_path: &Path, split: Option<Split>) -> Result<Vec<LoadedCase>> {
    let entries = read_manifest(manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let mut cases = Vec::new();
    for entry in entries {
        if let Some(s) = split {
            if entry.split != s {
                continue;
            }
        }
        let full = if entry.path.is_absolute() {
            entry.path.clone()
        } else {
            base.join(&entry.path)
        };
        let (volume, masks) = read_volume(&full)?;
        cases.push(LoadedCase {
            entry,
            volume,
            masks,
        });
    }
    Ok(cases)
}
