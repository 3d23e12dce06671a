//! Patch extraction and uniform center sampling with background rejection.

use crate::error::{Error, Result};
use crate::volumes::{normalize_coord, Coord, Dims, Volume};
use rand::Rng;

/// Cubic sub-volume of odd side with its normalized center coordinate.
#[derive(Debug, Clone)]
pub struct Patch {
    pub values: Vec<f32>,
    pub center: Coord,
    pub s_p: usize,
}

/// Patches drawn from one source volume with their regression targets.
#[derive(Debug, Clone)]
pub struct PatchBatch {
    pub patches: Vec<Patch>,
    pub targets: Vec<Coord>,
}

impl PatchBatch {
    pub fn len(&self) -> usize {
        self.patches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patches.is_empty()
    }
}

/// Cuts the cube of side `s_p` centered at `center_idx`; positions outside
/// the volume are filled with `pad_value`.
pub fn extract_patch(
    v: &Volume,
    center_idx: [usize; 3],
    s_p: usize,
    pad_value: f32,
) -> Result<Patch> {
    if s_p % 2 == 0 {
        return Err(Error::Config(format!("patch size must be odd, got {s_p}")));
    }
    let dims = v.dims;
    if !dims.contains([center_idx[0] as i64, center_idx[1] as i64, center_idx[2] as i64]) {
        return Err(Error::IndexOutOfRange {
            index: [
                center_idx[0] as i64,
                center_idx[1] as i64,
                center_idx[2] as i64,
            ],
            dims: dims.as_array(),
        });
    }
    let half = (s_p / 2) as i64;
    let mut values = vec![pad_value; s_p * s_p * s_p];
    let (cx, cy, cz) = (
        center_idx[0] as i64,
        center_idx[1] as i64,
        center_idx[2] as i64,
    );

    for dz in -half..=half {
        let z = cz + dz;
        if z < 0 || z >= dims.z as i64 {
            continue;
        }
        for dy in -half..=half {
            let y = cy + dy;
            if y < 0 || y >= dims.y as i64 {
                continue;
            }
            // Clip the x-run once and copy it contiguously.
            let x0 = (cx - half).max(0);
            let x1 = (cx + half).min(dims.x as i64 - 1);
            if x0 > x1 {
                continue;
            }
            let src = dims.index(x0 as usize, y as usize, z as usize);
            let run = (x1 - x0 + 1) as usize;
            let px = (x0 - (cx - half)) as usize;
            let dst = (((dz + half) as usize * s_p) + (dy + half) as usize) * s_p + px;
            values[dst..dst + run].copy_from_slice(&v.voxels[src..src + run]);
        }
    }

    Ok(Patch {
        values,
        center: normalize_coord(center_idx, dims)?,
        s_p,
    })
}

/// True iff the patch footprint contains no foreground voxel at all;
/// positions outside the volume count as background.
pub fn is_background_patch(fg: &[bool], dims: Dims, center_idx: [usize; 3], s_p: usize) -> bool {
    let half = (s_p / 2) as i64;
    let (cx, cy, cz) = (
        center_idx[0] as i64,
        center_idx[1] as i64,
        center_idx[2] as i64,
    );
    let clamp = |lo: i64, hi: i64, n: usize| ((lo.max(0)) as usize, (hi.min(n as i64 - 1)) as usize);
    let (z0, z1) = clamp(cz - half, cz + half, dims.z);
    let (y0, y1) = clamp(cy - half, cy + half, dims.y);
    let (x0, x1) = clamp(cx - half, cx + half, dims.x);
    for z in z0..=z1 {
        for y in y0..=y1 {
            let row = dims.index(x0, y, z);
            if fg[row..row + (x1 - x0 + 1)].iter().any(|&b| b) {
                return false;
            }
        }
    }
    true
}

/// Draws centers uniformly over all voxel indices, discarding patches that
/// contain only background, until `n_patches` are accepted. The attempt
/// budget (100 per requested patch) turns pathological masks into a
/// diagnosable error.
pub fn sample_patch_batch(
    v: &Volume,
    fg: &[bool],
    n_patches: usize,
    s_p: usize,
    rng: &mut impl Rng,
) -> Result<PatchBatch> {
    if n_patches == 0 {
        return Err(Error::Config("n_patches must be >= 1".into()));
    }
    if fg.len() != v.dims.count() {
        return Err(Error::Shape(format!(
            "foreground mask length {} does not match volume {}",
            fg.len(),
            v.dims.count()
        )));
    }
    let dims = v.dims;
    let budget = 100 * n_patches;
    let mut patches = Vec::with_capacity(n_patches);
    let mut targets = Vec::with_capacity(n_patches);
    let mut attempts = 0usize;
    while patches.len() < n_patches && attempts < budget {
        attempts += 1;
        let idx = [
            rng.random_range(0..dims.x),
            rng.random_range(0..dims.y),
            rng.random_range(0..dims.z),
        ];
        if is_background_patch(fg, dims, idx, s_p) {
            continue;
        }
        let patch = extract_patch(v, idx, s_p, 0.0)?;
        targets.push(patch.center);
        patches.push(patch);
    }
    if patches.len() < n_patches {
        return Err(Error::Sampling(format!(
            "accepted only {}/{} patches in {} attempts (acceptance rate {:.3})",
            patches.len(),
            n_patches,
            attempts,
            patches.len() as f64 / attempts as f64
        )));
    }
    Ok(PatchBatch { patches, targets })
}
