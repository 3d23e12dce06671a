//! Intensity and geometry preprocessing.

use super::{Dims, Volume};
use crate::error::{Error, Result};

/// Remaps intensities through the empirical CDF so the value distribution
/// flattens. When `mask` is given the CDF is computed over masked voxels only
/// but the mapping is applied everywhere.
pub fn equalize_histogram(v: &Volume, n_bins: usize, mask: Option<&[bool]>) -> Result<Volume> {
    if n_bins < 2 {
        return Err(Error::Config(format!(
            "equalize_histogram needs n_bins >= 2, got {n_bins}"
        )));
    }
    if v.voxels.is_empty() {
        return Err(Error::Config("equalize_histogram on empty volume".into()));
    }
    if let Some(m) = mask {
        if m.len() != v.voxels.len() {
            return Err(Error::Shape(format!(
                "mask length {} does not match voxel count {}",
                m.len(),
                v.voxels.len()
            )));
        }
    }

    let bin_of = |x: f32| -> usize {
        let b = (x.clamp(0.0, 1.0) as f64 * n_bins as f64) as usize;
        b.min(n_bins - 1)
    };

    let mut hist = vec![0u64; n_bins];
    let mut total = 0u64;
    for (i, &x) in v.voxels.iter().enumerate() {
        if mask.map_or(true, |m| m[i]) {
            hist[bin_of(x)] += 1;
            total += 1;
        }
    }
    if total == 0 {
        return Err(Error::Config(
            "equalize_histogram: mask selects no voxels".into(),
        ));
    }

    // cdf[b] = fraction of selected voxels with value <= upper edge of bin b.
    let mut cdf = vec![0.0f32; n_bins];
    let mut acc = 0u64;
    for b in 0..n_bins {
        acc += hist[b];
        cdf[b] = acc as f32 / total as f32;
    }

    let out = v.voxels.iter().map(|&x| cdf[bin_of(x)]).collect();
    let mut vol = Volume::new(v.dims, out)?;
    vol.spacing = v.spacing;
    Ok(vol)
}

/// Resamples onto `target_dims` by trilinear interpolation; both grids are
/// identified through the normalized frame (index / (dim - 1)).
pub fn resample_trilinear(v: &Volume, target_dims: Dims) -> Result<Volume> {
    let src = v.dims.as_array();
    let dst = target_dims.as_array();
    for axis in 0..3 {
        if src[axis] < 2 || dst[axis] < 2 {
            return Err(Error::Config(format!(
                "resample_trilinear requires dims >= 2 per axis, got {src:?} -> {dst:?}"
            )));
        }
    }

    let scale = |axis: usize| (src[axis] - 1) as f64 / (dst[axis] - 1) as f64;
    let (sx, sy, sz) = (scale(0), scale(1), scale(2));

    let mut out = vec![0.0f32; target_dims.count()];
    for z in 0..dst[2] {
        let fz = z as f64 * sz;
        let z0 = (fz.floor() as usize).min(src[2] - 2);
        let tz = fz - z0 as f64;
        for y in 0..dst[1] {
            let fy = y as f64 * sy;
            let y0 = (fy.floor() as usize).min(src[1] - 2);
            let ty = fy - y0 as f64;
            for x in 0..dst[0] {
                let fx = x as f64 * sx;
                let x0 = (fx.floor() as usize).min(src[0] - 2);
                let tx = fx - x0 as f64;

                let mut acc = 0.0f64;
                for (dz, wz) in [(0usize, 1.0 - tz), (1, tz)] {
                    for (dy, wy) in [(0usize, 1.0 - ty), (1, ty)] {
                        for (dx, wx) in [(0usize, 1.0 - tx), (1, tx)] {
                            let w = wz * wy * wx;
                            if w != 0.0 {
                                acc += w * v.at(x0 + dx, y0 + dy, z0 + dz) as f64;
                            }
                        }
                    }
                }
                out[target_dims.index(x, y, z)] = acc as f32;
            }
        }
    }
    let mut vol = Volume::new(target_dims, out)?;
    vol.spacing = v.spacing;
    Ok(vol)
}
