//! Sliding-window error-map inference.

use super::{coords_loss, ErrorMap};
use crate::diffcore::{Network, ParamStore, Tensor5};
use crate::error::{Error, Result};
use crate::sampling::extract_patch;
use crate::volumes::{normalize_coord, Coord, Volume};
use rayon::prelude::*;

/// Patches evaluated per forward call during inference.
const INFER_CHUNK: usize = 512;

/// Computes the coordinate-prediction error for every voxel on the stride
/// lattice; skipped voxels take the value of their nearest lattice point.
/// Patches at the borders are zero padded. Values are independent of the
/// chunking used for batched evaluation.
pub fn infer_error_map_ppr(
    net: &Network,
    store: &ParamStore<f32>,
    v: &Volume,
    stride: usize,
) -> Result<ErrorMap> {
    let s_p = net.input_spatial[0];
    if net.input_spatial != [s_p; 3] || net.input_channels != 1 {
        return Err(Error::Config(
            "network does not take single-channel cubic patches".into(),
        ));
    }
    infer_error_map_ppr_with(
        |input| net.forward(store, input).map(|(out, _)| out),
        s_p,
        v,
        stride,
        INFER_CHUNK,
    )
}

/// Generic driver: `predict` maps a batch of patches (B,1,s,s,s) to
/// coordinate predictions (B,3,1,1,1). Exposed so alternative predictors
/// (ensembles, reference oracles) can reuse the sliding-window machinery.
pub fn infer_error_map_ppr_with(
    predict: impl Fn(&Tensor5<f32>) -> Result<Tensor5<f32>>,
    s_p: usize,
    v: &Volume,
    stride: usize,
    chunk: usize,
) -> Result<ErrorMap> {
    if stride < 1 {
        return Err(Error::Config("stride must be >= 1".into()));
    }
    if chunk < 1 {
        return Err(Error::Config("chunk must be >= 1".into()));
    }
    let dims = v.dims;
    let lat = |n: usize| -> Vec<usize> { (0..n).step_by(stride).collect() };
    let (lx, ly, lz) = (lat(dims.x), lat(dims.y), lat(dims.z));

    let mut centers = Vec::with_capacity(lx.len() * ly.len() * lz.len());
    for &z in &lz {
        for &y in &ly {
            for &x in &lx {
                centers.push([x, y, z]);
            }
        }
    }

    // Lattice errors in center order; chunks are independent forward passes.
    let mut lattice_err = vec![0.0f32; centers.len()];
    for (chunk_idx, batch) in centers.chunks(chunk).enumerate() {
        let patches: Vec<Vec<f32>> = batch
            .par_iter()
            .map(|&idx| extract_patch(v, idx, s_p, 0.0).map(|p| p.values))
            .collect::<Result<Vec<_>>>()?;
        let b = batch.len();
        let mut data = Vec::with_capacity(b * s_p * s_p * s_p);
        for p in &patches {
            data.extend_from_slice(p);
        }
        let input = Tensor5::from_vec([b, 1, s_p, s_p, s_p], data)?;
        let out = predict(&input)?;
        if out.shape() != [b, 3, 1, 1, 1] {
            return Err(Error::Shape(format!(
                "predictor returned shape {:?}, expected ({b}, 3, 1, 1, 1)",
                out.shape()
            )));
        }
        for (i, &idx) in batch.iter().enumerate() {
            let target = normalize_coord(idx, dims)?;
            let o = &out.data()[i * 3..(i + 1) * 3];
            let pred = Coord {
                x: o[0] as f64,
                y: o[1] as f64,
                z: o[2] as f64,
            };
            lattice_err[chunk_idx * chunk + i] = coords_loss(target, pred) as f32;
        }
    }

    // Nearest-lattice fill for the off-lattice voxels.
    let nearest = |x: usize, n_lat: usize| -> usize {
        let i = (x as f64 / stride as f64).round() as usize;
        i.min(n_lat - 1)
    };
    let mut values = vec![0.0f32; dims.count()];
    values
        .par_chunks_mut(dims.x * dims.y)
        .enumerate()
        .for_each(|(z, plane)| {
            let iz = nearest(z, lz.len());
            for y in 0..dims.y {
                let iy = nearest(y, ly.len());
                let row = y * dims.x;
                for x in 0..dims.x {
                    let ix = nearest(x, lx.len());
                    plane[row + x] = lattice_err[(iz * ly.len() + iy) * lx.len() + ix];
                }
            }
        });

    ErrorMap::new(dims, values)
}

/// Reconstruction error |I - net(I)| per voxel.
pub fn infer_error_map_ae(net: &Network, store: &ParamStore<f32>, v: &Volume) -> Result<ErrorMap> {
    infer_error_map_ae_with(|input| net.forward(store, input).map(|(out, _)| out), v)
}

/// Generic driver for reconstruction-style error maps.
pub fn infer_error_map_ae_with(
    reconstruct: impl Fn(&Tensor5<f32>) -> Result<Tensor5<f32>>,
    v: &Volume,
) -> Result<ErrorMap> {
    let dims = v.dims;
    let input = Tensor5::from_vec([1, 1, dims.z, dims.y, dims.x], v.voxels.clone())?;
    let out = reconstruct(&input)?;
    if out.shape() != input.shape() {
        return Err(Error::Shape(format!(
            "reconstruction shape {:?} does not match volume {:?}",
            out.shape(),
            input.shape()
        )));
    }
    let values = v
        .voxels
        .iter()
        .zip(out.data())
        .map(|(&a, &b)| (a - b).abs())
        .collect();
    ErrorMap::new(dims, values)
}
