//! Volume representation, the normalized coordinate system, preprocessing and
//! the synthetic phantom generator.

mod dataset;
mod io;
mod phantom;
mod preprocess;

pub use dataset::{generate_dataset, DatasetConfig, DEFAULT_TEST_HEALTHY_FRAC};
pub use io::{
    load_dataset, read_manifest, read_volume, write_manifest, write_volume, LoadedCase,
    ManifestEntry, Split,
};
pub use phantom::{generate_phantom, Anomaly, PhantomConfig};
pub use preprocess::{equalize_histogram, resample_trilinear};

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Grid dimensions, x fastest in memory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub x: usize,
    pub y: usize,
    pub z: usize,
}

impl Dims {
    pub fn cube(n: usize) -> Self {
        Dims { x: n, y: n, z: n }
    }

    pub fn count(&self) -> usize {
        self.x * self.y * self.z
    }

    /// Linear index, x fastest, then y, then z.
    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        debug_assert!(x < self.x && y < self.y && z < self.z);
        (z * self.y + y) * self.x + x
    }

    pub fn contains(&self, idx: [i64; 3]) -> bool {
        idx[0] >= 0
            && idx[1] >= 0
            && idx[2] >= 0
            && (idx[0] as usize) < self.x
            && (idx[1] as usize) < self.y
            && (idx[2] as usize) < self.z
    }

    pub fn as_array(&self) -> [usize; 3] {
        [self.x, self.y, self.z]
    }
}

/// Dense scalar 3D grid. Values are expected to lie in [0, 1] after
/// preprocessing; `spacing` is informational only.
#[derive(Debug, Clone)]
pub struct Volume {
    pub dims: Dims,
    pub voxels: Vec<f32>,
    pub spacing: [f32; 3],
}

impl Volume {
    pub fn new(dims: Dims, voxels: Vec<f32>) -> Result<Self> {
        if voxels.len() != dims.count() {
            return Err(Error::Shape(format!(
                "volume data length {} does not match dims {:?}",
                voxels.len(),
                dims.as_array()
            )));
        }
        Ok(Volume {
            dims,
            voxels,
            spacing: [1.0; 3],
        })
    }

    pub fn filled(dims: Dims, value: f32) -> Self {
        Volume {
            dims,
            voxels: vec![value; dims.count()],
            spacing: [1.0; 3],
        }
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize, z: usize) -> f32 {
        self.voxels[self.dims.index(x, y, z)]
    }
}

/// A position inside the unit cube; the regression target space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coord {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Coord {
    pub fn as_array(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }
}

/// Maps a voxel index to [0,1]^3. Component d is `idx_d / (dims_d - 1)` so
/// both extreme indices land exactly on 0 and 1.
pub fn normalize_coord(idx: [usize; 3], dims: Dims) -> Result<Coord> {
    let d = dims.as_array();
    for axis in 0..3 {
        if d[axis] < 2 {
            return Err(Error::Config(format!(
                "normalize_coord requires dims >= 2 per axis, got {:?}",
                d
            )));
        }
        if idx[axis] >= d[axis] {
            return Err(Error::IndexOutOfRange {
                index: [idx[0] as i64, idx[1] as i64, idx[2] as i64],
                dims: d,
            });
        }
    }
    Ok(Coord {
        x: idx[0] as f64 / (d[0] - 1) as f64,
        y: idx[1] as f64 / (d[1] - 1) as f64,
        z: idx[2] as f64 / (d[2] - 1) as f64,
    })
}

/// Inverse of [`normalize_coord`]: rounds to the nearest integer index.
pub fn denormalize_coord(c: Coord, dims: Dims) -> [usize; 3] {
    let clamp = |v: f64, n: usize| -> usize {
        let i = (v * (n - 1) as f64).round();
        i.clamp(0.0, (n - 1) as f64) as usize
    };
    [
        clamp(c.x, dims.x),
        clamp(c.y, dims.y),
        clamp(c.z, dims.z),
    ]
}

/// Ground-truth masks accompanying a volume. All four share the volume's
/// dims; hemisphere masks are disjoint subsets of the foreground.
#[derive(Debug, Clone)]
pub struct MaskSet {
    pub dims: Dims,
    pub foreground: Vec<bool>,
    pub skull: Vec<bool>,
    pub hemisphere_left: Vec<bool>,
    pub hemisphere_right: Vec<bool>,
}

impl MaskSet {
    pub fn validate(&self) -> Result<()> {
        let n = self.dims.count();
        for (name, m) in self.iter_named() {
            if m.len() != n {
                return Err(Error::Shape(format!(
                    "mask {name} has {} entries, expected {n}",
                    m.len()
                )));
            }
        }
        for i in 0..n {
            if self.hemisphere_left[i] && self.hemisphere_right[i] {
                return Err(Error::Validation(format!(
                    "hemisphere masks overlap at linear index {i}"
                )));
            }
            if (self.hemisphere_left[i] || self.hemisphere_right[i]) && !self.foreground[i] {
                return Err(Error::Validation(format!(
                    "hemisphere mask outside foreground at linear index {i}"
                )));
            }
        }
        Ok(())
    }

    pub fn iter_named(&self) -> impl Iterator<Item = (&'static str, &Vec<bool>)> {
        [
            ("foreground", &self.foreground),
            ("skull", &self.skull),
            ("hemi_left", &self.hemisphere_left),
            ("hemi_right", &self.hemisphere_right),
        ]
        .into_iter()
    }
}

/// Per-volume case label; a case is healthy iff all three findings are absent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct CaseLabel {
    pub bleeding_left: bool,
    pub bleeding_right: bool,
    pub fracture: bool,
}

impl CaseLabel {
    pub fn is_healthy(&self) -> bool {
        !self.bleeding_left && !self.bleeding_right && !self.fracture
    }
}
