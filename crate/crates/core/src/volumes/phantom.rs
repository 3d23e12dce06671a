//! Synthetic head phantom generator.
//!
//! Emits an ellipsoidal bright shell ("skull") around a textured interior
//! split into two hemispheres by the mid-sagittal plane. The interior
//! combines smooth monotone intensity gradients with fixed asymmetric
//! landmarks so that a patch's position within the volume is inferable from
//! its content alone; per-seed value noise and slight shape jitter make every
//! phantom distinct while keeping the position cues stable across cases.

use super::{CaseLabel, Dims, MaskSet, Volume};
use crate::error::{Error, Result};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_chacha::rand_core::SeedableRng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Anomaly {
    None,
    BlobLeft,
    BlobRight,
    ShellBreak,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PhantomConfig {
    /// Grid side; the volume is n^3.
    pub n: usize,
    pub seed: u64,
    pub anomaly: Anomaly,
    /// Blob radius as a fraction of n.
    pub anomaly_radius_frac: f64,
    /// Amplitude multiplier for the value-noise texture.
    pub texture_scale: f64,
}

impl PhantomConfig {
    pub fn healthy(n: usize, seed: u64) -> Self {
        PhantomConfig {
            n,
            seed,
            anomaly: Anomaly::None,
            anomaly_radius_frac: 0.09,
            texture_scale: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 32 {
            return Err(Error::Config(format!(
                "phantom grid side must be >= 32, got {}",
                self.n
            )));
        }
        if !(self.anomaly_radius_frac > 0.0 && self.anomaly_radius_frac <= 0.2) {
            return Err(Error::Config(format!(
                "anomaly_radius_frac must lie in (0, 0.2], got {}",
                self.anomaly_radius_frac
            )));
        }
        if self.anomaly_radius_frac * (self.n as f64) < 2.0 {
            return Err(Error::Config(
                "anomaly radius must span at least 2 voxels".into(),
            ));
        }
        if !(self.texture_scale >= 0.0) {
            return Err(Error::Config("texture_scale must be >= 0".into()));
        }
        Ok(())
    }
}

/// Interior occupies ellipsoid radii below this; the shell sits above it.
const SHELL_INNER: f64 = 0.86;

/// Fixed dipole direction for the angular intensity cues. Tilted off every
/// axis so no mirror position sees the same signal.
const ANGULAR_DIPOLE: [f64; 3] = [0.62, 0.55, 0.56];

/// Smooth value noise: a seeded coarse grid interpolated trilinearly.
struct ValueNoise {
    grid: Vec<f64>,
    side: usize,
}

impl ValueNoise {
    fn new(rng: &mut ChaCha8Rng, side: usize) -> Self {
        let grid = (0..side * side * side)
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        ValueNoise { grid, side }
    }

    fn at(&self, ux: f64, uy: f64, uz: f64) -> f64 {
        let s = (self.side - 1) as f64;
        let (fx, fy, fz) = (ux * s, uy * s, uz * s);
        let cell = |f: f64| -> (usize, f64) {
            let i = (f.floor() as usize).min(self.side - 2);
            (i, f - i as f64)
        };
        let ((x0, tx), (y0, ty), (z0, tz)) = (cell(fx), cell(fy), cell(fz));
        let g = |x: usize, y: usize, z: usize| self.grid[(z * self.side + y) * self.side + x];
        let mut acc = 0.0;
        for dz in 0..2usize {
            for dy in 0..2usize {
                for dx in 0..2usize {
                    let w = (if dx == 0 { 1.0 - tx } else { tx })
                        * (if dy == 0 { 1.0 - ty } else { ty })
                        * (if dz == 0 { 1.0 - tz } else { tz });
                    acc += w * g(x0 + dx, y0 + dy, z0 + dz);
                }
            }
        }
        acc
    }
}

struct Geometry {
    center: [f64; 3],
    semi: [f64; 3],
}

impl Geometry {
    /// Normalized ellipsoid coordinates; radius 1.0 on the outer surface.
    fn unit(&self, x: usize, y: usize, z: usize) -> [f64; 3] {
        [
            (x as f64 - self.center[0]) / self.semi[0],
            (y as f64 - self.center[1]) / self.semi[1],
            (z as f64 - self.center[2]) / self.semi[2],
        ]
    }

    /// Angular dipole in [-1, 1]: a direction-dependent cue that stays
    /// constant along each radius, so every patch near the shell sees a
    /// brightness tied to where on the head it sits.
    fn dipole(&self, e: [f64; 3], rho: f64) -> f64 {
        if rho <= 0.0 {
            return 0.0;
        }
        (e[0] * ANGULAR_DIPOLE[0] + e[1] * ANGULAR_DIPOLE[1] + e[2] * ANGULAR_DIPOLE[2]) / rho
    }
}

fn gauss(dx: f64, dy: f64, dz: f64, sigma: f64) -> f64 {
    (-(dx * dx + dy * dy + dz * dz) / (2.0 * sigma * sigma)).exp()
}

/// Deterministic phantom generation; equal seeds give bit-identical output.
pub fn generate_phantom(cfg: &PhantomConfig) -> Result<(Volume, MaskSet, CaseLabel)> {
    cfg.validate()?;
    let n = cfg.n;
    let dims = Dims::cube(n);
    let nf = (n - 1) as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let jitter = |rng: &mut ChaCha8Rng, a: f64| rng.random_range(-a..a);
    let geo = Geometry {
        center: [nf * 0.5, nf * 0.5, nf * 0.5],
        semi: [
            nf * 0.44 * (1.0 + jitter(&mut rng, 0.02)),
            nf * 0.40 * (1.0 + jitter(&mut rng, 0.02)),
            nf * 0.42 * (1.0 + jitter(&mut rng, 0.02)),
        ],
    };
    let noise = ValueNoise::new(&mut rng, 9);

    // Fixed landmarks in unit coordinates with a small per-seed jitter.
    let lm = |rng: &mut ChaCha8Rng, p: [f64; 3]| -> [f64; 3] {
        [
            (p[0] + jitter(rng, 0.005)) * nf,
            (p[1] + jitter(rng, 0.005)) * nf,
            (p[2] + jitter(rng, 0.005)) * nf,
        ]
    };
    let ventricle_l = lm(&mut rng, [0.42, 0.46, 0.50]);
    let ventricle_r = lm(&mut rng, [0.58, 0.46, 0.50]);
    let bright_anterior = lm(&mut rng, [0.50, 0.72, 0.56]);
    let dark_posterior = lm(&mut rng, [0.34, 0.30, 0.36]);

    let mut voxels = vec![0.0f32; dims.count()];
    let mut foreground = vec![false; dims.count()];
    let mut skull = vec![false; dims.count()];
    let mut hemi_left = vec![false; dims.count()];
    let mut hemi_right = vec![false; dims.count()];

    let noise_amp = 0.03 * cfg.texture_scale;
    for z in 0..n {
        for y in 0..n {
            for x in 0..n {
                let e = geo.unit(x, y, z);
                let rho = (e[0] * e[0] + e[1] * e[1] + e[2] * e[2]).sqrt();
                if rho > 1.0 {
                    continue;
                }
                let i = dims.index(x, y, z);
                foreground[i] = true;
                let (ux, uy, uz) = (x as f64 / nf, y as f64 / nf, z as f64 / nf);
                let tex = noise_amp * noise.at(ux, uy, uz);
                let dipole = geo.dipole(e, rho);

                if rho >= SHELL_INNER {
                    skull[i] = true;
                    // Angular brightness modulation keeps shell patches
                    // position-identifiable.
                    let v = 0.88 + 0.06 * dipole + 0.6 * tex;
                    voxels[i] = v.clamp(0.80, 0.95) as f32;
                    continue;
                }

                if (x as f64) < geo.center[0] {
                    hemi_left[i] = true;
                } else if (x as f64) > geo.center[0] {
                    hemi_right[i] = true;
                }

                // Monotone per-axis gradients carry the coarse position
                // signal; the periphery-weighted dipole disambiguates
                // near-shell patches that see little interior.
                let mut v = 0.45
                    + 0.17 * (std::f64::consts::PI * (ux - 0.5)).sin()
                    + 0.12 * (std::f64::consts::PI * (uy - 0.5)).sin()
                    + 0.09 * (std::f64::consts::PI * (uz - 0.5)).sin()
                    + 0.12 * dipole * (rho / SHELL_INNER).powi(2);

                // Asymmetric landmarks break the remaining ambiguities.
                // Additive shifts keep the gradient fields readable inside
                // the landmark bodies.
                let (xf, yf, zf) = (x as f64, y as f64, z as f64);
                let vent = gauss(
                    xf - ventricle_l[0],
                    yf - ventricle_l[1],
                    zf - ventricle_l[2],
                    0.065 * n as f64,
                ) + gauss(
                    xf - ventricle_r[0],
                    yf - ventricle_r[1],
                    zf - ventricle_r[2],
                    0.065 * n as f64,
                );
                v -= 0.22 * vent.min(1.0);
                v += 0.16
                    * gauss(
                        xf - bright_anterior[0],
                        yf - bright_anterior[1],
                        zf - bright_anterior[2],
                        0.05 * n as f64,
                    );
                v -= 0.14
                    * gauss(
                        xf - dark_posterior[0],
                        yf - dark_posterior[1],
                        zf - dark_posterior[2],
                        0.06 * n as f64,
                    );
                v += tex;
                voxels[i] = v.clamp(0.05, 0.82) as f32;
            }
        }
    }

    let mut label = CaseLabel::default();
    match cfg.anomaly {
        Anomaly::None => {}
        Anomaly::BlobLeft | Anomaly::BlobRight => {
            let left = cfg.anomaly == Anomaly::BlobLeft;
            let hemi = if left { &hemi_left } else { &hemi_right };
            place_blob(cfg, &geo, dims, hemi, &mut voxels, &mut rng, left)?;
            if left {
                label.bleeding_left = true;
            } else {
                label.bleeding_right = true;
            }
        }
        Anomaly::ShellBreak => {
            break_shell(&geo, dims, &skull, &mut voxels, &mut rng);
            label.fracture = true;
        }
    }

    let volume = Volume::new(dims, voxels)?;
    let masks = MaskSet {
        dims,
        foreground,
        skull,
        hemisphere_left: hemi_left,
        hemisphere_right: hemi_right,
    };
    Ok((volume, masks, label))
}

/// Adds a bright sphere fully inside the given hemisphere mask.
fn place_blob(
    cfg: &PhantomConfig,
    geo: &Geometry,
    dims: Dims,
    hemi: &[bool],
    voxels: &mut [f32],
    rng: &mut ChaCha8Rng,
    left: bool,
) -> Result<()> {
    let r = cfg.anomaly_radius_frac * cfg.n as f64;
    let side = if left { -1.0 } else { 1.0 };

    let fits = |c: [f64; 3]| -> bool {
        let (lo, hi) = (|v: f64| (v - r).floor() as i64, |v: f64| (v + r).ceil() as i64);
        for z in lo(c[2])..=hi(c[2]) {
            for y in lo(c[1])..=hi(c[1]) {
                for x in lo(c[0])..=hi(c[0]) {
                    let d = ((x as f64 - c[0]).powi(2)
                        + (y as f64 - c[1]).powi(2)
                        + (z as f64 - c[2]).powi(2))
                    .sqrt();
                    if d > r {
                        continue;
                    }
                    if !dims.contains([x, y, z]) || !hemi[dims.index(x as usize, y as usize, z as usize)]
                    {
                        return false;
                    }
                }
            }
        }
        true
    };

    for attempt in 0..64 {
        // Start well inside the hemisphere, pull toward its center on retries.
        let shrink = 1.0 - attempt as f64 / 96.0;
        let c = [
            geo.center[0] + side * (0.40 + rng.random_range(-0.08..0.08)) * geo.semi[0] * shrink,
            geo.center[1] + rng.random_range(-0.25..0.25) * geo.semi[1] * shrink,
            geo.center[2] + rng.random_range(-0.25..0.25) * geo.semi[2] * shrink,
        ];
        if !fits(c) {
            continue;
        }
        let (lo, hi) = (|v: f64| (v - r).floor() as i64, |v: f64| (v + r).ceil() as i64);
        for z in lo(c[2])..=hi(c[2]) {
            for y in lo(c[1])..=hi(c[1]) {
                for x in lo(c[0])..=hi(c[0]) {
                    let d = ((x as f64 - c[0]).powi(2)
                        + (y as f64 - c[1]).powi(2)
                        + (z as f64 - c[2]).powi(2))
                    .sqrt();
                    if d > r {
                        continue;
                    }
                    let i = dims.index(x as usize, y as usize, z as usize);
                    let edge = ((r - d) / 1.5).clamp(0.0, 1.0) as f32;
                    voxels[i] = voxels[i].max(0.65 + 0.35 * edge);
                }
            }
        }
        return Ok(());
    }
    Err(Error::Generation(format!(
        "cannot fit blob of radius {r:.1} voxels inside hemisphere"
    )))
}

/// Zeroes a contiguous angular segment of the shell.
fn break_shell(geo: &Geometry, dims: Dims, skull: &[bool], voxels: &mut [f32], rng: &mut ChaCha8Rng) {
    let mut dir: [f64; 3] = [
        0.85 + rng.random_range(-0.15..0.15),
        0.30 + rng.random_range(-0.15..0.15),
        0.40 + rng.random_range(-0.15..0.15),
    ];
    let norm = (dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2]).sqrt();
    dir = [dir[0] / norm, dir[1] / norm, dir[2] / norm];
    let half_angle: f64 = 0.30 + rng.random_range(0.0..0.12);
    let cos_limit = half_angle.cos();

    for z in 0..dims.z {
        for y in 0..dims.y {
            for x in 0..dims.x {
                let i = dims.index(x, y, z);
                if !skull[i] {
                    continue;
                }
                let e = [
                    (x as f64 - geo.center[0]) / geo.semi[0],
                    (y as f64 - geo.center[1]) / geo.semi[1],
                    (z as f64 - geo.center[2]) / geo.semi[2],
                ];
                let len = (e[0] * e[0] + e[1] * e[1] + e[2] * e[2]).sqrt();
                if len == 0.0 {
                    continue;
                }
                let cos = (e[0] * dir[0] + e[1] * dir[1] + e[2] * dir[2]) / len;
                if cos >= cos_limit {
                    voxels[i] = 0.0;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn healthy_case_contract() {
        let cfg = PhantomConfig::healthy(32, 1);
        let (v, masks, label) = generate_phantom(&cfg).unwrap();
        assert!(label.is_healthy());
        assert!(masks.foreground.iter().any(|&b| b));
        masks.validate().unwrap();
        assert!(v.voxels.iter().all(|&x| (0.0..=1.0).contains(&x)));
        // Background voxels are exactly zero.
        for (i, &fg) in masks.foreground.iter().enumerate() {
            if !fg {
                assert_eq!(v.voxels[i], 0.0);
            }
        }
    }

    #[test]
    fn blob_left_label_and_mask_contract() {
        let mut cfg = PhantomConfig::healthy(48, 5);
        cfg.anomaly = Anomaly::BlobLeft;
        let healthy = generate_phantom(&PhantomConfig::healthy(48, 5)).unwrap();
        let (v, masks, label) = generate_phantom(&cfg).unwrap();
        assert!(label.bleeding_left && !label.bleeding_right && !label.fracture);
        // Changed voxels all lie inside the left hemisphere mask.
        for i in 0..v.voxels.len() {
            if v.voxels[i] != healthy.0.voxels[i] {
                assert!(masks.hemisphere_left[i]);
            }
        }
        assert!(v.voxels.iter().zip(&healthy.0.voxels).any(|(a, b)| a != b));
    }

    #[test]
    fn shell_break_sets_fracture_and_zeroes_shell() {
        let mut cfg = PhantomConfig::healthy(48, 9);
        cfg.anomaly = Anomaly::ShellBreak;
        let (v, masks, label) = generate_phantom(&cfg).unwrap();
        assert!(label.fracture && !label.bleeding_left && !label.bleeding_right);
        let zeroed = masks
            .skull
            .iter()
            .enumerate()
            .filter(|&(i, &s)| s && v.voxels[i] == 0.0)
            .count();
        assert!(zeroed > 0, "no shell voxels were zeroed");
    }

    #[test]
    fn determinism_and_seed_variation() {
        let cfg = PhantomConfig::healthy(32, 42);
        let a = generate_phantom(&cfg).unwrap();
        let b = generate_phantom(&cfg).unwrap();
        assert_eq!(a.0.voxels, b.0.voxels);

        let other = generate_phantom(&PhantomConfig::healthy(32, 43)).unwrap();
        let fg_count = a.1.foreground.iter().filter(|&&m| m).count();
        let differing = a
            .0
            .voxels
            .iter()
            .zip(&other.0.voxels)
            .zip(&a.1.foreground)
            .filter(|((x, y), &fg)| fg && x != y)
            .count();
        assert!(
            differing as f64 > 0.01 * fg_count as f64,
            "seeds 42/43 differ in only {differing}/{fg_count} foreground voxels"
        );
    }

    #[test]
    fn mask_invariants_across_seeds() {
        for seed in 0..6 {
            let (_, masks, _) = generate_phantom(&PhantomConfig::healthy(34, seed)).unwrap();
            masks.validate().unwrap();
        }
    }

    #[test]
    fn oversized_blob_is_a_generation_error() {
        let mut cfg = PhantomConfig::healthy(32, 3);
        cfg.anomaly = Anomaly::BlobLeft;
        cfg.anomaly_radius_frac = 0.2;
        match generate_phantom(&cfg) {
            Err(Error::Generation(_)) => {}
            other => panic!("expected generation error, got {other:?}"),
        }
    }

    #[test]
    fn invalid_config_rejected() {
        let mut cfg = PhantomConfig::healthy(16, 0);
        assert!(cfg.validate().is_err());
        cfg.n = 32;
        cfg.anomaly_radius_frac = 0.5;
        assert!(cfg.validate().is_err());
    }
}
