//! Error-map post-filters: median and grayscale erosion with replicate
//! border padding.

use super::ErrorMap;
use crate::error::{Error, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterKind {
    Median,
    GreyErosion,
}

/// Applies a k^3 neighborhood filter. k must be odd; k = 1 is the identity.
pub fn filter_error_map(map: &ErrorMap, kind: FilterKind, k: usize) -> Result<ErrorMap> {
    if k % 2 == 0 || k == 0 {
        return Err(Error::Config(format!("filter size must be odd, got {k}")));
    }
    if k == 1 {
        return Ok(map.clone());
    }
    let dims = map.dims;
    let half = (k / 2) as i64;
    let (nx, ny, nz) = (dims.x as i64, dims.y as i64, dims.z as i64);
    let mut out = vec![0.0f32; map.values.len()];

    out.par_chunks_mut(dims.x * dims.y)
        .enumerate()
        .for_each(|(z, plane)| {
            let mut hood = Vec::with_capacity(k * k * k);
            for y in 0..dims.y {
                for x in 0..dims.x {
                    hood.clear();
                    for dz in -half..=half {
                        let zz = (z as i64 + dz).clamp(0, nz - 1) as usize;
                        for dy in -half..=half {
                            let yy = (y as i64 + dy).clamp(0, ny - 1) as usize;
                            for dx in -half..=half {
                                let xx = (x as i64 + dx).clamp(0, nx - 1) as usize;
                                hood.push(map.values[dims.index(xx, yy, zz)]);
                            }
                        }
                    }
                    plane[y * dims.x + x] = match kind {
                        FilterKind::Median => {
                            let mid = hood.len() / 2;
                            *hood
                                .select_nth_unstable_by(mid, |a, b| a.partial_cmp(b).unwrap())
                                .1
                        }
                        FilterKind::GreyErosion => hood.iter().copied().fold(f32::INFINITY, f32::min),
                    };
                }
            }
        });

    ErrorMap::new(dims, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volumes::Dims;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_map(n: usize, seed: u64) -> ErrorMap {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dims = Dims::cube(n);
        ErrorMap::new(dims, (0..dims.count()).map(|_| rng.random()).collect()).unwrap()
    }

    #[test]
    fn k1_is_identity() {
        let map = random_map(6, 1);
        for kind in [FilterKind::Median, FilterKind::GreyErosion] {
            let out = filter_error_map(&map, kind, 1).unwrap();
            assert_eq!(out.values, map.values);
        }
    }

    #[test]
    fn even_k_is_config_error() {
        let map = random_map(4, 2);
        assert!(filter_error_map(&map, FilterKind::Median, 4).is_err());
    }

    #[test]
    fn median_removes_isolated_spike() {
        let dims = Dims::cube(7);
        let mut values = vec![0.0f32; dims.count()];
        values[dims.index(3, 3, 3)] = 1.0;
        let map = ErrorMap::new(dims, values).unwrap();
        let out = filter_error_map(&map, FilterKind::Median, 3).unwrap();
        assert!(out.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn erosion_matches_neighborhood_min_oracle_and_is_anti_extensive() {
        let map = random_map(6, 3);
        let out = filter_error_map(&map, FilterKind::GreyErosion, 3).unwrap();
        let dims = map.dims;
        for z in 0..6usize {
            for y in 0..6usize {
                for x in 0..6usize {
                    let mut lo = f32::INFINITY;
                    for dz in -1i64..=1 {
                        for dy in -1i64..=1 {
                            for dx in -1i64..=1 {
                                let zz = (z as i64 + dz).clamp(0, 5) as usize;
                                let yy = (y as i64 + dy).clamp(0, 5) as usize;
                                let xx = (x as i64 + dx).clamp(0, 5) as usize;
                                lo = lo.min(map.values[dims.index(xx, yy, zz)]);
                            }
                        }
                    }
                    let got = out.values[dims.index(x, y, z)];
                    assert_eq!(got, lo);
                    assert!(got <= map.values[dims.index(x, y, z)]);
                }
            }
        }
    }

    #[test]
    fn median_matches_sort_oracle() {
        let map = random_map(5, 7);
        let out = filter_error_map(&map, FilterKind::Median, 3).unwrap();
        let dims = map.dims;
        for z in 0..5usize {
            for y in 0..5usize {
                for x in 0..5usize {
                    let mut hood = Vec::new();
                    for dz in -1i64..=1 {
                        for dy in -1i64..=1 {
                            for dx in -1i64..=1 {
                                let zz = (z as i64 + dz).clamp(0, 4) as usize;
                                let yy = (y as i64 + dy).clamp(0, 4) as usize;
                                let xx = (x as i64 + dx).clamp(0, 4) as usize;
                                hood.push(map.values[dims.index(xx, yy, zz)]);
                            }
                        }
                    }
                    hood.sort_by(|a, b| a.partial_cmp(b).unwrap());
                    assert_eq!(out.values[dims.index(x, y, z)], hood[13]);
                }
            }
        }
    }

    #[test]
    fn median_preserves_constant_maps_and_erosion_is_idempotent_on_plateaus() {
        let dims = Dims::cube(5);
        let map = ErrorMap::new(dims, vec![0.42; dims.count()]).unwrap();
        let med = filter_error_map(&map, FilterKind::Median, 5).unwrap();
        assert_eq!(med.values, map.values);
        let once = filter_error_map(&map, FilterKind::GreyErosion, 3).unwrap();
        let twice = filter_error_map(&once, FilterKind::GreyErosion, 3).unwrap();
        assert_eq!(once.values, twice.values);
    }
}
