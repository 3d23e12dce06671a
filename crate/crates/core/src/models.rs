//! Network assembly for the position regressor and the autoencoder
//! baseline, plus parameter counting and the analytic training-memory model.

use crate::diffcore::{DownsampleVariant, LayerSpec, Network, ParamStore, Scalar};
use crate::error::{Error, Result};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Tag recording which block internals this build uses; alternates would get
/// a different tag so checkpoints stay self-describing.
pub const BLOCK_VARIANT: &str = "res33-pool-conv3";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NetworkKind {
    Ppr,
    Ae,
}

impl NetworkKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            NetworkKind::Ppr => "ppr",
            NetworkKind::Ae => "ae",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub kind: NetworkKind,
    /// Network size parameter; channel counts scale with it.
    pub m: usize,
    /// Patch side for the regressor, volume side for the autoencoder.
    pub input_side: usize,
    pub block_variant: String,
    pub layers: Vec<LayerSpec>,
}

/// Patch position regression network: five residual stages with four
/// poolings between them, then global pooling and a two-layer head ending in
/// a sigmoid so predictions stay inside the unit cube. Every convolution is
/// spectrally normalized.
pub fn build_ppr(m: usize, s_p: usize) -> Result<NetworkSpec> {
    if m < 1 {
        return Err(Error::Config("network size parameter m must be >= 1".into()));
    }
    if s_p % 2 == 0 {
        return Err(Error::Config(format!("patch size must be odd, got {s_p}")));
    }
    // Four halvings must keep at least one voxel; each pooled input needs
    // side >= 2. This rejects before any parameter allocation.
    let mut side = s_p;
    for stage in 0..4 {
        if side < 2 {
            return Err(Error::Shape(format!(
                "patch size {s_p} collapses at downsample stage {}: side {side} cannot be pooled",
                stage + 1
            )));
        }
        side /= 2;
    }

    let sn = true;
    let layers = vec![
        LayerSpec::ResidualBlock {
            channels: m,
            spectral_norm: sn,
        },
        LayerSpec::DownsampleBlock {
            channels: m,
            variant: DownsampleVariant::PoolConv,
            spectral_norm: sn,
        },
        LayerSpec::ResidualBlock {
            channels: 2 * m,
            spectral_norm: sn,
        },
        LayerSpec::DownsampleBlock {
            channels: 2 * m,
            variant: DownsampleVariant::PoolConv,
            spectral_norm: sn,
        },
        LayerSpec::ResidualBlock {
            channels: 4 * m,
            spectral_norm: sn,
        },
        LayerSpec::DownsampleBlock {
            channels: 4 * m,
            variant: DownsampleVariant::PoolConv,
            spectral_norm: sn,
        },
        LayerSpec::ResidualBlock {
            channels: 8 * m,
            spectral_norm: sn,
        },
        LayerSpec::DownsampleBlock {
            channels: 8 * m,
            variant: DownsampleVariant::PoolConv,
            spectral_norm: sn,
        },
        LayerSpec::ResidualBlock {
            channels: 16 * m,
            spectral_norm: sn,
        },
        LayerSpec::GlobalAvgPool,
        LayerSpec::Affine {
            out_features: 16 * m,
        },
        LayerSpec::LeakyRelu {
            negative_slope: 0.2,
        },
        LayerSpec::Affine { out_features: 3 },
        LayerSpec::Sigmoid,
    ];
    Ok(NetworkSpec {
        kind: NetworkKind::Ppr,
        m,
        input_side: s_p,
        block_variant: BLOCK_VARIANT.into(),
        layers,
    })
}

/// Autoencoder baseline: five strided-conv halvings to an n/32 latent side,
/// then doublings back to the input size with a final sigmoid. The upsampling
/// path carries one extra stage so the decoder exactly inverts the five
/// encoder halvings and the reconstruction matches the input dims.
/// Convolutions are not spectrally normalized.
pub fn build_ae(m: usize, n: usize) -> Result<NetworkSpec> {
    if m < 1 {
        return Err(Error::Config("network size parameter m must be >= 1".into()));
    }
    if n % 32 != 0 || n == 0 {
        return Err(Error::Shape(format!(
            "autoencoder input side must be divisible by 32 (five stride-2 stages), got {n}"
        )));
    }
    let sn = false;
    let down = |c: usize| LayerSpec::DownsampleBlock {
        channels: c,
        variant: DownsampleVariant::StridedConv,
        spectral_norm: sn,
    };
    let up = |c: usize| LayerSpec::UpsampleBlock { channels: c };
    let layers = vec![
        down(m),
        down(2 * m),
        down(4 * m),
        down(8 * m),
        down(16 * m),
        up(8 * m),
        up(4 * m),
        up(2 * m),
        up(m),
        LayerSpec::TranspConv3d {
            out_channels: 1,
            kernel: 4,
            stride: 2,
            padding: 1,
        },
        LayerSpec::Sigmoid,
    ];
    Ok(NetworkSpec {
        kind: NetworkKind::Ae,
        m,
        input_side: n,
        block_variant: BLOCK_VARIANT.into(),
        layers,
    })
}

struct ShapeWalk {
    channels: usize,
    spatial: [usize; 3],
}

impl ShapeWalk {
    fn feature_count(&self) -> usize {
        self.channels * self.spatial[0] * self.spatial[1] * self.spatial[2]
    }
}

/// Walks the layer list tracking shapes, mirroring compilation.
fn walk_layers<F: FnMut(&ShapeWalk, &ShapeWalk, &LayerSpec)>(spec: &NetworkSpec, mut visit: F) {
    let mut s = ShapeWalk {
        channels: 1,
        spatial: [spec.input_side; 3],
    };
    for layer in &spec.layers {
        let before = ShapeWalk {
            channels: s.channels,
            spatial: s.spatial,
        };
        match *layer {
            LayerSpec::Conv3d {
                out_channels,
                kernel,
                stride,
                padding,
                ..
            } => {
                for d in s.spatial.iter_mut() {
                    *d = (*d + 2 * padding - kernel) / stride + 1;
                }
                s.channels = out_channels;
            }
            LayerSpec::TranspConv3d {
                out_channels,
                kernel,
                stride,
                padding,
            } => {
                for d in s.spatial.iter_mut() {
                    *d = (*d - 1) * stride + kernel - 2 * padding;
                }
                s.channels = out_channels;
            }
            LayerSpec::AvgPool => {
                for d in s.spatial.iter_mut() {
                    *d /= 2;
                }
            }
            LayerSpec::GlobalAvgPool => s.spatial = [1, 1, 1],
            LayerSpec::LeakyRelu { .. } | LayerSpec::Sigmoid => {}
            LayerSpec::Affine { out_features } => {
                s.channels = out_features;
                s.spatial = [1, 1, 1];
            }
            LayerSpec::ResidualBlock { channels, .. } => s.channels = channels,
            LayerSpec::DownsampleBlock { channels, .. } => {
                for d in s.spatial.iter_mut() {
                    *d /= 2;
                }
                s.channels = channels;
            }
            LayerSpec::UpsampleBlock { channels } => {
                for d in s.spatial.iter_mut() {
                    *d *= 2;
                }
                s.channels = channels;
            }
        }
        visit(&before, &s, layer);
    }
}

/// Trainable parameter count derived from the spec alone: conv contributes
/// c_in*c_out*k^3 + c_out, affine in*out + out; spectral-norm u/v buffers
/// are excluded.
pub fn count_params(spec: &NetworkSpec) -> usize {
    let conv = |c_in: usize, c_out: usize, k: usize| c_in * c_out * k * k * k + c_out;
    let mut total = 0usize;
    walk_layers(spec, |before, _, layer| match *layer {
        LayerSpec::Conv3d {
            out_channels,
            kernel,
            ..
        }
        | LayerSpec::TranspConv3d {
            out_channels,
            kernel,
            ..
        } => total += conv(before.channels, out_channels, kernel),
        LayerSpec::Affine { out_features } => {
            total += before.feature_count() * out_features + out_features
        }
        LayerSpec::ResidualBlock { channels, .. } => {
            total += conv(before.channels, channels, 3) + conv(channels, channels, 3);
            if before.channels != channels {
                total += conv(before.channels, channels, 1);
            }
        }
        LayerSpec::DownsampleBlock {
            channels, variant, ..
        } => {
            let k = match variant {
                DownsampleVariant::PoolConv => 3,
                DownsampleVariant::StridedConv => 4,
            };
            total += conv(before.channels, channels, k);
        }
        LayerSpec::UpsampleBlock { channels } => total += conv(before.channels, channels, 4),
        _ => {}
    });
    total
}

/// Closed-form training-memory accounting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResourceEstimate {
    pub parameter_count: usize,
    pub parameter_bytes: usize,
    /// Stored activations plus their gradients across the layer list,
    /// including the input tensor; linear in batch size by construction.
    pub activation_bytes: usize,
    /// Adam keeps two moments per parameter.
    pub optimizer_bytes: usize,
}

impl ResourceEstimate {
    pub fn total_bytes(&self) -> usize {
        self.parameter_bytes + self.activation_bytes + self.optimizer_bytes
    }
}

pub fn estimate_memory(
    spec: &NetworkSpec,
    batch: usize,
    bytes_per_scalar: usize,
) -> ResourceEstimate {
    let input_elems: usize = spec.input_side.pow(3);
    let mut act_elems = input_elems;
    walk_layers(spec, |_, after, _| {
        act_elems += after.feature_count();
    });
    let parameter_count = count_params(spec);
    let parameter_bytes = parameter_count * bytes_per_scalar;
    ResourceEstimate {
        parameter_count,
        parameter_bytes,
        activation_bytes: act_elems * batch * bytes_per_scalar * 2,
        optimizer_bytes: 2 * parameter_bytes,
    }
}

/// Compiles the spec into a runtime network with freshly initialized (or
/// checkpoint-bound) parameters.
pub fn instantiate<T: Scalar>(
    spec: &NetworkSpec,
    seed: u64,
    store: &mut ParamStore<T>,
) -> Result<Network> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Network::compile(&spec.layers, 1, [spec.input_side; 3], store, &mut rng)
}
