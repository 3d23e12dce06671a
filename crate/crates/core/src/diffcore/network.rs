//! Layer specifications, network compilation, and tape-based reverse-mode
//! differentiation.
//!
//! A network is compiled for a fixed input geometry. Composite blocks expand
//! into primitive ops; the residual block keeps its skip connection as
//! nested structure. Forward passes never mutate the parameter store (the
//! spectral-norm power iteration is an explicit separate step), so inference
//! over an immutable store is freely parallel.

use super::ops;
use super::params::{Grads, ParamId, ParamStore};
use super::scalar::Scalar;
use super::spectral;
use super::tensor::Tensor5;
use crate::error::{Error, Result};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Slope used by the LeakyReLU activations inside composite blocks.
pub const BLOCK_LEAKY_SLOPE: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DownsampleVariant {
    /// AvgPool(2,2) then Conv(c,3,1,same) + LeakyReLU.
    PoolConv,
    /// Conv(c,4,2,pad 1) + LeakyReLU.
    StridedConv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv3d {
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        spectral_norm: bool,
    },
    TranspConv3d {
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    AvgPool,
    GlobalAvgPool,
    LeakyRelu {
        negative_slope: f64,
    },
    Sigmoid,
    Affine {
        out_features: usize,
    },
    ResidualBlock {
        channels: usize,
        spectral_norm: bool,
    },
    DownsampleBlock {
        channels: usize,
        variant: DownsampleVariant,
        spectral_norm: bool,
    },
    UpsampleBlock {
        channels: usize,
    },
}

impl LayerSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        match *self {
            LayerSpec::Conv3d {
                out_channels,
                kernel,
                stride,
                ..
            }
            | LayerSpec::TranspConv3d {
                out_channels,
                kernel,
                stride,
                ..
            } => {
                if out_channels < 1 || kernel < 1 || stride < 1 {
                    return bad(format!("conv spec needs c,k,s >= 1: {self:?}"));
                }
            }
            LayerSpec::LeakyRelu { negative_slope } => {
                if !(negative_slope > 0.0 && negative_slope < 1.0) {
                    return bad(format!("leaky_relu slope must be in (0,1): {negative_slope}"));
                }
            }
            LayerSpec::ResidualBlock { channels, .. }
            | LayerSpec::DownsampleBlock { channels, .. }
            | LayerSpec::UpsampleBlock { channels } => {
                if channels < 1 {
                    return bad(format!("block channels must be >= 1: {self:?}"));
                }
            }
            LayerSpec::Affine { out_features } => {
                if out_features < 1 {
                    return bad("affine out_features must be >= 1".into());
                }
            }
            LayerSpec::AvgPool | LayerSpec::GlobalAvgPool | LayerSpec::Sigmoid => {}
        }
        Ok(())
    }
}

struct SpectralRef {
    kernel: ParamId,
    u: ParamId,
    v: ParamId,
    rows: usize,
    cols: usize,
}

enum RtOp {
    Conv {
        kernel: ParamId,
        bias: ParamId,
        /// (u, v) buffers when spectral normalization is enabled.
        spectral: Option<(ParamId, ParamId)>,
        c_out: usize,
        k: usize,
        stride: usize,
        pad: usize,
    },
    TranspConv {
        kernel: ParamId,
        bias: ParamId,
        c_out: usize,
        k: usize,
        stride: usize,
        pad: usize,
    },
    AvgPool,
    GlobalAvgPool,
    LeakyRelu {
        alpha: f64,
    },
    Sigmoid,
    Affine {
        weight: ParamId,
        bias: ParamId,
        in_features: usize,
        out_features: usize,
    },
    Residual {
        body: Vec<RtOp>,
        projection: Option<Box<RtOp>>,
    },
}

pub enum TapeNode<T> {
    Conv { input: Tensor5<T>, sigma: Option<T> },
    TranspConv { input: Tensor5<T> },
    AvgPool { input_shape: [usize; 5] },
    GlobalAvgPool { input_shape: [usize; 5] },
    LeakyRelu { input: Tensor5<T> },
    Sigmoid { output: Tensor5<T> },
    Affine { input: Tensor5<T> },
    Residual { body: Vec<TapeNode<T>> },
}

/// Recorded forward pass; consumed by [`Network::backward`].
pub struct Tape<T> {
    nodes: Vec<TapeNode<T>>,
}

/// A compiled network bound to parameter names in a store.
pub struct Network {
    ops: Vec<RtOp>,
    spectral: Vec<SpectralRef>,
    pub input_channels: usize,
    pub input_spatial: [usize; 3],
    pub output_shape: ([usize; 3], usize),
}

struct Compiler<'a, T: Scalar> {
    store: &'a mut ParamStore<T>,
    rng: &'a mut ChaCha8Rng,
    spectral: Vec<SpectralRef>,
}

impl<'a, T: Scalar> Compiler<'a, T> {
    fn glorot(&mut self, fan_in: usize, fan_out: usize, n: usize) -> Vec<T> {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        (0..n)
            .map(|_| T::from_f64(self.rng.random_range(-limit..limit)))
            .collect()
    }

    fn conv(
        &mut self,
        name: &str,
        c_in: usize,
        c_out: usize,
        k: usize,
        stride: usize,
        pad: usize,
        spectral_norm: bool,
    ) -> Result<RtOp> {
        let kn = c_out * c_in * k * k * k;
        let fan = c_in * k * k * k;
        let init = self.glorot(fan, c_out * k * k * k, kn);
        let (kernel, _) = self.store.add_or_bind(
            &format!("{name}.w"),
            vec![c_out, c_in, k, k, k],
            || init,
            true,
        )?;
        let (bias, _) = self.store.add_or_bind(
            &format!("{name}.b"),
            vec![c_out],
            || vec![T::ZERO; c_out],
            true,
        )?;
        let spectral = if spectral_norm {
            let (rows, cols) = (c_out, c_in * k * k * k);
            let mut u_init: Vec<f64> = (0..rows).map(|_| self.rng.random_range(-1.0..1.0)).collect();
            let norm = u_init.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
            u_init.iter_mut().for_each(|x| *x /= norm);
            let (u, u_created) = self.store.add_or_bind(
                &format!("{name}.w.sn_u"),
                vec![rows],
                || u_init.iter().map(|&x| T::from_f64(x)).collect(),
                false,
            )?;
            let (v, _) = self.store.add_or_bind(
                &format!("{name}.w.sn_v"),
                vec![cols],
                || vec![T::ZERO; cols],
                false,
            )?;
            // Seed v so sigma is meaningful before the first training step.
            // Checkpoint-bound buffers are left untouched.
            if u_created {
                let w = self.store.value(kernel).to_vec();
                let mut uv = self.store.value(u).to_vec();
                let mut vv = self.store.value(v).to_vec();
                spectral::power_iteration(&w, rows, cols, &mut uv, &mut vv, 1);
                self.store.value_mut(u).copy_from_slice(&uv);
                self.store.value_mut(v).copy_from_slice(&vv);
            }
            self.spectral.push(SpectralRef {
                kernel,
                u,
                v,
                rows,
                cols,
            });
            Some((u, v))
        } else {
            None
        };
        Ok(RtOp::Conv {
            kernel,
            bias,
            spectral,
            c_out,
            k,
            stride,
            pad,
        })
    }

    fn transp_conv(
        &mut self,
        name: &str,
        c_in: usize,
        c_out: usize,
        k: usize,
        stride: usize,
        pad: usize,
    ) -> Result<RtOp> {
        let kn = c_in * c_out * k * k * k;
        let init = self.glorot(c_in * k * k * k, c_out * k * k * k, kn);
        let (kernel, _) = self.store.add_or_bind(
            &format!("{name}.w"),
            vec![c_in, c_out, k, k, k],
            || init,
            true,
        )?;
        let (bias, _) = self.store.add_or_bind(
            &format!("{name}.b"),
            vec![c_out],
            || vec![T::ZERO; c_out],
            true,
        )?;
        Ok(RtOp::TranspConv {
            kernel,
            bias,
            c_out,
            k,
            stride,
            pad,
        })
    }

    fn affine(&mut self, name: &str, in_features: usize, out_features: usize) -> Result<RtOp> {
        let init = self.glorot(in_features, out_features, in_features * out_features);
        let (weight, _) = self.store.add_or_bind(
            &format!("{name}.w"),
            vec![out_features, in_features],
            || init,
            true,
        )?;
        let (bias, _) = self.store.add_or_bind(
            &format!("{name}.b"),
            vec![out_features],
            || vec![T::ZERO; out_features],
            true,
        )?;
        Ok(RtOp::Affine {
            weight,
            bias,
            in_features,
            out_features,
        })
    }
}

fn pool_out(sp: [usize; 3]) -> Result<[usize; 3]> {
    if sp.iter().any(|&d| d < 2) {
        return Err(Error::Shape(format!(
            "avg_pool needs every spatial dim >= 2, got {sp:?}"
        )));
    }
    Ok([sp[0] / 2, sp[1] / 2, sp[2] / 2])
}

fn conv_out(sp: [usize; 3], k: usize, stride: usize, pad: usize) -> Result<[usize; 3]> {
    let mut out = [0usize; 3];
    for i in 0..3 {
        out[i] = ops::conv_out_dim(sp[i], k, stride, pad).filter(|&d| d > 0).ok_or_else(|| {
            Error::Shape(format!(
                "conv with k={k}, s={stride}, p={pad} collapses spatial dims {sp:?}"
            ))
        })?;
    }
    Ok(out)
}

impl Network {
    /// Compiles layer specs against a store. Existing parameters (from a
    /// checkpoint) are bound by name; missing ones are initialized from the
    /// seeded generator. Shape errors surface before any allocation of the
    /// offending layer.
    pub fn compile<T: Scalar>(
        specs: &[LayerSpec],
        input_channels: usize,
        input_spatial: [usize; 3],
        store: &mut ParamStore<T>,
        rng: &mut ChaCha8Rng,
    ) -> Result<Network> {
        let mut compiler = Compiler {
            store,
            rng,
            spectral: Vec::new(),
        };
        let mut ops_vec = Vec::new();
        let mut channels = input_channels;
        let mut spatial = input_spatial;

        for (i, spec) in specs.iter().enumerate() {
            spec.validate()?;
            let name = format!("b{i:02}");
            match *spec {
                LayerSpec::Conv3d {
                    out_channels,
                    kernel,
                    stride,
                    padding,
                    spectral_norm,
                } => {
                    spatial = conv_out(spatial, kernel, stride, padding)?;
                    ops_vec.push(compiler.conv(
                        &format!("{name}.conv"),
                        channels,
                        out_channels,
                        kernel,
                        stride,
                        padding,
                        spectral_norm,
                    )?);
                    channels = out_channels;
                }
                LayerSpec::TranspConv3d {
                    out_channels,
                    kernel,
                    stride,
                    padding,
                } => {
                    for d in spatial.iter_mut() {
                        *d = (*d - 1) * stride + kernel - 2 * padding;
                    }
                    ops_vec.push(compiler.transp_conv(
                        &format!("{name}.tconv"),
                        channels,
                        out_channels,
                        kernel,
                        stride,
                        padding,
                    )?);
                    channels = out_channels;
                }
                LayerSpec::AvgPool => {
                    spatial = pool_out(spatial)?;
                    ops_vec.push(RtOp::AvgPool);
                }
                LayerSpec::GlobalAvgPool => {
                    spatial = [1, 1, 1];
                    ops_vec.push(RtOp::GlobalAvgPool);
                }
                LayerSpec::LeakyRelu { negative_slope } => {
                    ops_vec.push(RtOp::LeakyRelu {
                        alpha: negative_slope,
                    });
                }
                LayerSpec::Sigmoid => ops_vec.push(RtOp::Sigmoid),
                LayerSpec::Affine { out_features } => {
                    let in_features = channels * spatial[0] * spatial[1] * spatial[2];
                    ops_vec.push(compiler.affine(&format!("{name}.fc"), in_features, out_features)?);
                    channels = out_features;
                    spatial = [1, 1, 1];
                }
                LayerSpec::ResidualBlock {
                    channels: c,
                    spectral_norm,
                } => {
                    // Same-padded convs keep the spatial size for the skip add.
                    let body = vec![
                        compiler.conv(&format!("{name}.conv1"), channels, c, 3, 1, 1, spectral_norm)?,
                        RtOp::LeakyRelu {
                            alpha: BLOCK_LEAKY_SLOPE,
                        },
                        compiler.conv(&format!("{name}.conv2"), c, c, 3, 1, 1, spectral_norm)?,
                    ];
                    let projection = if channels != c {
                        Some(Box::new(compiler.conv(
                            &format!("{name}.proj"),
                            channels,
                            c,
                            1,
                            1,
                            0,
                            spectral_norm,
                        )?))
                    } else {
                        None
                    };
                    ops_vec.push(RtOp::Residual { body, projection });
                    channels = c;
                }
                LayerSpec::DownsampleBlock {
                    channels: c,
                    variant,
                    spectral_norm,
                } => match variant {
                    DownsampleVariant::PoolConv => {
                        spatial = pool_out(spatial)?;
                        ops_vec.push(RtOp::AvgPool);
                        ops_vec.push(compiler.conv(
                            &format!("{name}.conv"),
                            channels,
                            c,
                            3,
                            1,
                            1,
                            spectral_norm,
                        )?);
                        ops_vec.push(RtOp::LeakyRelu {
                            alpha: BLOCK_LEAKY_SLOPE,
                        });
                        channels = c;
                    }
                    DownsampleVariant::StridedConv => {
                        spatial = conv_out(spatial, 4, 2, 1)?;
                        ops_vec.push(compiler.conv(
                            &format!("{name}.conv"),
                            channels,
                            c,
                            4,
                            2,
                            1,
                            spectral_norm,
                        )?);
                        ops_vec.push(RtOp::LeakyRelu {
                            alpha: BLOCK_LEAKY_SLOPE,
                        });
                        channels = c;
                    }
                },
                LayerSpec::UpsampleBlock { channels: c } => {
                    for d in spatial.iter_mut() {
                        *d = (*d - 1) * 2 + 4 - 2;
                    }
                    ops_vec.push(compiler.transp_conv(
                        &format!("{name}.tconv"),
                        channels,
                        c,
                        4,
                        2,
                        1,
                    )?);
                    ops_vec.push(RtOp::LeakyRelu {
                        alpha: BLOCK_LEAKY_SLOPE,
                    });
                    channels = c;
                }
            }
        }

        Ok(Network {
            ops: ops_vec,
            spectral: compiler.spectral,
            input_channels,
            input_spatial,
            output_shape: (spatial, channels),
        })
    }

    /// Runs the power iteration on every spectrally normalized kernel,
    /// refreshing the persistent u/v buffers. Called once per training step;
    /// never called by `forward`, which stays pure.
    pub fn power_iterate<T: Scalar>(&self, store: &mut ParamStore<T>, n_iters: usize) {
        for s in &self.spectral {
            let w = store.value(s.kernel).to_vec();
            let mut u = store.value(s.u).to_vec();
            let mut v = store.value(s.v).to_vec();
            spectral::power_iteration(&w, s.rows, s.cols, &mut u, &mut v, n_iters);
            store.value_mut(s.u).copy_from_slice(&u);
            store.value_mut(s.v).copy_from_slice(&v);
        }
    }

    pub fn forward<T: Scalar>(
        &self,
        store: &ParamStore<T>,
        input: &Tensor5<T>,
    ) -> Result<(Tensor5<T>, Tape<T>)> {
        let [_, c, d, h, w] = input.shape();
        if c != self.input_channels || [d, h, w] != self.input_spatial {
            return Err(Error::Config(format!(
                "network expects {}x{:?} input, got {}x{:?}",
                self.input_channels,
                self.input_spatial,
                c,
                [d, h, w]
            )));
        }
        let mut nodes = Vec::with_capacity(self.ops.len());
        let mut x = input.clone();
        for op in &self.ops {
            x = forward_op(op, store, x, &mut nodes)?;
        }
        Ok((x, Tape { nodes }))
    }

    /// Reverse pass over a recorded tape; parameter gradients accumulate
    /// into `grads`, the input gradient is returned.
    pub fn backward<T: Scalar>(
        &self,
        store: &ParamStore<T>,
        tape: &Tape<T>,
        upstream: Tensor5<T>,
        grads: &mut Grads<T>,
    ) -> Tensor5<T> {
        backward_ops(&self.ops, store, &tape.nodes, upstream, grads)
    }
}

fn forward_op<T: Scalar>(
    op: &RtOp,
    store: &ParamStore<T>,
    input: Tensor5<T>,
    nodes: &mut Vec<TapeNode<T>>,
) -> Result<Tensor5<T>> {
    match op {
        RtOp::Conv {
            kernel,
            bias,
            spectral,
            c_out,
            k,
            stride,
            pad,
            ..
        } => {
            let w = store.value(*kernel);
            let (out, sigma) = match spectral {
                Some((u, v)) => {
                    let rows = *c_out;
                    let cols = w.len() / rows;
                    let sigma =
                        spectral::sigma_hat(w, rows, cols, store.value(*u), store.value(*v));
                    let normalized: Vec<T> = w.iter().map(|&x| x / sigma).collect();
                    let out = ops::conv3d_forward(
                        &input,
                        &normalized,
                        store.value(*bias),
                        *c_out,
                        *k,
                        *stride,
                        *pad,
                    )?;
                    (out, Some(sigma))
                }
                None => (
                    ops::conv3d_forward(
                        &input,
                        w,
                        store.value(*bias),
                        *c_out,
                        *k,
                        *stride,
                        *pad,
                    )?,
                    None,
                ),
            };
            nodes.push(TapeNode::Conv { input, sigma });
            Ok(out)
        }
        RtOp::TranspConv {
            kernel,
            bias,
            c_out,
            k,
            stride,
            pad,
            ..
        } => {
            let out = ops::transp_conv3d_forward(
                &input,
                store.value(*kernel),
                store.value(*bias),
                *c_out,
                *k,
                *stride,
                *pad,
            )?;
            nodes.push(TapeNode::TranspConv { input });
            Ok(out)
        }
        RtOp::AvgPool => {
            let out = ops::avg_pool_forward(&input)?;
            nodes.push(TapeNode::AvgPool {
                input_shape: input.shape(),
            });
            Ok(out)
        }
        RtOp::GlobalAvgPool => {
            let out = ops::global_avg_pool_forward(&input);
            nodes.push(TapeNode::GlobalAvgPool {
                input_shape: input.shape(),
            });
            Ok(out)
        }
        RtOp::LeakyRelu { alpha } => {
            let out = ops::leaky_relu_forward(&input, T::from_f64(*alpha));
            nodes.push(TapeNode::LeakyRelu { input });
            Ok(out)
        }
        RtOp::Sigmoid => {
            let out = ops::sigmoid_forward(&input);
            nodes.push(TapeNode::Sigmoid {
                output: out.clone(),
            });
            Ok(out)
        }
        RtOp::Affine {
            weight,
            bias,
            in_features,
            out_features,
        } => {
            let [b, c, d, h, w] = input.shape();
            if c * d * h * w != *in_features {
                return Err(Error::Shape(format!(
                    "affine expects {} features, got {}",
                    in_features,
                    c * d * h * w
                )));
            }
            let _ = b;
            let out =
                ops::affine_forward(&input, store.value(*weight), store.value(*bias), *out_features)?;
            nodes.push(TapeNode::Affine { input });
            Ok(out)
        }
        RtOp::Residual { body, projection } => {
            let mut body_nodes = Vec::with_capacity(body.len() + 1);
            let mut x = input.clone();
            for op in body {
                x = forward_op(op, store, x, &mut body_nodes)?;
            }
            // Skip connection: out = body(x) + proj(x).
            let skip = match projection {
                Some(p) => {
                    let mut scratch = Vec::with_capacity(1);
                    let s = forward_op(p, store, input, &mut scratch)?;
                    body_nodes.extend(scratch);
                    s
                }
                None => input,
            };
            if skip.shape() != x.shape() {
                return Err(Error::Shape(format!(
                    "residual skip shape {:?} does not match body output {:?}",
                    skip.shape(),
                    x.shape()
                )));
            }
            ops::add_assign(&mut x, &skip);
            nodes.push(TapeNode::Residual { body: body_nodes });
            Ok(x)
        }
    }
}

fn backward_ops<T: Scalar>(
    ops_list: &[RtOp],
    store: &ParamStore<T>,
    nodes: &[TapeNode<T>],
    upstream: Tensor5<T>,
    grads: &mut Grads<T>,
) -> Tensor5<T> {
    assert_eq!(ops_list.len(), nodes.len(), "tape does not match network");
    let mut g = upstream;
    for (op, node) in ops_list.iter().zip(nodes.iter()).rev() {
        g = backward_op(op, store, node, g, grads);
    }
    g
}

fn backward_op<T: Scalar>(
    op: &RtOp,
    store: &ParamStore<T>,
    node: &TapeNode<T>,
    upstream: Tensor5<T>,
    grads: &mut Grads<T>,
) -> Tensor5<T> {
    match (op, node) {
        (
            RtOp::Conv {
                kernel,
                bias,
                spectral,
                c_out,
                k,
                stride,
                pad,
                ..
            },
            TapeNode::Conv { input, sigma },
        ) => {
            let w_raw = store.value(*kernel);
            match (spectral, sigma) {
                (Some((u_id, v_id)), Some(sigma)) => {
                    let normalized: Vec<T> = w_raw.iter().map(|&x| x / *sigma).collect();
                    let cg = ops::conv3d_backward(
                        input,
                        &normalized,
                        *c_out,
                        *k,
                        *stride,
                        *pad,
                        &upstream,
                    );
                    // W_bar = W / sigma, sigma = u^T W v with u, v constant:
                    // dL/dW = G/sigma - (<G, W_bar>/sigma) u v^T.
                    let mut dot = T::ZERO;
                    for (gk, wn) in cg.kernel.iter().zip(&normalized) {
                        dot += *gk * *wn;
                    }
                    let scale = dot / *sigma;
                    let u = store.value(*u_id);
                    let v = store.value(*v_id);
                    let cols = v.len();
                    let kg = grads.slot_mut(*kernel);
                    for r in 0..u.len() {
                        let uscale = u[r] * scale;
                        let row = r * cols;
                        for c in 0..cols {
                            kg[row + c] += cg.kernel[row + c] / *sigma - uscale * v[c];
                        }
                    }
                    for (g, d) in grads.slot_mut(*bias).iter_mut().zip(&cg.bias) {
                        *g += *d;
                    }
                    cg.input
                }
                _ => {
                    let cg =
                        ops::conv3d_backward(input, w_raw, *c_out, *k, *stride, *pad, &upstream);
                    for (g, d) in grads.slot_mut(*kernel).iter_mut().zip(&cg.kernel) {
                        *g += *d;
                    }
                    for (g, d) in grads.slot_mut(*bias).iter_mut().zip(&cg.bias) {
                        *g += *d;
                    }
                    cg.input
                }
            }
        }
        (
            RtOp::TranspConv {
                kernel,
                bias,
                c_out,
                k,
                stride,
                pad,
                ..
            },
            TapeNode::TranspConv { input },
        ) => {
            let cg = ops::transp_conv3d_backward(
                input,
                store.value(*kernel),
                *c_out,
                *k,
                *stride,
                *pad,
                &upstream,
            );
            for (g, d) in grads.slot_mut(*kernel).iter_mut().zip(&cg.kernel) {
                *g += *d;
            }
            for (g, d) in grads.slot_mut(*bias).iter_mut().zip(&cg.bias) {
                *g += *d;
            }
            cg.input
        }
        (RtOp::AvgPool, TapeNode::AvgPool { input_shape }) => {
            ops::avg_pool_backward(*input_shape, &upstream)
        }
        (RtOp::GlobalAvgPool, TapeNode::GlobalAvgPool { input_shape }) => {
            ops::global_avg_pool_backward(*input_shape, &upstream)
        }
        (RtOp::LeakyRelu { alpha }, TapeNode::LeakyRelu { input }) => {
            ops::leaky_relu_backward(input, T::from_f64(*alpha), &upstream)
        }
        (RtOp::Sigmoid, TapeNode::Sigmoid { output }) => ops::sigmoid_backward(output, &upstream),
        (
            RtOp::Affine {
                weight,
                bias,
                out_features,
                ..
            },
            TapeNode::Affine { input },
        ) => {
            let ag = ops::affine_backward(input, store.value(*weight), *out_features, &upstream);
            for (g, d) in grads.slot_mut(*weight).iter_mut().zip(&ag.weight) {
                *g += *d;
            }
            for (g, d) in grads.slot_mut(*bias).iter_mut().zip(&ag.bias) {
                *g += *d;
            }
            ag.input
        }
        (RtOp::Residual { body, projection }, TapeNode::Residual { body: nodes }) => {
            let (body_nodes, proj_node) = match projection {
                Some(_) => nodes.split_at(nodes.len() - 1),
                None => (&nodes[..], &[] as &[TapeNode<T>]),
            };
            let mut input_grad =
                backward_ops(body, store, body_nodes, upstream.clone(), grads);
            match projection {
                Some(p) => {
                    let pg = backward_op(p, store, &proj_node[0], upstream, grads);
                    ops::add_assign(&mut input_grad, &pg);
                }
                None => {
                    ops::add_assign(&mut input_grad, &upstream);
                }
            }
            input_grad
        }
        _ => unreachable!("tape node does not match op"),
    }
}
