use super::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_tensor(shape: [usize; 5], rng: &mut ChaCha8Rng) -> Tensor5<f64> {
    let n: usize = shape.iter().product();
    Tensor5::from_vec(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn dot(a: &Tensor5<f64>, b: &Tensor5<f64>) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

/// Plain nine-loop convolution with zero padding; the reference the fast
/// implementation is checked against.
pub fn conv_oracle(
    input: &Tensor5<f64>,
    kernel: &[f64],
    bias: &[f64],
    c_out: usize,
    k: usize,
    stride: usize,
    pad: usize,
) -> Tensor5<f64> {
    let [b, c_in, d, h, w] = input.shape();
    let od = (d + 2 * pad - k) / stride + 1;
    let oh = (h + 2 * pad - k) / stride + 1;
    let ow = (w + 2 * pad - k) / stride + 1;
    let mut out = Tensor5::zeros([b, c_out, od, oh, ow]);
    for bi in 0..b {
        for co in 0..c_out {
            for oz in 0..od {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut acc = bias[co];
                        for ci in 0..c_in {
                            let ip = input.bc_slice(bi, ci);
                            for kz in 0..k {
                                for ky in 0..k {
                                    for kx in 0..k {
                                        let iz = (oz * stride + kz) as i64 - pad as i64;
                                        let iy = (oy * stride + ky) as i64 - pad as i64;
                                        let ix = (ox * stride + kx) as i64 - pad as i64;
                                        if iz < 0
                                            || iy < 0
                                            || ix < 0
                                            || iz >= d as i64
                                            || iy >= h as i64
                                            || ix >= w as i64
                                        {
                                            continue;
                                        }
                                        let v = ip[((iz as usize) * h + iy as usize) * w
                                            + ix as usize];
                                        acc += v
                                            * kernel
                                                [(((co * c_in + ci) * k + kz) * k + ky) * k + kx];
                                    }
                                }
                            }
                        }
                        out.bc_slice_mut(bi, co)[(oz * oh + oy) * ow + ox] = acc;
                    }
                }
            }
        }
    }
    out
}

mod conv {
    use super::*;

    #[test]
    fn identity_kernel_passes_input_through() {
        let mut r = rng(1);
        let input = random_tensor([2, 1, 4, 4, 4], &mut r);
        let out = ops::conv3d_forward(&input, &[1.0], &[0.0], 1, 1, 1, 0).unwrap();
        assert_eq!(out.data(), input.data());
    }

    #[test]
    fn all_ones_kernel_on_constant_input_sums_support() {
        let input = Tensor5::from_vec([1, 1, 5, 5, 5], vec![1.0f64; 125]).unwrap();
        let kernel = vec![1.0f64; 27];
        let out = ops::conv3d_forward(&input, &kernel, &[0.0], 1, 3, 1, 0).unwrap();
        assert!(out.data().iter().all(|&v| (v - 27.0).abs() < 1e-12));
    }

    #[test]
    fn matches_nested_loop_oracle() {
        let mut r = rng(2);
        let input = random_tensor([1, 2, 5, 5, 5], &mut r);
        let kernel: Vec<f64> = (0..3 * 2 * 27).map(|_| r.random_range(-1.0..1.0)).collect();
        let bias: Vec<f64> = (0..3).map(|_| r.random_range(-1.0..1.0)).collect();
        let fast = ops::conv3d_forward(&input, &kernel, &bias, 3, 3, 2, 0).unwrap();
        let slow = conv_oracle(&input, &kernel, &bias, 3, 3, 2, 0);
        assert_eq!(fast.shape(), slow.shape());
        for (a, b) in fast.data().iter().zip(slow.data()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn shape_error_when_kernel_exceeds_input() {
        let input = Tensor5::<f64>::zeros([1, 1, 2, 2, 2]);
        let kernel = vec![0.0; 27];
        assert!(ops::conv3d_forward(&input, &kernel, &[0.0], 1, 3, 1, 0).is_err());
    }

    #[test]
    fn backward_input_is_adjoint_of_forward() {
        let mut r = rng(3);
        for _ in 0..20 {
            let (b, c_in, c_out) = (
                r.random_range(1..3usize),
                r.random_range(1..3usize),
                r.random_range(1..3usize),
            );
            let k = [1usize, 3][r.random_range(0..2usize)];
            let stride = r.random_range(1..3usize);
            let pad = if k == 3 { r.random_range(0..2usize) } else { 0 };
            // Exact-fit input so the conv/adjoint pair is lossless.
            let steps = r.random_range(1..4usize);
            let side = (steps - 1) * stride + k;
            let side = if side > 2 * pad { side - 2 * pad } else { continue };
            let x = random_tensor([b, c_in, side, side, side], &mut r);
            let kernel: Vec<f64> = (0..c_out * c_in * k * k * k)
                .map(|_| r.random_range(-1.0..1.0))
                .collect();
            let fwd =
                ops::conv3d_forward(&x, &kernel, &vec![0.0; c_out], c_out, k, stride, pad).unwrap();
            let y = random_tensor(fwd.shape(), &mut r);
            let grads = ops::conv3d_backward(&x, &kernel, c_out, k, stride, pad, &y);
            let lhs = dot(&fwd, &y);
            let rhs = dot(&x, &grads.input);
            assert!((lhs - rhs).abs() < 1e-6 * (1.0 + lhs.abs()), "{lhs} vs {rhs}");
        }
    }
}

mod transp_conv {
    use super::*;

    #[test]
    fn scalar_case() {
        let input = Tensor5::from_vec([1, 1, 1, 1, 1], vec![3.0f64]).unwrap();
        let out = ops::transp_conv3d_forward(&input, &[0.5], &[0.0], 1, 1, 1, 0).unwrap();
        assert_eq!(out.data(), &[1.5]);
    }

    #[test]
    fn k4_s2_doubles_and_satisfies_adjoint_identity() {
        let mut r = rng(4);
        let x2 = random_tensor([1, 1, 2, 2, 2], &mut r);
        let kernel: Vec<f64> = (0..64).map(|_| r.random_range(-1.0..1.0)).collect();
        let up = ops::transp_conv3d_forward(&x2, &kernel, &[0.0], 1, 4, 2, 1).unwrap();
        assert_eq!(up.spatial(), [4, 4, 4]);

        // <conv(a), b> == <a, transp_conv(b)> with the shared kernel.
        let a = random_tensor([1, 1, 4, 4, 4], &mut r);
        let conv = ops::conv3d_forward(&a, &kernel, &[0.0], 1, 4, 2, 1).unwrap();
        assert_eq!(conv.spatial(), [2, 2, 2]);
        let b = random_tensor([1, 1, 2, 2, 2], &mut r);
        let t = ops::transp_conv3d_forward(&b, &kernel, &[0.0], 1, 4, 2, 1).unwrap();
        let lhs = dot(&conv, &b);
        let rhs = dot(&a, &t);
        assert!((lhs - rhs).abs() < 1e-9, "{lhs} vs {rhs}");
    }

    #[test]
    fn zero_kernel_yields_bias() {
        let input = Tensor5::from_vec([1, 2, 2, 2, 2], vec![1.0f64; 16]).unwrap();
        let kernel = vec![0.0f64; 2 * 1 * 64];
        let out = ops::transp_conv3d_forward(&input, &kernel, &[0.25], 1, 4, 2, 1).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.25));
    }
}

mod pooling {
    use super::*;

    #[test]
    fn avg_pool_constant() {
        let input = Tensor5::from_vec([1, 2, 4, 4, 4], vec![0.7f64; 128]).unwrap();
        let out = ops::avg_pool_forward(&input).unwrap();
        assert_eq!(out.spatial(), [2, 2, 2]);
        assert!(out.data().iter().all(|&v| (v - 0.7).abs() < 1e-12));
    }

    #[test]
    fn avg_pool_of_one_to_eight() {
        let input = Tensor5::from_vec([1, 1, 2, 2, 2], (1..=8).map(|v| v as f64).collect()).unwrap();
        let out = ops::avg_pool_forward(&input).unwrap();
        assert_eq!(out.data(), &[4.5]);
    }

    #[test]
    fn avg_pool_odd_dims_drop_trailing_plane() {
        let mut r = rng(5);
        let input = random_tensor([1, 1, 5, 5, 5], &mut r);
        let out = ops::avg_pool_forward(&input).unwrap();
        assert_eq!(out.spatial(), [2, 2, 2]);
        for oz in 0..2 {
            for oy in 0..2 {
                for ox in 0..2 {
                    let mut acc = 0.0;
                    for dz in 0..2 {
                        for dy in 0..2 {
                            for dx in 0..2 {
                                acc += input.bc_slice(0, 0)
                                    [((2 * oz + dz) * 5 + 2 * oy + dy) * 5 + 2 * ox + dx];
                            }
                        }
                    }
                    let got = out.bc_slice(0, 0)[(oz * 2 + oy) * 2 + ox];
                    assert!((got - acc / 8.0).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn avg_pool_rejects_small_input() {
        let input = Tensor5::<f64>::zeros([1, 1, 1, 4, 4]);
        assert!(ops::avg_pool_forward(&input).is_err());
    }

    #[test]
    fn global_avg_pool_matches_direct_mean() {
        let mut r = rng(6);
        let input = random_tensor([2, 3, 3, 4, 5], &mut r);
        let out = ops::global_avg_pool_forward(&input);
        assert_eq!(out.shape(), [2, 3, 1, 1, 1]);
        for b in 0..2 {
            for c in 0..3 {
                let mean: f64 =
                    input.bc_slice(b, c).iter().sum::<f64>() / input.bc_slice(b, c).len() as f64;
                assert!((out.data()[b * 3 + c] - mean).abs() < 1e-12);
            }
        }
        // Single spatial element: identity.
        let single = random_tensor([1, 2, 1, 1, 1], &mut r);
        let out = ops::global_avg_pool_forward(&single);
        assert_eq!(out.data(), single.data());
    }
}

mod activations {
    use super::*;

    #[test]
    fn leaky_relu_definition() {
        let input = Tensor5::from_vec([1, 1, 1, 1, 2], vec![-1.0f64, 3.0]).unwrap();
        let out = ops::leaky_relu_forward(&input, 0.2);
        assert_eq!(out.data(), &[-0.2, 3.0]);
    }

    #[test]
    fn sigmoid_at_zero() {
        let input = Tensor5::from_vec([1, 1, 1, 1, 1], vec![0.0f64]).unwrap();
        let out = ops::sigmoid_forward(&input);
        assert_eq!(out.data(), &[0.5]);
    }

    #[test]
    fn affine_identity() {
        let mut r = rng(7);
        let input = random_tensor([2, 4, 1, 1, 1], &mut r);
        let mut weight = vec![0.0f64; 16];
        for i in 0..4 {
            weight[i * 4 + i] = 1.0;
        }
        let out = ops::affine_forward(&input, &weight, &[0.0; 4], 4).unwrap();
        assert_eq!(out.data(), input.data());
    }
}

mod backward {
    use super::*;

    fn single_layer_net(spec: LayerSpec, c_in: usize, spatial: [usize; 3], seed: u64) -> (Network, ParamStore<f64>) {
        let mut store = ParamStore::new();
        let mut r = rng(seed);
        let net = Network::compile(&[spec], c_in, spatial, &mut store, &mut r).unwrap();
        (net, store)
    }

    #[test]
    fn sigmoid_grad_at_zero_is_quarter() {
        let (net, store) = single_layer_net(LayerSpec::Sigmoid, 1, [1, 1, 1], 0);
        let input = Tensor5::from_vec([1, 1, 1, 1, 1], vec![0.0f64]).unwrap();
        let (_, tape) = net.forward(&store, &input).unwrap();
        let upstream = Tensor5::from_vec([1, 1, 1, 1, 1], vec![1.0f64]).unwrap();
        let mut grads = Grads::zeros_like(&store);
        let ig = net.backward(&store, &tape, upstream, &mut grads);
        assert!((ig.data()[0] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn zero_upstream_zeroes_all_gradients() {
        let (net, store) = single_layer_net(
            LayerSpec::Conv3d {
                out_channels: 2,
                kernel: 3,
                stride: 1,
                padding: 1,
                spectral_norm: false,
            },
            1,
            [4, 4, 4],
            1,
        );
        let mut r = rng(2);
        let input = random_tensor([1, 1, 4, 4, 4], &mut r);
        let (out, tape) = net.forward(&store, &input).unwrap();
        let upstream = Tensor5::zeros(out.shape());
        let mut grads = Grads::zeros_like(&store);
        let ig = net.backward(&store, &tape, upstream, &mut grads);
        assert!(ig.data().iter().all(|&v| v == 0.0));
        assert!(grads.slots().iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn every_layer_kind_passes_finite_difference_check() {
        let cases: Vec<(LayerSpec, usize, [usize; 3])> = vec![
            (
                LayerSpec::Conv3d {
                    out_channels: 2,
                    kernel: 3,
                    stride: 1,
                    padding: 1,
                    spectral_norm: false,
                },
                2,
                [4, 4, 4],
            ),
            (
                LayerSpec::Conv3d {
                    out_channels: 3,
                    kernel: 3,
                    stride: 2,
                    padding: 0,
                    spectral_norm: false,
                },
                1,
                [5, 5, 5],
            ),
            (
                LayerSpec::Conv3d {
                    out_channels: 2,
                    kernel: 3,
                    stride: 1,
                    padding: 1,
                    spectral_norm: true,
                },
                2,
                [3, 3, 3],
            ),
            (
                LayerSpec::TranspConv3d {
                    out_channels: 1,
                    kernel: 4,
                    stride: 2,
                    padding: 1,
                },
                2,
                [3, 3, 3],
            ),
            (LayerSpec::AvgPool, 2, [4, 4, 4]),
            (LayerSpec::GlobalAvgPool, 3, [3, 3, 3]),
            (
                LayerSpec::LeakyRelu {
                    negative_slope: 0.2,
                },
                2,
                [3, 3, 3],
            ),
            (LayerSpec::Sigmoid, 2, [3, 3, 3]),
            (LayerSpec::Affine { out_features: 5 }, 3, [2, 2, 2]),
            (
                LayerSpec::ResidualBlock {
                    channels: 3,
                    spectral_norm: true,
                },
                2,
                [3, 3, 3],
            ),
            (
                LayerSpec::DownsampleBlock {
                    channels: 2,
                    variant: DownsampleVariant::PoolConv,
                    spectral_norm: false,
                },
                1,
                [4, 4, 4],
            ),
            (
                LayerSpec::DownsampleBlock {
                    channels: 2,
                    variant: DownsampleVariant::StridedConv,
                    spectral_norm: false,
                },
                1,
                [4, 4, 4],
            ),
            (LayerSpec::UpsampleBlock { channels: 2 }, 3, [2, 2, 2]),
        ];
        for (i, (spec, c_in, spatial)) in cases.into_iter().enumerate() {
            let label = format!("{spec:?}");
            let (net, store) = single_layer_net(spec, c_in, spatial, 100 + i as u64);
            let mut r = rng(200 + i as u64);
            let input = random_tensor([2, c_in, spatial[0], spatial[1], spatial[2]], &mut r);
            let (out, _) = net.forward(&store, &input).unwrap();
            let target = random_tensor(out.shape(), &mut r);
            let err = grad_check(&net, &store, &input, &SquaredLoss { target }, 1e-5).unwrap();
            assert!(err < 1e-4, "{label}: max relative error {err}");
        }
    }

    #[test]
    fn linear_network_gradients_are_exact() {
        // Affine-only network with a quadratic loss: central differences are
        // exact up to rounding.
        let (net, store) = single_layer_net(LayerSpec::Affine { out_features: 4 }, 3, [2, 2, 2], 42);
        let mut r = rng(43);
        let input = random_tensor([2, 3, 2, 2, 2], &mut r);
        let (out, _) = net.forward(&store, &input).unwrap();
        let target = random_tensor(out.shape(), &mut r);
        let err = grad_check(&net, &store, &input, &SquaredLoss { target }, 1e-5).unwrap();
        assert!(err < 1e-8, "linear net grad check error {err}");
    }
}

mod network_shapes {
    use super::*;

    #[test]
    fn declared_shapes_match_computed_shapes() {
        let mut r = rng(8);
        for _ in 0..30 {
            let c_in = r.random_range(1..3usize);
            let side = r.random_range(6..12usize);
            let specs = vec![
                LayerSpec::ResidualBlock {
                    channels: r.random_range(1..4usize),
                    spectral_norm: r.random(),
                },
                LayerSpec::DownsampleBlock {
                    channels: 2,
                    variant: DownsampleVariant::PoolConv,
                    spectral_norm: false,
                },
                LayerSpec::LeakyRelu {
                    negative_slope: 0.2,
                },
                LayerSpec::GlobalAvgPool,
                LayerSpec::Affine { out_features: 3 },
                LayerSpec::Sigmoid,
            ];
            let mut store = ParamStore::<f64>::new();
            let net =
                Network::compile(&specs, c_in, [side, side, side], &mut store, &mut r).unwrap();
            let input = random_tensor([2, c_in, side, side, side], &mut r);
            let (out, _) = net.forward(&store, &input).unwrap();
            let ([d, h, w], c) = net.output_shape;
            assert_eq!(out.shape(), [2, c, d, h, w]);
        }
    }

    #[test]
    fn forward_is_independent_of_batch_partitioning() {
        let mut r = rng(9);
        let specs = vec![
            LayerSpec::ResidualBlock {
                channels: 2,
                spectral_norm: true,
            },
            LayerSpec::DownsampleBlock {
                channels: 2,
                variant: DownsampleVariant::PoolConv,
                spectral_norm: true,
            },
            LayerSpec::GlobalAvgPool,
            LayerSpec::Affine { out_features: 3 },
            LayerSpec::Sigmoid,
        ];
        let mut store = ParamStore::<f64>::new();
        let net = Network::compile(&specs, 1, [6, 6, 6], &mut store, &mut r).unwrap();
        let batch = random_tensor([4, 1, 6, 6, 6], &mut r);
        let (full, _) = net.forward(&store, &batch).unwrap();
        for b in 0..4 {
            let single = Tensor5::from_vec(
                [1, 1, 6, 6, 6],
                batch.bc_slice(b, 0).to_vec(),
            )
            .unwrap();
            let (one, _) = net.forward(&store, &single).unwrap();
            for c in 0..3 {
                assert_eq!(one.data()[c], full.data()[b * 3 + c]);
            }
        }
    }
}
