//! Integration tests: training loops, inference semantics, checkpointing
//! and the sampling distribution.

use ppr_core::diffcore::{load_checkpoint, ParamStore, Tensor5};
use ppr_core::models;
use ppr_core::pipeline::{
    infer_error_map_ae_with, infer_error_map_ppr, infer_error_map_ppr_with, load_trained,
    save_trained, train_ae, train_ppr, TrainConfig,
};
use ppr_core::sampling::{is_background_patch, sample_patch_batch};
use ppr_core::volumes::{
    denormalize_coord, generate_phantom, CaseLabel, Dims, LoadedCase, ManifestEntry, PhantomConfig,
    Split, Volume,
};
use ppr_core::Error;
use std::path::PathBuf;

fn loaded_case(n: usize, seed: u64, healthy: bool) -> LoadedCase {
    let mut cfg = PhantomConfig::healthy(n, seed);
    if !healthy {
        cfg.anomaly = ppr_core::volumes::Anomaly::BlobLeft;
    }
    let (volume, masks, labels) = generate_phantom(&cfg).unwrap();
    LoadedCase {
        entry: ManifestEntry {
            path: PathBuf::from(format!("mem_{seed}.vol")),
            labels,
            split: if healthy { Split::Train } else { Split::Test },
        },
        volume,
        masks: Some(masks),
    }
}

fn tiny_config() -> TrainConfig {
    TrainConfig {
        epochs: 2,
        lr: 1e-3,
        patches_per_volume: 16,
        volumes_per_batch: 2,
        s_p: 17,
        seed: 11,
        power_iters: 1,
        checkpoint_every: None,
        checkpoint_dir: None,
    }
}

#[test]
fn anomalous_training_volume_is_rejected_before_training() {
    let cases = vec![loaded_case(32, 1, true), loaded_case(32, 2, false)];
    let refs: Vec<&_> = cases.iter().collect();
    match train_ppr(1, &refs, &tiny_config()) {
        Err(Error::Validation(msg)) => assert!(msg.contains("mem_2")),
        other => panic!("expected validation error, got {:?}", other.map(|_| ())),
    }
}

#[test]
fn zero_learning_rate_leaves_parameters_unchanged() {
    let cases = vec![loaded_case(32, 3, true)];
    let refs: Vec<&_> = cases.iter().collect();
    let mut cfg = tiny_config();
    cfg.lr = 0.0;
    cfg.epochs = 1;
    let trained = train_ppr(1, &refs, &cfg).unwrap();
    assert_eq!(trained.history.epochs.len(), 1);

    // Fresh instantiation with the same seed must match exactly.
    let spec = models::build_ppr(1, cfg.s_p).unwrap();
    let mut fresh = ParamStore::<f32>::new();
    models::instantiate(&spec, cfg.seed, &mut fresh).unwrap();
    for (a, b) in trained.store.entries().iter().zip(fresh.entries()) {
        if !a.trainable {
            continue; // spectral u/v buffers are power-iterated during training
        }
        assert_eq!(a.name, b.name);
        let av: Vec<u32> = a.value.iter().map(|x| x.to_bits()).collect();
        let bv: Vec<u32> = b.value.iter().map(|x| x.to_bits()).collect();
        assert_eq!(av, bv, "{} changed despite lr = 0", a.name);
    }
}

#[test]
fn identical_seeds_give_bit_identical_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let cases = vec![loaded_case(32, 5, true), loaded_case(32, 6, true)];
    let refs: Vec<&_> = cases.iter().collect();
    let cfg = tiny_config();
    for run in 0..2 {
        let trained = train_ppr(1, &refs, &cfg).unwrap();
        save_trained(&dir.path().join(format!("run{run}.pprc")), &trained, &cfg).unwrap();
    }
    let a = std::fs::read(dir.path().join("run0.pprc")).unwrap();
    let b = std::fs::read(dir.path().join("run1.pprc")).unwrap();
    assert_eq!(a, b, "checkpoints differ between identical runs");
}

#[test]
fn small_ppr_training_reduces_loss() {
    let cases = vec![loaded_case(48, 7, true), loaded_case(48, 8, true)];
    let refs: Vec<&_> = cases.iter().collect();
    // Adam at this rate needs a couple hundred steps before the loss moves
    // well below the constant-predictor plateau.
    let cfg = TrainConfig {
        epochs: 120,
        lr: 1e-3,
        patches_per_volume: 128,
        s_p: 17,
        seed: 4,
        ..tiny_config()
    };
    let trained = train_ppr(2, &refs, &cfg).unwrap();
    let first = trained.history.epochs.first().unwrap().loss;
    let last = trained.history.epochs.last().unwrap().loss;
    assert!(
        last < 0.75 * first,
        "loss did not improve enough: {first} -> {last}"
    );
}

#[test]
fn ae_fits_constant_volumes() {
    // Constant volumes are trivially reconstructible.
    let dims = Dims::cube(32);
    let mk = |value: f32, idx: usize| LoadedCase {
        entry: ManifestEntry {
            path: PathBuf::from(format!("const_{idx}.vol")),
            labels: CaseLabel::default(),
            split: Split::Train,
        },
        volume: Volume::filled(dims, value),
        masks: Some(constant_masks(dims)),
    };
    let cases = vec![mk(0.5, 0), mk(0.5, 1)];
    let refs: Vec<&_> = cases.iter().collect();
    let cfg = TrainConfig {
        epochs: 100,
        lr: 1e-3,
        volumes_per_batch: 2,
        seed: 2,
        ..tiny_config()
    };
    let trained = train_ae(4, &refs, &cfg).unwrap();
    let final_loss = trained.history.final_loss().unwrap();
    assert!(final_loss < 0.01, "L1 loss {final_loss} after 100 epochs");
}

fn constant_masks(dims: Dims) -> ppr_core::volumes::MaskSet {
    let n = dims.count();
    ppr_core::volumes::MaskSet {
        dims,
        foreground: vec![true; n],
        skull: vec![false; n],
        hemisphere_left: vec![false; n],
        hemisphere_right: vec![false; n],
    }
}

#[test]
fn ae_training_on_phantoms_halves_the_loss() {
    let cases: Vec<LoadedCase> = (0..4).map(|i| loaded_case(32, 20 + i, true)).collect();
    let refs: Vec<&_> = cases.iter().collect();
    let cfg = TrainConfig {
        epochs: 150,
        lr: 2e-3,
        volumes_per_batch: 2,
        seed: 3,
        ..tiny_config()
    };
    let trained = train_ae(2, &refs, &cfg).unwrap();
    let first = trained.history.epochs.first().unwrap().loss;
    let last = trained.history.final_loss().unwrap();
    assert!(last < 0.5 * first, "AE loss {first} -> {last}");
}

#[test]
fn checkpoint_reload_reproduces_inference_bit_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let cases = vec![loaded_case(32, 9, true)];
    let refs: Vec<&_> = cases.iter().collect();
    let cfg = tiny_config();
    let trained = train_ppr(1, &refs, &cfg).unwrap();
    let path = dir.path().join("model.pprc");
    save_trained(&path, &trained, &cfg).unwrap();

    let (spec, net, store) = load_trained(&path).unwrap();
    assert_eq!(spec.input_side, cfg.s_p);
    let volume = &cases[0].volume;
    let direct = infer_error_map_ppr(&trained.net, &trained.store, volume, 4).unwrap();
    let reloaded = infer_error_map_ppr(&net, &store, volume, 4).unwrap();
    let a: Vec<u32> = direct.values.iter().map(|x| x.to_bits()).collect();
    let b: Vec<u32> = reloaded.values.iter().map(|x| x.to_bits()).collect();
    assert_eq!(a, b);

    // Header survives and the store carries the spectral buffers.
    let (header, raw) = load_checkpoint(&path).unwrap();
    assert_eq!(header.kind, "ppr");
    assert!(raw.entries().iter().any(|e| e.name.ends_with(".sn_u")));
}

#[test]
fn stride_lattice_matches_dense_map_and_chunking_is_irrelevant() {
    let cases = vec![loaded_case(32, 13, true)];
    let refs: Vec<&_> = cases.iter().collect();
    let mut cfg = tiny_config();
    cfg.epochs = 1;
    let trained = train_ppr(1, &refs, &cfg).unwrap();
    let mut vol = Volume::filled(Dims::cube(24), 0.0);
    for (i, v) in vol.voxels.iter_mut().enumerate() {
        *v = ((i * 2654435761) % 1000) as f32 / 1000.0;
    }

    let dense = infer_error_map_ppr(&trained.net, &trained.store, &vol, 1).unwrap();
    let strided = infer_error_map_ppr(&trained.net, &trained.store, &vol, 4).unwrap();
    for z in (0..24).step_by(4) {
        for y in (0..24).step_by(4) {
            for x in (0..24).step_by(4) {
                let i = vol.dims.index(x, y, z);
                assert_eq!(dense.values[i].to_bits(), strided.values[i].to_bits());
            }
        }
    }
    // Values are bounded by the unit-cube diagonal.
    assert!(dense.values.iter().all(|&v| v >= 0.0 && v <= 3f32.sqrt()));

    // Chunk size must not change anything.
    let s_p = cfg.s_p;
    let net = &trained.net;
    let store = &trained.store;
    let with_chunk = |chunk: usize| {
        infer_error_map_ppr_with(
            |input| net.forward(store, input).map(|(o, _)| o),
            s_p,
            &vol,
            3,
            chunk,
        )
        .unwrap()
    };
    let a = with_chunk(7);
    let b = with_chunk(512);
    assert_eq!(
        a.values.iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
        b.values.iter().map(|x| x.to_bits()).collect::<Vec<_>>()
    );
}

#[test]
fn perfect_regressor_double_yields_zero_map() {
    // Volume whose voxel values encode their own linear index, so the true
    // center is decodable from the patch content; n - 1 is a power of two so
    // the normalized coordinates are exact in f32.
    let n = 17usize;
    let dims = Dims::cube(n);
    let mut vol = Volume::filled(dims, 0.0);
    for (i, v) in vol.voxels.iter_mut().enumerate() {
        *v = i as f32;
    }
    let s_p = 5usize;
    let mid = (s_p * s_p * s_p) / 2;
    let map = infer_error_map_ppr_with(
        |input| {
            let b = input.shape()[0];
            let mut out = Tensor5::zeros([b, 3, 1, 1, 1]);
            for bi in 0..b {
                let idx = input.bc_slice(bi, 0)[mid] as usize;
                let z = idx / (n * n);
                let y = (idx / n) % n;
                let x = idx % n;
                out.data_mut()[bi * 3] = x as f32 / (n - 1) as f32;
                out.data_mut()[bi * 3 + 1] = y as f32 / (n - 1) as f32;
                out.data_mut()[bi * 3 + 2] = z as f32 / (n - 1) as f32;
            }
            Ok(out)
        },
        s_p,
        &vol,
        1,
        64,
    )
    .unwrap();
    assert!(map.values.iter().all(|&v| v == 0.0), "max {}", map.max());
}

#[test]
fn ae_identity_and_constant_doubles() {
    let (vol, _, _) = generate_phantom(&PhantomConfig::healthy(32, 21)).unwrap();
    let identity = infer_error_map_ae_with(|input| Ok(input.clone()), &vol).unwrap();
    assert!(identity.values.iter().all(|&v| v == 0.0));

    let c = 0.25f32;
    let constant = infer_error_map_ae_with(
        |input| {
            Ok(Tensor5::from_vec(input.shape(), vec![c; input.numel()]).unwrap())
        },
        &vol,
    )
    .unwrap();
    for (e, v) in constant.values.iter().zip(&vol.voxels) {
        assert_eq!(*e, (v - c).abs());
        assert!(*e <= 1.0);
    }
}

#[test]
fn sampled_centers_are_uniform_over_the_accepted_region() {
    use rand_chacha::rand_core::SeedableRng;
    let (vol, masks, _) = generate_phantom(&PhantomConfig::healthy(32, 17)).unwrap();
    let dims = vol.dims;
    let s_p = 9usize;

    // Acceptable-center counts per 4x4x4 spatial bin.
    let bins_per_axis = 4usize;
    let bin_of = |x: usize| x * bins_per_axis / dims.x;
    let mut acceptable = vec![0u64; bins_per_axis.pow(3)];
    for z in 0..dims.z {
        for y in 0..dims.y {
            for x in 0..dims.x {
                if !is_background_patch(&masks.foreground, dims, [x, y, z], s_p) {
                    acceptable[(bin_of(z) * bins_per_axis + bin_of(y)) * bins_per_axis + bin_of(x)] += 1;
                }
            }
        }
    }
    let total_acceptable: u64 = acceptable.iter().sum();

    let draws = 100_000usize;
    let mut observed = vec![0u64; acceptable.len()];
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1234);
    let per_call = 2000;
    for _ in 0..draws / per_call {
        let batch = sample_patch_batch(&vol, &masks.foreground, per_call, s_p, &mut rng).unwrap();
        for t in &batch.targets {
            let idx = denormalize_coord(*t, dims);
            observed[(bin_of(idx[2]) * bins_per_axis + bin_of(idx[1])) * bins_per_axis
                + bin_of(idx[0])] += 1;
        }
    }

    let mut chi2 = 0.0f64;
    let mut dof = 0usize;
    for (obs, acc) in observed.iter().zip(&acceptable) {
        let expected = draws as f64 * *acc as f64 / total_acceptable as f64;
        if expected > 0.0 {
            let d = *obs as f64 - expected;
            chi2 += d * d / expected;
            dof += 1;
        } else {
            assert_eq!(*obs, 0, "draw landed in a bin with no acceptable centers");
        }
    }
    let dof = (dof - 1) as f64;
    // Wilson-Hilferty critical value at significance 0.001.
    let z = 3.090_232_306_167_813f64;
    let critical = dof * (1.0 - 2.0 / (9.0 * dof) + z * (2.0 / (9.0 * dof)).sqrt()).powi(3);
    assert!(
        chi2 < critical,
        "chi2 {chi2:.1} exceeds critical {critical:.1} at dof {dof}"
    );
}
