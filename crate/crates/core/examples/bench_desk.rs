//! Rough throughput probe for the desk-scale configuration: one training
//! step and one partial inference pass, timed.
//!
//! Run with: cargo run --release --example bench_desk

use ppr_core::diffcore::{Adam, AdamConfig, Grads, ParamStore, Tensor5};
use ppr_core::models;
use ppr_core::pipeline::infer_error_map_ppr;
use ppr_core::sampling::sample_patch_batch;
use ppr_core::volumes::{generate_phantom, PhantomConfig};
use std::time::Instant;

fn main() {
    let (v, masks, _) = generate_phantom(&PhantomConfig::healthy(64, 1)).unwrap();
    let spec = models::build_ppr(2, 19).unwrap();
    let mut store = ParamStore::<f32>::new();
    let net = models::instantiate(&spec, 7, &mut store).unwrap();
    let mut adam = Adam::new(&store, AdamConfig::with_lr(1e-4));

    use rand_chacha::rand_core::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);

    // One full training step: 256 patches forward + backward + update.
    let t0 = Instant::now();
    let steps = 5;
    for _ in 0..steps {
        let batch = sample_patch_batch(&v, &masks.foreground, 256, 19, &mut rng).unwrap();
        let mut data = Vec::with_capacity(256 * 19 * 19 * 19);
        for p in &batch.patches {
            data.extend_from_slice(&p.values);
        }
        let input = Tensor5::from_vec([256, 1, 19, 19, 19], data).unwrap();
        net.power_iterate(&mut store, 1);
        let (out, tape) = net.forward(&store, &input).unwrap();
        let mut upstream = Tensor5::zeros(out.shape());
        for (i, t) in batch.targets.iter().enumerate() {
            let o = &out.data()[i * 3..(i + 1) * 3];
            let d = [
                o[0] - t.x as f32,
                o[1] - t.y as f32,
                o[2] - t.z as f32,
            ];
            let dist = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt().max(1e-12);
            for c in 0..3 {
                upstream.data_mut()[i * 3 + c] = d[c] / (256.0 * dist);
            }
        }
        let mut grads = Grads::zeros_like(&store);
        net.backward(&store, &tape, upstream, &mut grads);
        adam.step(&mut store, &grads).unwrap();
    }
    let step_time = t0.elapsed().as_secs_f64() / steps as f64;
    println!("train step (256 patches, m=2, s_p=19): {:.3}s", step_time);
    println!(
        "projected training (200 epochs x 40 volumes): {:.1} min",
        step_time * 200.0 * 40.0 / 60.0
    );

    // Inference at stride 2 over one volume, then extrapolate to stride 1.
    let t1 = Instant::now();
    let map = infer_error_map_ppr(&net, &store, &v, 2).unwrap();
    let stride2 = t1.elapsed().as_secs_f64();
    println!("inference stride 2 on 64^3: {:.2}s (map mean {:.4})", stride2, map.mean());
    println!(
        "projected stride-1 inference on 28 volumes: {:.1} min",
        stride2 * 8.0 * 28.0 / 60.0
    );
}
