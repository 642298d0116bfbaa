//! Manual throughput probe for one training step at default dims.
//! Run with: cargo test -p tscub --test step_bench -- --ignored --nocapture

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tscub::autodiff::{AdamConfig, Graph, Tensor};
use tscub::backbone::{forward, init_params, BackboneConfig, BatchInput, PersonInput};

#[test]
#[ignore]
fn time_one_training_step() {
    let cfg = BackboneConfig::default_dims(8, 6);
    let mut store = init_params(&cfg, 1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let batch = 32;
    let mut position = Tensor::zeros(&[batch, cfg.coord_dim, cfg.frames, cfg.joints]);
    let mut motion = Tensor::zeros(&[batch, cfg.coord_dim, cfg.frames, cfg.joints]);
    for v in position.data_mut() {
        *v = rng.gen_range(-1.0..1.0);
    }
    for v in motion.data_mut() {
        *v = rng.gen_range(-0.2..0.2);
    }
    let input = BatchInput {
        persons: vec![PersonInput { position, motion }],
        batch,
    };
    let labels: Vec<usize> = (0..batch).map(|i| i % 8).collect();
    let perm_labels: Vec<usize> = (0..batch).map(|i| i % 6).collect();
    let mask = vec![true; batch];
    let adam = AdamConfig::default();

    let step = |store: &mut tscub::autodiff::ParamStore| {
        store.zero_grads();
        let mut g = Graph::new();
        let nodes = forward(&mut g, store, &input, &cfg, None).unwrap();
        let (jc, _) = g
            .softmax_cross_entropy(nodes.action_logits, &labels, &mask)
            .unwrap();
        let (ja, _) = g
            .softmax_cross_entropy(nodes.perm_logits, &perm_labels, &mask)
            .unwrap();
        let ja_s = g.scale(ja, 0.1).unwrap();
        let total = g.add(jc, ja_s).unwrap();
        g.backward(total, store).unwrap();
        store.adam_step(&adam).unwrap();
        g.value(total).item()
    };

    for _ in 0..3 {
        step(&mut store);
    }
    let n = 30;
    let t0 = std::time::Instant::now();
    for _ in 0..n {
        step(&mut store);
    }
    let dt = t0.elapsed();
    let per_step = dt / n;
    eprintln!(
        "params: {} scalars; {per_step:?} per step ({batch} clips) => {:.1} clips/s",
        store.num_scalars(),
        batch as f64 / per_step.as_secs_f64()
    );
}
