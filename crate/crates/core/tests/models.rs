use rpnet_core::data::{permute, rotate_y, ShapeKind, Task, ToyDatasetSpec};
use rpnet_core::geometry::PointCloud;
use rpnet_core::models::ops::model_registry;
use rpnet_core::models::{
    build_rpnet_d, build_rpnet_w, canonical_seed, vote_predict, vote_probs, BlockParams, InputFeatures, RpNet,
};
use rpnet_core::nn::Params;
use rpnet_core::relation::{count_params, GeometricRelationSpec};
use rpnet_core::rng::stream;
use rpnet_core::tensor::gradcheck::{certify, random_tensor, DEFAULT_STEP, DEFAULT_TOL};

fn random_cloud(n: usize, seed: u64) -> PointCloud {
    PointCloud::new(random_tensor(&mut stream(seed, "cloud").rng(), &[n, 3]), None, None).unwrap()
}

fn ov(pairs: &[(&str, &str)]) -> Vec<(String, String)> {
    pairs.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect()
}

#[test]
fn whole_network_gradients_certify() {
    for op in model_registry() {
        for r in certify(op.as_ref(), &[0, 1], DEFAULT_STEP, DEFAULT_TOL) {
            assert!(r.pass, "{r:?}");
            assert!(r.checked > 0);
        }
    }
}

#[test]
fn classification_batch_shape() {
    let spec = build_rpnet_w("W7", 40, &[]).unwrap();
    assert_eq!(spec.num_points, 1024);
    let m = RpNet::new(spec, 0).unwrap();
    assert_eq!(m.block_count(), 7);
    let clouds: Vec<_> = (0..2).map(|s| random_cloud(1024, s)).collect();
    let y = m.forward_batch(&clouds).unwrap();
    assert_eq!(y.shape(), &[2, 40]);
}

#[test]
fn segmentation_batch_shape() {
    let m = RpNet::new(build_rpnet_d("D4", 2, &[]).unwrap(), 0).unwrap();
    let clouds: Vec<_> = (0..2).map(|s| random_cloud(2048, s)).collect();
    assert_eq!(m.forward_batch(&clouds).unwrap().shape(), &[2, 2048, 2]);
}

#[test]
fn preset_block_counts_survive_construction() {
    for p in ["D8", "D14"] {
        let spec = build_rpnet_d(p, 4, &[]).unwrap();
        let n = spec.block_count();
        assert_eq!(RpNet::new(spec, 1).unwrap().block_count(), n);
    }
}

#[test]
fn multi_scale_width_is_sum_of_scales() {
    let m = RpNet::new(build_rpnet_w("W7", 5, &[]).unwrap(), 0).unwrap();
    let s0 = &m.spec().stages[0];
    assert_eq!(s0.width(), 3 * s0.out_channels);
    assert_eq!(m.block_configs()[1][0].c_in, 3 * 128);
}

#[test]
fn parameter_count_is_sum_of_parts() {
    let m = RpNet::new(build_rpnet_w("W3", 3, &[]).unwrap(), 0).unwrap();
    let mut total = m.params.stem.count_params() + m.params.head.count_params();
    for (cfgs, blocks) in m.block_configs().iter().zip(&m.params.blocks) {
        for (cfg, b) in cfgs.iter().zip(blocks) {
            assert_eq!(b.count_params(), count_params(cfg));
            total += count_params(cfg);
        }
    }
    assert_eq!(m.count_params(), total);
}

#[test]
fn eval_forward_is_deterministic() {
    let m = RpNet::new(build_rpnet_w("W3", 3, &[]).unwrap(), 4).unwrap();
    let c = random_cloud(256, 9);
    let a = m.forward(&c).unwrap();
    let b = m.forward(&c).unwrap();
    assert_eq!(a.data(), b.data());
}

#[test]
fn shuffled_input_with_remapped_seed() {
    let m = RpNet::new(build_rpnet_w("W3", 3, &[]).unwrap(), 2).unwrap();
    let c = random_cloud(256, 5);
    let (p, order) = permute(&c, 11).unwrap();
    for seed in [0usize, 17, 200] {
        let remapped = order.iter().position(|&o| o == seed).unwrap();
        let a = m.forward_with_seed(&c, seed).unwrap();
        let b = m.forward_with_seed(&p, remapped).unwrap();
        assert!(a.max_abs_diff(&b) < 1e-9);
    }
    // the canonical seed follows the points on its own
    assert!(m.forward(&c).unwrap().max_abs_diff(&m.forward(&p).unwrap()) < 1e-9);
    assert_eq!(order[canonical_seed(p.coords())], canonical_seed(c.coords()));
}

#[test]
fn sa_degenerate_network_matches_sa_baseline() {
    let o = ov(&[("gra.uniform_attention", "true"), ("gra.sem", "none")]);
    let m = RpNet::new(build_rpnet_d("D8", 3, &o).unwrap(), 6).unwrap();
    let twin = m.sa_twin().unwrap();
    assert!(twin.params.blocks.iter().flatten().all(|b| matches!(b, BlockParams::Sa(_))));
    let c = random_cloud(2048, 1);
    let diff = m.forward(&c).unwrap().max_abs_diff(&twin.forward(&c).unwrap());
    assert!(diff <= 1e-12, "{diff}");
}

#[test]
fn residual_block_with_zero_output_is_identity() {
    // zero the output map of the residual block: the D8 network must then
    // behave as if the block were absent
    let mut m = RpNet::new(build_rpnet_d("D8", 2, &[]).unwrap(), 3).unwrap();
    if let BlockParams::Gra(g) = &mut m.params.blocks[1][0] {
        g.out.weight.fill(0.0);
        g.out.bias.fill(0.0);
    }
    let mut spec = m.spec().clone();
    spec.stages.remove(1);
    let mut plain = RpNet::new(spec, 3).unwrap();
    plain.params.stem = m.params.stem.clone();
    plain.params.blocks = m.params.blocks.iter().enumerate().filter(|(i, _)| *i != 1).map(|(_, b)| b.clone()).collect();
    plain.params.decoder = m.params.decoder.clone();
    plain.params.head = m.params.head.clone();
    let c = random_cloud(2048, 2);
    assert_eq!(m.forward(&c).unwrap().data(), plain.forward(&c).unwrap().data());
}

#[test]
fn translation_invariance_with_relative_geometry() {
    let geo = serde_json::to_string(&GeometricRelationSpec::relative()).unwrap();
    let o = ov(&[("gra.geo", &geo), ("input", "\"constant\"")]);
    let spec = build_rpnet_w("W3", 3, &o).unwrap();
    assert_eq!(spec.input, InputFeatures::Constant);
    let m = RpNet::new(spec, 8).unwrap();
    let c = random_cloud(256, 3);
    for off in [0.2, -0.2] {
        let t = rpnet_core::data::apply_rigid(&c, &rpnet_core::data::Perturbation::Translate { offset: [off; 3] }).unwrap();
        assert!(m.forward(&c).unwrap().max_abs_diff(&m.forward(&t).unwrap()) < 1e-6);
    }
}

#[test]
fn rotation_invariance_with_distance_only_geometry() {
    let geo = serde_json::to_string(&GeometricRelationSpec::l2_only()).unwrap();
    let o = ov(&[("gra.geo", &geo), ("input", "constant")]);
    let m = RpNet::new(build_rpnet_w("W3", 3, &o).unwrap(), 8).unwrap();
    let c = random_cloud(256, 4);
    for deg in [90.0, 180.0, 270.0] {
        let r = rotate_y(&c, deg).unwrap();
        assert!(m.forward(&c).unwrap().max_abs_diff(&m.forward(&r).unwrap()) < 1e-6);
    }
}

#[test]
fn voting() {
    let m = RpNet::new(build_rpnet_w("W3", 3, &[]).unwrap(), 0).unwrap();
    let c = random_cloud(256, 0);
    let plain = rpnet_core::models::argmax_rows(&m.forward(&c).unwrap())[0];
    assert_eq!(vote_predict(&m, &c, 1, &mut stream(1, "v").rng()).unwrap(), plain);
    let a = vote_probs(&m, &c, 4, &mut stream(2, "v").rng()).unwrap();
    let b = vote_probs(&m, &c, 4, &mut stream(2, "v").rng()).unwrap();
    assert_eq!(a, b);
    assert!((a.sum() - 1.0).abs() < 1e-12);
    assert!(vote_probs(&m, &c, 0, &mut stream(2, "v").rng()).is_err());
}

#[test]
fn loss_decreases_early_for_most_seeds() {
    use rpnet_core::models::{train_epoch, TrainConfig};
    use rpnet_core::nn::Adam;
    let mut improved = 0;
    for seed in 0..5 {
        let spec = ToyDatasetSpec {
            task: Task::Classify,
            classes: vec![ShapeKind::Sphere, ShapeKind::Cube, ShapeKind::Cylinder],
            points_per_cloud: 64,
            clouds_per_class: 8,
            seed,
        };
        let (train, _) = rpnet_core::data::generate_toy(&spec).unwrap();
        let o = ov(&[("num_points", "64"), ("stages.0.sample_to", "32"), ("stages.0.scales", "[16]"), ("stages.1.sample_to", "16"), ("stages.1.scales", "[16]")]);
        let mut m = RpNet::new(build_rpnet_w("W3", 3, &o).unwrap(), seed).unwrap();
        let cfg = TrainConfig { epochs: 5, batch_size: 8, lr: Default::default(), augment: true, seed };
        let mut opt = Adam::new();
        let losses: Vec<f64> = (0..5).map(|e| train_epoch(&mut m, &mut opt, &train, e, &cfg).unwrap()).collect();
        if losses[4] < losses[0] {
            improved += 1;
        }
    }
    assert!(improved >= 4, "{improved}");
}

#[test]
fn input_size_mismatch_is_reported() {
    let m = RpNet::new(build_rpnet_w("W3", 3, &[]).unwrap(), 0).unwrap();
    assert!(m.forward(&random_cloud(100, 0)).is_err());
}
