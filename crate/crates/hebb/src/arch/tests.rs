use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::hebbian::Competition;
use crate::tensor::batchnorm_forward;

fn rand_t(rng: &mut ChaCha8Rng, n: usize, c: usize, h: usize, w: usize) -> Tensor4<f32> {
    Tensor4::from_vec(n, c, h, w, (0..n * c * h * w).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

/// A deliberately small network for behavioral tests.
fn tiny_spec() -> NetworkSpec {
    NetworkSpec {
        name: "tiny".into(),
        input_channels: 3,
        input_size: 8,
        blocks: vec![
            LayerBlock::BatchNorm { channels: 3 },
            LayerBlock::HebbianConv {
                in_channels: 3,
                out_channels: 8,
                kernel: 3,
                stride: 1,
                padding: 1,
                cosine: false,
                stage: 0,
            },
            LayerBlock::Triangle { power: 1.0 },
            LayerBlock::MaxPool { kernel: 2, stride: 2, padding: 0 },
        ],
        num_classes: 10,
    }
}

#[test]
fn journe3_shapes_match_table() {
    let spec = build_journe(3, 3).unwrap();
    let shapes = spec.shapes_for(32, 32).unwrap();
    let expect = [
        (3, 32, 32),    // batchnorm
        (96, 32, 32),   // conv 5x5 pad 2
        (96, 32, 32),   // triangle
        (96, 16, 16),   // maxpool 4x4 s2 p1
        (96, 16, 16),   // batchnorm
        (384, 16, 16),  // conv 3x3 pad 1
        (384, 16, 16),  // triangle
        (384, 8, 8),    // maxpool
        (384, 8, 8),    // batchnorm
        (1536, 8, 8),   // conv
        (1536, 8, 8),   // triangle
        (1536, 4, 4),   // avgpool 2x2 s2
    ];
    assert_eq!(shapes, expect);
    assert_eq!(spec.feature_dim().unwrap(), 24576);
}

#[test]
fn journe4_shapes_match_table() {
    let spec = build_journe(4, 3).unwrap();
    let shapes = spec.shapes_for(32, 32).unwrap();
    assert_eq!(shapes[11], (1536, 4, 4));
    let tail = &shapes[12..];
    assert_eq!(
        tail,
        [(1536, 4, 4), (6144, 4, 4), (6144, 4, 4), (6144, 2, 2)]
    );
    assert_eq!(spec.feature_shape().unwrap(), (6144, 2, 2));
}

#[test]
fn journe_greyscale_variant() {
    let spec = build_journe(3, 1).unwrap();
    match &spec.blocks[1] {
        LayerBlock::HebbianConv { in_channels, .. } => assert_eq!(*in_channels, 1),
        other => panic!("unexpected block {other:?}"),
    }
    // 28x28 greyscale input flows through
    assert!(spec.shapes_for(28, 28).is_ok());
}

#[test]
fn lagani3_shapes_match_table() {
    let spec = build_lagani(3).unwrap();
    let shapes = spec.shapes_for(32, 32).unwrap();
    let expect = [
        (3, 32, 32),
        (96, 28, 28),  // conv 5x5 no pad
        (96, 28, 28),
        (96, 14, 14),  // maxpool 2x2
        (96, 14, 14),
        (128, 12, 12), // conv 3x3 no pad
        (128, 12, 12),
        (128, 12, 12),
        (192, 10, 10),
        (192, 10, 10),
        (192, 5, 5), // avgpool
    ];
    assert_eq!(shapes, expect);
    assert_eq!(spec.feature_dim().unwrap(), 4800);
    // cosine response is part of this architecture
    for b in &spec.blocks {
        if let LayerBlock::HebbianConv { cosine, .. } = b {
            assert!(*cosine);
        }
    }
}

#[test]
fn lagani4_final_shape() {
    let spec = build_lagani(4).unwrap();
    assert_eq!(spec.feature_shape().unwrap(), (256, 3, 3));
}

#[test]
fn invalid_depth_rejected() {
    assert!(build_journe(2, 3).is_err());
    assert!(build_journe(5, 3).is_err());
    assert!(build_lagani(1).is_err());
    assert!(build_journe(3, 2).is_err());
}

#[test]
fn depthwise_journe_shapes_match_table() {
    let spec = build_depthwise_journe().unwrap();
    let shapes = spec.shapes_for(32, 32).unwrap();
    // the depthwise stage preserves the channel count at 16x16
    assert_eq!(shapes[5], (96, 16, 16));
    assert_eq!(shapes[7], (384, 16, 16)); // pointwise mixing
    assert_eq!(shapes[11], (384, 8, 8));
    assert_eq!(spec.feature_shape().unwrap(), (1536, 4, 4));
}

#[test]
fn parameter_counts_and_ratio() {
    let baseline = build_journe(3, 3).unwrap();
    let depthwise = build_depthwise_journe().unwrap();
    let pb = baseline.param_count_with_head().unwrap();
    let pd = depthwise.param_count_with_head().unwrap();
    assert_eq!(pb, 5_893_162);
    assert_eq!(pd, 883_978);
    let ratio = pb as f64 / pd as f64;
    assert!((6.0..7.2).contains(&ratio), "ratio {ratio}");
}

#[test]
fn residual_journe_matches_baseline_shapes() {
    let spec = build_residual_journe().unwrap();
    let shapes = spec.shapes_for(32, 32).unwrap();
    assert_eq!(shapes[3], (96, 16, 16));
    assert_eq!(shapes[4], (384, 16, 16));
    assert_eq!(shapes[5], (384, 8, 8));
    assert_eq!(shapes[6], (1536, 8, 8));
    assert_eq!(spec.feature_shape().unwrap(), (1536, 4, 4));
    // x4 channel expansion inside each block
    for b in &spec.blocks {
        if let LayerBlock::Residual { in_channels, hidden, .. } = b {
            assert_eq!(*hidden, in_channels * 4);
        }
    }
}

#[test]
fn scale_width_divides_internal_channels() {
    let spec = build_journe(3, 3).unwrap().scale_width(8).unwrap();
    assert_eq!(spec.feature_shape().unwrap(), (192, 4, 4));
    match &spec.blocks[1] {
        LayerBlock::HebbianConv { in_channels, out_channels, .. } => {
            assert_eq!((*in_channels, *out_channels), (3, 12));
        }
        other => panic!("unexpected block {other:?}"),
    }
    assert!(build_journe(3, 3).unwrap().scale_width(7).is_err());
}

#[test]
fn spec_serializes_to_text() {
    let spec = build_depthwise_journe().unwrap();
    let text = spec.to_text();
    assert!(text.contains("network journe-depthwise"));
    assert!(text.contains("depthwise channels=96 kernel=3"));
    assert!(text.contains("avgpool kernel=2"));
    assert_eq!(text.lines().count(), 3 + spec.blocks.len());
}

#[test]
fn network_learns_and_freezes() {
    let spec = tiny_spec();
    let mut rng = ChaCha8Rng::seed_from_u64(80);
    let mut net = Network::new(&spec, &[HebbianLayerConfig::default()], &mut rng).unwrap();
    let init: Vec<Vec<f32>> = net.weight_banks().iter().map(|w| w.data().to_vec()).collect();
    let batches: Vec<_> = (0..4).map(|_| rand_t(&mut rng, 2, 3, 8, 8)).collect();
    hebbian_epoch(&mut net, batches).unwrap();
    let after: Vec<Vec<f32>> = net.weight_banks().iter().map(|w| w.data().to_vec()).collect();
    assert_ne!(init, after, "weights did not move during the epoch");
    // frozen: repeated forward passes leave weights bit-identical
    let x = rand_t(&mut rng, 1, 3, 8, 8);
    let y0 = net.forward_features(&x).unwrap();
    for _ in 0..100 {
        let y = net.forward_features(&x).unwrap();
        assert_eq!(y.data(), y0.data());
    }
    let frozen: Vec<Vec<f32>> = net.weight_banks().iter().map(|w| w.data().to_vec()).collect();
    assert_eq!(after, frozen);
}

#[test]
fn epoch_is_seed_deterministic() {
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(81);
        let mut net = Network::new(&tiny_spec(), &[HebbianLayerConfig::default()], &mut rng).unwrap();
        let batches: Vec<_> = (0..3).map(|_| rand_t(&mut rng, 2, 3, 8, 8)).collect();
        hebbian_epoch(&mut net, batches).unwrap();
        net.weight_banks().iter().map(|w| w.data().to_vec()).collect::<Vec<_>>()
    };
    assert_eq!(run(), run());
}

#[test]
fn zero_eta_epoch_leaves_weights_at_init() {
    let mut rng = ChaCha8Rng::seed_from_u64(82);
    let cfg = HebbianLayerConfig { eta: 0.0, ..Default::default() };
    let mut net = Network::new(&tiny_spec(), &[cfg], &mut rng).unwrap();
    let init: Vec<Vec<f32>> = net.weight_banks().iter().map(|w| w.data().to_vec()).collect();
    let batches: Vec<_> = (0..3).map(|_| rand_t(&mut rng, 2, 3, 8, 8)).collect();
    hebbian_epoch(&mut net, batches).unwrap();
    let after: Vec<Vec<f32>> = net.weight_banks().iter().map(|w| w.data().to_vec()).collect();
    assert_eq!(init, after);
}

#[test]
fn per_stage_configs_are_applied() {
    let spec = build_journe(3, 3).unwrap().scale_width(8).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(83);
    let mut cfgs = vec![HebbianLayerConfig::default(); 3];
    cfgs[0].eta = 0.1;
    cfgs[1].eta = 0.08;
    cfgs[2].eta = 0.05;
    let net = Network::new(&spec, &cfgs, &mut rng).unwrap();
    let etas: Vec<f32> = net
        .layers
        .iter()
        .filter_map(|l| match l {
            NetLayer::Hebbian(h) => Some(h.config.eta),
            _ => None,
        })
        .collect();
    assert_eq!(etas, vec![0.1, 0.08, 0.05]);
    // wrong count is rejected
    assert!(Network::new(&spec, &vec![HebbianLayerConfig::default(); 2], &mut rng).is_err());
}

#[test]
fn depthwise_stage_isolates_channels() {
    let mut rng = ChaCha8Rng::seed_from_u64(84);
    let layer = crate::hebbian::HebbianConvLayer::new_depthwise(
        4,
        3,
        1,
        1,
        HebbianLayerConfig { eta: 0.0, ..Default::default() },
        &mut rng,
    )
    .unwrap();
    let x = rand_t(&mut rng, 1, 4, 6, 6);
    let y0 = layer.forward(&x).unwrap();
    let mut x2 = x.clone();
    for v in x2.image_mut(0)[2 * 36..3 * 36].iter_mut() {
        *v += 0.5; // perturb channel 2 only
    }
    let y1 = layer.forward(&x2).unwrap();
    for ch in 0..4 {
        let same = y0.data()[ch * 36..(ch + 1) * 36] == y1.data()[ch * 36..(ch + 1) * 36];
        assert_eq!(same, ch != 2, "channel {ch} isolation violated");
    }
}

#[test]
fn residual_block_matches_hand_composition() {
    let mut rng = ChaCha8Rng::seed_from_u64(85);
    let cfg = HebbianLayerConfig { eta: 0.0, ..Default::default() };
    let block = ResidualBlock::new(4, 12, 16, 1.4, cfg, &mut rng).unwrap();
    let x = rand_t(&mut rng, 2, 4, 5, 5);
    let got = block.forward(&x).unwrap();

    // recompose from the public sub-layers
    let t = batchnorm_forward(&x, &block.bn_in, false).unwrap().0;
    let t = block.expand.forward(&t).unwrap();
    let t = triangle_activation(&t, 1.4);
    let t = batchnorm_forward(&t, &block.bn_mid, false).unwrap().0;
    let t = block.depthwise.forward(&t).unwrap();
    let t = triangle_activation(&t, 1.4);
    let t = batchnorm_forward(&t, &block.bn_out, false).unwrap().0;
    let main = block.project.forward(&t).unwrap();
    let (bn, conv) = block.shortcut.as_ref().expect("differing channel counts need a shortcut");
    let s = batchnorm_forward(&x, bn, false).unwrap().0;
    let short = conv.forward(&s).unwrap();
    let mut sum = main.clone();
    sum.add_scaled(&short, 1.0);
    let expect = triangle_activation(&sum, 1.4);
    assert_eq!(got.data(), expect.data());
}

#[test]
fn residual_zero_main_path_reduces_to_shortcut() {
    let mut rng = ChaCha8Rng::seed_from_u64(86);
    let cfg = HebbianLayerConfig { eta: 0.0, ..Default::default() };
    let mut block = ResidualBlock::new(4, 12, 16, 1.0, cfg, &mut rng).unwrap();
    // zero the projection: the main path contributes nothing to the add
    block.project.weights.scale(0.0);
    let x = rand_t(&mut rng, 1, 4, 5, 5);
    let got = block.forward(&x).unwrap();
    let (bn, conv) = block.shortcut.as_ref().unwrap();
    let s = batchnorm_forward(&x, bn, false).unwrap().0;
    let short = conv.forward(&s).unwrap();
    let expect = triangle_activation(&short, 1.0);
    assert_eq!(got.data(), expect.data());
}

#[test]
fn residual_same_width_has_identity_shortcut() {
    let mut rng = ChaCha8Rng::seed_from_u64(87);
    let cfg = HebbianLayerConfig { eta: 0.0, ..Default::default() };
    let block = ResidualBlock::new(8, 8, 32, 1.0, cfg, &mut rng).unwrap();
    assert!(block.shortcut.is_none());
}

#[test]
fn residual_network_learns() {
    let spec = build_residual_journe().unwrap().scale_width(8).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(88);
    let cfg = HebbianLayerConfig { competition: Competition::Hard, ..Default::default() };
    let mut net = Network::new(&spec, &[cfg], &mut rng).unwrap();
    let init: Vec<Vec<f32>> = net.weight_banks().iter().map(|w| w.data().to_vec()).collect();
    let x = rand_t(&mut rng, 2, 3, 32, 32);
    let y = net.hebbian_batch(&x).unwrap();
    assert_eq!(y.shape(), (2, 192, 4, 4));
    let after: Vec<Vec<f32>> = net.weight_banks().iter().map(|w| w.data().to_vec()).collect();
    assert_ne!(init, after);
}

#[test]
fn gradient_stack_mirrors_spec() {
    let spec = build_journe(3, 3).unwrap().scale_width(8).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(89);
    let stack = spec.build_stack(&mut rng).unwrap();
    assert_eq!(stack.len(), spec.blocks.len());
    let x = rand_t(&mut rng, 1, 3, 32, 32);
    let y = crate::tensor::stack::forward(&stack, &x).unwrap();
    assert_eq!(y.shape(), (1, 192, 4, 4));
    // residual specs cannot be flattened
    let res = build_residual_journe().unwrap();
    assert!(matches!(res.build_stack(&mut rng), Err(Error::Capability(_))));
}

#[test]
fn larger_inputs_recompute_shapes() {
    // 96x96 input through the 4-stage architecture
    let spec = build_journe(4, 3).unwrap();
    let shapes = spec.shapes_for(96, 96).unwrap();
    assert_eq!(*shapes.last().unwrap(), (6144, 6, 6));
}
