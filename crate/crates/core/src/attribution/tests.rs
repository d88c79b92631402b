use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::micronet::synthetic::clipped_noise;
use crate::micronet::{build_classifier, ArchConfig, Layer, LayerKind};

fn noise(seed: u64, shape: &[usize]) -> Tensor {
    clipped_noise(&mut ChaCha8Rng::seed_from_u64(seed), shape, 0.5)
}

/// `Φ = W^T vec(x) + b` on a 1x8x8 input.
fn linear_model(seed: u64) -> Model {
    let weight = noise(seed, &[64, 3]);
    let layer = Layer {
        name: "logits".into(),
        kind: LayerKind::Logits,
        weight,
        bias: Tensor::vector(&[0.1, -0.2, 0.3]).unwrap(),
    };
    Model::from_layers(vec![layer], [1, 8, 8]).unwrap()
}

fn small_net(seed: u64) -> Model {
    let arch = ArchConfig {
        input_shape: [1, 16, 16],
        conv_channels: vec![4, 6],
        hidden: 12,
        classes: 3,
        ..ArchConfig::default()
    };
    build_classifier(&arch, seed).unwrap()
}

fn weight(m: &Model, i: usize, t: usize) -> f64 {
    m.layers()[0].weight.data()[i * m.classes() + t]
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

#[test]
fn plain_gradient_of_linear_model_is_abs_weight() {
    let m = linear_model(1);
    let x = noise(2, &[1, 8, 8]);
    for t in 0..3 {
        let s = attr_gradient(&m, &x, t, GradientVariant::Plain).unwrap();
        for i in 0..64 {
            assert!(close(s.scores.data()[i], weight(&m, i, t).abs(), 1e-14));
        }
        let guided = attr_gradient(&m, &x, t, GradientVariant::Guided).unwrap();
        assert_eq!(guided.scores, s.scores);
        let ixg = attr_gradient(&m, &x, t, GradientVariant::InputXGrad).unwrap();
        assert!(close(ixg.scores.data()[5], (weight(&m, 5, t) * x.data()[5]).abs(), 1e-14));
    }
}

#[test]
fn gradient_matches_finite_differences() {
    let m = small_net(3);
    let x = noise(4, &[1, 16, 16]);
    let g = gradient::input_gradient(&m, &x, 1, crate::autodiff::GradMode::Standard).unwrap();
    let eps = 1e-6;
    for &i in &[3usize, 40, 77, 150, 201] {
        let mut up = x.clone();
        up.data_mut()[i] += eps;
        let mut dn = x.clone();
        dn.data_mut()[i] -= eps;
        let fd = (m.logits(&up).unwrap().data()[1] - m.logits(&dn).unwrap().data()[1]) / (2.0 * eps);
        let an = g.data()[i];
        assert!((fd - an).abs() <= 1e-3 * fd.abs().max(an.abs()).max(1e-6), "pixel {i}: {fd} vs {an}");
    }
}

#[test]
fn integrated_gradients_exact_on_linear_model() {
    let m = linear_model(5);
    let x = noise(6, &[1, 8, 8]);
    let base = noise(7, &[1, 8, 8]);
    for steps in [1, 3, 17] {
        let s = attr_integrated_gradients(&m, &x, 2, &base, steps).unwrap();
        for i in 0..64 {
            let want = weight(&m, i, 2) * (x.data()[i] - base.data()[i]);
            assert!(close(s.scores.data()[i], want, 1e-12));
        }
    }
    let zero = attr_integrated_gradients(&m, &x, 0, &x, 8).unwrap();
    assert!(zero.scores.data().iter().all(|&v| v == 0.0));
}

#[test]
fn integrated_gradients_complete_on_small_net() {
    let m = small_net(8);
    let x = noise(9, &[1, 16, 16]);
    let base = noise(10, &[1, 16, 16]);
    let s = attr_integrated_gradients(&m, &x, 0, &base, 256).unwrap();
    let gap = m.logits(&x).unwrap().data()[0] - m.logits(&base).unwrap().data()[0];
    assert!((s.scores.sum() - gap).abs() < 0.01 * gap.abs(), "{} vs {gap}", s.scores.sum());
}

#[test]
fn gradcam_nonnegative_and_proportional_for_single_channel() {
    let m = small_net(11);
    let x = noise(12, &[1, 16, 16]);
    for layer in ["conv1", "conv2"] {
        let s = attr_gradcam(&m, &x, 1, layer).unwrap();
        assert_eq!(s.scores.shape(), &[16, 16]);
        assert!(s.scores.data().iter().all(|&v| v >= 0.0));
    }
    assert!(attr_gradcam(&m, &x, 1, "dense1").is_err());

    // One conv channel feeding a uniform positive head: the channel weight is
    // constant, so the map is that constant times the upsampled activation.
    let conv = Layer {
        name: "conv1".into(),
        kind: LayerKind::ConvBlock,
        weight: noise(13, &[1, 1, 3, 3]),
        bias: Tensor::vector(&[0.05]).unwrap(),
    };
    let head = Layer {
        name: "logits".into(),
        kind: LayerKind::Logits,
        weight: Tensor::full(&[16, 2], 0.7),
        bias: Tensor::zeros(&[2]),
    };
    let m = Model::from_layers(vec![conv, head], [1, 8, 8]).unwrap();
    let x = noise(14, &[1, 8, 8]);
    let a = m.activation(&x, "conv1").unwrap().reshape(&[4, 4]).unwrap();
    let want = bilinear_upsample(&a, 8, 8).unwrap();
    let got = attr_gradcam(&m, &x, 0, "conv1").unwrap();
    for (g, w) in got.scores.data().iter().zip(want.data()) {
        assert!(close(*g, 0.7 * w, 1e-12));
    }
}

#[test]
fn upsampling_keeps_the_argmax_cell() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let cam = Tensor::new(vec![8, 8], (0..64).map(|_| rand::Rng::random::<f64>(&mut rng)).collect()).unwrap();
    let up = bilinear_upsample(&cam, 32, 32).unwrap();
    let argmax = |d: &[f64]| (0..d.len()).fold(0, |b, i| if d[i] > d[b] { i } else { b });
    let (ci, ui) = (argmax(cam.data()), argmax(up.data()));
    assert_eq!(((ui / 32) / 4, (ui % 32) / 4), (ci / 8, ci % 8));
}

#[test]
fn occlusion_trivial_cases() {
    let mut layers = small_net(16).layers().to_vec();
    let last = layers.len() - 1;
    layers[last].weight = Tensor::zeros(layers[last].weight.shape());
    let flat = Model::from_layers(layers, [1, 16, 16]).unwrap();
    let x = noise(17, &[1, 16, 16]);
    let fill = noise(18, &[1, 16, 16]);
    let s = attr_occlusion(&flat, &x, 0, 4, 2, &fill).unwrap();
    assert!(s.scores.data().iter().all(|&v| v == 0.0));

    let m = small_net(19);
    let whole = attr_occlusion(&m, &x, 2, 16, 1, &fill).unwrap();
    let want = m.logits(&x).unwrap().data()[2] - m.logits(&fill).unwrap().data()[2];
    assert!(whole.scores.data().iter().all(|&v| v == want));
}

#[test]
fn extremal_full_budget_recovers_the_input() {
    let m = small_net(20);
    let x = noise(21, &[1, 16, 16]);
    let r = noise(22, &[1, 16, 16]);
    let full = attr_extremal_greedy(&m, &x, 0, &r, 4, 16, f64::NEG_INFINITY).unwrap();
    assert_eq!(full.revealed.len(), 16);
    assert_eq!(*full.values.last().unwrap(), m.logits(&x).unwrap().data()[0]);
    assert!(full.map.scores.data().iter().all(|&v| v > 0.0));
    let again = attr_extremal_greedy(&m, &x, 0, &r, 4, 16, f64::NEG_INFINITY).unwrap();
    assert_eq!(full, again);
    let early = attr_extremal_greedy(&m, &x, 0, &r, 4, 16, 0.5).unwrap();
    assert!(early.reached || early.revealed.len() == 16);
    assert_eq!(early.revealed[..], full.revealed[..early.revealed.len()]);
}

#[test]
fn shapley_identities_on_small_games() {
    // v(S) = |S|^2: symmetric players, efficiency gives n each... n^2 / n.
    let v: Vec<f64> = (0..8usize).map(|s| (s.count_ones() as f64).powi(2)).collect();
    let phi = shapley_values(3, &v).unwrap();
    assert!(phi.iter().all(|p| (p - 3.0).abs() < 1e-12));
    // Two players against the closed form.
    let v = [0.3, 1.7, -0.4, 2.9];
    let phi = shapley_values(2, &v).unwrap();
    let closed = 0.5 * ((v[3] - v[2]) + (v[1] - v[0]));
    assert!((phi[0] - closed).abs() < 1e-12);
    assert!((phi[0] + phi[1] - (v[3] - v[0])).abs() < 1e-12);
}

#[test]
fn shapley_rejects_too_many_players() {
    let m = small_net(23);
    let x = noise(24, &[1, 16, 16]);
    let players: Vec<Region> = (0..13).map(|i| Region::new(i, 0, 1, 1)).collect();
    assert!(attr_shapley_exact(&m, &x, 0, &x, &players).is_err());
}

#[test]
fn shapley_symmetric_patches_get_equal_values() {
    // Uniform weights and identical patch contents make the two players
    // interchangeable.
    let layer = Layer {
        name: "logits".into(),
        kind: LayerKind::Logits,
        weight: Tensor::full(&[64, 2], 0.25),
        bias: Tensor::zeros(&[2]),
    };
    let m = Model::from_layers(vec![layer], [1, 8, 8]).unwrap();
    let reference = Tensor::zeros(&[1, 8, 8]);
    let players = [Region::new(0, 0, 2, 2), Region::new(4, 4, 2, 2)];
    let mut x = reference.clone();
    for p in &players {
        p.pixels(8).for_each(|i| x.data_mut()[i] = 0.8);
    }
    let s = attr_shapley_exact(&m, &x, 0, &reference, &players).unwrap();
    assert_eq!(s.mass(&players[0]), s.mass(&players[1]));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn shapley_efficiency_on_random_partitions(seed in any::<u64>(), t in 0usize..3) {
        let m = small_net(seed);
        let x = noise(seed ^ 1, &[1, 16, 16]);
        let r = noise(seed ^ 2, &[1, 16, 16]);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let players = crate::scenario::randomize_patch_location(3, [4, 4], [16, 16], 2, &mut rng).unwrap();
        let s = attr_shapley_exact(&m, &x, t, &r, &players).unwrap();
        let mut all = r.clone();
        for p in &players {
            p.pixels(16).for_each(|i| all.data_mut()[i] = x.data()[i]);
        }
        let total: f64 = players.iter().map(|p| s.mass(p)).sum();
        let want = m.logits(&all).unwrap().data()[t] - m.logits(&r).unwrap().data()[t];
        prop_assert!((total - want).abs() < 1e-9);
    }

    #[test]
    fn methods_are_deterministic(seed in any::<u64>()) {
        let m = small_net(seed);
        let x = noise(seed ^ 5, &[1, 16, 16]);
        let r = noise(seed ^ 6, &[1, 16, 16]);
        let players = [Region::new(0, 0, 4, 4), Region::new(8, 8, 4, 4)];
        let ctx = Context { reference: &r, players: &players };
        for method in MethodConfig::defaults() {
            let method = match method {
                MethodConfig::Occlusion { fill, .. } => MethodConfig::Occlusion { window: 4, stride: 4, fill },
                other => other,
            };
            let a = attribute(&m, &x, 1, &method, &ctx).unwrap();
            let b = attribute(&m, &x, 1, &method, &ctx).unwrap();
            prop_assert_eq!(a.scores.shape(), &[16, 16]);
            prop_assert_eq!(a, b);
        }
    }
}

#[test]
fn method_configs_parse_with_defaults() {
    let m: MethodConfig = serde_json::from_str(r#"{"method": "occlusion"}"#).unwrap();
    assert_eq!(
        m,
        MethodConfig::Occlusion {
            window: 8,
            stride: 4,
            fill: Fill::Reference
        }
    );
    let ig: MethodConfig = serde_json::from_str(r#"{"method": "integrated_gradients", "steps": 32}"#).unwrap();
    assert_eq!(ig.id(), "integrated_gradients");
    assert!(serde_json::from_str::<MethodConfig>(r#"{"method": "occlusion", "bogus": 1}"#).is_err());
    let net = small_net(0);
    assert!(MethodConfig::Gradcam { layer: Some("dense1".into()) }.validate(&net).is_err());
    assert!(MethodConfig::ExtremalGreedy { cell: 5, budget: None, tau: 0.1 }.validate(&net).is_err());
}

#[test]
fn graymap_normalization() {
    let pgm = to_pgm(&Tensor::full(&[2, 3], 4.2)).unwrap();
    assert!(pgm.starts_with(b"P5\n3 2\n255\n"));
    assert!(pgm[pgm.len() - 6..].iter().all(|&b| b == 128));
    let ramp = Tensor::new(vec![1, 2], vec![-1.0, 3.0]).unwrap();
    let pgm = to_pgm(&ramp).unwrap();
    assert_eq!(&pgm[pgm.len() - 2..], &[0, 255]);
}
