use super::arch::{build_architecture_with, input_width, ArchConfig};
use super::*;

fn flat_net(layers: Vec<LayerSpec>, inputs: usize, output: OutputKind) -> NetworkSpec {
    NetworkSpec {
        branches: vec![BranchSpec {
            name: "x".into(),
            input: Shape::flat(inputs),
            layers: vec![],
        }],
        head: layers,
        output,
    }
}

fn random_sample(net: &NetworkSpec, rng: &mut ChaCha8Rng, target: Vec<f64>) -> Sample {
    Sample {
        inputs: net
            .branches
            .iter()
            .map(|b| (0..b.input.size()).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect(),
        target,
    }
}

#[test]
fn zero_weights_give_zero_output() {
    let spec = flat_net(
        vec![
            LayerSpec::Dense { input: 3, output: 4 },
            LayerSpec::Relu,
            LayerSpec::Dense { input: 4, output: 1 },
            LayerSpec::Relu,
        ],
        3,
        OutputKind::DpScalar,
    );
    let mut net = Network::new(spec, 1).unwrap();
    net.params.iter_mut().for_each(|p| p.weights.iter_mut().for_each(|w| *w = 0.0));
    assert_eq!(net.forward(&[vec![3.0, -2.0, 7.0]]).unwrap(), vec![0.0]);
}

#[test]
fn identity_dense_layer_passes_input_through() {
    let mut spec = flat_net(vec![LayerSpec::Dense { input: 1, output: 1 }], 1, OutputKind::DpScalar);
    spec.head = vec![LayerSpec::Dense { input: 1, output: 1 }];
    let mut net = Network::new(spec, 2).unwrap();
    net.params[0].weights = vec![1.0];
    assert_eq!(net.forward(&[vec![0.375]]).unwrap(), vec![0.375]);
}

#[test]
fn two_layer_net_matches_hand_unrolled_arithmetic() {
    let spec = flat_net(
        vec![
            LayerSpec::Dense { input: 2, output: 2 },
            LayerSpec::Relu,
            LayerSpec::Dense { input: 2, output: 1 },
            LayerSpec::Relu,
        ],
        2,
        OutputKind::DpScalar,
    );
    let mut net = Network::new(spec, 3).unwrap();
    net.params[0] = LayerParams {
        weights: vec![0.5, -1.0, 2.0, 0.25],
        bias: vec![0.1, -0.2],
    };
    net.params[2] = LayerParams {
        weights: vec![1.5, -0.5],
        bias: vec![0.3],
    };
    let x = [0.8, -0.4];
    let h0 = (0.5 * x[0] - 1.0 * x[1] + 0.1f64).max(0.0);
    let h1 = (2.0 * x[0] + 0.25 * x[1] - 0.2f64).max(0.0);
    let y = (1.5 * h0 - 0.5 * h1 + 0.3f64).max(0.0);
    assert!((net.forward(&[x.to_vec()]).unwrap()[0] - y).abs() < 1e-12);
}

#[test]
fn full_width_kernel_is_a_dot_product() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x: Vec<f64> = (0..96).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let w: Vec<f64> = (0..96).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let out = conv1d_forward(&x, 48, &w, &[0.5], 2, 48, 1).unwrap();
    let dot: f64 = x.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() + 0.5;
    assert_eq!(out.len(), 1);
    assert!((out[0] - dot).abs() < 1e-12);
}

#[test]
fn averaging_filter_on_constant_channel() {
    let k = 5;
    let mut x = vec![3.25; 48];
    x.extend((0..48).map(|t| t as f64));
    let mut w = vec![1.0 / k as f64; k];
    w.extend(vec![0.0; k]);
    let out = conv1d_forward(&x, 48, &w, &[0.0], 2, k, 1).unwrap();
    assert_eq!(out.len(), 44);
    assert!(out.iter().all(|v| (v - 3.25).abs() < 1e-12));
}

#[test]
fn conv_output_lengths_and_errors() {
    let x = vec![0.0; 96];
    assert_eq!(conv1d_forward(&x, 48, &[0.0; 6], &[0.0], 2, 3, 1).unwrap().len(), 46);
    assert_eq!(conv1d_forward(&x, 48, &[0.0; 6], &[0.0], 2, 3, 2).unwrap().len(), 23);
    assert!(matches!(conv1d_forward(&x, 48, &[0.0; 98], &[0.0], 2, 49, 1), Err(Error::Parameter(_))));
}

#[test]
fn ordinal_code_examples() {
    let mut e = vec![0.0; 48];
    e[0] = 1.0;
    assert_eq!(ordinal_encode(0, 48).unwrap(), e);
    assert_eq!(ordinal_encode(47, 48).unwrap(), vec![1.0; 48]);
    assert_eq!(ordinal_encode(3, 5).unwrap(), vec![1.0, 1.0, 1.0, 1.0, 0.0]);
    assert!(matches!(ordinal_encode(48, 48), Err(Error::Domain { .. })));
    assert_eq!(ordinal_decode(&ordinal_encode(36, 48).unwrap()), 36);
    assert_eq!(ordinal_decode(&[0.9; 48]), 47);
    let mut v = vec![0.9, 0.8, 0.4, 0.6, 0.2];
    v.extend(vec![0.1; 43]);
    assert_eq!(ordinal_decode(&v), 2);
    assert_eq!(ordinal_decode(&[0.1; 48]), 0);
    for k in 0..48 {
        assert_eq!(ordinal_decode(&ordinal_encode(k, 48).unwrap()), k);
    }
}

#[test]
fn shape_mismatch_names_the_layer() {
    let spec = flat_net(vec![LayerSpec::Dense { input: 3, output: 1 }, LayerSpec::Relu], 3, OutputKind::DpScalar);
    let net = Network::new(spec, 1).unwrap();
    match net.forward(&[vec![1.0, 2.0]]) {
        Err(Error::Shape { layer, .. }) => assert!(layer.contains('x'), "{layer}"),
        other => panic!("{other:?}"),
    }
    let bad = flat_net(vec![LayerSpec::Dense { input: 4, output: 1 }], 3, OutputKind::DpScalar);
    match Network::new(bad, 1) {
        Err(Error::Shape { layer, .. }) => assert_eq!(layer, "head[0]"),
        other => panic!("{other:?}"),
    }
}

fn linear_regression_data(n: usize, seed: u64) -> (Vec<Sample>, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let beta = [0.7, -1.2, 0.4];
    let mut rows = Vec::new();
    for _ in 0..n {
        let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y = 0.5 + x.iter().zip(&beta).map(|(a, b)| a * b).sum::<f64>() + rng.gen_range(-0.1..0.1);
        rows.push(Sample {
            inputs: vec![x],
            target: vec![y],
        });
    }
    // ordinary least squares residual mean square via the normal equations
    let xm = nalgebra::DMatrix::from_fn(n, 4, |i, j| if j == 0 { 1.0 } else { rows[i].inputs[0][j - 1] });
    let ym = nalgebra::DVector::from_fn(n, |i, _| rows[i].target[0]);
    let b = (xm.transpose() * &xm).try_inverse().unwrap() * xm.transpose() * &ym;
    let rss = (&ym - &xm * b).norm_squared() / n as f64;
    (rows, rss)
}

fn linear_spec() -> NetworkSpec {
    flat_net(vec![LayerSpec::Dense { input: 3, output: 1 }], 3, OutputKind::DpScalar)
}

#[test]
fn linear_net_reaches_least_squares_loss() {
    let (data, ols) = linear_regression_data(200, 1);
    let mut net = Network::new(linear_spec(), 1).unwrap();
    let cfg = TrainConfig {
        epochs: 300,
        batch_size: 200,
        learning_rate: 0.2,
        optimizer: Optimizer::Sgd,
        seed: 1,
        loss: Loss::Mse,
    };
    let trace = train(&mut net, &data, &cfg).unwrap();
    assert!(net.mean_loss(&data, Loss::Mse).unwrap() < ols + 1e-3);
    // full-batch gradient descent on a convex quadratic with a small step
    assert!(trace.windows(2).all(|w| w[1] <= w[0] + 1e-15));
}

#[test]
fn zero_learning_rate_leaves_parameters_unchanged() {
    let (data, _) = linear_regression_data(50, 2);
    let mut net = Network::new(linear_spec(), 5).unwrap();
    let before = net.clone();
    let cfg = TrainConfig {
        epochs: 3,
        batch_size: 8,
        learning_rate: 0.0,
        optimizer: Optimizer::Sgd,
        seed: 1,
        loss: Loss::Mse,
    };
    train(&mut net, &data, &cfg).unwrap();
    assert_eq!(net, before);
}

#[test]
fn training_is_deterministic_per_seed() {
    let (data, _) = linear_regression_data(64, 3);
    let spec = flat_net(
        vec![
            LayerSpec::Dense { input: 3, output: 8 },
            LayerSpec::Relu,
            LayerSpec::Dropout { rate: 0.1 },
            LayerSpec::Dense { input: 8, output: 1 },
            LayerSpec::Relu,
        ],
        3,
        OutputKind::DpScalar,
    );
    let cfg = TrainConfig {
        epochs: 5,
        batch_size: 16,
        learning_rate: 1e-2,
        optimizer: Optimizer::Adam,
        seed: 42,
        loss: Loss::Mse,
    };
    let mut a = Network::new(spec.clone(), 9).unwrap();
    let mut b = Network::new(spec, 9).unwrap();
    let ta = train(&mut a, &data, &cfg).unwrap();
    let tb = train(&mut b, &data, &cfg).unwrap();
    assert_eq!(ta.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), tb.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    assert_eq!(a, b);
}

#[test]
fn divergence_reports_the_epoch() {
    let (data, _) = linear_regression_data(50, 4);
    let mut net = Network::new(linear_spec(), 1).unwrap();
    let cfg = TrainConfig {
        epochs: 50,
        batch_size: 50,
        learning_rate: 1e6,
        optimizer: Optimizer::Sgd,
        seed: 1,
        loss: Loss::Mse,
    };
    assert!(matches!(train(&mut net, &data, &cfg), Err(Error::Training { .. })));
}

#[test]
fn inverted_dropout_preserves_expectation() {
    let spec = flat_net(
        vec![LayerSpec::Dropout { rate: 0.1 }, LayerSpec::Dense { input: 1, output: 1 }],
        1,
        OutputKind::DpScalar,
    );
    let mut net = Network::new(spec, 1).unwrap();
    net.params[1].weights = vec![1.0];
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let x = vec![vec![2.5]];
    let draws = 100_000;
    let mean = (0..draws)
        .map(|_| net.forward_trace(&x, Some(&mut rng)).unwrap().output[0])
        .sum::<f64>()
        / draws as f64;
    assert!((mean - 2.5).abs() / 2.5 < 0.01, "{mean}");
    assert_eq!(net.forward(&x).unwrap(), vec![2.5]);
}

#[test]
fn gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mlp = flat_net(
        vec![
            LayerSpec::Dense { input: 4, output: 6 },
            LayerSpec::Relu,
            LayerSpec::Dense { input: 6, output: 1 },
        ],
        4,
        OutputKind::DpScalar,
    );
    let net = Network::new(mlp.clone(), 1).unwrap();
    let s = random_sample(&mlp, &mut rng, vec![0.3]);
    assert!(gradient_check(&net, &s, Loss::Mse).unwrap() < 1e-5);

    let conv = NetworkSpec {
        branches: vec![BranchSpec {
            name: "c".into(),
            input: Shape { channels: 2, length: 48 },
            layers: vec![
                LayerSpec::Conv1d {
                    channels_in: 2,
                    filters: 3,
                    kernel: 7,
                    stride: 2,
                },
                LayerSpec::Relu,
                LayerSpec::Flatten,
            ],
        }],
        head: vec![LayerSpec::Dense { input: 63, output: 1 }, LayerSpec::Relu],
        output: OutputKind::DpScalar,
    };
    let mut net = Network::new(conv.clone(), 2).unwrap();
    net.params[3].bias = vec![5.0];
    let s = random_sample(&conv, &mut rng, vec![1.0]);
    assert!(gradient_check(&net, &s, Loss::Mse).unwrap() < 1e-5);

    let ip = flat_net(
        vec![
            LayerSpec::Dense { input: 5, output: 48 },
            LayerSpec::Sigmoid,
        ],
        5,
        OutputKind::IpOrdinal48,
    );
    let net = Network::new(ip.clone(), 3).unwrap();
    let s = random_sample(&ip, &mut rng, ordinal_encode(20, 48).unwrap());
    assert!(gradient_check(&net, &s, Loss::OrdinalBce).unwrap() < 1e-5);
}

#[test]
fn every_architecture_passes_gradient_check() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for arch in [Architecture::HrFcnn, Architecture::LrFcnn, Architecture::MrCnn] {
        for (target, loss) in [(NnTarget::Dp, Loss::Mse), (NnTarget::Ip, Loss::OrdinalBce)] {
            let spec = build_architecture(arch, target);
            let mut net = Network::new(spec.clone(), 7).unwrap();
            // keep the scalar ReLU output active so its gradient is non-trivial
            let last = net.params.len() - 2;
            if target == NnTarget::Dp {
                net.params[last].bias = vec![1.0];
            }
            let t = match target {
                NnTarget::Dp => vec![0.8],
                NnTarget::Ip => ordinal_encode(30, 48).unwrap(),
            };
            let s = random_sample(&spec, &mut rng, t);
            let err = gradient_check(&net, &s, loss).unwrap();
            assert!(err < 1e-5, "{arch:?}/{target:?}: {err}");
        }
    }
}

#[test]
fn architecture_layouts() {
    let n = input_width(Architecture::HrFcnn);
    let hr = build_architecture(Architecture::HrFcnn, NnTarget::Dp);
    assert_eq!(hr.parameter_count().unwrap(), (n * 50 + 50) + (50 + 1));
    let mr = build_architecture(Architecture::MrCnn, NnTarget::Ip);
    let convs = mr
        .branches
        .iter()
        .filter(|b| b.layers.iter().any(|l| matches!(l, LayerSpec::Conv1d { .. })))
        .count();
    assert_eq!(convs, 3);
    assert_eq!(mr.head.last(), Some(&LayerSpec::Sigmoid));
    assert_eq!(mr.shapes().unwrap().1, Shape::flat(48));
    let lr = build_architecture_with(Architecture::LrFcnn, NnTarget::Dp, 10, &ArchConfig::default());
    assert!(lr.head.contains(&LayerSpec::Dropout { rate: 0.1 }));
}

#[test]
fn saved_network_reproduces_outputs() {
    let spec = build_architecture(Architecture::MrCnn, NnTarget::Dp);
    let net = Network::new(spec.clone(), 5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let s = random_sample(&spec, &mut rng, vec![0.0]);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("net.json");
    net.save(&path).unwrap();
    let back = Network::load(&path).unwrap();
    let (a, b) = (net.forward(&s.inputs).unwrap(), back.forward(&s.inputs).unwrap());
    assert!((a[0] - b[0]).abs() < 1e-12);
}
