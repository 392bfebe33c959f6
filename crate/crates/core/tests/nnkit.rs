use jellymon::nnkit::gradcheck::{check_gradients, kink_margin, DEFAULT_STEP};
use jellymon::nnkit::loss::weighted_xent_with_grad;
use jellymon::nnkit::train::{fit, FitConfig, Sample};
use jellymon::nnkit::{
    backward, load_model, save_model, Act, AdamConfig, Layer, LossWeights, Model, ModelParams, Network, Tensor,
};
use jellymon::{ClassLabel, Error, SeedStream};
use proptest::prelude::*;
use rand::Rng;

/// One small network per layer type, each ending in 6 logits.
fn layer_cases() -> Vec<(&'static str, Network)> {
    vec![
        ("dense+tanh", Network::new(vec![5], vec![Layer::dense("a", 5, 4), Layer::Tanh, Layer::dense("b", 4, 6)])),
        ("relu", Network::new(vec![5], vec![Layer::dense("a", 5, 7), Layer::Relu, Layer::dense("b", 7, 6)])),
        (
            "leaky_relu",
            Network::new(vec![5], vec![Layer::dense("a", 5, 7), Layer::LeakyRelu(0.2), Layer::dense("b", 7, 6)]),
        ),
        ("sigmoid", Network::new(vec![5], vec![Layer::dense("a", 5, 4), Layer::Sigmoid, Layer::dense("b", 4, 6)])),
        (
            "conv2d_pad+maxpool",
            Network::new(
                vec![2, 6, 6],
                vec![
                    Layer::conv2d("c", 2, 3, 3, 1),
                    Layer::Relu,
                    Layer::MaxPool2,
                    Layer::Flatten,
                    Layer::dense("d", 27, 6),
                ],
            ),
        ),
        (
            "conv2d_valid",
            Network::new(vec![1, 5, 5], vec![Layer::conv2d("c", 1, 2, 3, 0), Layer::Flatten, Layer::dense("d", 18, 6)]),
        ),
        ("maxpool", Network::new(vec![2, 4, 4], vec![Layer::MaxPool2, Layer::Flatten, Layer::dense("d", 8, 6)])),
        (
            "conv1d+pool",
            Network::new(
                vec![6, 0],
                vec![Layer::conv1d("c", 6, 4, 3), Layer::Relu, Layer::GlobalMeanMax, Layer::dense("d", 8, 6)],
            ),
        ),
        ("global_mean_max", Network::new(vec![3, 7], vec![Layer::GlobalMeanMax, Layer::dense("d", 6, 6)])),
    ]
}

/// Random parameters (including biases), input, target and class weights.
/// Draws are repeated until every ReLU input and max-pool winner is at
/// least 1e-2 away from a kink, where central differences break down.
fn random_instance(net: &Network, seed: u64) -> (ModelParams<f64>, Act, ClassLabel, LossWeights) {
    let stream = SeedStream::new(seed);
    for attempt in 0.. {
        let inst = draw_instance(net, stream.child(attempt));
        if kink_margin(net, &inst.0, &inst.1).unwrap() > 1e-2 {
            return inst;
        }
    }
    unreachable!()
}

fn draw_instance(net: &Network, stream: SeedStream) -> (ModelParams<f64>, Act, ClassLabel, LossWeights) {
    let mut rng = stream.rng();
    let mut params = net.init(&mut rng).unwrap().to_f64();
    for (name, t) in params.iter_mut() {
        if name.ends_with(".bias") {
            t.data_mut().iter_mut().for_each(|v| *v = rng.gen_range(-0.5..0.5));
        }
    }
    let mut shape = net.input_shape().to_vec();
    for d in &mut shape {
        if *d == 0 {
            *d = rng.gen_range(4..12);
        }
    }
    let n: usize = shape.iter().product();
    let input = Tensor::new(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
    let target = ClassLabel::ALL[rng.gen_range(0..6)];
    let mut w = [0.0; 6];
    w.iter_mut().for_each(|v| *v = rng.gen_range(0.5..3.0));
    (params, input, target, LossWeights::new(w).unwrap())
}

#[test]
fn every_layer_matches_finite_differences() {
    for (name, net) in layer_cases() {
        for seed in 0..20 {
            let (params, input, target, weights) = random_instance(&net, seed);
            let loss = |y: &Act| weighted_xent_with_grad(y.data(), target, &weights).unwrap();
            let report = check_gradients(&net, &params, &input, &loss, DEFAULT_STEP).unwrap();
            let worst = report.worst().unwrap();
            assert!(worst.1 < 1e-4, "{name} seed {seed}: {worst:?}");
        }
    }
}

#[test]
fn identity_dense_passes_input_through() {
    let net = Network::new(vec![6], vec![Layer::dense("fc", 6, 6)]);
    let mut params = ModelParams::new();
    let mut eye = vec![0.0f32; 36];
    (0..6).for_each(|i| eye[i * 6 + i] = 1.0);
    params.insert("fc.weight", Tensor::new(vec![6, 6], eye).unwrap()).unwrap();
    params.insert("fc.bias", Tensor::zeros(vec![6])).unwrap();
    let model = Model::new(net, params).unwrap();
    let x = Tensor::new(vec![6], vec![0.5, -1.0, 2.0, 0.0, 3.25, -0.125]).unwrap();
    assert_eq!(model.forward(&x).unwrap(), x);
}

#[test]
fn zero_final_layer_gives_zero_logits() {
    let net = Network::new(vec![5], vec![Layer::dense("a", 5, 7), Layer::Relu, Layer::dense("b", 7, 6)]);
    let mut params = net.init(&mut SeedStream::new(1).rng()).unwrap();
    params.get_mut("b.weight").unwrap().data_mut().iter_mut().for_each(|v| *v = 0.0);
    let model = Model::new(net, params).unwrap();
    let x = Tensor::new(vec![5], vec![1.0, 2.0, -3.0, 0.5, 9.0]).unwrap();
    let y = model.forward(&x).unwrap();
    assert!(y.data().iter().all(|&v| v == 0.0));
    assert_eq!(y, model.forward(&x).unwrap());
}

#[test]
fn forward_rejects_wrong_shape() {
    let net = Network::new(vec![5], vec![Layer::dense("a", 5, 6)]);
    let model = Model::new(net.clone(), net.init(&mut SeedStream::new(0).rng()).unwrap()).unwrap();
    let x = Tensor::new(vec![4], vec![0.0; 4]).unwrap();
    assert!(matches!(model.forward(&x), Err(Error::ShapeMismatch { .. })));
}

#[test]
fn unused_parameter_has_zero_gradient() {
    // Hidden unit 0 feeds nothing: its outgoing weights are zero, so its
    // incoming weights and bias get no gradient.
    let net = Network::new(vec![4], vec![Layer::dense("a", 4, 3), Layer::Tanh, Layer::dense("b", 3, 6)]);
    let mut params = net.init(&mut SeedStream::new(5).rng()).unwrap();
    let bw = params.get_mut("b.weight").unwrap().data_mut();
    for o in 0..6 {
        bw[o * 3] = 0.0;
    }
    let model = Model::new(net, params).unwrap();
    let x = Tensor::new(vec![4], vec![0.3, -0.7, 1.1, 0.2]).unwrap();
    let g = backward(&model, &x, ClassLabel::Fish, &LossWeights::default()).unwrap();
    assert!(g.get("a.weight").unwrap().data()[0..4].iter().all(|&v| v == 0.0));
    assert_eq!(g.get("a.bias").unwrap().data()[0], 0.0);
    assert!(g.get("a.weight").unwrap().data()[4..].iter().any(|&v| v != 0.0));
}

#[test]
fn doubling_target_weight_doubles_gradient() {
    let net = Network::new(vec![4], vec![Layer::dense("a", 4, 5), Layer::Relu, Layer::dense("b", 5, 6)]);
    let model = Model::new(net.clone(), net.init(&mut SeedStream::new(8).rng()).unwrap()).unwrap();
    let x = Tensor::new(vec![4], vec![0.9, -0.4, 0.1, 0.6]).unwrap();
    let t = ClassLabel::Jellyfish;
    let g1 = backward(&model, &x, t, &LossWeights::jellyfish_seaweed(1.0, 1.0).unwrap()).unwrap();
    let g2 = backward(&model, &x, t, &LossWeights::jellyfish_seaweed(2.0, 1.0).unwrap()).unwrap();
    for ((_, a), (_, b)) in g1.iter().zip(g2.iter()) {
        for (x1, x2) in a.data().iter().zip(b.data()) {
            assert!((2.0 * x1 - x2).abs() <= 1e-12 * x2.abs().max(1.0));
        }
    }
}

#[test]
fn memorizes_twenty_samples() {
    let net = Network::new(vec![8], vec![Layer::dense("a", 8, 32), Layer::Relu, Layer::dense("b", 32, 6)]);
    let stream = SeedStream::new(42);
    let mut model = Model::new(net.clone(), net.init(&mut stream.named("init").rng()).unwrap()).unwrap();
    let mut rng = stream.named("data").rng();
    let samples: Vec<Sample> = (0..20)
        .map(|i| Sample {
            input: Tensor::new(vec![8], (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap(),
            label: ClassLabel::ALL[i % 6],
        })
        .collect();
    // Full-batch steps: 2000 epochs of one batch each.
    let cfg = FitConfig {
        epochs: 2000,
        batch_size: 20,
        adam: AdamConfig { lr: 1e-2, ..AdamConfig::default() },
        ..FitConfig::default()
    };
    let log = fit(&mut model, &samples, &[], &cfg, stream.named("fit")).unwrap();
    let first_below = log.epochs.iter().position(|e| e.train_loss < 0.01);
    assert!(first_below.is_some(), "final loss {}", log.epochs.last().unwrap().train_loss);
}

#[test]
fn model_round_trip_and_empty_model() {
    let net = Network::new(vec![2, 6, 6], vec![Layer::conv2d("c", 2, 3, 3, 1), Layer::Flatten, Layer::dense("d", 108, 6)]);
    let params = net.init(&mut SeedStream::new(3).rng()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    save_model(&params, dir.path()).unwrap();
    assert_eq!(load_model(dir.path()).unwrap(), params);

    let empty = tempfile::tempdir().unwrap();
    save_model(&ModelParams::new(), empty.path()).unwrap();
    assert_eq!(std::fs::read(empty.path().join("weights.bin")).unwrap().len(), 0);
    assert!(load_model(empty.path()).unwrap().is_empty());
}

fn saved_two_tensor_model() -> tempfile::TempDir {
    let mut p = ModelParams::new();
    p.insert("a", Tensor::new(vec![2], vec![1.0f32, 2.0]).unwrap()).unwrap();
    p.insert("b", Tensor::new(vec![3], vec![3.0f32, 4.0, 5.0]).unwrap()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    save_model(&p, dir.path()).unwrap();
    dir
}

fn edit_model_manifest(dir: &std::path::Path, edit: impl FnOnce(&mut serde_json::Value)) {
    let path = dir.join("model.json");
    let mut m: serde_json::Value = serde_json::from_slice(&std::fs::read(&path).unwrap()).unwrap();
    edit(&mut m);
    std::fs::write(&path, serde_json::to_vec(&m).unwrap()).unwrap();
}

#[test]
fn corrupted_models_report_distinct_errors() {
    let dir = saved_two_tensor_model();
    edit_model_manifest(dir.path(), |m| m["entries"][1]["byte_offset"] = 4.into());
    assert!(matches!(load_model(dir.path()), Err(Error::OffsetMismatch(_))));

    let dir = saved_two_tensor_model();
    edit_model_manifest(dir.path(), |m| m["entries"][0]["dtype"] = "f16".into());
    assert!(matches!(load_model(dir.path()), Err(Error::UnknownDtype(_))));

    let dir = saved_two_tensor_model();
    edit_model_manifest(dir.path(), |m| m["entries"][1]["name"] = "a".into());
    assert!(matches!(load_model(dir.path()), Err(Error::DuplicateName(_))));

    let dir = saved_two_tensor_model();
    edit_model_manifest(dir.path(), |m| m["entries"][1]["shape"] = serde_json::json!([4]));
    assert!(matches!(load_model(dir.path()), Err(Error::Truncated { .. })));

    let dir = saved_two_tensor_model();
    let mut blob = std::fs::read(dir.path().join("weights.bin")).unwrap();
    blob.extend_from_slice(&[0; 4]);
    std::fs::write(dir.path().join("weights.bin"), blob).unwrap();
    assert!(matches!(load_model(dir.path()), Err(Error::OffsetMismatch(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]
    #[test]
    fn model_files_preserve_every_bit(
        tensors in proptest::collection::btree_map("[a-z]{1,6}(\\.[a-z]{1,4})?", proptest::collection::vec(any::<u32>(), 1..40), 0..6)
    ) {
        let mut p = ModelParams::new();
        for (name, bits) in &tensors {
            let data: Vec<f32> = bits.iter().map(|&b| f32::from_bits(b)).collect();
            p.insert(name.clone(), Tensor::new(vec![data.len()], data).unwrap()).unwrap();
        }
        let dir = tempfile::tempdir().unwrap();
        save_model(&p, dir.path()).unwrap();
        let back = load_model(dir.path()).unwrap();
        for ((na, a), (nb, b)) in p.iter().zip(back.iter()) {
            prop_assert_eq!(na, nb);
            prop_assert_eq!(a.shape(), b.shape());
            let bits_a: Vec<u32> = a.data().iter().map(|v| v.to_bits()).collect();
            let bits_b: Vec<u32> = b.data().iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(bits_a, bits_b);
        }
        prop_assert_eq!(p.len(), back.len());
    }
}
