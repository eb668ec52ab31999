use std::sync::Arc;

use proptest::prelude::*;
use shapeop::fem::{build_mesh, h1_seminorm_nodal, FemSolution};
use shapeop::frames::{make_encoder_decoder, CoeffSeq, Frame, FrameFamily};
use shapeop::nn::{compose_onet, train, Layer, Optimizer, ReluNet, TrainConfig};
use shapeop::shape_param::{sample_cube_many, Domain, FieldSpec, ParamPoint, ShapeAtlas, WeightSequence};

fn single_relu() -> ReluNet<f64> {
    ReluNet::new(vec![Layer::new(1, 1, vec![1.0], vec![0.0]).unwrap(), Layer::new(1, 1, vec![1.0], vec![0.0]).unwrap()])
        .unwrap()
}

#[test]
fn single_relu_forward_and_size() {
    let net = single_relu();
    assert_eq!(net.forward(&[-2.0]).unwrap(), vec![0.0]);
    assert_eq!(net.forward(&[3.0]).unwrap(), vec![3.0]);
    assert_eq!(net.size(), 2);
    assert!(net.forward(&[1.0, 2.0]).is_err());
}

#[test]
fn zero_net_outputs_last_bias() {
    let net = ReluNet::new(vec![
        Layer::<f64>::zeros(5, 3),
        Layer::new(2, 5, vec![0.0; 10], vec![0.25, -1.5]).unwrap(),
    ])
    .unwrap();
    assert_eq!(net.forward(&[1.0, -4.0, 9.0]).unwrap(), vec![0.25, -1.5]);
    assert_eq!(net.size(), 2);
    assert_eq!(ReluNet::new(vec![Layer::<f64>::zeros(5, 3), Layer::zeros(2, 5)]).unwrap().size(), 0);
}

#[test]
fn identity_emulation_is_exact() {
    for d in [1, 3, 7] {
        let net = ReluNet::<f64>::identity_emulation(d);
        assert_eq!(net.size(), 4 * d);
        assert_eq!(net.widths(), vec![d, 2 * d, d]);
        for y in sample_cube_many::<f64>(d as u64, d, 20) {
            assert_eq!(net.forward(y.coords()).unwrap(), y.coords().to_vec());
        }
    }
}

#[test]
fn mismatched_layers_are_rejected() {
    assert!(ReluNet::new(vec![Layer::<f64>::zeros(4, 2), Layer::zeros(1, 3)]).is_err());
    assert!(Layer::<f64>::new(2, 2, vec![0.0; 3], vec![0.0; 2]).is_err());
}

#[test]
fn json_round_trip_is_bit_exact() {
    let net = ReluNet::<f64>::random(&[3, 8, 8, 2], 11).unwrap();
    let mut buf = Vec::new();
    net.write_json(&mut buf).unwrap();
    assert_eq!(ReluNet::<f64>::read_json(&buf[..]).unwrap(), net);
    let broken = String::from_utf8(buf).unwrap().replacen("\"rows\": 8", "\"rows\": 9", 1);
    assert!(ReluNet::<f64>::read_json(broken.as_bytes()).is_err());
}

fn teacher_data(teacher: &ReluNet<f64>, n: usize, seed: u64) -> Vec<(Vec<f64>, Vec<f64>)> {
    sample_cube_many::<f64>(seed, teacher.input_dim(), n)
        .into_iter()
        .map(|y| {
            let t = teacher.forward(y.coords()).unwrap();
            (y.coords().to_vec(), t)
        })
        .collect()
}

#[test]
fn teacher_student_recovery() {
    let cfg = TrainConfig { optimizer: Optimizer::Adam, step: 1e-3, ..TrainConfig::default() };
    let teacher = ReluNet::random(&cfg.widths(2, 3), 1234).unwrap();
    let data = teacher_data(&teacher, 500, 7);
    let report = train(&data, &cfg).unwrap();
    let ratio = report.initial_validation_loss / report.validation_loss;
    assert!(ratio >= 1000.0, "validation reduction only {ratio}");
    assert_eq!(report.size, report.net.size());
    assert_eq!(report.validation_indices.len(), 100);
}

#[test]
fn single_sample_is_interpolated() {
    let data = vec![(vec![0.3, -0.7], vec![1.5, -0.25, 2.0])];
    let cfg = TrainConfig { width: 8, epochs: 2000, ..TrainConfig::default() };
    let report = train(&data, &cfg).unwrap();
    assert!(report.validation_indices.is_empty());
    assert!(report.train_loss <= 1e-8, "{}", report.train_loss);
}

#[test]
fn training_is_deterministic() {
    let teacher = ReluNet::random(&[2, 6, 1], 3).unwrap();
    let data = teacher_data(&teacher, 30, 1);
    let cfg = TrainConfig { width: 6, depth: 2, epochs: 200, seed: 5, ..TrainConfig::default() };
    let a = train(&data, &cfg).unwrap();
    let b = train(&data, &cfg).unwrap();
    for (la, lb) in a.net.layers.iter().zip(&b.net.layers) {
        assert!(la.weights.iter().zip(&lb.weights).all(|(x, y)| x.to_bits() == y.to_bits()));
        assert!(la.bias.iter().zip(&lb.bias).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}

#[test]
fn empty_dataset_is_rejected() {
    assert!(train::<f64>(&[], &TrainConfig::default()).is_err());
}

fn atlas(k: usize) -> ShapeAtlas<f64> {
    let w: Vec<f64> = (1..=k).map(|j| 0.1 / (j * j) as f64).collect();
    ShapeAtlas::new(Domain::UnitSquare, FieldSpec::identity(), FieldSpec::sine_catalog(k), WeightSequence::from_values(w).unwrap(), k)
        .unwrap()
}

#[test]
fn identity_pipeline_reproduces_in_span_targets() {
    let atlas = atlas(9);
    let mesh = Arc::new(build_mesh(Domain::UnitSquare, 0.25).unwrap());
    let frame = Arc::new(Frame::new(FrameFamily::FemNodal(mesh.clone()), 0).unwrap());
    let (enc, dec) = make_encoder_decoder(&atlas, frame, 9).unwrap();
    let model = compose_onet(&enc, ReluNet::identity_emulation(9), dec.clone()).unwrap();
    let y = ParamPoint::new(vec![0.5, -0.25, 1.0, -1.0, 0.0, 0.75, -0.5, 0.1, 0.9]).unwrap();
    let out = model.apply_param(&y, &mesh).unwrap();
    let target = dec.decode(&enc.encode_param(&y).unwrap(), &mesh).unwrap();
    assert!(out.values.iter().zip(&target.values).all(|(a, b)| (a - b).abs() <= 1e-10));
    let field = model
        .apply_field(
            |x| {
                let v = atlas.evaluate_field(&y, x).unwrap();
                [v[0] - x[0], v[1] - x[1]]
            },
            &mesh,
        )
        .unwrap();
    assert!(field.values.iter().zip(&target.values).all(|(a, b)| (a - b).abs() <= 1e-10));
}

#[test]
fn zero_net_decodes_its_bias() {
    let atlas = atlas(2);
    let mesh = Arc::new(build_mesh(Domain::UnitSquare, 0.25).unwrap());
    let frame = Arc::new(Frame::new(FrameFamily::FemNodal(mesh.clone()), 0).unwrap());
    let (enc, dec) = make_encoder_decoder(&atlas, frame, 9).unwrap();
    let net = ReluNet::new(vec![Layer::zeros(4, 2), Layer::new(9, 4, vec![0.0; 36], vec![0.5; 9]).unwrap()]).unwrap();
    let model = compose_onet(&enc, net, dec).unwrap();
    let out = model.apply_param(&ParamPoint::new(vec![0.9, -0.3]).unwrap(), &mesh).unwrap();
    for (i, &v) in out.values.iter().enumerate() {
        assert_eq!(v, if mesh.is_boundary(i) { 0.0 } else { 0.5 });
    }
    assert!(compose_onet(&enc, ReluNet::identity_emulation(3), model.decoder.clone()).is_err());
}

#[test]
fn trained_onet_error_is_bounded_by_the_loss() {
    let atlas = atlas(2);
    let mesh = Arc::new(build_mesh(Domain::UnitSquare, 0.25).unwrap());
    let frame = Arc::new(Frame::new(FrameFamily::FemNodal(mesh.clone()), 0).unwrap());
    let (lo, hi) = frame.frame_bounds_estimate(9).unwrap();
    assert!(lo > 0.0);
    let (enc, dec) = make_encoder_decoder(&atlas, frame.clone(), 9).unwrap();
    let ys = sample_cube_many::<f64>(2, 2, 20);
    let target = |y: &ParamPoint<f64>| -> Vec<f64> {
        let c = y.coords();
        (0..9).map(|j| (j as f64 * 0.3 + c[0]).sin() * 0.1 + c[1] * 0.05).collect()
    };
    let data: Vec<_> = ys.iter().map(|y| (enc.encode_param(y).unwrap().values, target(y))).collect();
    let cfg = TrainConfig { width: 16, depth: 2, epochs: 500, ..TrainConfig::default() };
    let report = train(&data, &cfg).unwrap();
    let model = compose_onet(&enc, report.net.clone(), dec.clone()).unwrap();
    let i = report.train_indices[0];
    let out = model.apply_param(&ys[i], &mesh).unwrap();
    let want = dec.decode(&CoeffSeq::new(target(&ys[i])), &mesh).unwrap();
    let diff: Vec<f64> = out.values.iter().zip(&want.values).map(|(a, b)| a - b).collect();
    // squared coefficient error of one sample ≤ (#train · m_out) · train loss
    let coeff_bound = (report.train_indices.len() as f64 * 9.0 * report.train_loss).sqrt();
    // P1 stiffness rows on the structured mesh have absolute sum ≤ 8
    assert!(h1_seminorm_nodal(&mesh, &diff) <= 8f64.sqrt() * coeff_bound + 1e-14);
    // L² distance through the Riesz upper bound Λ
    let l2 = frame.l2_norm_of(|p| FemSolution::eval(&FemSolution { values: diff.clone(), ..out.clone() }, p).unwrap());
    let coeff = CoeffSeq::new(report.net.forward(&data[i].0).unwrap());
    let cdiff: f64 = coeff.values.iter().zip(&target(&ys[i])).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    assert!(l2 <= hi * cdiff + 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn positive_rescaling_of_a_hidden_layer(seed in 0u64..1000, c in 0.1f64..10.0, x in prop::collection::vec(-1.0f64..1.0, 3)) {
        let net = ReluNet::<f64>::random(&[3, 7, 5, 2], seed).unwrap();
        let mut scaled = net.clone();
        scaled.layers[0].weights.iter_mut().for_each(|w| *w *= c);
        scaled.layers[0].bias.iter_mut().for_each(|b| *b *= c);
        scaled.layers[1].weights.iter_mut().for_each(|w| *w /= c);
        let a = net.forward(&x).unwrap();
        let b = scaled.forward(&x).unwrap();
        for (p, q) in a.iter().zip(&b) {
            prop_assert!((p - q).abs() <= 1e-12 * (1.0 + p.abs()));
        }
    }

    #[test]
    fn hidden_permutation_preserves_output_and_size(seed in 0u64..1000, x in prop::collection::vec(-1.0f64..1.0, 3)) {
        let mut net = ReluNet::<f64>::random(&[3, 6, 2], seed).unwrap();
        net.layers[0].bias = (0..6).map(|i| i as f64 * 0.1 - 0.2).collect();
        net.layers[0].weights[4] = 0.0;
        let perm = [3usize, 0, 5, 1, 4, 2];
        let mut p = net.clone();
        for (new, &old) in perm.iter().enumerate() {
            for c in 0..3 {
                p.layers[0].weights[new * 3 + c] = net.layers[0].weights[old * 3 + c];
            }
            p.layers[0].bias[new] = net.layers[0].bias[old];
            for r in 0..2 {
                p.layers[1].weights[r * 6 + new] = net.layers[1].weights[r * 6 + old];
            }
        }
        prop_assert_eq!(p.size(), net.size());
        let a = net.forward(&x).unwrap();
        let b = p.forward(&x).unwrap();
        for (u, v) in a.iter().zip(&b) {
            prop_assert!((u - v).abs() <= 1e-14);
        }
    }
}
