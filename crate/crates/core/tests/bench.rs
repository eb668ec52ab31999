use std::sync::Arc;

use proptest::prelude::*;
use shapeop::bench::{
    corner_augmented_set, derivative_decay_report, fit_rate, mean_square_error, predicted_mean_square_rate,
    predicted_worst_case_rate, run_experiment, tail_exponent, worst_case_error, write_loglog_svg, CurvePoint,
    ErrorCurve, ErrorKind, MeanSquareEstimate,
};
use shapeop::config::RunConfig;
use shapeop::fem::build_mesh;
use shapeop::pullback::{PulledBackProblem, SourceField, SourceSpec};
use shapeop::shape_param::{Domain, FieldSpec, ParamPoint, ShapeAtlas, WeightSequence};
use shapeop::spectral::fit;
use shapeop::Error;

fn abs_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

const COEF: [f64; 3] = [0.5, -0.3, 0.1];

fn linear(y: &ParamPoint<f64>) -> shapeop::Result<Vec<f64>> {
    Ok(vec![y.coords().iter().zip(COEF).map(|(a, b)| a * b).sum::<f64>()])
}

fn small_config(extra: &[&str]) -> RunConfig {
    let mut sets: Vec<String> = ["atlas.dim=4", "bench.h=0.0625", "bench.n_schedule=[4, 8, 16, 32, 64]"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    sets.extend(extra.iter().map(|s| s.to_string()));
    RunConfig::load(None, &sets, None).unwrap()
}

#[test]
fn exact_surrogate_on_its_nodes_has_zero_error() {
    let s = fit(&[0.6, 0.4, 0.2], |y: &ParamPoint<f64>| Ok(vec![(y.coords()[0] + 0.3 * y.coords()[2]).exp()]), 10, 1, "scalar")
        .unwrap();
    let nodes: Vec<ParamPoint<f64>> =
        s.index_set.indices.iter().map(|m| ParamPoint::new(s.node_of(m)).unwrap()).collect();
    let e = worst_case_error(
        |y: &ParamPoint<f64>| s.evaluate(y),
        |y: &ParamPoint<f64>| Ok(vec![(y.coords()[0] + 0.3 * y.coords()[2]).exp()]),
        abs_distance,
        &nodes,
    )
    .unwrap();
    assert!(e <= 1e-12);
}

#[test]
fn constant_surrogate_against_linear_oracle() {
    let corners = corner_augmented_set(3, 0, 0);
    assert_eq!(corners.len(), 6);
    let e = worst_case_error(|_: &ParamPoint<f64>| Ok(vec![0.0]), linear, abs_distance, &corners).unwrap();
    assert!((e - 0.5).abs() <= 1e-15);
    let full = corner_augmented_set(3, 200, 4);
    let e = worst_case_error(|_: &ParamPoint<f64>| Ok(vec![0.0]), linear, abs_distance, &full).unwrap();
    assert!(e >= 0.5 && e <= 0.9);
}

#[test]
fn oracle_failures_carry_the_parameter() {
    let err = worst_case_error(
        |_: &ParamPoint<f64>| Ok(vec![0.0]),
        |y: &ParamPoint<f64>| if y.coords()[1] < -0.5 { Err(Error::SolverFailed("x".into())) } else { Ok(vec![0.0]) },
        abs_distance,
        &corner_augmented_set(2, 0, 0),
    )
    .unwrap_err();
    assert!(matches!(err, Error::Oracle { ref y, .. } if y == &vec![0.0, -1.0]));
}

#[test]
fn mean_square_estimates() {
    let zero = mean_square_error(linear, linear, abs_distance, 3, 200, 1).unwrap();
    assert_eq!(zero.value, 0.0);
    let c = |_: &ParamPoint<f64>| Ok(vec![0.0]);
    let a = mean_square_error(c, linear, abs_distance, 3, 200, 9).unwrap();
    let b = mean_square_error(c, linear, abs_distance, 3, 400, 9).unwrap();
    assert!((a.value - b.value).abs() <= 2.0 * (a.std_error.powi(2) + b.std_error.powi(2)).sqrt());
    // E|a·y|² = Σ a_k² / 3 for uniform y
    let exact = (COEF.iter().map(|a| a * a).sum::<f64>() / 3.0).sqrt();
    assert!((b.value - exact).abs() <= 4.0 * b.std_error);
    assert_eq!(a, mean_square_error(c, linear, abs_distance, 3, 200, 9).unwrap());
    assert!(mean_square_error(c, linear, abs_distance, 3, 100, 9).is_err());
}

#[test]
fn synthetic_rate_fits() {
    let pairs: Vec<(usize, f64)> = [8usize, 16, 32, 64, 128].iter().map(|&n| (n, 3.0 / n as f64)).collect();
    let m = fit_rate(&ErrorCurve::from_pairs(ErrorKind::Sup, &pairs).unwrap(), 1.0).unwrap();
    assert!((m.slope + 1.0).abs() <= 1e-10);
    assert!((m.constant - 3.0).abs() <= 1e-9);
    assert_eq!(m.points_used, 4);
    assert!(m.meets_prediction());

    let flat: Vec<(usize, f64)> = [8usize, 16, 32, 64].iter().map(|&n| (n, 0.2)).collect();
    let m = fit_rate(&ErrorCurve::from_pairs(ErrorKind::Sup, &flat).unwrap(), 1.0).unwrap();
    assert!(m.slope.abs() <= 1e-12);
    assert!(!m.meets_prediction());

    let zeros: Vec<(usize, f64)> = [8usize, 16, 32, 64].iter().map(|&n| (n, 0.0)).collect();
    let m = fit_rate(&ErrorCurve::from_pairs(ErrorKind::Sup, &zeros).unwrap(), 1.0).unwrap();
    assert!(m.exact && m.rate().is_infinite());

    assert!(fit_rate(&ErrorCurve::from_pairs(ErrorKind::Sup, &pairs[..3]).unwrap(), 1.0).is_err());
    let neg = vec![(1, 0.1), (2, -0.1), (3, 0.01), (4, 0.001)];
    assert!(fit_rate(&ErrorCurve::from_pairs(ErrorKind::Sup, &neg).unwrap(), 1.0).is_err());
}

#[test]
fn predicted_exponents() {
    assert_eq!(predicted_worst_case_rate(2.0, Some(3.0)), 1.0);
    assert_eq!(predicted_mean_square_rate(2.0, Some(3.0)), 1.5);
    assert_eq!(predicted_worst_case_rate(2.0, None), 1.0);
    assert_eq!(predicted_mean_square_rate(3.0, Some(0.7)), 0.7);
}

#[test]
fn curves_require_increasing_n() {
    let mut c = ErrorCurve::new();
    c.push(CurvePoint { n: 4, error: 1.0, kind: ErrorKind::Sup, oracle_evals: 4 }).unwrap();
    assert!(c.push(CurvePoint { n: 4, error: 1.0, kind: ErrorKind::Sup, oracle_evals: 4 }).is_err());
    assert!(c.push(CurvePoint { n: 8, error: 1.0, kind: ErrorKind::MeanSquare, oracle_evals: 8 }).is_err());
    c.push(CurvePoint { n: 8, error: 1.4, kind: ErrorKind::Sup, oracle_evals: 8 }).unwrap();
    assert!(c.is_monotone_within(1.5));
    assert!(!c.is_monotone_within(1.2));
    let mut svg = Vec::new();
    write_loglog_svg(&mut svg, "t", &c).unwrap();
    let svg = String::from_utf8(svg).unwrap();
    assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
}

#[test]
fn tail_exponent_of_a_power_law() {
    let w = |j: usize| (j as f64).powf(-2.0);
    let c: Vec<f64> = (1..=40).map(|j| 0.7 * w(j).powf(1.5)).collect();
    assert!((tail_exponent(&c, w).unwrap() - 1.5).abs() <= 1e-10);
    assert!(tail_exponent(&[0.0; 40], w).is_none());
}

fn sine_atlas(weights: Vec<f64>) -> ShapeAtlas<f64> {
    let k = weights.len();
    ShapeAtlas::new(Domain::UnitSquare, FieldSpec::identity(), FieldSpec::sine_catalog(k), WeightSequence::from_values(weights).unwrap(), k)
        .unwrap()
}

#[test]
fn single_feature_decay_table() {
    let atlas = sine_atlas(vec![0.05]);
    let mesh = Arc::new(build_mesh(Domain::UnitSquare, 0.125).unwrap());
    let p = PulledBackProblem::poisson(&atlas, ParamPoint::zeros(1), SourceField::new(SourceSpec::default())).unwrap();
    let rep = derivative_decay_report(&mesh, &p, 1e-3).unwrap();
    assert_eq!(rep.rows.len(), 1);
    assert!(rep.rows[0].ratio.is_finite() && rep.rows[0].ratio > 0.0);
    let mut csv = Vec::new();
    rep.write_csv(&mut csv).unwrap();
    assert!(String::from_utf8(csv).unwrap().starts_with("k,fd_h1,gamma_k,ratio\n1,"));
}

#[test]
fn cubic_weights_decay() {
    let w: Vec<f64> = (1..=8).map(|k| 0.05 * (k as f64).powi(-3)).collect();
    let atlas = sine_atlas(w);
    let mesh = Arc::new(build_mesh(Domain::UnitSquare, 1.0 / 32.0).unwrap());
    let p = PulledBackProblem::poisson(&atlas, ParamPoint::zeros(8), SourceField::new(SourceSpec::default())).unwrap();
    let rep = derivative_decay_report(&mesh, &p, 1e-3).unwrap();
    assert!(rep.rows[0].fd_h1 >= 4.0 * rep.rows[3].fd_h1);
    assert!(rep.spread() <= 10.0, "spread {}", rep.spread());
}

#[test]
fn small_experiment_is_monotone_and_deterministic() {
    let cfg = small_config(&[]);
    let a = run_experiment(&cfg).unwrap();
    assert!(a.failures.is_empty(), "{:?}", a.failures);
    assert_eq!(a.rows.len(), 5);
    assert!(a.sup_curve().is_monotone_within(1.5));
    assert!(a.rows[4].error_sup < a.rows[2].error_sup);
    for r in &a.rows {
        assert!(r.error_ms <= r.error_sup);
    }
    assert!((a.c_gamma - 0.3).abs() < 1e-12);
    let b = run_experiment(&cfg).unwrap();
    let (mut ca, mut cb) = (Vec::new(), Vec::new());
    a.write_curve_csv(&mut ca).unwrap();
    b.write_curve_csv(&mut cb).unwrap();
    assert_eq!(ca, cb);
    let dir = tempfile::tempdir().unwrap();
    let files = a.write_bundle(dir.path()).unwrap();
    for name in ["curve.csv", "derivatives.csv", "error_sup.svg", "error_ms.svg", "summary.json"] {
        assert!(files.iter().any(|p| p.ends_with(name)), "{name}");
    }
    let back = shapeop::bench::ExperimentReport::read_summary(&dir.path().join("summary.json")).unwrap();
    assert_eq!(back.rows, a.rows);
}

#[test]
fn poisson_error_drops_from_16_to_64() {
    let rep = run_experiment(&small_config(&["bench.n_schedule=[16, 64]", "bench.derivatives=false", "bench.floor_check=false"]))
        .unwrap();
    assert!(rep.rows[1].error_sup < rep.rows[0].error_sup);
    // two points cannot be fitted, which is recorded rather than fatal
    assert!(rep.failures.iter().any(|f| f.stage == "rate_fit_sup"));
}

#[test]
fn invalid_atlas_fails_in_a_named_stage() {
    let err = run_experiment(&small_config(&["atlas.target_c_gamma=1.5"])).unwrap_err();
    match err {
        Error::Stage { stage, .. } => assert_eq!(stage, "uniformity"),
        e => panic!("unexpected {e:?}"),
    }
}

#[test]
fn sine_decoder_reports_a_tail_exponent() {
    let rep = run_experiment(&small_config(&["frame.family=sine_onb", "frame.members=32", "bench.derivatives=false"])).unwrap();
    let t = rep.t_eff.expect("tail exponent");
    assert!(t.is_finite() && t > 0.0, "{t}");
}

proptest! {
    #[test]
    fn mean_square_never_exceeds_worst_case(errs in prop::collection::vec(0.0f64..10.0, 1..300)) {
        let ms = MeanSquareEstimate::from_errors(&errs);
        let sup = errs.iter().copied().fold(0.0, f64::max);
        prop_assert!(ms.value <= sup * (1.0 + 1e-12));
    }
}
