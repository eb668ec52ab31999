use std::sync::Arc;

use proptest::prelude::*;
use shapeop::fem::{assemble_and_solve, build_mesh, h1_diff};
use shapeop::frames::{Decoder, Frame, FrameFamily};
use shapeop::pullback::{PulledBackProblem, SourceField, SourceSpec};
use shapeop::shape_param::{sample_cube_many, Domain, FieldSpec, ParamPoint, ShapeAtlas, WeightSequence};
use shapeop::spectral::{build_index_set, fit, fit_on_index_set, IndexSet, MultiIndex, SpectralSurrogate};
use shapeop::Error;

/// All multi-indices of total degree ≤ `max` in `dim` variables.
fn enumerate(dim: usize, max: u32) -> Vec<MultiIndex> {
    let mut out = vec![MultiIndex::zero(dim)];
    for _ in 0..max {
        let mut next = out.clone();
        for m in &out {
            for j in 0..dim {
                let mut v = m.0.clone();
                v[j] += 1;
                let v = MultiIndex(v);
                if v.total_degree() <= max && !next.contains(&v) {
                    next.push(v);
                }
            }
        }
        out = next;
    }
    out
}

/// Reference selection: sort every candidate by (−γ^ν, |ν|, earlier
/// coordinates first) and keep the first `n`.
fn brute_force(gamma: &[f64], n: usize) -> Vec<MultiIndex> {
    let g: Vec<f64> = gamma.iter().map(|x| x.min(1.0)).collect();
    let mut all = enumerate(gamma.len(), n as u32);
    all.sort_by(|a, b| {
        b.weight(&g)
            .total_cmp(&a.weight(&g))
            .then(a.total_degree().cmp(&b.total_degree()))
            .then(b.cmp(a))
    });
    all.truncate(n);
    all.sort();
    all
}

fn sorted(set: &IndexSet) -> Vec<MultiIndex> {
    let mut v = set.indices.clone();
    v.sort();
    v
}

#[test]
fn greedy_set_for_halving_gamma() {
    let set = build_index_set(&[0.5, 0.25, 0.125], 4).unwrap();
    let mut expect = vec![
        MultiIndex(vec![0, 0, 0]),
        MultiIndex(vec![1, 0, 0]),
        MultiIndex(vec![0, 1, 0]),
        MultiIndex(vec![2, 0, 0]),
    ];
    expect.sort();
    assert_eq!(sorted(&set), expect);
    assert_eq!(brute_force(&[0.5, 0.25, 0.125], 4), expect);
    assert_eq!(set.indices[2], MultiIndex(vec![0, 1, 0]), "degree breaks the weight tie");
}

#[test]
fn unit_budget_gives_only_zero() {
    let set = build_index_set(&[0.3, 0.2], 1).unwrap();
    assert_eq!(set.indices, vec![MultiIndex::zero(2)]);
    assert!(build_index_set(&[0.3], 0).is_err());
}

#[test]
fn non_closed_sets_are_rejected() {
    assert!(IndexSet::new(2, vec![MultiIndex(vec![0, 0]), MultiIndex(vec![0, 2])]).is_err());
    assert!(IndexSet::new(2, vec![MultiIndex(vec![0, 0]), MultiIndex(vec![0, 1])]).is_ok());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]
    #[test]
    fn greedy_matches_brute_force_and_is_closed(
        gamma in prop::collection::vec(0.01f64..1.2, 1..4),
        n in 1usize..14,
    ) {
        let set = build_index_set(&gamma, n).unwrap();
        prop_assert!(set.is_downward_closed());
        prop_assert_eq!(set.len(), n);
        prop_assert_eq!(sorted(&set), brute_force(&gamma, n));
    }

    #[test]
    fn polynomials_in_the_span_are_reproduced(
        coef in prop::collection::vec(-1.0f64..1.0, 6),
        y in prop::collection::vec(-1.0f64..1.0, 2),
    ) {
        let set = build_index_set(&[0.6, 0.4], 6).unwrap();
        let monomials = set.indices.clone();
        let poly = move |y: &ParamPoint<f64>| -> f64 {
            monomials
                .iter()
                .zip(&coef)
                .map(|(m, c)| c * y.coords()[0].powi(m.0[0] as i32) * y.coords()[1].powi(m.0[1] as i32))
                .sum()
        };
        let p2 = poly.clone();
        let s = fit_on_index_set(set, vec![0.6, 0.4], move |y| Ok(vec![p2(y)]), 1, "scalar").unwrap();
        let y = ParamPoint::new(y).unwrap();
        prop_assert!((s.evaluate(&y).unwrap()[0] - poly(&y)).abs() <= 1e-12);
    }
}

#[test]
fn square_of_first_coordinate_is_exact() {
    let set = build_index_set(&[0.5, 0.25, 0.125], 4).unwrap();
    assert!(set.contains(&MultiIndex(vec![2, 0, 0])));
    let s = fit_on_index_set(set, vec![0.5, 0.25, 0.125], |y: &ParamPoint<f64>| Ok(vec![y.coords()[0].powi(2)]), 1, "scalar").unwrap();
    for y in sample_cube_many::<f64>(3, 3, 50) {
        assert!((s.evaluate(&y).unwrap()[0] - y.coords()[0].powi(2)).abs() <= 1e-12);
    }
}

#[test]
fn constant_oracle_needs_one_evaluation() {
    let s = fit(&[0.5, 0.5], |_| Ok(vec![3.0, -1.0]), 2, 2, "pair").unwrap();
    assert_eq!(s.index_set.len(), 1);
    assert_eq!(s.oracle_evals, 1);
    assert_eq!(s.dof_count(), 2);
    let y = ParamPoint::new(vec![0.3, -0.9]).unwrap();
    assert_eq!(s.evaluate(&y).unwrap(), vec![3.0, -1.0]);
}

#[test]
fn linear_oracle_and_interpolation_nodes() {
    let oracle = |y: &ParamPoint<f64>| -> shapeop::Result<Vec<f64>> {
        let c = y.coords();
        Ok(vec![1.0 + 2.0 * c[0] - c[1] + 0.5 * c[2], (3.0 * c[0]).sin() * c[1].exp()])
    };
    let s = fit(&[0.7, 0.5, 0.3], oracle, 2 * 20, 2, "pair").unwrap();
    assert!(s.oracle_evals <= s.index_set.len());
    assert!(s.index_set.is_downward_closed());
    for y in sample_cube_many::<f64>(9, 3, 20) {
        assert!((s.evaluate(&y).unwrap()[0] - oracle(&y).unwrap()[0]).abs() <= 1e-12);
    }
    for m in &s.index_set.indices {
        let y = ParamPoint::new(s.node_of(m)).unwrap();
        let got = s.evaluate(&y).unwrap();
        let want = oracle(&y).unwrap();
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() <= 1e-12 * (1.0 + w.abs()), "{m:?}: {g} vs {w}");
        }
    }
}

#[test]
fn oracle_failure_reports_the_parameter() {
    let err = fit(
        &[0.5, 0.5],
        |y: &ParamPoint<f64>| {
            if y.coords()[0] > 0.5 {
                Err(Error::SolverFailed("boom".into()))
            } else {
                Ok(vec![0.0])
            }
        },
        3,
        1,
        "scalar",
    )
    .unwrap_err();
    match err {
        Error::Oracle { y, .. } => assert_eq!(y, vec![1.0, 0.0]),
        e => panic!("unexpected {e:?}"),
    }
    assert!(matches!(
        fit(&[0.5], |_: &ParamPoint<f64>| Ok(vec![0.0, 1.0]), 1, 1, "scalar"),
        Err(Error::Oracle { .. })
    ));
}

#[test]
fn evaluation_outside_dimension_is_rejected() {
    let s = fit(&[0.5, 0.5], |_| Ok(vec![1.0]), 3, 1, "scalar").unwrap();
    assert!(s.evaluate(&ParamPoint::zeros(3)).is_err());
    assert!(ParamPoint::new(vec![1.5, 0.0]).is_err());
}

#[test]
fn json_round_trip_is_bit_exact() {
    let s = fit(
        &[0.4, 0.2],
        |y: &ParamPoint<f64>| Ok(vec![(y.coords()[0] * 1.7).exp() / 3.0, y.coords()[1].atan()]),
        20,
        2,
        "pair",
    )
    .unwrap();
    let mut buf = Vec::new();
    s.write_json(&mut buf).unwrap();
    let back = SpectralSurrogate::<f64>::read_json(&buf[..]).unwrap();
    assert_eq!(back, s);
    for (a, b) in back.surpluses.iter().flatten().zip(s.surpluses.iter().flatten()) {
        assert_eq!(a.to_bits(), b.to_bits());
    }
    for (a, b) in back.nodes.iter().zip(&s.nodes) {
        assert_eq!(a.to_bits(), b.to_bits());
    }
    assert!(SpectralSurrogate::<f64>::read_json(&b"{}"[..]).is_err());
}

#[test]
fn decoded_surrogate_matches_fem_at_the_origin() {
    let atlas = ShapeAtlas::new(
        Domain::UnitSquare,
        FieldSpec::identity(),
        FieldSpec::sine_catalog(2),
        WeightSequence::from_values(vec![0.1, 0.05]).unwrap(),
        2,
    )
    .unwrap();
    let mesh = Arc::new(build_mesh(Domain::UnitSquare, 0.125).unwrap());
    let frame = Arc::new(Frame::new(FrameFamily::FemNodal(mesh.clone()), 0).unwrap());
    let m_out = frame.len();
    let dec = Decoder::new(frame, m_out).unwrap();
    let src = SourceField::new(SourceSpec::Constant { value: 1.0 });
    let oracle = |y: &ParamPoint<f64>| {
        let p = PulledBackProblem::poisson(&atlas, y.clone(), src.clone())?;
        Ok(assemble_and_solve(&mesh, &p)?.dof_values())
    };
    let gamma = atlas.gamma_sequence().unwrap().gamma;
    let s = fit(&gamma, oracle, 6 * m_out, m_out, "fem nodal").unwrap();
    let y0 = ParamPoint::zeros(2);
    let decoded = s.evaluate_decoded(&y0, &dec, &mesh).unwrap();
    let direct = assemble_and_solve(&mesh, &PulledBackProblem::poisson(&atlas, y0, src.clone()).unwrap()).unwrap();
    assert!(h1_diff(&decoded, &direct).unwrap() <= 1e-12);
}
