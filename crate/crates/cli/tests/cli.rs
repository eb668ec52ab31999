use std::path::Path;
use std::process::{Command, Output};

const SMALL: &[&str] = &["--set", "atlas.dim=2", "--set", "bench.h=0.125", "--set", "bench.n_schedule=[4,8,16]"];
const MANUFACTURED: &str = "pde.source={kind=\"sine_product\",amplitude=19.739208802178716,k1=1,k2=1}";

fn shapeop(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_shapeop"))
        .args(args)
        .arg("--set")
        .arg(format!("output_dir=\"{}\"", dir.display()))
        .env_remove("SHAPEOP_SEED")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn value(text: &str, key: &str) -> f64 {
    let prefix = format!("{key} = ");
    text.lines()
        .find_map(|l| l.strip_prefix(&prefix))
        .unwrap_or_else(|| panic!("no '{key}' in output:\n{text}"))
        .trim()
        .parse()
        .unwrap()
}

fn nodal_values(path: &Path) -> Vec<f64> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect()
}

#[test]
fn inspect_identity_atlas() {
    let tmp = tempfile::tempdir().unwrap();
    let o = shapeop(tmp.path(), &["inspect", "--set", "atlas.dim=0"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    assert_eq!(value(&out, "c_gamma"), 0.0);
    assert!((value(&out, "sigma_min") - 1.0).abs() < 1e-14);
    assert!((value(&out, "sigma_max") - 1.0).abs() < 1e-14);
    assert!(tmp.path().join("atlas.csv").exists());
}

#[test]
fn inspect_rejects_invalid_atlas() {
    let tmp = tempfile::tempdir().unwrap();
    let o = shapeop(tmp.path(), &["inspect", "--set", "atlas.target_c_gamma=1.2"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("c_gamma"));
}

#[test]
fn inspect_c_gamma_matches_brute_force() {
    let tmp = tempfile::tempdir().unwrap();
    let o = shapeop(
        tmp.path(),
        &["inspect", "--set", "atlas.dim=3", "--set", "atlas.weight_c=0.05", "--set", "atlas.s=1.0", "--set", "atlas.r=1.0"],
    );
    assert!(o.status.success());
    let pi = std::f64::consts::PI;
    // default weight_beta = 2; features: (1,1) e1, (1,1) e2, (1,2) e1; each sup is sampled on a 64 x 64 grid
    let mut want = 0.0;
    for (k, (k1, k2)) in [(1.0, 1.0), (1.0, 1.0), (1.0, 2.0)].into_iter().enumerate() {
        let (mut sv, mut sg) = (0.0f64, 0.0f64);
        for i in 0..64 {
            for j in 0..64 {
                let (x, y) = (i as f64 / 63.0, j as f64 / 63.0);
                let (s1, c1) = ((pi * k1 * x).sin(), (pi * k1 * x).cos());
                let (s2, c2) = ((pi * k2 * y).sin(), (pi * k2 * y).cos());
                sv = sv.max((s1 * s2).abs());
                sg = sg.max(pi * ((k1 * c1 * s2).powi(2) + (k2 * s1 * c2).powi(2)).sqrt());
            }
        }
        want += 0.05 / ((k + 1) as f64).powi(2) * (sv + sg) * 1.05;
    }
    let got = value(&stdout(&o), "c_gamma");
    assert!((got - want).abs() <= 1e-12 * want, "{got} vs {want}");
}

#[test]
fn solve_manufactured_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let mut prev = (f64::INFINITY, f64::INFINITY);
    for (h, h1_bound, l2_bound) in [("0.125", 0.48, 0.024), ("0.0625", 0.24, 0.006), ("0.03125", 0.12, 0.0015)] {
        let o = shapeop(
            tmp.path(),
            &["solve", "--y", "", "--set", "atlas.dim=0", "--set", &format!("bench.h={h}"), "--set", MANUFACTURED],
        );
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let out = stdout(&o);
        let (e1, e0) = (value(&out, "h1_error"), value(&out, "l2_error"));
        assert!(e1 <= h1_bound && e0 <= l2_bound, "h = {h}: {e1} {e0}");
        assert!(e1 < 0.6 * prev.0 && e0 < 0.3 * prev.1);
        prev = (e1, e0);
    }
    assert!(tmp.path().join("solution.csv").exists());
}

#[test]
fn solve_rejects_bad_parameters() {
    let tmp = tempfile::tempdir().unwrap();
    for y in ["0.1,abc", "0.5,1.5", "0.1"] {
        let o = shapeop(tmp.path(), &["solve", "--y", y, "--set", "atlas.dim=2", "--set", "bench.h=0.25"]);
        assert_eq!(o.status.code(), Some(2), "y = {y}");
    }
}

#[test]
fn fit_then_eval_reproduces_oracle_at_a_node() {
    let tmp = tempfile::tempdir().unwrap();
    let surrogate = tmp.path().join("surrogate.json");
    let fit = shapeop(tmp.path(), &[&["fit"], SMALL].concat());
    assert!(fit.status.success(), "{}", String::from_utf8_lossy(&fit.stderr));
    assert!(surrogate.exists());

    let solve = shapeop(tmp.path(), &[&["solve", "--y", "1,0"], SMALL].concat());
    assert!(solve.status.success());
    let decoded = tmp.path().join("decoded.csv");
    let coeffs = tmp.path().join("coeffs.csv");
    let eval = shapeop(
        tmp.path(),
        &[
            &["eval", "--surrogate", surrogate.to_str().unwrap(), "--y", "1,0"],
            &["--out", coeffs.to_str().unwrap(), "--solution", decoded.to_str().unwrap()][..],
            SMALL,
        ]
        .concat(),
    );
    assert!(eval.status.success(), "{}", String::from_utf8_lossy(&eval.stderr));
    let a = nodal_values(&tmp.path().join("solution.csv"));
    let b = nodal_values(&decoded);
    assert_eq!(a.len(), b.len());
    assert!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() <= 1e-12));

    let wrong = shapeop(tmp.path(), &[&["eval", "--surrogate", surrogate.to_str().unwrap(), "--y", "1,0,0"], SMALL].concat());
    assert_eq!(wrong.status.code(), Some(2));
}

#[test]
fn bench_and_report() {
    let tmp = tempfile::tempdir().unwrap();
    let args = ["bench", "--set", "atlas.dim=3", "--set", "bench.h=0.125", "--set", "bench.n_schedule=[4,8,16,32]"];
    let o = shapeop(tmp.path(), &args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["curve.csv", "derivatives.csv", "error_sup.svg", "error_ms.svg", "summary.json"] {
        assert!(tmp.path().join(f).exists(), "{f}");
    }
    let curve = std::fs::read_to_string(tmp.path().join("curve.csv")).unwrap();
    assert_eq!(curve.lines().next(), Some("N,error_sup,error_ms,oracle_evals"));
    assert_eq!(curve.lines().count(), 5);

    let r = shapeop(tmp.path(), &["report"]);
    assert!(r.status.success());
    assert!(stdout(&r).contains("worst-case rate"));
    assert!(tmp.path().join("report.txt").exists());
}

#[test]
fn configuration_errors_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let o = shapeop(tmp.path(), &["inspect", "--set", "atlas.no_such_key=1"]);
    assert_eq!(o.status.code(), Some(2));

    let o = Command::new(env!("CARGO_BIN_EXE_shapeop"))
        .args(["inspect", "--set"])
        .arg(format!("output_dir=\"{}\"", tmp.path().display()))
        .env("SHAPEOP_SEED", "not-a-seed")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));

    let o = shapeop(tmp.path(), &["inspect", "--jobs", "0"]);
    assert_eq!(o.status.code(), Some(2));

    let cfg = tmp.path().join("bad.toml");
    std::fs::write(&cfg, "[bench]\nn_mc = 10\n").unwrap();
    let o = shapeop(tmp.path(), &["inspect", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}
