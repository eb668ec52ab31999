//! Measurement harness: sampled worst-case and mean-square surrogate
//! errors, rate fits, derivative decay tables and report emission.

use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{FrameChoice, RunConfig, SurrogateKind};
use crate::error::{Error, Result};
use crate::fem::{
    assemble_and_solve, fd_param_derivative, h1_diff, h1_seminorm, h1_seminorm_nodal, solve_physical, FemSolution, Mesh,
};
use crate::frames::{Decoder, FrameFamily};
use crate::nn::{train, ReluNet};
use crate::pullback::{invert_map, PulledBackProblem};
use crate::shape_param::{sample_cube_many, ParamPoint, ShapeAtlas, UNIFORMITY_GRID_POINTS};
use crate::spectral::{build_index_set, fit_on_index_set, SpectralSurrogate};

/// Comparison slack between fitted and predicted exponents.
pub const RATE_SLACK: f64 = 0.25;
/// Rate fits keep only errors above this multiple of the oracle floor.
pub const FLOOR_MULTIPLE: f64 = 3.0;
/// Relative accuracy assumed for the direct oracle solves.
pub const SOLVER_RELATIVE_FLOOR: f64 = 1e-10;
/// Minimum number of points in a rate fit.
pub const MIN_FIT_POINTS: usize = 4;
/// Minimum Monte-Carlo sample count.
pub const MIN_MC_SAMPLES: usize = 200;
/// Extra uniform parameters in the uniformity check.
pub const UNIFORMITY_EXTRA: usize = 64;
/// Separate stream for the network training parameters.
const NN_SEED_SALT: u64 = 0x6e6e_5eed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    Sup,
    MeanSquare,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub n: usize,
    pub error: f64,
    pub kind: ErrorKind,
    pub oracle_evals: usize,
}

/// Errors against `N`, strictly increasing in `N`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ErrorCurve {
    pub points: Vec<CurvePoint>,
}

impl ErrorCurve {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_pairs(kind: ErrorKind, pairs: &[(usize, f64)]) -> Result<Self> {
        let mut c = Self::new();
        for &(n, error) in pairs {
            c.push(CurvePoint { n, error, kind, oracle_evals: n })?;
        }
        Ok(c)
    }

    pub fn push(&mut self, p: CurvePoint) -> Result<()> {
        if let Some(last) = self.points.last() {
            if p.n <= last.n {
                return Err(Error::InvalidInput(format!("curve N must increase: {} after {}", p.n, last.n)));
            }
            if p.kind != last.kind {
                return Err(Error::InvalidInput("curve mixes error kinds".into()));
            }
        }
        self.points.push(p);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Each step grows by at most `factor`.
    pub fn is_monotone_within(&self, factor: f64) -> bool {
        self.points.windows(2).all(|w| w[1].error <= factor * w[0].error)
    }
}

/// Fitted rate `error ≈ C N^{slope}` and its prediction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateModel {
    /// Least-squares slope of `log₂ error` against `log₂ N`.
    pub slope: f64,
    /// `C = 2^{intercept}`.
    pub constant: f64,
    /// True when every error vanished; the rate is then unbounded.
    pub exact: bool,
    pub predicted: f64,
    pub delta: f64,
    pub points_used: usize,
    /// Largest `‖∂_k û‖ / γ_k` seen by the derivative table.
    pub rho: Option<f64>,
    /// Largest observed solution norm, a proxy for the bound `M`.
    pub m_bound: Option<f64>,
}

impl RateModel {
    /// Decay rate `−slope`, infinite for exact surrogates.
    pub fn rate(&self) -> f64 {
        if self.exact {
            f64::INFINITY
        } else {
            -self.slope
        }
    }

    pub fn meets_prediction(&self) -> bool {
        self.rate() >= self.predicted - self.delta
    }
}

/// `min(s − 1, t)`; `t = None` means unbounded.
pub fn predicted_worst_case_rate(s: f64, t: Option<f64>) -> f64 {
    (s - 1.0).min(t.unwrap_or(f64::INFINITY))
}

/// `min(s − 1/2, t)`.
pub fn predicted_mean_square_rate(s: f64, t: Option<f64>) -> f64 {
    (s - 0.5).min(t.unwrap_or(f64::INFINITY))
}

/// Least-squares fit over the largest-`N` half of the curve, with at least
/// [`MIN_FIT_POINTS`] points.
pub fn fit_rate(curve: &ErrorCurve, predicted: f64) -> Result<RateModel> {
    fit_rate_above(curve, predicted, 0.0)
}

/// As [`fit_rate`], ignoring points with `error ≤ FLOOR_MULTIPLE · floor`.
pub fn fit_rate_above(curve: &ErrorCurve, predicted: f64, floor: f64) -> Result<RateModel> {
    if curve.len() < MIN_FIT_POINTS {
        return Err(Error::InvalidInput(format!(
            "rate fit needs at least {MIN_FIT_POINTS} points, got {}",
            curve.len()
        )));
    }
    if curve.points.iter().any(|p| !(p.error >= 0.0) || !p.error.is_finite()) {
        return Err(Error::InvalidInput("rate fit needs non-negative finite errors".into()));
    }
    let base = RateModel {
        slope: f64::NEG_INFINITY,
        constant: 0.0,
        exact: true,
        predicted,
        delta: RATE_SLACK,
        points_used: curve.len(),
        rho: None,
        m_bound: None,
    };
    if curve.points.iter().all(|p| p.error == 0.0) {
        return Ok(base);
    }
    let usable: Vec<&CurvePoint> = curve.points.iter().filter(|p| p.error > FLOOR_MULTIPLE * floor).collect();
    if usable.iter().any(|p| p.error == 0.0) {
        return Err(Error::InvalidInput("rate fit needs positive errors".into()));
    }
    if usable.len() < MIN_FIT_POINTS {
        return Err(Error::InvalidInput(format!(
            "only {} points lie above {FLOOR_MULTIPLE} x floor {floor:e}",
            usable.len()
        )));
    }
    let take = usable.len().div_ceil(2).max(MIN_FIT_POINTS);
    let pts = &usable[usable.len() - take..];
    let xs: Vec<f64> = pts.iter().map(|p| (p.n as f64).log2()).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.error.log2()).collect();
    let (slope, intercept) = least_squares(&xs, &ys);
    if !slope.is_finite() {
        return Err(Error::InvalidInput("rate fit produced a non-finite slope".into()));
    }
    Ok(RateModel { slope, constant: intercept.exp2(), exact: false, points_used: take, ..base })
}

fn least_squares(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// The sup test set: every `±e_k` followed by `n_samples` uniform draws.
pub fn corner_augmented_set(dim: usize, n_samples: usize, seed: u64) -> Vec<ParamPoint<f64>> {
    let mut out = Vec::with_capacity(2 * dim + n_samples);
    for k in 0..dim {
        for s in [1.0, -1.0] {
            out.push(ParamPoint::one_hot(dim, k, s).expect("corner in cube"));
        }
    }
    out.extend(sample_cube_many(seed, dim, n_samples));
    out
}

fn oracle_at<O>(oracle: &O, y: &ParamPoint<f64>) -> Result<Vec<f64>>
where
    O: Fn(&ParamPoint<f64>) -> Result<Vec<f64>>,
{
    oracle(y).map_err(|e| match e {
        Error::Oracle { .. } => e,
        e => Error::Oracle { y: y.to_f64(), source: Box::new(e) },
    })
}

fn pointwise_errors<S, D>(surrogate: &S, targets: &[Vec<f64>], distance: &D, ys: &[ParamPoint<f64>]) -> Result<Vec<f64>>
where
    S: Fn(&ParamPoint<f64>) -> Result<Vec<f64>> + Sync,
    D: Fn(&[f64], &[f64]) -> f64 + Sync,
{
    ys.par_iter()
        .zip(targets)
        .map(|(y, t)| Ok(distance(&surrogate(y)?, t)))
        .collect()
}

fn oracle_values<O>(oracle: &O, ys: &[ParamPoint<f64>]) -> Result<Vec<Vec<f64>>>
where
    O: Fn(&ParamPoint<f64>) -> Result<Vec<f64>> + Sync,
{
    ys.par_iter().map(|y| oracle_at(oracle, y)).collect()
}

/// Largest distance over `test_ys`. This is a sampled lower bound of the
/// supremum over the cube; use [`corner_augmented_set`] for the test set.
pub fn worst_case_error<S, O, D>(surrogate: S, oracle: O, distance: D, test_ys: &[ParamPoint<f64>]) -> Result<f64>
where
    S: Fn(&ParamPoint<f64>) -> Result<Vec<f64>> + Sync,
    O: Fn(&ParamPoint<f64>) -> Result<Vec<f64>> + Sync,
    D: Fn(&[f64], &[f64]) -> f64 + Sync,
{
    let targets = oracle_values(&oracle, test_ys)?;
    Ok(pointwise_errors(&surrogate, &targets, &distance, test_ys)?.into_iter().fold(0.0, f64::max))
}

/// Root-mean-square error with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanSquareEstimate {
    pub value: f64,
    pub std_error: f64,
    pub samples: usize,
}

impl MeanSquareEstimate {
    pub fn from_errors(errors: &[f64]) -> Self {
        let n = errors.len() as f64;
        let sq: Vec<f64> = errors.iter().map(|e| e * e).collect();
        let mean = sq.iter().sum::<f64>() / n;
        let var = if errors.len() > 1 {
            sq.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        let value = mean.sqrt();
        // delta method for the square root of the sample mean
        let std_error = if value > 0.0 { (var / n).sqrt() / (2.0 * value) } else { 0.0 };
        Self { value, std_error, samples: errors.len() }
    }
}

/// Monte-Carlo `L²(μ)` error over `n_mc` uniform draws from `seed`.
pub fn mean_square_error<S, O, D>(
    surrogate: S,
    oracle: O,
    distance: D,
    dim: usize,
    n_mc: usize,
    seed: u64,
) -> Result<MeanSquareEstimate>
where
    S: Fn(&ParamPoint<f64>) -> Result<Vec<f64>> + Sync,
    O: Fn(&ParamPoint<f64>) -> Result<Vec<f64>> + Sync,
    D: Fn(&[f64], &[f64]) -> f64 + Sync,
{
    if n_mc < MIN_MC_SAMPLES {
        return Err(Error::InvalidInput(format!("n_mc = {n_mc} is below {MIN_MC_SAMPLES}")));
    }
    let ys = sample_cube_many(seed, dim, n_mc);
    let targets = oracle_values(&oracle, &ys)?;
    Ok(MeanSquareEstimate::from_errors(&pointwise_errors(&surrogate, &targets, &distance, &ys)?))
}

/// Norm in which surrogate outputs are compared.
#[derive(Clone, Debug)]
pub enum OutputNorm {
    /// H¹ seminorm of interior nodal values on the mesh.
    H1Nodal(Arc<Mesh<f64>>),
    /// Euclidean norm of frame coefficients.
    Coefficient,
}

impl OutputNorm {
    pub fn norm(&self, a: &[f64]) -> f64 {
        match self {
            OutputNorm::H1Nodal(mesh) => {
                let mut v = vec![0.0; mesh.num_nodes()];
                for (&node, &x) in mesh.interior_nodes().iter().zip(a) {
                    v[node] = x;
                }
                h1_seminorm_nodal(mesh, &v)
            }
            OutputNorm::Coefficient => a.iter().map(|x| x * x).sum::<f64>().sqrt(),
        }
    }

    pub fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
        self.norm(&d)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayRow {
    pub k: usize,
    pub fd_h1: f64,
    pub gamma_k: f64,
    pub ratio: f64,
}

/// `‖∂_{y_k} û‖_{H¹}` by central differences against `γ_k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayReport {
    pub rows: Vec<DecayRow>,
    pub max_ratio: f64,
    pub min_ratio: f64,
}

impl DecayReport {
    /// `max / min` of the ratios.
    pub fn spread(&self) -> f64 {
        self.max_ratio / self.min_ratio
    }

    /// CSV `k,fd_h1,gamma_k,ratio` with 1-based `k`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "k,fd_h1,gamma_k,ratio")?;
        for r in &self.rows {
            writeln!(w, "{},{},{},{}", r.k, r.fd_h1, r.gamma_k, r.ratio)?;
        }
        Ok(())
    }
}

/// Derivative table at the parameter of `problem` for every active `k`.
pub fn derivative_decay_report(mesh: &Arc<Mesh<f64>>, problem: &PulledBackProblem<'_, f64>, eps: f64) -> Result<DecayReport> {
    let gamma = problem.atlas.gamma_sequence()?.gamma;
    let fd: Vec<f64> = (0..gamma.len())
        .into_par_iter()
        .map(|k| fd_param_derivative(mesh, problem, k, eps))
        .collect::<Result<_>>()?;
    let rows: Vec<DecayRow> = fd
        .iter()
        .zip(&gamma)
        .enumerate()
        .map(|(k, (&fd_h1, &gamma_k))| DecayRow { k: k + 1, fd_h1, gamma_k, ratio: fd_h1 / gamma_k })
        .collect();
    let max_ratio = rows.iter().map(|r| r.ratio).fold(f64::NEG_INFINITY, f64::max);
    let min_ratio = rows.iter().map(|r| r.ratio).fold(f64::INFINITY, f64::min);
    Ok(DecayReport { rows, max_ratio, min_ratio })
}

/// Slope of `log e_j` against `log w_j` over the tail half, where
/// `e_j = max_{i ≥ j} |c_i|` is the decreasing envelope of the
/// coefficients and `w_j` are the base weights.
pub fn tail_exponent(coeffs: &[f64], weight: impl Fn(usize) -> f64) -> Option<f64> {
    let n = coeffs.len();
    if n < 2 * MIN_FIT_POINTS {
        return None;
    }
    let mut env = vec![0.0; n];
    let mut run = 0.0f64;
    for j in (0..n).rev() {
        run = run.max(coeffs[j].abs());
        env[j] = run;
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = (n / 2..n)
        .filter(|&j| env[j] > 0.0)
        .map(|j| (weight(j + 1).ln(), env[j].ln()))
        .unzip();
    if xs.len() < MIN_FIT_POINTS {
        return None;
    }
    let (slope, _) = least_squares(&xs, &ys);
    slope.is_finite().then_some(slope)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub n: usize,
    pub error_sup: f64,
    pub error_ms: f64,
    pub ms_std_error: f64,
    pub oracle_evals: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NnSummary {
    pub samples: usize,
    pub size: usize,
    pub best_epoch: usize,
    pub train_loss: f64,
    pub validation_loss: f64,
    pub error_sup: f64,
    pub error_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageFailure {
    pub stage: String,
    pub message: String,
}

/// Everything a benchmark run produces.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub rows: Vec<CurveRow>,
    pub sup_rate: Option<RateModel>,
    pub ms_rate: Option<RateModel>,
    pub s: f64,
    pub r: f64,
    /// Decoder tail exponent; `None` when the decoder represents the
    /// discrete oracle exactly.
    pub t_eff: Option<f64>,
    pub gamma: Vec<f64>,
    pub c_gamma: f64,
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub min_det: f64,
    /// Largest oracle solution norm over the test set.
    pub m_bound: f64,
    /// Floor used to filter the rate fit.
    pub oracle_floor: f64,
    /// `‖u_h − u_{2h}‖_{H¹}` at `y = 0`.
    pub richardson_floor: Option<f64>,
    pub derivatives: Option<DecayReport>,
    pub nn: Option<NnSummary>,
    pub distinct_oracle_evals: usize,
    pub test_points: usize,
    pub failures: Vec<StageFailure>,
}

impl ExperimentReport {
    pub fn sup_curve(&self) -> ErrorCurve {
        let mut c = ErrorCurve::new();
        for r in &self.rows {
            c.push(CurvePoint { n: r.n, error: r.error_sup, kind: ErrorKind::Sup, oracle_evals: r.oracle_evals })
                .expect("rows are increasing");
        }
        c
    }

    pub fn ms_curve(&self) -> ErrorCurve {
        let mut c = ErrorCurve::new();
        for r in &self.rows {
            c.push(CurvePoint { n: r.n, error: r.error_ms, kind: ErrorKind::MeanSquare, oracle_evals: r.oracle_evals })
                .expect("rows are increasing");
        }
        c
    }

    /// CSV `N,error_sup,error_ms,oracle_evals`.
    pub fn write_curve_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "N,error_sup,error_ms,oracle_evals")?;
        for r in &self.rows {
            writeln!(w, "{},{},{},{}", r.n, r.error_sup, r.error_ms, r.oracle_evals)?;
        }
        Ok(())
    }

    /// Writes `curve.csv`, `derivatives.csv`, `error_sup.svg`,
    /// `error_ms.svg` and `summary.json` into `dir`. Returns the paths.
    pub fn write_bundle(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        let mut emit = |name: &str, f: &dyn Fn(&mut Vec<u8>) -> Result<()>| -> Result<()> {
            let mut buf = Vec::new();
            f(&mut buf)?;
            let path = dir.join(name);
            std::fs::write(&path, buf)?;
            written.push(path);
            Ok(())
        };
        emit("curve.csv", &|b| self.write_curve_csv(b))?;
        if let Some(d) = &self.derivatives {
            emit("derivatives.csv", &|b| d.write_csv(b))?;
        }
        emit("error_sup.svg", &|b| write_loglog_svg(b, "worst-case error", &self.sup_curve()))?;
        emit("error_ms.svg", &|b| write_loglog_svg(b, "mean-square error", &self.ms_curve()))?;
        emit("summary.json", &|b| {
            serde_json::to_writer_pretty(&mut *b, self).map_err(|e| Error::Parse(e.to_string()))?;
            b.push(b'\n');
            Ok(())
        })?;
        Ok(written)
    }

    pub fn read_summary(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        serde_json::from_reader(std::io::BufReader::new(f)).map_err(|e| Error::Parse(e.to_string()))
    }
}

/// Minimal log-log line plot of one curve.
pub fn write_loglog_svg<W: Write>(mut w: W, title: &str, curve: &ErrorCurve) -> Result<()> {
    const W: f64 = 480.0;
    const H: f64 = 360.0;
    const M: f64 = 50.0;
    let pts: Vec<(f64, f64)> = curve
        .points
        .iter()
        .filter(|p| p.error > 0.0)
        .map(|p| ((p.n as f64).log10(), p.error.log10()))
        .collect();
    writeln!(w, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#)?;
    writeln!(w, r#"<rect width="{W}" height="{H}" fill="white"/>"#)?;
    writeln!(w, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{title}</text>"#, W / 2.0)?;
    writeln!(
        w,
        r#"<path d="M{M} {M} L{M} {} L{} {}" stroke="black" fill="none"/>"#,
        H - M,
        W - M,
        H - M
    )?;
    if !pts.is_empty() {
        let (x0, x1) = bounds(pts.iter().map(|p| p.0));
        let (y0, y1) = bounds(pts.iter().map(|p| p.1));
        let sx = |x: f64| M + (x - x0) / (x1 - x0) * (W - 2.0 * M);
        let sy = |y: f64| H - M - (y - y0) / (y1 - y0) * (H - 2.0 * M);
        let d: Vec<String> = pts
            .iter()
            .enumerate()
            .map(|(i, p)| format!("{}{:.2} {:.2}", if i == 0 { "M" } else { "L" }, sx(p.0), sy(p.1)))
            .collect();
        writeln!(w, r#"<path d="{}" stroke="steelblue" stroke-width="2" fill="none"/>"#, d.join(" "))?;
        for p in &pts {
            writeln!(w, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="steelblue"/>"#, sx(p.0), sy(p.1))?;
        }
        writeln!(w, r#"<text x="{M}" y="{}" font-size="11">N = {:.0}</text>"#, H - M + 18.0, 10f64.powf(x0))?;
        writeln!(w, r#"<text x="{}" y="{}" font-size="11" text-anchor="end">N = {:.0}</text>"#, W - M, H - M + 18.0, 10f64.powf(x1))?;
        writeln!(w, r#"<text x="4" y="{}" font-size="11">{:.1e}</text>"#, H - M, 10f64.powf(y0))?;
        writeln!(w, r#"<text x="4" y="{}" font-size="11">{:.1e}</text>"#, M, 10f64.powf(y1))?;
    }
    writeln!(w, "</svg>")?;
    Ok(())
}

fn bounds(v: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = v.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    if hi > lo {
        (lo, hi)
    } else {
        (lo - 0.5, hi + 0.5)
    }
}

/// The high-fidelity oracle of a run: FEM solve, then frame coefficients.
pub struct Oracle<'a> {
    pub config: &'a RunConfig,
    pub atlas: &'a ShapeAtlas<f64>,
    pub mesh: Arc<Mesh<f64>>,
    pub decoder: Decoder<f64>,
}

impl<'a> Oracle<'a> {
    pub fn new(config: &'a RunConfig, atlas: &'a ShapeAtlas<f64>) -> Result<Self> {
        let mesh = config.build_mesh()?;
        let (frame, m_out) = config.build_frame(&mesh)?;
        Ok(Self { config, atlas, mesh, decoder: Decoder::new(frame, m_out)? })
    }

    pub fn m_out(&self) -> usize {
        self.decoder.m_out
    }

    pub fn solve(&self, y: &ParamPoint<f64>) -> Result<FemSolution<f64>> {
        let p = self.config.build_problem(self.atlas, y.clone())?;
        assemble_and_solve(&self.mesh, &p)
    }

    pub fn coefficients(&self, y: &ParamPoint<f64>) -> Result<Vec<f64>> {
        Ok(self.decoder.encode_solution(&self.solve(y)?)?.values)
    }

    pub fn output_norm(&self) -> OutputNorm {
        match self.decoder.frame.family() {
            FrameFamily::FemNodal(mesh) if self.decoder.m_out == mesh.num_dofs() => OutputNorm::H1Nodal(mesh.clone()),
            _ => OutputNorm::Coefficient,
        }
    }
}

fn key_of(y: &ParamPoint<f64>) -> Vec<u64> {
    y.coords().iter().map(|c| c.to_bits()).collect()
}

/// Spectral surrogate over `|Λ| = n` with the run's oracle.
pub fn fit_spectral(oracle: &Oracle<'_>, n: usize) -> Result<SpectralSurrogate<f64>> {
    let gamma = oracle.atlas.gamma_sequence()?.gamma;
    let set = build_index_set(&gamma, n)?;
    fit_on_index_set(set, gamma, |y: &ParamPoint<f64>| oracle.coefficients(y), oracle.m_out(), oracle.config.frame_label())
}

/// Trains the network on `surrogate.nn_samples` uniform parameters; inputs
/// are the encoded shapes `(w_j y_j)`.
pub fn fit_network(oracle: &Oracle<'_>) -> Result<crate::nn::TrainReport<f64>> {
    let cfg = oracle.config;
    let ys = sample_cube_many(cfg.bench.seed ^ NN_SEED_SALT, oracle.atlas.truncation_dim, cfg.surrogate.nn_samples);
    let targets = oracle_values(&|y: &ParamPoint<f64>| oracle.coefficients(y), &ys)?;
    let data: Vec<(Vec<f64>, Vec<f64>)> = ys
        .iter()
        .zip(targets)
        .map(|(y, t)| Ok((oracle.atlas.encode(y)?, t)))
        .collect::<Result<_>>()?;
    let mut train_cfg = cfg.surrogate.nn.clone();
    train_cfg.seed ^= cfg.bench.seed;
    train(&data, &train_cfg)
}

/// Network surrogate evaluated on a parameter.
pub fn network_output(net: &ReluNet<f64>, atlas: &ShapeAtlas<f64>, y: &ParamPoint<f64>) -> Result<Vec<f64>> {
    net.forward(&atlas.encode(y)?)
}

fn record<T>(failures: &mut Vec<StageFailure>, stage: &str, r: Result<T>) -> Option<T> {
    match r {
        Ok(v) => Some(v),
        Err(e) => {
            failures.push(StageFailure { stage: stage.to_string(), message: e.to_string() });
            None
        }
    }
}

/// Atlas → uniformity → oracle → spectral fits → errors → rates, plus the
/// optional floor, derivative and network stages. Mandatory stages abort
/// with [`Error::Stage`]; optional ones are listed in `failures`.
pub fn run_experiment(config: &RunConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let b = &config.bench;
    let atlas = config.build_atlas().map_err(|e| e.in_stage("atlas"))?;
    let r = config.scale_factor().map_err(|e| e.in_stage("atlas"))?;
    let gamma_report = atlas.gamma_sequence().map_err(|e| e.in_stage("atlas"))?;
    let uni = atlas
        .check_uniformity(UNIFORMITY_EXTRA, UNIFORMITY_GRID_POINTS, b.seed)
        .map_err(|e| e.in_stage("uniformity"))?;
    let oracle = Oracle::new(config, &atlas).map_err(|e| e.in_stage("oracle"))?;
    let norm = oracle.output_norm();
    let dim = atlas.truncation_dim;

    let cache: Mutex<HashMap<Vec<u64>, Vec<f64>>> = Mutex::new(HashMap::new());
    let cached = |y: &ParamPoint<f64>| -> Result<Vec<f64>> {
        let key = key_of(y);
        if let Some(v) = cache.lock().expect("cache lock").get(&key) {
            return Ok(v.clone());
        }
        let v = oracle.coefficients(y)?;
        cache.lock().expect("cache lock").insert(key, v.clone());
        Ok(v)
    };

    let test_ys = corner_augmented_set(dim, b.n_mc, b.seed);
    let corners = 2 * dim;
    let targets = oracle_values(&cached, &test_ys).map_err(|e| e.in_stage("oracle"))?;
    let m_bound = targets.iter().map(|t| norm.norm(t)).fold(0.0, f64::max);
    let oracle_floor = (SOLVER_RELATIVE_FLOOR * m_bound).max(f64::MIN_POSITIVE);

    let gamma = gamma_report.gamma.clone();
    let mut rows = Vec::with_capacity(b.n_schedule.len());
    for &n in &b.n_schedule {
        let set = build_index_set(&gamma, n).map_err(|e| e.in_stage("spectral_fit"))?;
        let s = fit_on_index_set(set, gamma.clone(), &cached, oracle.m_out(), config.frame_label())
            .map_err(|e| e.in_stage("spectral_fit"))?;
        let errs = pointwise_errors(&|y: &ParamPoint<f64>| s.evaluate(y), &targets, &|a: &[f64], c: &[f64]| norm.distance(a, c), &test_ys)
            .map_err(|e| e.in_stage("errors"))?;
        let sup = errs.iter().copied().fold(0.0, f64::max);
        let ms = MeanSquareEstimate::from_errors(&errs[corners..]);
        rows.push(CurveRow { n, error_sup: sup, error_ms: ms.value, ms_std_error: ms.std_error, oracle_evals: s.oracle_evals });
    }

    let mut failures = Vec::new();
    let t_eff = match config.frame.family {
        FrameChoice::FemNodal => None,
        _ => {
            let base = config.base_weights().map_err(|e| e.in_stage("t_eff"))?;
            let c0 = cached(&ParamPoint::zeros(dim)).map_err(|e| e.in_stage("t_eff"))?;
            let t = tail_exponent(&c0, |j| base.get(j).unwrap_or(f64::NAN));
            if t.is_none() {
                failures.push(StageFailure { stage: "t_eff".into(), message: "too few nonzero tail coefficients".into() });
            }
            t
        }
    };

    let derivatives = if b.derivatives {
        let res = config
            .build_problem(&atlas, ParamPoint::zeros(dim))
            .and_then(|p| derivative_decay_report(&oracle.mesh, &p, b.fd_eps));
        record(&mut failures, "derivatives", res)
    } else {
        None
    };
    let rho = derivatives.as_ref().map(|d| d.max_ratio);

    let richardson_floor = if b.floor_check {
        record(&mut failures, "floor", richardson_floor(config, &atlas, &oracle))
    } else {
        None
    };

    let report_rate = |kind: ErrorKind, predicted: f64, failures: &mut Vec<StageFailure>| {
        let curve: Vec<(usize, f64)> = rows
            .iter()
            .map(|r| (r.n, if kind == ErrorKind::Sup { r.error_sup } else { r.error_ms }))
            .collect();
        let res = ErrorCurve::from_pairs(kind, &curve).and_then(|c| fit_rate_above(&c, predicted, oracle_floor));
        let stage = if kind == ErrorKind::Sup { "rate_fit_sup" } else { "rate_fit_ms" };
        record(failures, stage, res).map(|m| RateModel { rho, m_bound: Some(m_bound), ..m })
    };
    let s = config.atlas.s;
    let sup_rate = report_rate(ErrorKind::Sup, predicted_worst_case_rate(s, t_eff), &mut failures);
    let ms_rate = report_rate(ErrorKind::MeanSquare, predicted_mean_square_rate(s, t_eff), &mut failures);

    let nn = if b.nn_stage || config.surrogate.kind == SurrogateKind::Nn {
        let res = fit_network(&oracle).and_then(|rep| {
            let errs = pointwise_errors(
                &|y: &ParamPoint<f64>| network_output(&rep.net, &atlas, y),
                &targets,
                &|a: &[f64], c: &[f64]| norm.distance(a, c),
                &test_ys,
            )?;
            Ok(NnSummary {
                samples: config.surrogate.nn_samples,
                size: rep.size,
                best_epoch: rep.best_epoch,
                train_loss: rep.train_loss,
                validation_loss: rep.validation_loss,
                error_sup: errs.iter().copied().fold(0.0, f64::max),
                error_ms: MeanSquareEstimate::from_errors(&errs[corners..]).value,
            })
        });
        record(&mut failures, "nn_fit", res)
    } else {
        None
    };

    let distinct_oracle_evals = cache.lock().expect("cache lock").len();
    Ok(ExperimentReport {
        rows,
        sup_rate,
        ms_rate,
        s,
        r,
        t_eff,
        gamma,
        c_gamma: gamma_report.c_gamma,
        sigma_min: uni.sigma_min,
        sigma_max: uni.sigma_max,
        min_det: uni.min_det,
        m_bound,
        oracle_floor,
        richardson_floor,
        derivatives,
        nn,
        distinct_oracle_evals,
        test_points: test_ys.len(),
        failures,
    })
}

/// `‖u_h − I_h u_{2h}‖_{H¹}` at `y = 0`; nested meshes make the
/// interpolant exact.
fn richardson_floor(config: &RunConfig, atlas: &ShapeAtlas<f64>, oracle: &Oracle<'_>) -> Result<f64> {
    let coarse_mesh = config.build_mesh_at(2.0 * config.bench.h)?;
    let p = config.build_problem(atlas, ParamPoint::zeros(atlas.truncation_dim))?;
    let fine = assemble_and_solve(&oracle.mesh, &p)?;
    let coarse = assemble_and_solve(&coarse_mesh, &p)?;
    let lifted = FemSolution::interpolate(oracle.mesh.clone(), |x| coarse.eval(x).unwrap_or(0.0));
    h1_diff(&fine, &lifted)
}

/// Relative nodal H¹ gap between the reference solution carried forward by
/// `V_y` and the physical solve on the mapped mesh.
pub fn transport_gap(mesh: &Arc<Mesh<f64>>, problem: &PulledBackProblem<'_, f64>) -> Result<f64> {
    let reference = assemble_and_solve(mesh, problem)?;
    let phys = solve_physical(mesh, problem)?;
    let carried: Vec<f64> = phys
        .mesh
        .nodes
        .iter()
        .enumerate()
        .map(|(i, &q)| {
            if phys.mesh.is_boundary(i) {
                return Ok(0.0);
            }
            let x = invert_map(problem.atlas, &problem.y, q)?;
            reference
                .eval(x)
                .ok_or(Error::OutsideDomain { x: x[0], y: x[1] })
        })
        .collect::<Result<_>>()?;
    let diff: Vec<f64> = carried.iter().zip(&phys.values).map(|(a, b)| a - b).collect();
    Ok(h1_seminorm_nodal(&phys.mesh, &diff) / h1_seminorm(&phys))
}

/// Least-squares slope of `log e` against `log h`.
pub fn refinement_order(hs: &[f64], errors: &[f64]) -> f64 {
    let xs: Vec<f64> = hs.iter().map(|h| h.ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    least_squares(&xs, &ys).0
}
