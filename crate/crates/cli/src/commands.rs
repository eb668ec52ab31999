use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use shapeop::bench::{fit_network, fit_spectral, run_experiment, ExperimentReport, Oracle, OutputNorm, UNIFORMITY_EXTRA};
use shapeop::config::{PdeModel, RunConfig, SurrogateKind, SEED_ENV};
use shapeop::fem::{h1_error, h1_seminorm, l2_error, l2_norm};
use shapeop::frames::CoeffSeq;
use shapeop::nn::ReluNet;
use shapeop::pullback::SourceSpec;
use shapeop::shape_param::{Domain, ParamPoint, UNIFORMITY_GRID_POINTS};
use shapeop::spectral::SpectralSurrogate;
use shapeop::{Error, Result};

use crate::{Cli, Command};

pub fn run(cli: &Cli) -> Result<()> {
    let env_seed = std::env::var(SEED_ENV).ok();
    let cfg = RunConfig::load(cli.config.as_deref(), &cli.sets, env_seed.as_deref())?;
    match &cli.command {
        Command::Inspect => inspect(&cfg),
        Command::Solve { y, out } => solve(&cfg, y, out.as_deref()),
        Command::Fit { out } => fit(&cfg, out.as_deref()),
        Command::Eval { surrogate, y, out, solution } => eval(&cfg, surrogate, y, out.as_deref(), solution.as_deref()),
        Command::Bench => bench(&cfg),
        Command::Report { dir } => report(&cfg, dir.as_deref()),
    }
}

/// Parses `a,b,c` into a parameter point.
pub fn parse_y(raw: &str) -> Result<ParamPoint<f64>> {
    let raw = raw.trim();
    let coords = if raw.is_empty() {
        Vec::new()
    } else {
        raw.split(',')
            .map(|t| {
                let t = t.trim();
                t.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::Parse(format!("'{t}' is not a real number")))
            })
            .collect::<Result<Vec<_>>>()?
    };
    ParamPoint::new(coords)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

fn or_default(path: Option<&Path>, cfg: &RunConfig, name: &str) -> PathBuf {
    path.map(Path::to_path_buf).unwrap_or_else(|| cfg.output_dir.join(name))
}

fn inspect(cfg: &RunConfig) -> Result<()> {
    let atlas = cfg.build_atlas()?;
    let c_gamma = atlas.c_gamma();
    println!("dimension K = {}", atlas.truncation_dim);
    println!("scale r = {}", cfg.scale_factor()?);
    let gamma = if atlas.truncation_dim == 0 { Vec::new() } else { atlas.gamma_sequence()?.gamma };
    let path = cfg.output_dir.join("atlas.csv");
    let mut w = create(&path)?;
    writeln!(w, "k,weight,gamma_k")?;
    println!("k,weight,gamma_k");
    for (k, (wk, g)) in atlas.active_weights().iter().zip(&gamma).enumerate() {
        writeln!(w, "{},{wk},{g}", k + 1)?;
        println!("{},{wk},{g}", k + 1);
    }
    w.flush()?;
    println!("c_gamma = {c_gamma}");
    atlas.ensure_valid()?;
    let u = atlas.check_uniformity(UNIFORMITY_EXTRA, UNIFORMITY_GRID_POINTS, cfg.bench.seed)?;
    println!("sigma_min = {}", u.sigma_min);
    println!("sigma_max = {}", u.sigma_max);
    println!("min_det = {}", u.min_det);
    println!("wrote {}", path.display());
    Ok(())
}

fn is_manufactured(cfg: &RunConfig, y: &ParamPoint<f64>) -> bool {
    cfg.pde.model == PdeModel::Poisson
        && cfg.atlas.domain == Domain::UnitSquare
        && cfg.pde.source == SourceSpec::manufactured()
        && y.coords().iter().all(|&c| c == 0.0)
}

fn solve(cfg: &RunConfig, y: &str, out: Option<&Path>) -> Result<()> {
    let y = parse_y(y)?;
    let atlas = cfg.build_atlas()?;
    let oracle = Oracle::new(cfg, &atlas)?;
    let sol = oracle.solve(&y)?;
    let path = or_default(out, cfg, "solution.csv");
    let mut w = create(&path)?;
    sol.write_csv(&mut w)?;
    w.flush()?;
    println!("nodes = {}", sol.mesh.num_nodes());
    println!("h1_seminorm = {}", h1_seminorm(&sol));
    println!("l2_norm = {}", l2_norm(&sol));
    println!("residual = {:e}", sol.residual);
    if is_manufactured(cfg, &y) {
        let pi = std::f64::consts::PI;
        let exact = |p: [f64; 2]| (pi * p[0]).sin() * (pi * p[1]).sin();
        let grad = |p: [f64; 2]| {
            [pi * (pi * p[0]).cos() * (pi * p[1]).sin(), pi * (pi * p[0]).sin() * (pi * p[1]).cos()]
        };
        println!("h1_error = {}", h1_error(&sol, grad));
        println!("l2_error = {}", l2_error(&sol, exact));
    }
    println!("wrote {}", path.display());
    Ok(())
}

fn fit(cfg: &RunConfig, out: Option<&Path>) -> Result<()> {
    let atlas = cfg.build_atlas()?;
    atlas.ensure_valid()?;
    let oracle = Oracle::new(cfg, &atlas)?;
    match cfg.surrogate.kind {
        SurrogateKind::Spectral => {
            let n = *cfg.bench.n_schedule.last().expect("validated schedule");
            let s = fit_spectral(&oracle, n)?;
            let path = or_default(out, cfg, "surrogate.json");
            let mut w = create(&path)?;
            s.write_json(&mut w)?;
            w.flush()?;
            println!("index set size = {}", s.index_set.len());
            println!("max degree = {}", s.index_set.max_degree());
            println!("oracle evaluations = {}", s.oracle_evals);
            println!("m_out = {}", s.m_out);
            println!("wrote {}", path.display());
        }
        SurrogateKind::Nn => {
            let rep = fit_network(&oracle)?;
            let path = or_default(out, cfg, "network.json");
            let mut w = create(&path)?;
            rep.net.write_json(&mut w)?;
            w.flush()?;
            println!("size = {}", rep.size);
            println!("best epoch = {}", rep.best_epoch);
            println!("train loss = {:e}", rep.train_loss);
            println!("validation loss = {:e}", rep.validation_loss);
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn eval(cfg: &RunConfig, surrogate: &Path, y: &str, out: Option<&Path>, solution: Option<&Path>) -> Result<()> {
    let y = parse_y(y)?;
    let text = std::fs::read(surrogate)?;
    let atlas = cfg.build_atlas()?;
    let coeffs = match SpectralSurrogate::<f64>::read_json(&text[..]) {
        Ok(s) => s.evaluate(&y)?,
        Err(spectral_err) => match ReluNet::<f64>::read_json(&text[..]) {
            Ok(net) => shapeop::bench::network_output(&net, &atlas, &y)?,
            Err(_) => return Err(Error::Parse(format!("{}: not a surrogate file ({spectral_err})", surrogate.display()))),
        },
    };
    let c = CoeffSeq::new(coeffs);
    match out {
        Some(p) => {
            let mut w = create(p)?;
            c.write_csv(&mut w)?;
            w.flush()?;
        }
        None => c.write_csv(std::io::stdout().lock())?,
    }
    eprintln!("coefficient_norm = {}", c.norm());
    let needs_decoder = solution.is_some() || cfg.frame.family == shapeop::config::FrameChoice::FemNodal;
    if needs_decoder {
        let oracle = Oracle::new(cfg, &atlas)?;
        if c.len() != oracle.m_out() {
            return Err(Error::DimensionMismatch { expected: oracle.m_out(), got: c.len() });
        }
        if let OutputNorm::H1Nodal(_) = oracle.output_norm() {
            eprintln!("h1_seminorm = {}", oracle.output_norm().norm(&c.values));
        }
        if let Some(p) = solution {
            let sol = oracle.decoder.decode(&c, &oracle.mesh)?;
            let mut w = create(p)?;
            sol.write_csv(&mut w)?;
            w.flush()?;
        }
    }
    Ok(())
}

fn bench(cfg: &RunConfig) -> Result<()> {
    let start = Instant::now();
    let rep = run_experiment(cfg)?;
    let files = rep.write_bundle(&cfg.output_dir)?;
    print!("{}", render_report(&rep));
    for f in files {
        println!("wrote {}", f.display());
    }
    eprintln!("bench finished in {:.1} s", start.elapsed().as_secs_f64());
    Ok(())
}

fn report(cfg: &RunConfig, dir: Option<&Path>) -> Result<()> {
    let dir = dir.map(Path::to_path_buf).unwrap_or_else(|| cfg.output_dir.clone());
    let rep = ExperimentReport::read_summary(&dir.join("summary.json"))?;
    let text = render_report(&rep);
    std::fs::write(dir.join("report.txt"), &text)?;
    print!("{text}");
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "unbounded".to_string(), |x| format!("{x:.4}"))
}

/// Plain-text summary of a benchmark.
pub fn render_report(rep: &ExperimentReport) -> String {
    let mut s = String::new();
    let mut line = |t: String| {
        s.push_str(&t);
        s.push('\n');
    };
    line(format!("c_gamma = {:.4}  r = {:.6}  s = {}", rep.c_gamma, rep.r, rep.s));
    line(format!("sigma in [{:.4}, {:.4}], min det {:.4}", rep.sigma_min, rep.sigma_max, rep.min_det));
    line(format!("t_eff = {}", fmt_opt(rep.t_eff)));
    line(format!("oracle floor = {:.3e}, richardson floor = {}", rep.oracle_floor, rep.richardson_floor.map_or("n/a".into(), |v| format!("{v:.3e}"))));
    line(format!("{:>6} {:>12} {:>12} {:>8}", "N", "sup", "ms", "evals"));
    for r in &rep.rows {
        line(format!("{:>6} {:>12.4e} {:>12.4e} {:>8}", r.n, r.error_sup, r.error_ms, r.oracle_evals));
    }
    for (name, m) in [("worst-case", &rep.sup_rate), ("mean-square", &rep.ms_rate)] {
        match m {
            Some(m) => line(format!(
                "{name} rate {:.3} (predicted {:.3}, slack {}) {}",
                m.rate(),
                m.predicted,
                m.delta,
                if m.meets_prediction() { "ok" } else { "BELOW" }
            )),
            None => line(format!("{name} rate not fitted")),
        }
    }
    if let Some(d) = &rep.derivatives {
        line(format!("derivative ratio spread {:.3} over {} features", d.spread(), d.rows.len()));
    }
    if let Some(nn) = &rep.nn {
        line(format!(
            "network size {} sup {:.4e} ms {:.4e} (validation loss {:.3e})",
            nn.size, nn.error_sup, nn.error_ms, nn.validation_loss
        ));
    }
    for f in &rep.failures {
        line(format!("stage {} failed: {}", f.stage, f.message));
    }
    s
}
