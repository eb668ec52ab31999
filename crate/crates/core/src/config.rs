//! Run configuration: TOML schema, dotted overrides and builders.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{build_mesh, Mesh};
use crate::frames::{Frame, FrameFamily};
use crate::nn::TrainConfig;
use crate::pullback::{DiffusionField, DiffusionSpec, FrameOfReference, PulledBackProblem, SourceField, SourceSpec};
use crate::shape_param::{Domain, FieldSpec, ParamPoint, ShapeAtlas, WeightRule, WeightSequence};

/// Environment variable that replaces `bench.seed`.
pub const SEED_ENV: &str = "SHAPEOP_SEED";

/// Sine members used when `frame.members = 0` for a sine family.
pub const DEFAULT_SINE_MEMBERS: usize = 64;

/// The default configuration with every key spelled out.
pub const DEFAULT_CONFIG_TOML: &str = r#"# Directory receiving CSV, SVG and JSON outputs.
output_dir = "shapeop-out"

[atlas]
domain = "unit_square"      # unit_square | unit_disk
catalog = "sine"            # sine | bubble
dim = 8                     # truncation dimension K; 0 is the identity atlas
weight_c = 1.0              # base weights w_k = weight_c * k^(-weight_beta)
weight_beta = 2.0
s = 2.0                     # active weights are r * w_k^s
target_c_gamma = 0.3        # r is chosen so that c_gamma equals this value
# r = 0.5                   # explicit r; overrides target_c_gamma

[pde]
model = "poisson"           # poisson | diffusion_eulerian | diffusion_lagrangian
source = { kind = "constant", value = 1.0 }
diffusion = { kind = "constant", matrix = [[1.0, 0.0], [0.0, 1.0]] }

[frame]
family = "fem_nodal"        # fem_nodal | sine_onb | duplicated_sine | sine_with_half
members = 0                 # 0: every interior node, or 64 sine members

[surrogate]
kind = "spectral"           # spectral | nn
nn_samples = 200            # oracle samples for the network

[surrogate.nn]
depth = 3
width = 64
epochs = 5000
step = 0.01
decay_every = 1000
decay_factor = 0.5
validation_fraction = 0.2
optimizer = "gradient_descent"   # gradient_descent | adam
seed = 0

[bench]
n_schedule = [8, 16, 32, 64, 128, 256]
n_mc = 200                  # uniform samples; also the non-corner part of the sup set
seed = 0
h = 0.015625                # oracle mesh size
fd_eps = 0.001              # step of the parametric finite differences
derivatives = true          # write the derivative decay table
floor_check = true          # Richardson estimate from h and 2h
nn_stage = false            # also train a network surrogate
"#;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureCatalog {
    Sine,
    Bubble,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AtlasConfig {
    pub domain: Domain,
    pub catalog: FeatureCatalog,
    pub dim: usize,
    pub weight_c: f64,
    pub weight_beta: f64,
    pub s: f64,
    pub target_c_gamma: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
}

impl Default for AtlasConfig {
    fn default() -> Self {
        Self {
            domain: Domain::UnitSquare,
            catalog: FeatureCatalog::Sine,
            dim: 8,
            weight_c: 1.0,
            weight_beta: 2.0,
            s: 2.0,
            target_c_gamma: 0.3,
            r: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PdeModel {
    Poisson,
    DiffusionEulerian,
    DiffusionLagrangian,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PdeConfig {
    pub model: PdeModel,
    pub source: SourceSpec,
    pub diffusion: DiffusionSpec,
}

impl Default for PdeConfig {
    fn default() -> Self {
        Self { model: PdeModel::Poisson, source: SourceSpec::default(), diffusion: DiffusionSpec::isotropic(1.0) }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameChoice {
    FemNodal,
    SineOnb,
    DuplicatedSine,
    SineWithHalf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FrameConfig {
    pub family: FrameChoice,
    pub members: usize,
}

impl Default for FrameConfig {
    fn default() -> Self {
        Self { family: FrameChoice::FemNodal, members: 0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurrogateKind {
    Spectral,
    Nn,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurrogateConfig {
    pub kind: SurrogateKind,
    pub nn_samples: usize,
    pub nn: TrainConfig,
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        Self { kind: SurrogateKind::Spectral, nn_samples: 200, nn: TrainConfig::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub n_schedule: Vec<usize>,
    pub n_mc: usize,
    pub seed: u64,
    pub h: f64,
    pub fd_eps: f64,
    pub derivatives: bool,
    pub floor_check: bool,
    pub nn_stage: bool,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            n_schedule: vec![8, 16, 32, 64, 128, 256],
            n_mc: 200,
            seed: 0,
            h: 1.0 / 64.0,
            fd_eps: 1e-3,
            derivatives: true,
            floor_check: true,
            nn_stage: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub output_dir: PathBuf,
    pub atlas: AtlasConfig,
    pub pde: PdeConfig,
    pub frame: FrameConfig,
    pub surrogate: SurrogateConfig,
    pub bench: BenchConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            output_dir: PathBuf::from("shapeop-out"),
            atlas: AtlasConfig::default(),
            pde: PdeConfig::default(),
            frame: FrameConfig::default(),
            surrogate: SurrogateConfig::default(),
            bench: BenchConfig::default(),
        }
    }
}

fn config_err(e: impl std::fmt::Display) -> Error {
    Error::Config(e.to_string())
}

/// Parses `raw` as a TOML value, falling back to a bare string.
fn parse_override_value(raw: &str) -> toml::Value {
    match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.to_string())),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

fn set_path(root: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("malformed override key '{key}'")));
    }
    let mut table = root;
    for part in &parts[..parts.len() - 1] {
        let entry = table.entry(part.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override '{key}': '{part}' is not a table")))?;
    }
    table.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

impl RunConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s).map_err(config_err)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads `path` (or the defaults), applies `key=value` overrides in
    /// order, then `SHAPEOP_SEED` if given.
    pub fn load(path: Option<&Path>, overrides: &[String], env_seed: Option<&str>) -> Result<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", p.display())))?,
            None => String::new(),
        };
        let mut cfg: Self = toml::from_str(&text).map_err(config_err)?;
        cfg = cfg.with_overrides(overrides)?;
        if let Some(seed) = env_seed {
            cfg.bench.seed = seed
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("{SEED_ENV} must be a non-negative integer, got '{seed}'")))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_overrides(&self, overrides: &[String]) -> Result<Self> {
        if overrides.is_empty() {
            return Ok(self.clone());
        }
        let mut root = match toml::Value::try_from(self).map_err(config_err)? {
            toml::Value::Table(t) => t,
            _ => unreachable!("config serializes to a table"),
        };
        for item in overrides {
            let (key, raw) = item
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override '{item}' is not key=value")))?;
            set_path(&mut root, key.trim(), parse_override_value(raw.trim()))?;
        }
        toml::Value::Table(root).try_into().map_err(config_err)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(config_err)
    }

    pub fn validate(&self) -> Result<()> {
        let a = &self.atlas;
        if !(a.s > 0.5) {
            return Err(Error::Config(format!("atlas.s = {} must exceed 1/2", a.s)));
        }
        if let Some(r) = a.r {
            if !(r > 0.0) {
                return Err(Error::Config("atlas.r must be positive".into()));
            }
        } else if !(a.target_c_gamma > 0.0) {
            return Err(Error::Config("atlas.target_c_gamma must be positive".into()));
        }
        let b = &self.bench;
        if b.n_schedule.is_empty() || b.n_schedule.contains(&0) {
            return Err(Error::Config("bench.n_schedule needs positive entries".into()));
        }
        if b.n_schedule.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("bench.n_schedule must be strictly increasing".into()));
        }
        if b.n_mc < 200 {
            return Err(Error::Config(format!("bench.n_mc = {} is below 200", b.n_mc)));
        }
        if !(b.fd_eps > 0.0 && b.fd_eps < 1.0) {
            return Err(Error::Config("bench.fd_eps must lie in (0, 1)".into()));
        }
        crate::fem::mesh::divisions_for(b.h).map_err(|e| Error::Config(format!("bench.h: {e}")))?;
        if self.surrogate.nn_samples == 0 {
            return Err(Error::Config("surrogate.nn_samples must be >= 1".into()));
        }
        Ok(())
    }

    /// Base weights `c · k^{−β}` before scaling.
    pub fn base_weights(&self) -> Result<WeightSequence<f64>> {
        let a = &self.atlas;
        WeightSequence::from_rule(WeightRule { c: a.weight_c, beta: a.weight_beta }, a.dim)
    }

    fn features(&self) -> Vec<FieldSpec> {
        match self.atlas.catalog {
            FeatureCatalog::Sine => FieldSpec::sine_catalog(self.atlas.dim),
            FeatureCatalog::Bubble => FieldSpec::bubble_catalog(self.atlas.dim),
        }
    }

    /// The scale factor `r`: explicit, or chosen to hit the target `c_γ`.
    pub fn scale_factor(&self) -> Result<f64> {
        if let Some(r) = self.atlas.r {
            return Ok(r);
        }
        if self.atlas.dim == 0 {
            return Ok(1.0);
        }
        let unit = ShapeAtlas::new(
            self.atlas.domain,
            FieldSpec::identity(),
            self.features(),
            self.base_weights()?.scaled(1.0, self.atlas.s)?,
            self.atlas.dim,
        )?;
        let c = unit.gamma_sequence()?.c_gamma;
        Ok(self.atlas.target_c_gamma / c)
    }

    /// Atlas with active weights `r · w_k^s`; `dim = 0` gives the identity
    /// atlas.
    pub fn build_atlas(&self) -> Result<ShapeAtlas<f64>> {
        if self.atlas.dim == 0 {
            return Ok(ShapeAtlas::identity(self.atlas.domain));
        }
        let r = self.scale_factor()?;
        ShapeAtlas::new(
            self.atlas.domain,
            FieldSpec::identity(),
            self.features(),
            self.base_weights()?.scaled(r, self.atlas.s)?,
            self.atlas.dim,
        )
    }

    pub fn build_mesh(&self) -> Result<Arc<Mesh<f64>>> {
        self.build_mesh_at(self.bench.h)
    }

    pub fn build_mesh_at(&self, h: f64) -> Result<Arc<Mesh<f64>>> {
        Ok(Arc::new(build_mesh(self.atlas.domain, h)?))
    }

    pub fn build_problem<'a>(&self, atlas: &'a ShapeAtlas<f64>, y: ParamPoint<f64>) -> Result<PulledBackProblem<'a, f64>> {
        let src = SourceField::new(self.pde.source.clone());
        match self.pde.model {
            PdeModel::Poisson => PulledBackProblem::poisson(atlas, y, src),
            PdeModel::DiffusionEulerian => PulledBackProblem::diffusion_eulerian(
                atlas,
                y,
                DiffusionField::new(self.pde.diffusion.clone(), FrameOfReference::Eulerian)?,
                src,
            ),
            PdeModel::DiffusionLagrangian => PulledBackProblem::diffusion_lagrangian(
                atlas,
                y,
                DiffusionField::new(self.pde.diffusion.clone(), FrameOfReference::Lagrangian)?,
                src,
            ),
        }
    }

    /// Output frame on `mesh` and the number of decoder members.
    pub fn build_frame(&self, mesh: &Arc<Mesh<f64>>) -> Result<(Arc<Frame<f64>>, usize)> {
        let sine_n = if self.frame.members == 0 { DEFAULT_SINE_MEMBERS } else { self.frame.members };
        let frame = match self.frame.family {
            FrameChoice::FemNodal => Frame::new(FrameFamily::FemNodal(mesh.clone()), self.frame.members)?,
            FrameChoice::SineOnb => Frame::new(FrameFamily::SineOnb, sine_n)?,
            FrameChoice::DuplicatedSine => Frame::new(FrameFamily::DuplicatedSine, sine_n)?,
            FrameChoice::SineWithHalf => Frame::new(FrameFamily::SineWithHalf, sine_n)?,
        };
        let m = frame.len();
        Ok((Arc::new(frame), m))
    }

    /// Human label of the output frame, stored with fitted surrogates.
    pub fn frame_label(&self) -> String {
        let name = match self.frame.family {
            FrameChoice::FemNodal => "fem_nodal",
            FrameChoice::SineOnb => "sine_onb",
            FrameChoice::DuplicatedSine => "duplicated_sine",
            FrameChoice::SineWithHalf => "sine_with_half",
        };
        format!("{name} h={}", self.bench.h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn documented_defaults_match() {
        assert_eq!(RunConfig::from_toml_str(DEFAULT_CONFIG_TOML).unwrap(), RunConfig::default());
        assert_eq!(RunConfig::from_toml_str("").unwrap(), RunConfig::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::from_toml_str("[atlas]\ndimension = 3").is_err());
        assert!(RunConfig::default().with_overrides(&["bench.sed=3".into()]).is_err());
    }

    #[test]
    fn overrides_and_env_seed() {
        let cfg = RunConfig::load(
            None,
            &["atlas.dim=3".into(), "atlas.r=0.1".into(), "pde.model=diffusion_lagrangian".into()],
            Some("42"),
        )
        .unwrap();
        assert_eq!(cfg.atlas.dim, 3);
        assert_eq!(cfg.atlas.r, Some(0.1));
        assert_eq!(cfg.pde.model, PdeModel::DiffusionLagrangian);
        assert_eq!(cfg.bench.seed, 42);
        assert!(RunConfig::load(None, &[], Some("x")).is_err());
        assert!(RunConfig::load(None, &["novalue".into()], None).is_err());
    }

    #[test]
    fn target_c_gamma_is_hit() {
        let cfg = RunConfig::default();
        let atlas = cfg.build_atlas().unwrap();
        assert!((atlas.c_gamma() - 0.3).abs() < 1e-12);
    }
}
