pub mod bench;
pub mod config;
pub mod error;
pub mod fem;
pub mod frames;
pub mod linalg;
pub mod nn;
pub mod pullback;
pub mod scalar;
pub mod shape_param;
pub mod spectral;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Atlas = shape_param::ShapeAtlas<f64>;
pub type Feature = shape_param::ShapeFeature<f64>;
pub type Weights = shape_param::WeightSequence<f64>;
pub type Param = shape_param::ParamPoint<f64>;
pub type Problem<'a> = pullback::PulledBackProblem<'a, f64>;
pub type Diffusion = pullback::DiffusionField<f64>;
pub type Source = pullback::SourceField<f64>;
pub type FemMesh = fem::Mesh<f64>;
pub type Solution = fem::FemSolution<f64>;
pub type Config = config::RunConfig;
pub type Report = bench::ExperimentReport;
pub type Spectral = spectral::SpectralSurrogate<f64>;
pub type Net = nn::ReluNet<f64>;
