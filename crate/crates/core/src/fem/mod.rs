pub mod mesh;
pub mod norms;
pub mod solve;

pub use mesh::{build_mesh, Mesh, SUPPORTED_DIVISIONS};
pub use norms::{h1_diff, h1_error, h1_seminorm, h1_seminorm_nodal, l2_diff, l2_error, l2_norm};
pub use solve::{assemble_and_solve, fd_param_derivative, fd_param_derivative_field, solve_physical, FemSolution};
