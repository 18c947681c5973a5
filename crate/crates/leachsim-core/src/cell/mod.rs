//! The periodicity cell Y = (−1/2, 1/2)³ with a centered spherical grain, and
//! the three corrector problems solved on its voxelization.

pub mod diffusion;
pub mod elasticity;
pub mod geometry;
pub mod stokes;

pub use diffusion::{solve_diffusion_cell, DiffusionCellSolution};
pub use elasticity::{
    basis_diads, solve_elasticity_cell, solve_elasticity_cell_with,
    solve_elasticity_cell_with_loads, ElasticCellSolution, ElasticParams,
};
pub use geometry::{build_cell_mask, chi, porosity, RadiusBounds, UnitCellMask};
pub use stokes::{
    permeability_single_axis, solve_stokes_cell, solve_stokes_cell_with, StokesCellSolution,
    StokesParams,
};
