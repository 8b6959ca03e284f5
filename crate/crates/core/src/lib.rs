//! Steady large-eddy simulation of periodic channel flow with a wall law.
//!
//! The model couples a Smagorinsky eddy viscosity in the core of the channel
//! with a friction-velocity eddy viscosity in the wall layer, and replaces
//! no-slip by a Navier slip condition at an artificial wall a sub-layer
//! thickness away from the physical one. It is discretized with
//! continuous quadratic velocity / linear pressure elements on a periodic
//! tetrahedral mesh and solved by Picard iteration.

pub mod config;
pub mod error;
pub mod forms;
mod iterative;
pub mod mesh;
pub mod params;
pub mod quadrature;
pub mod run;
pub mod solution;
pub mod solver;
pub mod space;
pub mod sparse;
pub mod verification;
pub mod wall_law;

pub use error::{Error, Result};
pub use mesh::{ChannelGeometry, ChannelMesh, Grading, Region};
pub use params::{BodyForce, CVariant, ModelParams};
pub use solution::DiscreteSolution;
pub use space::MixedSpace;
pub use wall_law::{FrictionLaw, FrictionVelocityEvaluator, WallLaw};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/mesh.md")]
    mod mesh {}
    #[doc = include_str!("../../../book/src/wall_law.md")]
    mod wall_law {}
    #[doc = include_str!("../../../book/src/forms.md")]
    mod forms {}
    #[doc = include_str!("../../../book/src/solver.md")]
    mod solver {}
    #[doc = include_str!("../../../book/src/verification.md")]
    mod verification {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
