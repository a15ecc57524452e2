//! Molecular dynamics and hybrid Monte Carlo with two-stage splitting
//! integrators whose parameter adapts to the stiffest bond in the system.

pub mod aia;
pub mod analysis;
pub mod error;
pub mod forces;
pub mod integrators;
pub mod samplers;
pub mod system;

pub use error::{Error, Result};
pub use forces::{ForceEval, Hamiltonian};
pub use integrators::{ConstraintSolve, Integrator, IntegratorSpec, Scheme, SplitParameter};
pub use samplers::{HmcConfig, MdConfig, RunReport};
pub use system::{PhaseState, System, SystemBuilder};
