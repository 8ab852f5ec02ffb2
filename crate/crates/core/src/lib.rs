//! Phase-field fracture with penalized crack irreversibility, discretized by
//! dG(0) in time and Q1 finite elements in space, together with a reduced-space
//! Newton-CG solver for the Neumann traction control problem.
//!
//! The crate is organized bottom-up:
//!
//! * [`model`]: material/regularization parameters and pointwise constitutive laws.
//! * [`mesh`]: structured quadrilateral mesh, Q1 basis, quadrature, field containers.
//! * [`sparse`]: compressed-column matrices and the direct solver wrapper.
//! * [`forms`]: element kernels of the semilinear form and its derivatives.
//! * [`forward`]: initial projection and semi-smooth Newton time stepping.
//! * [`sensitivity`]: adjoint, tangent and adjoint-Hessian sweeps.
//! * [`reduced`]: reduced cost, gradient, Hessian-vector products, Newton-CG.
//! * [`fdcheck`]: finite-difference verification harnesses.
//! * [`experiment`]: configuration, presets, experiment and verification runners.

// `!(x > 0.0)` style checks are deliberate: they reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]

pub mod error;
pub mod experiment;
pub mod fdcheck;
pub mod forms;
pub mod forward;
pub mod mesh;
pub mod model;
pub mod reduced;
pub mod sensitivity;
pub mod sparse;
pub mod vtk;

pub use error::{Error, Result};
pub use forward::{ForwardReport, NewtonSettings};
pub use mesh::{Control, FieldVector, Mesh, Trajectory};
pub use model::{CostParams, ModelParams};
pub use reduced::{IterationRecord, OptResult, OptSettings, OptStatus, Problem, StopRule};

