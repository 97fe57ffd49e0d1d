//! Stability certification for Takagi–Sugeno fuzzy systems with an uncertain
//! scalar parameter λ.
//!
//! A model ([`model::TsModel`]) is turned into linear matrix inequalities by
//! one of the builders in [`conditions`], decided by the barrier solver in
//! [`sdp`], searched over λ and summarised by [`analysis`], and checked
//! independently by [`verify`].
//!
//! ```
//! use tsfuzzy::conditions::{build, MethodKind};
//! use tsfuzzy::model::ModelBundle;
//! use tsfuzzy::sdp::{solve_feasibility, SolverConfig, Status};
//!
//! let ex = ModelBundle::example1();
//! let problem = build(&MethodKind::Quadratic, &ex.model, None, 3.0).unwrap();
//! let out = solve_feasibility(&problem, &SolverConfig::default()).unwrap();
//! assert_eq!(out.status, Status::StrictlyFeasible);
//! ```

pub mod analysis;
pub mod conditions;
pub mod error;
pub mod expr;
pub mod linalg;
pub mod lmi;
pub mod model;
pub mod par;
pub mod sdp;
pub mod verify;

pub use conditions::{Certificate, MethodKind};
pub use error::{Error, Result};
pub use model::ModelBundle;
pub use par::Exec;
pub use sdp::{FeasibilityOutcome, SolverConfig, Status};
