//! Iterative machine teaching for linear students trained by SGD.
//!
//! A teacher picks (or builds) one example per iteration so that the
//! student's weights approach a known optimum `w*` as fast as possible. The
//! crate contains the students, the teachers, convergence certificates and an
//! experiment harness with a CLI (`iterteach`).

pub mod data;
pub mod error;
pub mod harness;
pub mod learner;
pub mod losses;
pub mod numkit;
pub mod teachers;
pub mod theory;

pub use error::{Error, Result};
pub use learner::{Example, LearnerState, StudentQuery};
pub use losses::{LossKind, RegularizedLoss};
