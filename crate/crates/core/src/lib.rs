//! Multiplicative-weights solvers for equilibrium value problems over
//! density operators: two-message interactive proof feasibility, the
//! merlin-arthur-merlin variant and two-turn refereed games.

pub mod error;
pub mod framework1;
pub mod generate;
pub mod io;
pub mod linalg;
pub mod mmw;
pub mod oracle;
pub mod qip2;
pub mod qmam;
pub mod qrg2;
pub mod states;

pub use error::{Error, Result};
pub use linalg::{CMatrix, CVector, EigDecomposition, TensoredHermitian, C64};
pub use states::{fidelity, matched_purification, DensityOperator, PureState};
