//! Simulation toolkit for two quantum machine learning constructions:
//!
//! * reinforcement-learning control of a quantum stochastic walker that has
//!   to escape a perfect maze through a sink ([`maze`], [`qsw`], [`rl`]);
//! * a trainable single-qubit data-reuploading embedding whose SWAP-test
//!   Gram matrix separates a non-linearly-separable 1D dataset ([`embed`]).
//!
//! Shared complex linear algebra lives in [`linalg`].

pub mod embed;
pub mod error;
pub mod linalg;
pub mod maze;
pub mod qsw;
pub mod rl;

pub use error::{Error, Result};
pub use linalg::{ComplexMatrix, DensityMatrix, PureState, C64};
pub use maze::MazeGraph;
pub use qsw::{LindbladModel, QswParams, Trajectory};
