pub mod cg;
pub mod chebyshev;
pub mod error;
pub mod graph;
pub mod harness;
pub mod kernel;
pub mod refine;
pub mod selftrain;
pub mod solver;
pub mod spectral;
pub mod subordination;

pub use error::{Error, Result};
pub use graph::{Graph, LaplacianKind, Projector};
pub use kernel::{KernelOperator, Strategy};
pub use spectral::SpectralDecomposition;
