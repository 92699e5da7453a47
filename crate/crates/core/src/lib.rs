pub mod chart;
pub mod error;
pub mod multiindex;
pub mod surface;
pub mod taylor;

pub use chart::{Chart, PolyChart};
pub use error::{LabError, Result};
pub use surface::{grassmann_dist, trace_restricted_bound, Frame, GraphSurface, Plane, SurfaceSpec};
pub mod distance;
pub mod grid;
pub mod jacobi;
pub mod linalg;
pub mod minsurf;
pub mod varifold;
pub mod qapprox;
pub mod whitney;
pub mod decay;
pub mod suites;
