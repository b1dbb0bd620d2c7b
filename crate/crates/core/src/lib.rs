//! Exact lattice arithmetic for even unimodular lattices, constructive root-orbit
//! reduction, flat coordinates on period domains, Siegel theta kernels,
//! Borcherds-type products and the discriminant projection for polarized K3 lattices.

pub mod borcherds;
pub mod grassmannian;
pub mod intlinalg;
pub mod lattice;
pub mod orbit;
pub mod projection;
pub mod roots;
pub mod shell;

pub use borcherds::{LambertRate, ProductSeries, SeriesError, SiegelParameter, TruncationConfig};
pub use grassmannian::{Cocycle, FlatPoint, Frame, GeometryError, TubePoint};
pub use lattice::{Block, Lattice, LatticeError, LatticeVector, RationalVector, Signature};
pub use orbit::{FrameU, Generator, OrbitError, ReflectionWord};
pub use projection::{PolarizedFrame, ProjectionError, WallLabel};
pub use roots::{Chamber, CountingSeries, Root, RootError, Transvection};
