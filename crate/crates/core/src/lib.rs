//! Numerical laboratory for extrinsic biharmonic maps into round spheres.

pub mod bienergy;
pub mod error;
pub mod field;
pub mod grid;
pub mod homogeneity;
pub mod jet;
pub mod monotonicity;
pub mod oracle;
pub mod quadrature;
pub mod regscale;
pub mod strata;
pub mod sum;
pub mod taylor;

pub use error::{Error, Result};
pub use field::{load_field, save_field, ScalarField, SphereField};
pub use grid::GridDomain;
pub use jet::{jet_at, Jet};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
