//! Dense linear algebra, small feedforward networks, and the first-order
//! optimizer they train with.

mod adam;
pub mod linalg;
mod net;
mod rng;
mod simplex;

pub use adam::{Adam, AdamConfig};
pub use net::{Activation, DenseNet, Layer, Workspace};
pub use rng::Rng;
pub use simplex::{nelder_mead, Minimum, NelderMeadConfig};
