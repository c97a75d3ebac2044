//! Two-dimensional sound-soft inverse acoustic obstacle scattering.
//!
//! The crate solves the exterior Helmholtz Dirichlet problem for star-shaped
//! obstacles with a spectrally accurate Nystrom discretization of combined
//! field integral equations, and reconstructs obstacle boundaries from
//! scattered-field measurements three ways:
//!
//! * Gauss-Newton iteration on the Fourier coefficients of the radius
//!   function, with Frechet derivatives computed by auxiliary exterior
//!   Dirichlet solves,
//! * a linear sampling method adapted to near-field receiver data,
//! * a small convolutional network trained to map measurements to
//!   coefficients, whose prediction warm-starts the Gauss-Newton iteration.
//!
//! Everything is dependency-light on purpose: dense linear algebra, Bessel
//! functions, and the neural network are implemented here, so results are
//! bit-reproducible from a single master seed.

pub mod error;
pub mod forward;
pub mod geometry;
pub mod inverse_classical;
pub mod linalg;
pub mod neural;
pub mod rng;
pub mod specfun;

pub use error::{Error, Result};
