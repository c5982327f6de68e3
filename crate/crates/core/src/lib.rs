//! Lipschitz-constant analysis for small feed-forward networks.
//!
//! Three quantities are computed and compared:
//!
//! - the *trivial* upper bound, the product of per-layer spectral norms ([`bounds`]);
//! - an externally supplied tight bound, carried through gap reports;
//! - the *empirical* constant, the largest quotient `‖f(x) − f(y)‖₂ / ‖x − y‖₂` over dataset
//!   pairs ([`empirical`]).
//!
//! Convolutional layers are converted exactly into dense operators ([`conv`]) so that the same
//! machinery applies to CNNs.

pub mod bounds;
pub mod conv;
pub mod data;
pub mod empirical;
mod error;
pub mod fsutil;
pub mod linalg;
pub mod network;
pub mod trainer;

pub use error::{Error, Result};
