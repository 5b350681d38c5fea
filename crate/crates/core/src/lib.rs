//! ECG biometric authentication built on per-identity regression trees.
//!
//! A subject is enrolled by conditioning a training recording, cutting it into
//! R-peak-anchored windows and fitting a regression tree that maps the time
//! offset inside a window to the expected amplitude. A test recording is
//! matched against every stored tree by mean squared error and accepted as a
//! known identity only when that error stays under the identity's control
//! limit.

pub mod authenticator;
pub mod config;
pub mod corpus;
pub mod enrollment;
pub mod error;
pub mod features;
pub mod infotheory;
pub mod dtree;
pub mod numfmt;
pub mod preprocess;
pub mod rng;
pub mod signal;
pub mod slicer;
pub mod sweep;
pub mod synth;

pub use error::{Error, Result};
