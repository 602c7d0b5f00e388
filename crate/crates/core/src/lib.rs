//! Sparse layered MIMO (SL-MIMO).
//!
//! SVD precoding turns a Rayleigh MIMO channel into `n` ordered eigen-channels.
//! `L` layers each map their data onto a sparse subset of those eigen-channels
//! (the SL matrix), and the superposition is detected either exhaustively (ML)
//! or by message passing on the layer/eigen-channel factor graph.
//!
//! The crate also evaluates closed-form union bounds on the average word error
//! probability using the joint MGF of the ordered Wishart eigenvalues, and
//! designs per-layer codebooks that minimise those bounds.

// Validation checks are written `!(x > 0.0)` on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod awep;
pub mod channel;
pub mod design;
pub mod detect;
pub mod eigen;
pub mod error;
pub mod linalg;
pub mod report;
pub mod rng;
pub mod sim;
pub mod sl;

pub use error::{Error, ErrorClass, Result};
