//! End-to-end simulation of blind detection for phase-modulation-on-the-
//! hypersphere (PMH) MIMO signals.
//!
//! The crate covers the full receive chain without prior channel knowledge:
//!
//! - [`constellation`]: spherical-code transmitter codebooks with Gray-style
//!   bit labels.
//! - [`channel`]: Rayleigh and geometric mmWave channels, noise mapping.
//! - [`estimation`]: pilot-based least-squares and EM joint channel
//!   estimation / symbol clustering.
//! - [`kdtree`]: balanced KD-tree receiver codebook with exact
//!   nearest-neighbor search.
//! - [`detection`]: the four detectors (perfect-CSI ML, LS, HEM-ML, HEM-KD)
//!   over a common frame pipeline.
//! - [`harness`]: seeded Monte-Carlo sweeps, BER/NMSE metrics, operation
//!   counting, CSV output.

pub mod channel;
pub mod constellation;
pub mod detection;
pub mod error;
pub mod estimation;
pub mod harness;
pub mod kdtree;
pub mod linalg;
pub mod seeding;

pub use error::{PmhError, Result};
