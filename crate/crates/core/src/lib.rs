//! Link-level simulation library for an uplink multiuser MISO system assisted
//! by an active or passive reconfigurable intelligent surface (RIS).
//!
//! The library covers the full receive chain: block-fading channel generation
//! with 3GPP path-loss models, closed-form MMSE design of the RIS reflection
//! vector with active/passive truncation, soft interference cancellation with
//! prior-aware MMSE filtering, LDPC sum-product decoding, pilot-based channel
//! estimation, flop-count complexity models, and a reproducible Monte Carlo
//! harness producing BER and sum-rate sweeps as CSV.

pub mod channel;
pub mod complexity;
pub mod config;
pub mod csi;
pub mod detector;
pub mod error;
pub mod harness;
pub mod ldpc;
pub mod linalg;
pub mod modem;
pub mod ris;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
