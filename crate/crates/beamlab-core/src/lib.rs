//! Core numerics for reflective-RIS beam synthesis and near-field localization
//! bounds.
//!
//! The crate models a passive reconfigurable intelligent surface (RIS) whose
//! per-element reflection coefficients are restricted to a measured lookup
//! table. It provides:
//!
//! - near-field array geometry, steering vectors and their spherical
//!   derivatives ([`geometry`]),
//! - feasible coefficient sets and nearest-member projection ([`hardware`]),
//! - projected-gradient beam-pattern synthesis, full-grid and
//!   reduced-complexity slice variants, plus pattern evaluation and lobe
//!   metrics ([`synthesis`]),
//! - Fisher information matrices and the position error bound for SISO
//!   downlink positioning through a single RIS path ([`fisher`]),
//! - random, directional and localization-optimal profile designs realized as
//!   time-shared precoders ([`design`]).
//!
//! The crate is `no_std` (with `alloc`); file formats, experiment configs and
//! the CLI live in the companion `beamlab` crate.

#![cfg_attr(not(any(feature = "std", test)), no_std)]

extern crate alloc;
#[cfg(any(feature = "std", test))]
extern crate std;

pub mod design;
pub mod error;
pub mod fisher;
pub mod geometry;
pub mod hardware;
pub mod linalg;
pub mod synthesis;

pub use error::Error;
pub use num_complex::Complex64;

/// Result alias used throughout the crate.
pub type Result<T> = core::result::Result<T, Error>;

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
