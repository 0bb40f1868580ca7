//! Forward simulator and inverse-analysis toolkit for arrays of atomic
//! mechanical oscillators inside a driven optical cavity.
//!
//! Ultracold atoms loaded into a two-color intracavity superlattice form one
//! collective mechanical oscillator per occupied site, each with its own
//! resonance frequency. This crate models that system end to end:
//!
//! * [`superlattice`] — the two-color potential, its trap minima and site
//!   frequencies, and Gaussian atom loading;
//! * [`coupling`] — per-site optomechanical coupling, dispersive cavity
//!   shift, cooperativity, and measurement backaction;
//! * [`spectra`] — motional-sideband spectra (photon and phase quadrature),
//!   the heterodyne detection model, seeded averaged-periodogram noise, and
//!   coherent drives;
//! * [`analysis`] — the inverse pipeline: shot-noise calibration, sideband
//!   detection and Lorentzian fitting, occupation and cooperativity
//!   estimators;
//! * [`imaging`] — mechanical resonance imaging: position scans, ridge
//!   extraction, and reconstruction of the potential minima;
//! * [`addressing`] — selective-addressing drive series and crosstalk
//!   confidence bounds;
//! * [`harness`] — the config-driven CLI experiments with deterministic,
//!   manifest-hashed outputs.
//!
//! All randomness is seeded; independent work items derive their own seeds,
//! so runs are reproducible bit for bit whether or not the `parallel`
//! feature (rayon) is enabled.

pub mod addressing;
pub mod analysis;
pub mod config;
pub mod coupling;
pub mod error;
pub mod exec;
pub mod fit;
pub mod harness;
pub mod imaging;
pub mod io;
pub mod scenarios;
pub mod seed;
pub mod spectra;
pub mod superlattice;
pub mod units;

pub use error::{Error, Result};
