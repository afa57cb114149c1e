//! Pulse-shaping design for single-carrier ISAC frames.
//!
//! A frame is a sequence of i.i.d. constellation symbols shaped by a common
//! pulse. The range profile of such a frame is its auto-correlation function
//! (ACF), which is random because the symbols are. This crate
//!
//! - computes the closed-form mean, variance and expected squared ACF of a
//!   random frame for a given pulse ([`acf_stats`]),
//! - designs the pulse power spectrum that minimizes the expected integrated
//!   sidelobe level ratio (ISLR) subject to the Nyquist (zero-ISI) condition,
//!   as a convex QP ([`optimizer`], [`qp`]),
//! - checks designs independently for zero ISI ([`isi`]),
//! - measures everything again by Monte-Carlo simulation ([`simulate`]),
//! - and drives the sweep experiments used by the `isac-pulse` CLI
//!   ([`experiments`]).
//!
//! All quantities are in normalized units: time in samples, frequency in DFT
//! bins. The root-raised-cosine (RRC) pulse is the baseline throughout.

pub mod acf_stats;
pub mod constellation;
mod dft;
pub mod error;
pub mod experiments;
pub mod io;
pub mod isi;
pub mod optimizer;
pub mod qp;
pub mod simulate;
pub mod spectrum;

pub use acf_stats::{alpha_coefficients, theoretical_islr, theoretical_stats, AcfStatistics, AlphaCoefficients, LagRegion};
pub use constellation::{draw_frame, make_psk, make_qam, Constellation};
pub use error::{Error, Result};
pub use optimizer::{build_constraints, build_q, solve, DesignResult, QpProblem};
pub use spectrum::{fold_spectrum, rrc_spectrum, spectrum_to_acf, spectrum_to_pulse, DiscreteAcf, GridSpec, SpectrumVector};
