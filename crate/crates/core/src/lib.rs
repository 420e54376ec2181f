//! Energy-efficiency analysis and power allocation for millimetre-wave
//! device-to-device (D2D) links underlaying a cellular uplink.

// Negated comparisons are used deliberately so that NaN inputs are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytic;
pub mod cli;
pub mod config;
pub mod error;
pub mod metrics;
pub mod montecarlo;
pub mod optimizer;
pub mod propagation;
pub mod quadrature;
pub mod sweep;
