//! Simulation toolkit for entangled quantum operations.
//!
//! An entangled (non-local) operation on N qubits can always be written as a
//! coherent superposition of products of local single-qubit operators,
//! `O = sum_k c_k O_{1,k} x ... x O_{N,k}`.  This crate provides
//!
//! * operator algebra and the operator-Schmidt decomposition that classifies
//!   how entangling an operation is ([`opalg`], [`operators`]),
//! * a time-bin interferometer model that realizes such superpositions by
//!   post-selecting on coincident arrival times, including dephasing from
//!   interferometer phase noise ([`interferometer`]),
//! * state and process tomography with maximum-likelihood reconstruction and
//!   parametric-bootstrap error bars ([`tomography`]),
//! * the figures of merit used to verify the realized operations ([`metrics`]).
//!
//! Conventions used throughout: qubit basis `|0> = |H>`, `|1> = |V>`, tensor
//! factors ordered big-endian (party 0 is the most significant qubit), and
//! matrices stored dense in row-major order.

pub mod interferometer;
pub mod metrics;
pub mod opalg;
pub mod operators;
pub mod tomography;

pub use num_complex::Complex64;
