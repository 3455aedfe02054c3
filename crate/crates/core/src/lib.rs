//! Differentially private variational inference for mixture models over
//! vertically partitioned data.
//!
//! Parties hold disjoint feature columns for the same ordered individuals.
//! Each iteration they compute local component densities and their
//! log-derivatives, combine them under additive secret sharing with
//! fixed-point arithmetic, clip per-example gradients, add discrete Gaussian
//! noise and reveal only the noised batch sum.

pub mod fixedpoint;
pub mod mpc;
pub mod noise;
pub mod accountant;
pub mod model;
pub mod data;
pub mod trainer;
pub mod checkpoint;
pub mod fixtures;
