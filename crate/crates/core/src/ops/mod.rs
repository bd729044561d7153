//! Numeric kernels underlying the tape operations.

pub mod conv;
