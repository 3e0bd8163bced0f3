//! Diffusion M-estimate adaptive networks.
//!
//! Distributed estimation of a (possibly sparse) parameter vector over a
//! network of nodes that each observe `d_k(i) = u_{k,i}ᵀ w° + v_k(i)` with
//! impulsive noise `v`. The crate provides the adapt-then-combine engine for
//! the normalized least-mean M-estimate family and its competitors, signal and
//! noise generators, the analytical mean and mean-square models, and a
//! Monte Carlo harness.

// `!(x > 0.0)` deliberately rejects NaN along with non-positive values, and
// the numerical kernels index several arrays with the same loop variable.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod diffusion;
pub mod error;
pub mod harness;
pub mod network;
pub mod robust;
pub mod seed;
pub mod signals;
pub mod theory;

pub use error::{Error, Result};
