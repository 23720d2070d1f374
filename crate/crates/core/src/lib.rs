//! Hybrid quantum-classical classifiers whose hidden state follows a liquid
//! time-constant (LQNet) or continuous-time recurrent (CTRQNet) ODE driven by
//! readouts of a parameterized quantum residual block, plus the static
//! stacked-block QNN baseline they are compared against.
//!
//! Everything runs on an exact dense statevector simulator ([`qsim`]); there is
//! no shot noise and every result is bitwise reproducible for a fixed seed.

// `!(x > 0.0)` style guards are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checkpoint;
pub mod data;
pub mod dynamics;
pub mod error;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod qblock;
pub mod qsim;

pub use error::{Error, Result};
