//! Independent reference implementations used as test oracles.
//!
//! Nothing here calls into the estimation or training code it checks; the
//! only shared items are plain data types.
#![allow(dead_code)]

pub mod eval;
pub mod kn;
pub mod rnn;
