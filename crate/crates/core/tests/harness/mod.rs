//! Drivers that run the library and compare it against the oracles.
#![allow(dead_code)]

pub mod gradcheck;
