//! Shared test support: independent oracles (nothing in those calls into
//! the code paths they check) and a full-fixture compile helper.
#![allow(dead_code)]

pub mod fixture_run;
pub mod loopback;
pub mod matrix_chain;
pub mod sampling;
pub mod session_run;
pub mod surface_sampling;
