//! Test-only oracles and fixtures shared by the integration and acceptance
//! suites. Nothing here is part of the shipped library: the oracles are
//! deliberately written independently of the implementation paths they
//! check.

pub mod fixtures;
pub mod gradcheck;
pub mod oracle;
pub mod synthetic;
