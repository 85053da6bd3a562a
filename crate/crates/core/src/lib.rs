//! Numerical toolkit for nonlocality transitivity of tripartite quantum states.

pub mod bellopt;
pub mod error;
pub mod haarscan;
pub mod bounds;
pub mod kvgame;
pub mod marginal;
pub mod npa;
pub mod qcore;
pub mod states;

pub use error::{Error, Result};
