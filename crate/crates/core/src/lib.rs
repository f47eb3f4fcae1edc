#![no_std]
//! Random walks on surface groups and free groups: geodesic acceptors,
//! Green functions, Martin kernels, transfer-operator pressure and
//! local-limit fits.

extern crate alloc;

pub mod asymptotics;
pub mod automaton;
pub mod boundary;
pub mod error;
pub mod green;
pub mod group;
pub mod linalg;
pub mod thermo;
pub mod walk;

pub use automaton::{Automaton, GeodesicSegment};
pub use error::{Error, Result};
pub use group::{Generator, GroupElement, GroupKind, Presentation, Word};
