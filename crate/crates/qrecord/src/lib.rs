//! Numerical oracle, file formats and command line for the metastable
//! recorder model in [`qrecord_core`].

#![forbid(unsafe_code)]

pub mod cli;
pub mod json;
pub mod pde;
pub mod record;
pub mod snapshot;
pub mod split1d;
