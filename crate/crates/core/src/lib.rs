//! Electron-spin Hahn-echo decoherence from nuclear-spin baths.
//!
//! Closed-form pair-product envelopes ([`tcl`]) are checked against exact
//! propagation of small systems ([`exact`]). Heteronuclear pairs go through
//! [`hetero`], random solvent protons come from [`bath`].

pub mod bath;
pub mod cli;
pub mod config;
pub mod error;
pub mod exact;
pub mod fit;
pub mod hetero;
pub mod io;
pub mod operators;
pub mod spin_model;
pub mod tcl;

pub use error::{Error, Result};
pub use spin_model::{FieldConfig, IsotopeTable, NuclearSpin, PairParams, PhysicalConstants};
pub use tcl::{DecayExponents, EchoProtocol, EchoSeries, Method, TclOrder};
