//! Local-control pulse synthesis for fixed-frequency qubits coupled through a
//! flux-tunable coupler.
//!
//! Internally every frequency is angular (rad/ns) and every time is in ns;
//! the [`io`] layer converts to and from GHz.

pub mod dynamics;
pub mod error;
pub mod io;
pub mod lct;
pub mod model;
pub mod optimize;
pub mod pulses;

pub use error::{PulseError, Result};
