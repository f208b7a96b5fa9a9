pub mod error;
pub mod geo;
pub mod io;
pub mod kernel;
pub mod panel;
pub mod pipeline;
pub mod rd;
pub mod shares;
pub mod synth;

pub use error::{Error, Result};
