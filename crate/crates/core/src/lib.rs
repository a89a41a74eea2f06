pub mod attacks;
pub mod data_io;
pub mod detect;
pub mod error;
pub mod pipeline;
pub mod nn;
pub mod quiver;
pub mod registry;
pub mod verify;

pub use error::{Error, Result};
