pub mod detect;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod locate;
pub mod tl;
pub mod sensing;
pub mod topogen;

pub use error::{Error, Result};
