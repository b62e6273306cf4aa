//! Dataset IO, block-wise testing and parallel execution on top of
//! [`gvmf_core`].

pub mod error;
pub mod exec;
pub mod io;
pub mod pipeline;
pub mod report;

pub use error::{Error, Result};
pub use exec::Parallel;
pub use gvmf_core;
