pub mod autodiff;
pub mod behavior;
pub mod error;
pub mod geo;
pub mod hexgraph;
pub mod pipeline;
pub mod policy;
pub mod represent;
pub mod sim;

pub use error::{Error, Result};
