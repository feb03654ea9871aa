//! Dataset build stages, each a method on [`crate::Pipeline`].

pub mod base;
pub mod mated;
pub mod morphs;
pub mod pairs;

pub use base::Rejection;
pub use morphs::{demorph_images, DemorphReport};
