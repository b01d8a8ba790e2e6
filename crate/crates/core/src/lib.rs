//! Propagates a key-frame multi-label segmentation through a video.
//!
//! Each new frame is segmented by transferring labels along forward-backward
//! consistent optical flow, turning the transferred labels into scribbles
//! for a spatially varying color+motion kernel density model, and solving a
//! boundary-weighted convex multi-label partition problem with a first-order
//! primal-dual scheme.

pub mod boundary_term;
pub mod data_term;
pub mod error;
pub mod eval;
pub mod flow_consistency;
pub mod media_io;
pub mod pipeline;
pub mod solver;

pub use error::{Error, Result};
