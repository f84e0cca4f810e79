//! Online handwritten character recognition.
//!
//! The pipeline turns raw pen trajectories into dense multi-channel feature
//! maps (truncated path signatures and 8-direction decompositions rendered
//! along the pen path), feeds them to a small convolutional network trained
//! from scratch, and combines several such networks in an early-exit cascade
//! that falls back to probability averaging when no member is confident.

pub mod augment;
pub mod dataio;
pub mod ensemble;
pub mod features;
pub mod ink;
pub mod net;
pub mod nln;
pub mod pipeline;
pub mod raster;
pub mod seed;
pub mod train;
