//! Free-viewpoint synthesis for posed 360° equirectangular panoramas.
//!
//! The offline phase estimates a dense depth panorama per capture
//! ([`stereo`]) and refines the set until the views agree ([`refine`]). The
//! online phase synthesizes a panorama at an arbitrary position by building a
//! target depth map, warping back into nearby captures and blending
//! ([`synthesis`]).

pub mod dataset;
pub mod error;
pub mod geometry;
pub mod metrics;
pub mod panorama;
pub mod refine;
pub mod scene;
pub mod stereo;
pub mod synthesis;

pub use error::{Error, Result};
