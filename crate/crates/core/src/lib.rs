//! Co-creative image generation sessions.
//!
//! A session pairs an artist-owned layered canvas with a deterministic
//! generation engine. Generations can be requested explicitly (turn-taking)
//! or produced by a background loop on a virtual clock (parallel), and the
//! artist may import any cached candidate back onto the canvas, where it
//! conditions later generations. The crate also ships the HTTP service that
//! fronts sessions and the replay and statistics harness used to evaluate
//! the three workflows.

pub mod api;
pub mod hash;
pub mod engine;
pub mod layers;
pub mod persist;
pub mod provenance;
pub mod raster;
pub mod session;
pub mod study;

pub use hash::Digest64;
pub use raster::{composite_over, decode_png, encode_png, pixel_digest, RasterError, RasterImage, Rgba};
