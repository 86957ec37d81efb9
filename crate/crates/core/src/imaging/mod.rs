//! Images, grey-world colour correction, Canny edges and square patches.

mod canny;
mod color;
mod geometry;
pub mod io;
mod patch;

pub use canny::{canny_edges, window_count, EdgeMap, DEFAULT_HIGH, DEFAULT_LOW};
pub use color::{channel_means, grey_world_correct};
pub use geometry::{bbox_to_square_center, BoundingBox, Point};
pub use patch::{extract_square_patch, window_origin, Patch, CHANNELS};
pub(crate) use patch::write_window_input;

/// 8-bit RGB image, row-major.
pub type Image = image::RgbImage;
