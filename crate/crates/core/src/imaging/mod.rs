//! Raster utilities shared by every stage: buffers, convolution, binary
//! morphology, labeling, planar geometry, polygon rasterization and image I/O.

mod buffer;
pub mod components;
pub mod convolve;
pub mod geometry;
pub mod io;
pub mod morphology;
pub mod raster;

pub use buffer::{BinaryMask, ImageBuffer};
pub use components::{connected_components, Component, Connectivity};
pub use convolve::{convolve2d, convolve_separable, Kernel2d};
pub use geometry::{convex_hull, min_bounding_rectangle, Aabb, Point, RotatedRect};
pub use morphology::{close, dilate, erode, open, Shape};
pub use raster::{fill_closed_contour, is_simple_polygon, point_in_polygon, rasterize_polygon};
