//! Trainable structure-tensor instance segmentation.
//!
//! The pipeline turns a (possibly colour) X-ray scan into scored, per-item
//! boxes and masks:
//!
//! 1. [`tensor_core`] computes directional gradients at `M` orientations,
//!    the `M(M+1)/2` unique smoothed gradient-product tensors, and fuses the
//!    `K` strongest into a single coherent representation.
//! 2. [`backbone`] is a small SegNet-style encoder-decoder, trained from
//!    scratch with ADADELTA, that keeps threat-item contours and suppresses
//!    everything else.
//! 3. [`segmenter`] post-processes the per-pixel labels with morphology,
//!    connected components, minimum-area rectangles and contour filling.
//! 4. [`metrics`] scores detections (AP, mAP@0.5, Dice, IoU).
//! 5. [`synthdata`] renders pseudo-X-ray scenes with ground truth, and reads
//!    and writes the on-disk dataset format.

pub mod backbone;
pub mod error;
pub mod imaging;
pub mod metrics;
pub mod segmenter;
pub mod synthdata;
pub mod tensor_core;
pub mod workflow;

pub use error::{Error, Result};
pub use imaging::{BinaryMask, ImageBuffer, RotatedRect};
