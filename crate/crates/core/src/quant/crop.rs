use alloc::vec::Vec;

use super::{QuantError, Tensor};
use crate::arch::Shape;

/// Side of the square camera frame.
pub const FRAME_SIZE: usize = 160;
/// Rows kept by the crop.
pub const CROP_HEIGHT: usize = 96;
/// First kept row; the window is vertically centered.
pub const CROP_TOP: usize = (FRAME_SIZE - CROP_HEIGHT) / 2;

/// Keeps the centered 96 rows of a 160x160 single-channel frame.
pub fn crop_input(frame: &Tensor) -> Result<Tensor, QuantError> {
    let expected = Shape::new(1, FRAME_SIZE, FRAME_SIZE);
    if frame.shape() != expected {
        return Err(QuantError::ShapeMismatch {
            expected,
            found_elements: frame.shape().elements(),
        });
    }
    let data = frame.data()[CROP_TOP * FRAME_SIZE..(CROP_TOP + CROP_HEIGHT) * FRAME_SIZE].to_vec();
    Tensor::new(Shape::new(1, CROP_HEIGHT, FRAME_SIZE), data)
}

/// Pixel-level counterpart of [`crop_input`] for raw 8-bit frames.
pub fn crop_pixels(pixels: &[u8]) -> Result<Vec<u8>, QuantError> {
    if pixels.len() != FRAME_SIZE * FRAME_SIZE {
        return Err(QuantError::ShapeMismatch {
            expected: Shape::new(1, FRAME_SIZE, FRAME_SIZE),
            found_elements: pixels.len(),
        });
    }
    Ok(pixels[CROP_TOP * FRAME_SIZE..(CROP_TOP + CROP_HEIGHT) * FRAME_SIZE].to_vec())
}
