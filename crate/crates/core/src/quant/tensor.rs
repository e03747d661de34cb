use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::QuantError;
use crate::arch::Shape;

/// Real-valued activation tensor in channel-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Shape,
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(shape: Shape, data: Vec<f32>) -> Result<Self, QuantError> {
        if data.len() != shape.elements() {
            return Err(QuantError::ShapeMismatch {
                expected: shape,
                found_elements: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(QuantError::NonFinite);
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Shape) -> Self {
        Self {
            shape,
            data: alloc::vec![0.0; shape.elements()],
        }
    }

    pub fn filled(shape: Shape, value: f32) -> Self {
        Self {
            shape,
            data: alloc::vec![value; shape.elements()],
        }
    }

    /// Single-channel tensor with pixel values mapped to `[0, 1]`.
    pub fn from_gray(height: usize, width: usize, pixels: &[u8]) -> Result<Self, QuantError> {
        let data = pixels.iter().map(|&p| p as f32 / 255.0).collect();
        Self::new(Shape::new(1, height, width), data)
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn at(&self, c: usize, y: usize, x: usize) -> f32 {
        self.data[(c * self.shape.height + y) * self.shape.width + x]
    }
}

/// Integer range of a quantized tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Signedness {
    /// Activations after ReLU, 0..=255.
    Unsigned8,
    /// Weights and linear activations, -128..=127.
    Signed8,
    /// Accumulators.
    Signed32,
}

impl Signedness {
    pub const fn range(self) -> (i64, i64) {
        match self {
            Signedness::Unsigned8 => (0, 255),
            Signedness::Signed8 => (-128, 127),
            Signedness::Signed32 => (i32::MIN as i64, i32::MAX as i64),
        }
    }
}

/// Integer tensor plus a floating-point scale: `real = value * scale`.
#[derive(Debug, Clone, PartialEq)]
pub struct QTensor {
    shape: Shape,
    values: Vec<i32>,
    scale: f64,
    signedness: Signedness,
}

impl QTensor {
    pub fn new(
        shape: Shape,
        values: Vec<i32>,
        scale: f64,
        signedness: Signedness,
    ) -> Result<Self, QuantError> {
        if values.len() != shape.elements() {
            return Err(QuantError::ShapeMismatch {
                expected: shape,
                found_elements: values.len(),
            });
        }
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(QuantError::BadScale);
        }
        let (lo, hi) = signedness.range();
        if values.iter().any(|&v| (v as i64) < lo || (v as i64) > hi) {
            return Err(QuantError::OutOfRange { signedness });
        }
        Ok(Self {
            shape,
            values,
            scale,
            signedness,
        })
    }

    /// 8-bit grayscale frame with the standard `1/255` input scale.
    pub fn from_gray(height: usize, width: usize, pixels: &[u8]) -> Result<Self, QuantError> {
        let values = pixels.iter().map(|&p| p as i32).collect();
        Self::new(
            Shape::new(1, height, width),
            values,
            1.0 / 255.0,
            Signedness::Unsigned8,
        )
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn values(&self) -> &[i32] {
        &self.values
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn signedness(&self) -> Signedness {
        self.signedness
    }

    pub fn dequantize(&self) -> Vec<f64> {
        self.values.iter().map(|&v| v as f64 * self.scale).collect()
    }
}
