use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Grid geometry on the SLM plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridShape {
    pub width: usize,
    pub height: usize,
    /// SLM pixels per unit length on the modulator plane; displacement in
    /// pixels is `f * tan(theta) * pixel_pitch`.
    pub pixel_pitch: f64,
}

impl GridShape {
    pub fn new(width: usize, height: usize, pixel_pitch: f64) -> Self {
        GridShape {
            width,
            height,
            pixel_pitch,
        }
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Grid origin `(col, row)`: the center pixel, rounded down.
    pub fn origin(&self) -> (usize, usize) {
        (self.width / 2, self.height / 2)
    }
}

impl Default for GridShape {
    fn default() -> Self {
        GridShape::new(64, 64, 1000.0)
    }
}

/// Discretized deflection spectrum, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumGrid {
    shape: GridShape,
    values: Vec<f64>,
}

impl SpectrumGrid {
    pub fn zeros(shape: GridShape) -> Self {
        SpectrumGrid {
            shape,
            values: vec![0.0; shape.len()],
        }
    }

    pub fn from_values(shape: GridShape, values: Vec<f64>) -> Result<Self> {
        if values.len() != shape.len() {
            return Err(Error::SizeMismatch {
                expected: shape.len(),
                actual: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("spectrum values"));
        }
        Ok(SpectrumGrid { shape, values })
    }

    pub fn shape(&self) -> GridShape {
        self.shape
    }

    pub fn width(&self) -> usize {
        self.shape.width
    }

    pub fn height(&self) -> usize {
        self.shape.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.shape.width + col]
    }

    pub fn norm(&self) -> f64 {
        crate::linalg::norm(&self.values)
    }

    pub fn scaled(mut self, factor: f64) -> Self {
        self.values.iter_mut().for_each(|v| *v *= factor);
        self
    }
}
