use alloc::format;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// An image-side latent `[h, w, c]` tagged with the step it belongs to.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentGrid {
    data: Tensor,
    step_index: usize,
    t_value: f32,
}

impl LatentGrid {
    pub fn new(data: Tensor, step_index: usize, t_value: f32) -> Result<Self> {
        if data.rank() != 3 {
            return Err(Error::Dimension(format!(
                "latent must be [h, w, c], got {:?}",
                data.dims()
            )));
        }
        Ok(Self {
            data,
            step_index,
            t_value,
        })
    }

    pub fn data(&self) -> &Tensor {
        &self.data
    }

    pub fn into_data(self) -> Tensor {
        self.data
    }

    pub fn step_index(&self) -> usize {
        self.step_index
    }

    pub fn t_value(&self) -> f32 {
        self.t_value
    }

    /// `(h, w, c)`.
    pub fn shape(&self) -> (usize, usize, usize) {
        let d = self.data.dims();
        (d[0], d[1], d[2])
    }

    pub fn is_finite(&self) -> bool {
        self.data.is_finite()
    }

    pub fn with_step(mut self, step_index: usize, t_value: f32) -> Self {
        self.step_index = step_index;
        self.t_value = t_value;
        self
    }
}
