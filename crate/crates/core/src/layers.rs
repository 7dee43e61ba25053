use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::tensor::{dense_backward, dense_forward, kaiming_normal, ParamBlock, Tensor};

/// Affine layer `y = x W + b` owning its parameter blocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weight: ParamBlock,
    pub bias: ParamBlock,
}

impl Dense {
    /// Kaiming-normal weights, zero bias.
    pub fn new(seed: u64, fan_in: usize, fan_out: usize) -> Self {
        Dense {
            weight: ParamBlock::new(kaiming_normal(seed, fan_in, fan_out)),
            bias: ParamBlock::new(Tensor::zeros(&[fan_out])),
        }
    }

    pub fn fan_in(&self) -> usize {
        self.weight.value.shape()[0]
    }

    pub fn fan_out(&self) -> usize {
        self.weight.value.shape()[1]
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        dense_forward(x, &self.weight.value, &self.bias.value)
    }

    /// Accumulates parameter gradients and returns the input gradient.
    pub fn backward(&mut self, x: &Tensor, grad_out: &Tensor) -> Result<Tensor> {
        let g = dense_backward(x, &self.weight.value, grad_out)?;
        self.weight.accumulate(&g.w)?;
        self.bias.accumulate(&g.bias)?;
        Ok(g.x)
    }

    pub fn params_mut(&mut self) -> [&mut ParamBlock; 2] {
        [&mut self.weight, &mut self.bias]
    }

    pub fn params(&self) -> [&ParamBlock; 2] {
        [&self.weight, &self.bias]
    }
}
