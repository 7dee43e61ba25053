//! SGD with momentum and weight decay, and the two learning-rate schedules.

use serde::{Deserialize, Serialize};

use crate::tensor::ParamBlock;

/// `buf <- momentum * buf + grad + weight_decay * value; value <- value - lr * buf`.
pub fn sgd_step(p: &mut ParamBlock, lr: f64, momentum: f64, weight_decay: f64) {
    let v = p.value.data_mut();
    let g = p.grad.data();
    let buf = p.momentum.data_mut();
    for ((v, g), b) in v.iter_mut().zip(g).zip(buf.iter_mut()) {
        *b = momentum * *b + g + weight_decay * *v;
        *v -= lr * *b;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Schedule {
    /// Multiply by `factor` once `at` (a fraction of all iterations) is reached.
    Step {
        factor: f64,
        at: f64,
    },
    /// `(1 + a p)^(-b)` with `p` the fraction of iterations done.
    Inverse {
        a: f64,
        b: f64,
    },
    Constant,
}

impl Schedule {
    pub const STEP: Schedule = Schedule::Step { factor: 0.1, at: 0.75 };
    pub const INVERSE: Schedule = Schedule::Inverse { a: 10.0, b: 0.75 };
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule::STEP
    }
}

/// Learning rate at `iteration` (0-based) of `iterations`.
pub fn lr_at(schedule: Schedule, base_lr: f64, iteration: usize, iterations: usize) -> f64 {
    let p = iteration as f64 / iterations.max(1) as f64;
    match schedule {
        Schedule::Step { factor, at } => {
            if iteration as f64 >= at * iterations as f64 {
                base_lr * factor
            } else {
                base_lr
            }
        }
        Schedule::Inverse { a, b } => base_lr * (1.0 + a * p).powf(-b),
        Schedule::Constant => base_lr,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn block(value: f64, grad: f64) -> ParamBlock {
        let mut p = ParamBlock::new(Tensor::vector(vec![value]).unwrap());
        p.grad = Tensor::vector(vec![grad]).unwrap();
        p
    }

    #[test]
    fn vanilla_step() {
        let mut p = block(1.0, 0.5);
        sgd_step(&mut p, 0.1, 0.0, 0.0);
        assert!((p.value.data()[0] - 0.95).abs() < 1e-15);
    }

    #[test]
    fn momentum_recursion() {
        let mut p = block(0.0, 1.0);
        sgd_step(&mut p, 0.1, 0.9, 0.0);
        assert!((p.value.data()[0] + 0.1).abs() < 1e-15);
        sgd_step(&mut p, 0.1, 0.9, 0.0);
        assert!((p.value.data()[0] + 0.29).abs() < 1e-15);
    }

    #[test]
    fn decay_only_step() {
        let mut p = block(1.0, 0.0);
        sgd_step(&mut p, 0.1, 0.0, 0.1);
        assert!((p.value.data()[0] - 0.99).abs() < 1e-15);
    }

    #[test]
    fn step_schedule_drops_at_three_quarters() {
        assert_eq!(lr_at(Schedule::STEP, 0.01, 899, 1200), 0.01);
        assert!((lr_at(Schedule::STEP, 0.01, 900, 1200) - 0.001).abs() < 1e-18);
    }

    #[test]
    fn inverse_schedule_end_points() {
        assert_eq!(lr_at(Schedule::INVERSE, 0.02, 0, 100), 0.02);
        // 11^(-0.75), evaluated independently in double precision.
        assert!((lr_at(Schedule::INVERSE, 1.0, 100, 100) - 0.165_560_026_076_170_18).abs() < 1e-15);
    }
}
