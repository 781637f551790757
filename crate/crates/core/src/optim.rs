//! Vector-wise Adam for per-vertex 3D parameters.
//!
//! First moments are kept per component as in Adam; the second moment is a
//! single scalar per vertex built from the squared norm of its gradient, so
//! the step is equivariant under rotations of the gradient field.

use crate::geom::Vec3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VectorAdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for VectorAdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Positions under optimization with their moment accumulators.
#[derive(Debug, Clone)]
pub struct OptimState {
    pub positions: Vec<Vec3>,
    first_moment: Vec<Vec3>,
    second_moment: Vec<f64>,
    pub epoch: usize,
    pub loss_history: Vec<f64>,
}

impl OptimState {
    pub fn new(positions: Vec<Vec3>) -> Self {
        let n = positions.len();
        Self {
            positions,
            first_moment: vec![Vec3::zeros(); n],
            second_moment: vec![0.0; n],
            epoch: 0,
            loss_history: Vec::new(),
        }
    }

    /// Applies one update with `gradients` and records `loss`, the objective
    /// at the positions the gradients were taken at.
    pub fn step(&mut self, cfg: &VectorAdamConfig, gradients: &[Vec3], loss: f64) {
        debug_assert_eq!(gradients.len(), self.positions.len());
        self.epoch += 1;
        let t = self.epoch as i32;
        let bias1 = 1.0 - cfg.beta1.powi(t);
        let bias2 = 1.0 - cfg.beta2.powi(t);
        for (((x, m), v), g) in self
            .positions
            .iter_mut()
            .zip(self.first_moment.iter_mut())
            .zip(self.second_moment.iter_mut())
            .zip(gradients)
        {
            *m = *m * cfg.beta1 + g * (1.0 - cfg.beta1);
            *v = *v * cfg.beta2 + g.norm_squared() * (1.0 - cfg.beta2);
            let m_hat = *m / bias1;
            let v_hat = *v / bias2;
            *x -= m_hat * (cfg.learning_rate / (v_hat.sqrt() + cfg.epsilon));
        }
        self.loss_history.push(loss);
    }
}
