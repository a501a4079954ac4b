//! First-order adaptive-moment optimizer with bias correction. Moment
//! buffers serialize into the checkpoint container so training resumes are
//! bit-exact.

use crate::error::{Error, Result};
use crate::nn::Tensor;
use crate::policy::checkpoint::Archive;
use crate::policy::PolicyParams;

#[derive(Debug, Clone)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(params: &PolicyParams) -> Self {
        let shapes: Vec<usize> = params.tensors().iter().map(|(_, t)| t.len()).collect();
        Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: shapes.iter().map(|n| vec![0.0; *n]).collect(),
            v: shapes.iter().map(|n| vec![0.0; *n]).collect(),
        }
    }

    /// Applies one update with (already clipped) gradients; zero learning
    /// rate leaves parameters untouched but still advances the moments.
    pub fn apply(
        &mut self,
        params: &mut PolicyParams,
        grads: &[Vec<f64>],
        learning_rate: f64,
    ) -> Result<()> {
        let mut tensors = params.tensors_mut();
        if grads.len() != tensors.len() {
            return Err(Error::Contract(format!(
                "adam: {} gradient tensors for {} parameters",
                grads.len(),
                tensors.len()
            )));
        }
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for ((_, t), (g, (m, v))) in tensors
            .iter_mut()
            .zip(grads.iter().zip(self.m.iter_mut().zip(self.v.iter_mut())))
        {
            if g.len() != t.len() {
                return Err(Error::Contract("adam: gradient shape mismatch".into()));
            }
            for i in 0..g.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                t.data[i] -= learning_rate * mhat / (vhat.sqrt() + self.eps);
            }
        }
        Ok(())
    }

    /// Moment buffers as named tensors for the checkpoint container.
    pub fn state_tensors(&self, params: &PolicyParams) -> Vec<(String, Tensor)> {
        let mut out = Vec::new();
        for (i, (name, t)) in params.tensors().iter().enumerate() {
            out.push((
                format!("opt.m.{name}"),
                Tensor::from_vec(t.rows, t.cols, self.m[i].clone()),
            ));
            out.push((
                format!("opt.v.{name}"),
                Tensor::from_vec(t.rows, t.cols, self.v[i].clone()),
            ));
        }
        out
    }

    pub fn from_archive(archive: &Archive, params: &PolicyParams) -> Result<Self> {
        let mut adam = Adam::new(params);
        adam.step = archive.meta_parse("opt_step")?;
        for (i, (name, _)) in params.tensors().iter().enumerate() {
            adam.m[i] = archive.tensor(&format!("opt.m.{name}"))?.data.clone();
            adam.v[i] = archive.tensor(&format!("opt.v.{name}"))?.data.clone();
        }
        Ok(adam)
    }
}
