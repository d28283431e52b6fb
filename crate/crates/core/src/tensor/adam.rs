use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// Adam optimizer state for a fixed list of parameter tensors.
///
/// Each slot keeps its own step count: a parameter that receives no gradient
/// in a step (for example a layer above every sampled scope) is left exactly
/// as it was, moments included.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    first: Vec<Matrix>,
    second: Vec<Matrix>,
    slot_steps: Vec<u64>,
    steps: u64,
}

impl AdamState {
    pub const DEFAULT_LR: f64 = 1e-2;

    pub fn new(shapes: &[(usize, usize)], lr: f64) -> Self {
        AdamState {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            first: shapes.iter().map(|&(r, c)| Matrix::zeros(r, c)).collect(),
            second: shapes.iter().map(|&(r, c)| Matrix::zeros(r, c)).collect(),
            slot_steps: vec![0; shapes.len()],
            steps: 0,
        }
    }

    /// Number of completed `step` calls.
    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn slot_steps(&self, slot: usize) -> u64 {
        self.slot_steps[slot]
    }

    /// One bias-corrected Adam update. `grads[i] == None` skips slot `i`.
    pub fn step(&mut self, params: &mut [&mut Matrix], grads: &[Option<&Matrix>]) -> Result<()> {
        if params.len() != self.first.len() || grads.len() != self.first.len() {
            return Err(Error::Precondition(format!(
                "adam state has {} slots, got {} params and {} grads",
                self.first.len(),
                params.len(),
                grads.len()
            )));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            self.first[i].same_shape(p, "adam_step")?;
            if let Some(g) = g {
                p.same_shape(g, "adam_step")?;
            }
        }
        self.steps += 1;
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let Some(g) = g else { continue };
            self.slot_steps[i] += 1;
            let t = self.slot_steps[i] as i32;
            let c1 = 1.0 - self.beta1.powi(t);
            let c2 = 1.0 - self.beta2.powi(t);
            let m = self.first[i].as_mut_slice();
            let v = self.second[i].as_mut_slice();
            for (((w, &gi), mi), vi) in p.as_mut_slice().iter_mut().zip(g.as_slice()).zip(m).zip(v) {
                *mi = self.beta1 * *mi + (1.0 - self.beta1) * gi;
                *vi = self.beta2 * *vi + (1.0 - self.beta2) * gi * gi;
                let mhat = *mi / c1;
                let vhat = *vi / c2;
                *w -= self.lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut w = Matrix::from_rows(&[[1.0, -2.0]]);
        let before = w.clone();
        let mut adam = AdamState::new(&[(1, 2)], 0.01);
        let g = Matrix::zeros(1, 2);
        adam.step(&mut [&mut w], &[Some(&g)]).unwrap();
        assert_eq!(w, before);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut w = Matrix::scalar(0.5);
        let mut adam = AdamState::new(&[(1, 1)], 0.01);
        adam.step(&mut [&mut w], &[Some(&Matrix::scalar(1.0))]).unwrap();
        assert!((w.item() - 0.49).abs() < 1e-9, "{}", w.item());
    }

    #[test]
    fn quadratic_converges() {
        // f(w) = w^2, gradient 2w.
        let mut w = Matrix::scalar(1.0);
        let mut adam = AdamState::new(&[(1, 1)], 0.01);
        for _ in 0..100 {
            let g = Matrix::scalar(2.0 * w.item());
            adam.step(&mut [&mut w], &[Some(&g)]).unwrap();
        }
        // Reference value from an independent PyTorch Adam run (float64,
        // lr=0.01, default betas/eps).
        assert!((w.item() - 0.224_446_045_231_879_08).abs() < 1e-12, "{}", w.item());
        assert_eq!(adam.steps(), 100);
        for _ in 0..50 {
            let g = Matrix::scalar(2.0 * w.item());
            adam.step(&mut [&mut w], &[Some(&g)]).unwrap();
        }
        assert!((w.item() - 0.070_078_230_184_849_32).abs() < 1e-12, "{}", w.item());
    }

    #[test]
    fn skipped_slot_is_untouched() {
        let mut a = Matrix::scalar(1.0);
        let mut b = Matrix::scalar(1.0);
        let mut adam = AdamState::new(&[(1, 1), (1, 1)], 0.01);
        adam.step(&mut [&mut a, &mut b], &[Some(&Matrix::scalar(1.0)), None]).unwrap();
        assert_eq!(b.item(), 1.0);
        assert_eq!(adam.slot_steps(1), 0);
        assert_eq!(adam.slot_steps(0), 1);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let mut w = Matrix::zeros(2, 2);
        let mut adam = AdamState::new(&[(2, 2)], 0.01);
        assert!(adam.step(&mut [&mut w], &[Some(&Matrix::zeros(1, 2))]).is_err());
    }
}
