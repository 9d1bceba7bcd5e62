//! Adam optimizer over named 2-D parameter tensors.

use ndarray::Array2;

/// Adaptive moment estimation with bias correction. Moments are kept per
/// parameter tensor, in the caller's fixed parameter order.
pub struct Adam {
    beta1: f32,
    beta2: f32,
    epsilon: f32,
    step_count: usize,
    first_moment: Vec<Array2<f32>>,
    second_moment: Vec<Array2<f32>>,
}

impl Adam {
    pub fn new() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step_count: 0,
            first_moment: Vec::new(),
            second_moment: Vec::new(),
        }
    }

    /// Applies one update. `grads[i]` of `None` means the parameter received
    /// no gradient this step and is treated as zero.
    pub fn step(&mut self, params: &mut [&mut Array2<f32>], grads: &[Option<&Array2<f32>>], lr: f32) {
        assert_eq!(params.len(), grads.len());
        if self.first_moment.is_empty() {
            self.first_moment = params.iter().map(|p| Array2::zeros(p.raw_dim())).collect();
            self.second_moment = self.first_moment.clone();
        }
        assert_eq!(self.first_moment.len(), params.len());

        self.step_count += 1;
        let t = self.step_count as i32;
        let bias1 = 1.0 - self.beta1.powi(t);
        let bias2 = 1.0 - self.beta2.powi(t);

        for ((param, grad), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.first_moment.iter_mut().zip(&mut self.second_moment))
        {
            match grad {
                Some(g) => {
                    assert_eq!(g.raw_dim(), param.raw_dim());
                    m.zip_mut_with(g, |m, &g| *m = self.beta1 * *m + (1.0 - self.beta1) * g);
                    v.zip_mut_with(g, |v, &g| *v = self.beta2 * *v + (1.0 - self.beta2) * g * g);
                }
                None => {
                    m.mapv_inplace(|m| self.beta1 * m);
                    v.mapv_inplace(|v| self.beta2 * v);
                }
            }
            ndarray::Zip::from(&mut **param)
                .and(&*m)
                .and(&*v)
                .for_each(|p, &m, &v| {
                    let m_hat = m / bias1;
                    let v_hat = v / bias2;
                    *p -= lr * m_hat / (v_hat.sqrt() + self.epsilon);
                });
        }
    }
}

impl Default for Adam {
    fn default() -> Self {
        Self::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    /// Two canonical updates on a scalar parameter, checked against hand
    /// evaluation of the update rule with beta1=0.9, beta2=0.999, eps=1e-8.
    #[test]
    fn matches_hand_computed_scalar_updates() {
        let mut adam = Adam::new();
        let mut theta = array![[1.0f32]];
        let lr = 0.1f32;

        // Step 1 with gradient 2.0:
        //   m = 0.1 * 2 = 0.2, v = 0.001 * 4 = 0.004
        //   m_hat = 0.2 / (1 - 0.9) = 2.0
        //   v_hat = 0.004 / (1 - 0.999) = 4.0
        //   theta = 1 - 0.1 * 2 / (2 + 1e-8) = 0.9000000
        let g1 = array![[2.0f32]];
        {
            let mut params: Vec<&mut Array2<f32>> = vec![&mut theta];
            adam.step(&mut params, &[Some(&g1)], lr);
        }
        let expected1 = 1.0 - 0.1 * 2.0 / (4.0f32.sqrt() + 1e-8);
        assert!((theta[[0, 0]] - expected1).abs() < 1e-6, "{}", theta[[0, 0]]);

        // Step 2 with gradient -1.0:
        //   m = 0.9*0.2 + 0.1*(-1) = 0.08
        //   v = 0.999*0.004 + 0.001*1 = 0.004996
        //   m_hat = 0.08 / (1 - 0.81) = 0.42105263
        //   v_hat = 0.004996 / (1 - 0.998001) = 2.4992496
        let g2 = array![[-1.0f32]];
        {
            let mut params: Vec<&mut Array2<f32>> = vec![&mut theta];
            adam.step(&mut params, &[Some(&g2)], lr);
        }
        let m = 0.9f32 * 0.2 + 0.1 * (-1.0);
        let v = 0.999f32 * 0.004 + 0.001 * 1.0;
        let m_hat = m / (1.0 - 0.9f32.powi(2));
        let v_hat = v / (1.0 - 0.999f32.powi(2));
        let expected2 = expected1 - 0.1 * m_hat / (v_hat.sqrt() + 1e-8);
        assert!((theta[[0, 0]] - expected2).abs() < 1e-6, "{}", theta[[0, 0]]);
    }

    #[test]
    fn missing_gradient_decays_moments() {
        let mut adam = Adam::new();
        let mut theta = array![[1.0f32]];
        {
            let mut params: Vec<&mut Array2<f32>> = vec![&mut theta];
            adam.step(&mut params, &[None], 0.1);
        }
        // Zero moments stay zero; the parameter must not move.
        assert_eq!(theta[[0, 0]], 1.0);
    }
}
