use super::policy::Policy;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

/// Gradient-descent updates with separate rates for the policy and `log Z`.
#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    lr_policy: f64,
    lr_log_z: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    m_z: f64,
    v_z: f64,
    t: i32,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, num_params: usize, lr_policy: f64, lr_log_z: f64) -> Self {
        let state = if kind == OptimizerKind::Adam { num_params } else { 0 };
        Self {
            kind,
            lr_policy,
            lr_log_z,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; state],
            v: vec![0.0; state],
            m_z: 0.0,
            v_z: 0.0,
            t: 0,
        }
    }

    pub fn step(&mut self, policy: &mut Policy, grad: &[f64], grad_log_z: f64) {
        match self.kind {
            OptimizerKind::Sgd => {
                let lr = self.lr_policy;
                for (p, g) in policy.params_mut().iter_mut().zip(grad) {
                    *p -= lr * g;
                }
                let z = policy.log_z() - self.lr_log_z * grad_log_z;
                policy.set_log_z(z);
            }
            OptimizerKind::Adam => {
                self.t += 1;
                let (b1, b2) = (self.beta1, self.beta2);
                let c1 = 1.0 - b1.powi(self.t);
                let c2 = 1.0 - b2.powi(self.t);
                let lr = self.lr_policy;
                let eps = self.eps;
                for (((p, g), m), v) in policy
                    .params_mut()
                    .iter_mut()
                    .zip(grad)
                    .zip(self.m.iter_mut())
                    .zip(self.v.iter_mut())
                {
                    *m = b1 * *m + (1.0 - b1) * g;
                    *v = b2 * *v + (1.0 - b2) * g * g;
                    *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
                }
                self.m_z = b1 * self.m_z + (1.0 - b1) * grad_log_z;
                self.v_z = b2 * self.v_z + (1.0 - b2) * grad_log_z * grad_log_z;
                let z = policy.log_z() - self.lr_log_z * (self.m_z / c1) / ((self.v_z / c2).sqrt() + eps);
                policy.set_log_z(z);
            }
        }
    }
}
