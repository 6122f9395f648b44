use crate::error::{shape_err, Result};
use crate::params::Params;
use crate::scalar::Real;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    m: Vec<Tensor<T>>,
    v: Vec<Tensor<T>>,
    t: u64,
}

impl<T: Real> AdamState<T> {
    pub fn new(params: &Params<T>) -> Self {
        let zeros: Vec<_> = params.iter().map(|(_, t)| Tensor::zeros(t.shape())).collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }

    /// Number of steps taken so far.
    pub fn step_count(&self) -> u64 {
        self.t
    }
}

/// One bias-corrected Adam update; the step counter advances before use so
/// the first call runs with `t = 1`.
pub fn adam_step<T: Real>(
    params: &mut Params<T>,
    grads: &[Tensor<T>],
    state: &mut AdamState<T>,
    cfg: &AdamConfig,
) -> Result<()> {
    if grads.len() != params.len() || state.m.len() != params.len() {
        return Err(shape_err(
            "adam_step",
            format!("{} params, {} grads, {} moments", params.len(), grads.len(), state.m.len()),
        ));
    }
    state.t += 1;
    let t = state.t as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    let (b1, b2) = (T::from_f64(cfg.beta1), T::from_f64(cfg.beta2));
    let (one_b1, one_b2) = (T::from_f64(1.0 - cfg.beta1), T::from_f64(1.0 - cfg.beta2));
    let (inv_bc1, inv_bc2) = (T::from_f64(1.0 / bc1), T::from_f64(1.0 / bc2));
    let (lr, eps) = (T::from_f64(cfg.lr), T::from_f64(cfg.eps));
    for (((p, g), m), v) in params.tensors_mut().zip(grads).zip(&mut state.m).zip(&mut state.v) {
        if p.shape() != g.shape() {
            return Err(shape_err("adam_step", format!("{:?} vs {:?}", p.shape(), g.shape())));
        }
        for (((pv, &gv), mv), vv) in p
            .data_mut()
            .iter_mut()
            .zip(g.data())
            .zip(m.data_mut())
            .zip(v.data_mut())
        {
            *mv = b1 * *mv + one_b1 * gv;
            *vv = b2 * *vv + one_b2 * gv * gv;
            let m_hat = *mv * inv_bc1;
            let v_hat = *vv * inv_bc2;
            *pv -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(v: f64) -> Params<f64> {
        let mut p = Params::new();
        p.push("x", Tensor::scalar(v));
        p
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = single(0.5);
        let mut st = AdamState::new(&p);
        let cfg = AdamConfig { lr: 0.01, ..Default::default() };
        adam_step(&mut p, &[Tensor::scalar(1.0)], &mut st, &cfg).unwrap();
        // m_hat = v_hat = 1
        let want = 0.5 - 0.01 / (1.0 + 1e-8);
        assert!((p.tensor(0).item() - want).abs() < 1e-15);
        assert_eq!(st.step_count(), 1);
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = single(0.5);
        let mut st = AdamState::new(&p);
        adam_step(&mut p, &[Tensor::scalar(0.0)], &mut st, &AdamConfig::default()).unwrap();
        assert_eq!(p.tensor(0).item(), 0.5);
    }

    #[test]
    fn mismatched_grads_rejected() {
        let mut p = single(0.5);
        let mut st = AdamState::new(&p);
        assert!(adam_step(&mut p, &[], &mut st, &AdamConfig::default()).is_err());
    }
}
