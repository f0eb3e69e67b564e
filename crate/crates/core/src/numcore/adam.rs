use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use crate::error::{Error, Result};

/// Adam with classic L2 weight decay: the decay term is added to the
/// gradient before the moment updates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<Matrix>,
    pub v: Vec<Matrix>,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl AdamState {
    /// Zeroed moments shaped like `params`; betas 0.9 / 0.999, eps 1e-8.
    pub fn new<'a>(params: impl IntoIterator<Item = &'a Matrix>, lr: f64, weight_decay: f64) -> Self {
        let m: Vec<Matrix> = params.into_iter().map(|p| Matrix::zeros(p.rows(), p.cols())).collect();
        AdamState { step: 0, v: m.clone(), m, lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay }
    }
}

/// One optimizer update. Parameters are left untouched if any gradient
/// entry is NaN or infinite.
pub fn adam_step(params: &mut [&mut Matrix], grads: &[Matrix], state: &mut AdamState) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::shape(format!(
            "adam: {} params, {} grads, {} moment slots",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for (k, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.shape() != g.shape() || p.shape() != state.m[k].shape() {
            return Err(Error::shape(format!(
                "adam: tensor {k} has param {:?}, grad {:?}, moment {:?}",
                p.shape(),
                g.shape(),
                state.m[k].shape()
            )));
        }
        if let Some(pos) = g.data().iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!(
                "non-finite gradient {} in tensor {k} at entry {pos} (step {})",
                g.data()[pos],
                state.step + 1
            )));
        }
    }

    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);
    let (b1, b2, lr, eps, wd) = (state.beta1, state.beta2, state.lr, state.eps, state.weight_decay);

    for (k, p) in params.iter_mut().enumerate() {
        let g = grads[k].data();
        let m = state.m[k].data_mut();
        let v = state.v[k].data_mut();
        for (i, theta) in p.data_mut().iter_mut().enumerate() {
            let gi = g[i] + wd * *theta;
            m[i] = b1 * m[i] + (1.0 - b1) * gi;
            v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            *theta -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_without_decay_is_identity() {
        let mut p = Matrix::from_rows(&[[1.5, -2.0], [0.25, 8.0]]).unwrap();
        let before = p.clone();
        let mut state = AdamState::new([&p], 1e-3, 0.0);
        for _ in 0..5 {
            adam_step(&mut [&mut p], &[Matrix::zeros(2, 2)], &mut state).unwrap();
        }
        assert_eq!(p, before);
        assert_eq!(state.step, 5);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = Matrix::scalar(0.0);
        let mut state = AdamState::new([&p], 1e-5, 0.0);
        adam_step(&mut [&mut p], &[Matrix::scalar(3.0)], &mut state).unwrap();
        // m_hat = 3, v_hat = 9, so the step is lr * 3 / (3 + eps).
        let expected = -1e-5 * 3.0 / (3.0 + 1e-8);
        assert!((p.data()[0] - expected).abs() < 1e-18);
        assert!((p.data()[0] + 1e-5).abs() < 1e-12);
    }

    #[test]
    fn weight_decay_enters_the_gradient() {
        let mut p = Matrix::scalar(2.0);
        let mut state = AdamState::new([&p], 0.1, 0.5);
        adam_step(&mut [&mut p], &[Matrix::scalar(0.0)], &mut state).unwrap();
        // Effective gradient 0.5 * 2 = 1 > 0, so the parameter shrinks by ~lr.
        assert!((p.data()[0] - (2.0 - 0.1 / (1.0 + 1e-8))).abs() < 1e-12);
    }

    #[test]
    fn identical_inputs_give_identical_outputs() {
        let p0 = Matrix::from_rows(&[[0.3, -0.7, 1.1]]).unwrap();
        let g = Matrix::from_rows(&[[0.01, 2.0, -0.5]]).unwrap();
        let s0 = AdamState::new([&p0], 1e-5, 1e-5);
        let run = || {
            let (mut p, mut s) = (p0.clone(), s0.clone());
            for _ in 0..3 {
                adam_step(&mut [&mut p], std::slice::from_ref(&g), &mut s).unwrap();
            }
            (p, s)
        };
        let (a, sa) = run();
        let (b, sb) = run();
        assert_eq!(
            a.data().iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
            b.data().iter().map(|x| x.to_bits()).collect::<Vec<_>>()
        );
        assert_eq!(sa, sb);
    }

    #[test]
    fn non_finite_gradient_aborts_without_update() {
        let mut p = Matrix::scalar(1.0);
        let mut state = AdamState::new([&p], 1e-3, 0.0);
        let err = adam_step(&mut [&mut p], &[Matrix::scalar(f64::NAN)], &mut state).unwrap_err();
        assert!(matches!(err, Error::Numeric(_)));
        assert_eq!(p.data()[0], 1.0);
        assert_eq!(state.step, 0);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut p = Matrix::zeros(2, 2);
        let mut state = AdamState::new([&p], 1e-3, 0.0);
        assert!(adam_step(&mut [&mut p], &[Matrix::zeros(1, 4)], &mut state).is_err());
    }
}
