use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Tensor;
use crate::Scalar;

/// Adam hyperparameters. `lambda > 0` turns on decoupled (AdamW) weight decay.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamSpec<T> {
    pub eta: T,
    pub beta1: T,
    pub beta2: T,
    pub epsilon: T,
    pub lambda: T,
}

impl<T: Scalar> Default for AdamSpec<T> {
    fn default() -> Self {
        Self {
            eta: T::lit(1e-3),
            beta1: T::lit(0.9),
            beta2: T::lit(0.999),
            epsilon: T::lit(1e-8),
            lambda: T::zero(),
        }
    }
}

impl<T: Scalar> AdamSpec<T> {
    pub fn validate(&self) -> Result<()> {
        let unit = |b: T| b >= T::zero() && b < T::one();
        if !(self.eta > T::zero()) {
            return Err(Error::InvalidConfig(format!("adam eta must be > 0, got {}", self.eta)));
        }
        if !unit(self.beta1) || !unit(self.beta2) {
            return Err(Error::InvalidConfig(format!(
                "adam betas must lie in [0, 1), got {} and {}",
                self.beta1, self.beta2
            )));
        }
        if !(self.epsilon > T::zero()) {
            return Err(Error::InvalidConfig("adam epsilon must be > 0".into()));
        }
        if !(self.lambda >= T::zero()) {
            return Err(Error::InvalidConfig("adam lambda must be >= 0".into()));
        }
        Ok(())
    }
}

/// First/second moment buffers and step counter for one parameter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState<T> {
    pub m: Tensor<T>,
    pub v: Tensor<T>,
    pub t: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(shape: &[usize]) -> Self {
        Self {
            m: Tensor::zeros(shape),
            v: Tensor::zeros(shape),
            t: 0,
        }
    }
}

/// One Adam/AdamW step on `param`, in place.
///
/// `m̂ / (√v̂ + ε)` uses the bias-corrected moments; the decay factor
/// `1 − ηλ` multiplies the previous value, so `λ = 0` leaves plain Adam.
pub fn adam_step<T: Scalar>(
    name: &str,
    param: &mut Tensor<T>,
    grad: &Tensor<T>,
    state: &mut AdamState<T>,
    spec: &AdamSpec<T>,
) -> Result<()> {
    for other in [grad.shape(), state.m.shape(), state.v.shape()] {
        if other != param.shape() {
            return Err(Error::ShapeMismatch {
                name: name.to_string(),
                expected: param.shape().to_vec(),
                actual: other.to_vec(),
            });
        }
    }
    if !grad.is_finite() {
        return Err(Error::NonFinite(format!("gradient of `{name}`")));
    }

    state.t += 1;
    let t = i32::try_from(state.t).unwrap_or(i32::MAX);
    let (b1, b2) = (spec.beta1, spec.beta2);
    let bc1 = T::one() - b1.powi(t);
    let bc2 = T::one() - b2.powi(t);
    let decay = T::one() - spec.eta * spec.lambda;

    let m = state.m.as_mut_slice();
    let v = state.v.as_mut_slice();
    for (((p, &g), mi), vi) in param
        .as_mut_slice()
        .iter_mut()
        .zip(grad.as_slice())
        .zip(m.iter_mut())
        .zip(v.iter_mut())
    {
        *mi = b1 * *mi + (T::one() - b1) * g;
        *vi = b2 * *vi + (T::one() - b2) * g * g;
        let m_hat = *mi / bc1;
        let v_hat = *vi / bc2;
        *p = *p * decay - spec.eta * (m_hat / (v_hat.sqrt() + spec.epsilon));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn scalar(x: f64) -> Tensor<f64> {
        Tensor::vector(vec![x])
    }

    /// Eqs. written out by hand for a scalar parameter.
    fn unrolled(theta0: f64, grads: &[f64], s: &AdamSpec<f64>) -> Vec<f64> {
        let (mut m, mut v, mut th) = (0.0, 0.0, theta0);
        let mut out = Vec::new();
        for (i, &g) in grads.iter().enumerate() {
            let t = (i + 1) as i32;
            m = s.beta1 * m + (1.0 - s.beta1) * g;
            v = s.beta2 * v + (1.0 - s.beta2) * g * g;
            let mh = m / (1.0 - s.beta1.powi(t));
            let vh = v / (1.0 - s.beta2.powi(t));
            th -= s.eta * (mh / (vh.sqrt() + s.epsilon) + s.lambda * th);
            out.push(th);
        }
        out
    }

    #[test]
    fn zero_grad_fresh_state_is_noop() {
        let spec = AdamSpec::<f64>::default();
        let mut p = Tensor::vector(vec![0.3, -1.2]);
        let mut st = AdamState::new(&[2]);
        adam_step("p", &mut p, &Tensor::zeros(&[2]), &mut st, &spec).unwrap();
        assert_eq!(p.as_slice(), &[0.3, -1.2]);
        assert_eq!(st.t, 1);
    }

    #[test]
    fn first_step_matches_hand_values() {
        let spec = AdamSpec { eta: 0.1, ..AdamSpec::default() };
        let mut p = scalar(0.0);
        let mut st = AdamState::new(&[1]);
        adam_step("p", &mut p, &scalar(1.0), &mut st, &spec).unwrap();
        assert!((st.m.as_slice()[0] - 0.1).abs() < 1e-15);
        assert!((st.v.as_slice()[0] - 0.001).abs() < 1e-15);
        assert!((p.as_slice()[0] + 0.1 / (1.0 + 1e-8)).abs() < 1e-12);

        let want = unrolled(0.0, &[1.0, 1.0, 1.0], &spec);
        for step in 1..3 {
            adam_step("p", &mut p, &scalar(1.0), &mut st, &spec).unwrap();
            assert!((p.as_slice()[0] - want[step]).abs() < 1e-12);
        }
    }

    #[test]
    fn decoupled_decay_closed_form() {
        let spec = AdamSpec { eta: 0.1, lambda: 0.01, ..AdamSpec::default() };
        let theta0 = 2.5;
        let mut p = scalar(theta0);
        let mut st = AdamState::new(&[1]);
        let mut iterated = theta0;
        for t in 1..=50 {
            adam_step("p", &mut p, &scalar(0.0), &mut st, &spec).unwrap();
            iterated *= 1.0 - 0.1 * 0.01;
            assert_eq!(p.as_slice()[0], iterated);
            let closed = theta0 * (1.0f64 - 0.001).powi(t);
            assert!((p.as_slice()[0] - closed).abs() <= 1e-14 * closed.abs());
        }
    }

    #[test]
    fn errors() {
        let spec = AdamSpec::<f64>::default();
        let mut st = AdamState::new(&[2]);
        let mut p = Tensor::vector(vec![0.0, 0.0]);
        let err = adam_step("w", &mut p, &scalar(1.0), &mut st, &spec).unwrap_err();
        assert!(matches!(err, Error::ShapeMismatch { .. }));
        let bad = Tensor::vector(vec![1.0, f64::NAN]);
        let err = adam_step("emb", &mut p, &bad, &mut st, &spec).unwrap_err();
        assert!(err.to_string().contains("emb"));
    }

    #[test]
    fn spec_validation() {
        assert!(AdamSpec::<f64>::default().validate().is_ok());
        assert!(AdamSpec { beta1: 1.0, ..AdamSpec::<f64>::default() }.validate().is_err());
        assert!(AdamSpec { eta: 0.0, ..AdamSpec::<f64>::default() }.validate().is_err());
        assert!(AdamSpec { lambda: -1.0, ..AdamSpec::<f64>::default() }.validate().is_err());
    }

    proptest! {
        #[test]
        fn second_moment_stays_nonnegative(grads in prop::collection::vec(-1e3f64..1e3, 1..30)) {
            let spec = AdamSpec::<f64>::default();
            let mut p = scalar(0.0);
            let mut st = AdamState::new(&[1]);
            for (i, g) in grads.iter().enumerate() {
                adam_step("p", &mut p, &scalar(*g), &mut st, &spec).unwrap();
                prop_assert!(st.v.as_slice()[0] >= 0.0);
                prop_assert_eq!(st.t, i as u64 + 1);
            }
        }

        #[test]
        fn first_step_magnitude_is_scale_free(g in prop_oneof![-10.0f64..-1e-2, 1e-2f64..10.0]) {
            let spec = AdamSpec::<f64>::default();
            let step = |g: f64| {
                let mut p = scalar(0.0);
                let mut st = AdamState::new(&[1]);
                adam_step("p", &mut p, &scalar(g), &mut st, &spec).unwrap();
                p.as_slice()[0]
            };
            let (a, b) = (step(g), step(100.0 * g));
            prop_assert!(((a - b) / a).abs() < 1e-6);
        }
    }
}
