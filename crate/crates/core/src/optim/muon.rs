use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{newton_schulz, Matrix, NS_DEFAULT_ITERS};
use crate::model::Tensor;
use crate::Scalar;

/// Muon hyperparameters.
///
/// `rms_scale` multiplies the orthogonalized update by `0.2·√max(rows, cols)`.
/// `nesterov` orthogonalizes `μM + G` instead of `M`. Both are off by default.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MuonSpec<T> {
    pub eta: T,
    pub mu: T,
    pub lambda: T,
    pub ns_iters: usize,
    pub rms_scale: bool,
    pub nesterov: bool,
}

impl<T: Scalar> Default for MuonSpec<T> {
    fn default() -> Self {
        Self {
            eta: T::lit(1e-2),
            mu: T::lit(0.95),
            lambda: T::zero(),
            ns_iters: NS_DEFAULT_ITERS,
            rms_scale: false,
            nesterov: false,
        }
    }
}

impl<T: Scalar> MuonSpec<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > T::zero()) {
            return Err(Error::InvalidConfig(format!("muon eta must be > 0, got {}", self.eta)));
        }
        if !(self.mu >= T::zero() && self.mu < T::one()) {
            return Err(Error::InvalidConfig(format!("muon mu must lie in [0, 1), got {}", self.mu)));
        }
        if !(self.lambda >= T::zero()) {
            return Err(Error::InvalidConfig("muon lambda must be >= 0".into()));
        }
        if self.ns_iters == 0 {
            return Err(Error::InvalidConfig("muon ns_iters must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MuonState<T> {
    pub momentum: Matrix<T>,
}

impl<T: Scalar> MuonState<T> {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self {
            momentum: Matrix::zeros(rows, cols),
        }
    }
}

/// `M ← μM + G`, no dampening.
pub fn sgd_momentum_accumulate<T: Scalar>(
    grad: &Matrix<T>,
    state: &mut MuonState<T>,
    mu: T,
) -> Result<()> {
    if grad.shape() != state.momentum.shape() {
        return Err(state.momentum.mismatch(grad, "momentum accumulate"));
    }
    for (m, &g) in state
        .momentum
        .as_mut_slice()
        .iter_mut()
        .zip(grad.as_slice())
    {
        *m = mu * *m + g;
    }
    Ok(())
}

/// One Muon step on a 2D parameter, in place.
///
/// The momentum is orthogonalized with Newton–Schulz and the parameter
/// moves by `−η(scale·O + λW)`. An all-zero momentum skips the
/// orthogonalization and leaves only the decay term.
pub fn muon_step<T: Scalar>(
    name: &str,
    param: &mut Tensor<T>,
    grad: &Tensor<T>,
    state: &mut MuonState<T>,
    spec: &MuonSpec<T>,
) -> Result<()> {
    let [rows, cols] = param.shape()[..] else {
        return Err(Error::NotMatrix {
            name: name.to_string(),
            shape: param.shape().to_vec(),
        });
    };
    if grad.shape() != param.shape() || state.momentum.shape() != (rows, cols) {
        let (r, c) = state.momentum.shape();
        let actual = if grad.shape() != param.shape() {
            grad.shape().to_vec()
        } else {
            vec![r, c]
        };
        return Err(Error::ShapeMismatch {
            name: name.to_string(),
            expected: param.shape().to_vec(),
            actual,
        });
    }
    if !grad.is_finite() {
        return Err(Error::NonFinite(format!("gradient of `{name}`")));
    }
    let g = grad.to_matrix().expect("checked 2D");
    sgd_momentum_accumulate(&g, state, spec.mu)?;

    let source = if spec.nesterov {
        Matrix::from_raw(
            rows,
            cols,
            state
                .momentum
                .as_slice()
                .iter()
                .zip(g.as_slice())
                .map(|(&m, &gi)| spec.mu * m + gi)
                .collect(),
        )
    } else {
        state.momentum.clone()
    };

    let decay = T::one() - spec.eta * spec.lambda;
    if source.is_all_zero() {
        param.as_mut_slice().iter_mut().for_each(|p| *p *= decay);
        return Ok(());
    }
    let ortho = newton_schulz(&source, spec.ns_iters)?;
    let scale = if spec.rms_scale {
        T::lit(0.2) * T::lit(rows.max(cols) as f64).sqrt()
    } else {
        T::one()
    };
    let step = spec.eta * scale;
    for (p, &o) in param.as_mut_slice().iter_mut().zip(ortho.as_slice()) {
        *p = *p * decay - step * o;
    }
    Ok(())
}
