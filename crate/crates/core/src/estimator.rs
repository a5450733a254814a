//! Extended Kalman filter with a χ² validation gate.
//!
//! The observation map is the identity (`g(x) = x`, `G = I`), which is what the
//! level sensors provide. The filter is generic in the state dimension so the
//! same code runs the three-tank monitor and small reference problems.

use nalgebra::{SMatrix, SVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A discrete-time, noise-free state transition `x_k = f(x_{k-1}, u_{k-1})`.
pub trait Dynamics<const N: usize> {
    type Input;

    fn transition(&self, x: &SVector<f64, N>, u: &Self::Input) -> SVector<f64, N>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Predicted,
    Updated,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EkfState<const N: usize> {
    pub xhat: SVector<f64, N>,
    pub p: SMatrix<f64, N, N>,
    pub phase: Phase,
}

impl<const N: usize> EkfState<N> {
    /// A prior treated as the a-priori estimate of the first step.
    pub fn prior(xhat: SVector<f64, N>, p: SMatrix<f64, N, N>) -> Self {
        EkfState {
            xhat,
            p,
            phase: Phase::Predicted,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GateConfig {
    pub chi2_threshold: f64,
}

impl Default for GateConfig {
    /// χ² critical value for 3 degrees of freedom at 99%.
    fn default() -> Self {
        GateConfig {
            chi2_threshold: 11.345,
        }
    }
}

/// Which estimate the residual is taken against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResidualMode {
    /// `y - g(x̂⁺)`, falling back to the prediction when the gate rejects.
    #[default]
    Posterior,
    /// `y - g(x̂⁻)`.
    Innovation,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateOutcome {
    /// Squared Mahalanobis distance `νᵀ S⁻¹ ν`.
    pub statistic: f64,
    pub accepted: bool,
}

/// Result of processing one measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct Correction<const N: usize> {
    pub state: EkfState<N>,
    pub gate: GateOutcome,
    pub residual: SVector<f64, N>,
}

fn symmetrize<const N: usize>(p: &SMatrix<f64, N, N>) -> SMatrix<f64, N, N> {
    (p + p.transpose()) * 0.5
}

fn check_finite<const N: usize>(s: &EkfState<N>, what: &str) -> Result<()> {
    if s.xhat.iter().chain(s.p.iter()).all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NumericalFailure(format!("non-finite estimate after {what}")))
    }
}

fn invert_spd<const N: usize>(s: &SMatrix<f64, N, N>) -> Result<SMatrix<f64, N, N>> {
    if let Some(ch) = s.cholesky() {
        return Ok(ch.inverse());
    }
    s.try_inverse()
        .filter(|inv| inv.iter().all(|v| v.is_finite()))
        .ok_or_else(|| Error::NumericalFailure("innovation covariance is singular".to_string()))
}

/// Central finite-difference Jacobian of `model.transition` at `(x, u)`, with
/// per-component step `max(1e-6, 1e-6 |x_i|)`.
pub fn jacobian_f<M, const N: usize>(model: &M, x: &SVector<f64, N>, u: &M::Input) -> SMatrix<f64, N, N>
where
    M: Dynamics<N>,
{
    let mut jac = SMatrix::<f64, N, N>::zeros();
    for j in 0..N {
        let h = (1e-6 * x[j].abs()).max(1e-6);
        let mut plus = *x;
        let mut minus = *x;
        plus[j] += h;
        minus[j] -= h;
        let col = (model.transition(&plus, u) - model.transition(&minus, u)) / (2.0 * h);
        jac.set_column(j, &col);
    }
    jac
}

/// `y - x̂`: the identity observation map makes this a plain difference.
pub fn residual<const N: usize>(y: &SVector<f64, N>, state: &EkfState<N>) -> SVector<f64, N> {
    y - state.xhat
}

#[derive(Debug, Clone)]
pub struct Ekf<M, const N: usize> {
    pub model: M,
    pub q: SMatrix<f64, N, N>,
    pub r: SMatrix<f64, N, N>,
    pub gate: GateConfig,
    pub residual_mode: ResidualMode,
}

impl<M, const N: usize> Ekf<M, N>
where
    M: Dynamics<N>,
{
    pub fn new(model: M, q: SMatrix<f64, N, N>, r: SMatrix<f64, N, N>, gate: GateConfig) -> Self {
        Ekf {
            model,
            q,
            r,
            gate,
            residual_mode: ResidualMode::Posterior,
        }
    }

    pub fn with_residual_mode(mut self, mode: ResidualMode) -> Self {
        self.residual_mode = mode;
        self
    }

    /// A-priori estimate: `x̂⁻ = f(x̂, u)`, `P⁻ = F P Fᵀ + Q`.
    pub fn predict(&self, state: &EkfState<N>, u: &M::Input) -> Result<EkfState<N>> {
        check_finite(state, "previous step")?;
        let f = jacobian_f(&self.model, &state.xhat, u);
        let next = EkfState {
            xhat: self.model.transition(&state.xhat, u),
            p: symmetrize(&(f * state.p * f.transpose() + self.q)),
            phase: Phase::Predicted,
        };
        check_finite(&next, "predict")?;
        Ok(next)
    }

    fn innovation(&self, state: &EkfState<N>, y: &SVector<f64, N>) -> Result<(SVector<f64, N>, SMatrix<f64, N, N>)> {
        if state.phase != Phase::Predicted {
            return Err(Error::NumericalFailure(
                "measurement processing requires a predicted estimate".to_string(),
            ));
        }
        let s = state.p + self.r;
        Ok((y - state.xhat, s))
    }

    /// Validation gate: accepts iff `νᵀ S⁻¹ ν ≤ χ²`.
    pub fn gate(&self, state: &EkfState<N>, y: &SVector<f64, N>) -> Result<GateOutcome> {
        let (nu, s) = self.innovation(state, y)?;
        let statistic = (nu.transpose() * invert_spd(&s)? * nu)[(0, 0)];
        if !statistic.is_finite() {
            return Err(Error::NumericalFailure(format!(
                "gate statistic is {statistic}"
            )));
        }
        Ok(GateOutcome {
            statistic,
            accepted: statistic <= self.gate.chi2_threshold,
        })
    }

    /// Measurement update; the caller is responsible for having passed the gate.
    pub fn update(&self, state: &EkfState<N>, y: &SVector<f64, N>) -> Result<EkfState<N>> {
        let (nu, s) = self.innovation(state, y)?;
        let k = state.p * invert_spd(&s)?;
        let next = EkfState {
            xhat: state.xhat + k * nu,
            p: symmetrize(&((SMatrix::<f64, N, N>::identity() - k) * state.p)),
            phase: Phase::Updated,
        };
        check_finite(&next, "update")?;
        Ok(next)
    }

    /// Gate, update when accepted, and produce the detector residual. On
    /// rejection the prediction is kept unchanged.
    pub fn correct(&self, predicted: &EkfState<N>, y: &SVector<f64, N>) -> Result<Correction<N>> {
        let gate = self.gate(predicted, y)?;
        let state = if gate.accepted {
            self.update(predicted, y)?
        } else {
            predicted.clone()
        };
        let residual = match self.residual_mode {
            ResidualMode::Posterior => residual(y, &state),
            ResidualMode::Innovation => residual(y, predicted),
        };
        Ok(Correction {
            state,
            gate,
            residual,
        })
    }
}
