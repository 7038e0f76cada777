//! Feedforward PI velocity tracking.
//!
//! The longitudinal dynamics behave like a double integrator with a
//! velocity-dependent offset, so a PI controller plus a quadratic
//! feedforward force map tracks the planner's velocity target well.
//! Anti-windup is by conditional integration: the integrator freezes while
//! the output saturates in the direction of the error.

use core::fmt;

#[allow(unused_imports)]
use num_traits::Float;

/// Gains, clamps and the feedforward map `f(v) = c0 + c1 v + c2 v^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PiConfig {
    pub k_p: f64,
    pub k_i: f64,
    /// Integrator clamp, force units; `i_min <= 0 <= i_max`.
    pub i_min: f64,
    pub i_max: f64,
    /// Feedforward coefficients `(c0, c1, c2)`.
    pub ff_coeffs: (f64, f64, f64),
    /// Output force limits, N.
    pub f_min: f64,
    pub f_max: f64,
}

impl Default for PiConfig {
    fn default() -> Self {
        Self {
            k_p: 350.0,
            k_i: 120.0,
            i_min: -400.0,
            i_max: 400.0,
            ff_coeffs: (0.0, 2.0, 0.8),
            f_min: -2400.0,
            f_max: 1400.0,
        }
    }
}

impl PiConfig {
    pub fn validate(&self) -> Result<(), PiError> {
        if !(self.f_min < self.f_max) {
            return Err(PiError::InvalidConfig("f_min must be below f_max"));
        }
        if !(self.i_min <= 0.0 && 0.0 <= self.i_max) {
            return Err(PiError::InvalidConfig("integrator clamp must bracket zero"));
        }
        Ok(())
    }

    pub fn feedforward(&self, v: f64) -> f64 {
        let (c0, c1, c2) = self.ff_coeffs;
        c0 + c1 * v + c2 * v * v
    }
}

/// Integrator state; carries the timestamp of the previous step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PiState {
    pub integrator: f64,
    pub last_t: f64,
}

impl PiState {
    pub fn new(t0: f64) -> Self {
        Self {
            integrator: 0.0,
            last_t: t0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PiError {
    /// `t` did not advance past the previous step.
    NonMonotoneTime { t: f64, last_t: f64 },
    InvalidConfig(&'static str),
}

impl fmt::Display for PiError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PiError::NonMonotoneTime { t, last_t } => {
                write!(f, "time {t} does not advance past {last_t}")
            }
            PiError::InvalidConfig(what) => write!(f, "invalid PI config: {what}"),
        }
    }
}

impl core::error::Error for PiError {}

/// One PI step: returns the commanded force and the advanced state.
///
/// `f = ff(v_target) + k_p e + integrator` with `e = v_target - v_meas`,
/// clamped to `[f_min, f_max]`. The integrator accumulates `k_i e dt`
/// unless the unclamped output saturates in the same direction as the
/// error, and is itself clamped to `[i_min, i_max]`.
pub fn pi_step(
    state: &PiState,
    v_target: f64,
    v_meas: f64,
    t: f64,
    cfg: &PiConfig,
) -> Result<(f64, PiState), PiError> {
    if !(t > state.last_t) {
        return Err(PiError::NonMonotoneTime {
            t,
            last_t: state.last_t,
        });
    }
    let dt = t - state.last_t;
    let e = v_target - v_meas;
    let unclamped = cfg.feedforward(v_target) + cfg.k_p * e + state.integrator;
    let force = unclamped.clamp(cfg.f_min, cfg.f_max);

    let saturated_with_error =
        (unclamped > cfg.f_max && e > 0.0) || (unclamped < cfg.f_min && e < 0.0);
    let integrator = if saturated_with_error {
        state.integrator
    } else {
        (state.integrator + cfg.k_i * e * dt).clamp(cfg.i_min, cfg.i_max)
    };

    Ok((
        force,
        PiState {
            integrator,
            last_t: t,
        },
    ))
}
