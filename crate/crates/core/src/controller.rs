//! Lagrange-multiplier adaptation as proportional-integral feedback.
//!
//! The constraint violation `delta = 1 - delta_threshold - p_s` is the
//! feedback error; the multiplier is `(K_P*delta + K_I*I)^+` where the
//! integrator `I` accumulates `K_S * delta`. The separation gain `K_S`
//! freezes or attenuates the integrator while the error is large, which
//! prevents multiplier overshoot from unsafe initial policies.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, CoreResult};
use alloc::format;

/// Multiplier adaptation mode.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlMode {
    /// Proportional only: `lambda = (K_P * delta)^+`.
    Penalty,
    /// Integral only: `lambda = (K_I * I)^+` (traditional Lagrangian).
    Lagrangian,
    /// Proportional-integral, integrator always active (`K_S = 1`).
    Pi,
    /// Proportional-integral with integral separation.
    SeparatedPi,
}

impl ControlMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            ControlMode::Penalty => "penalty",
            ControlMode::Lagrangian => "lagrangian",
            ControlMode::Pi => "pi",
            ControlMode::SeparatedPi => "separated_pi",
        }
    }
}

/// Controller gains and separation thresholds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControllerGains {
    pub kp: f64,
    pub ki: f64,
    /// Attenuation applied in the middle separation band, in (0, 1).
    pub beta: f64,
    /// Upper separation threshold; the integrator freezes above it.
    pub eps1: f64,
    /// Lower separation threshold; full accumulation below it.
    pub eps2: f64,
    pub mode: ControlMode,
}

impl Default for ControllerGains {
    fn default() -> Self {
        Self { kp: 15.0, ki: 0.6, beta: 0.3, eps1: 0.2, eps2: 0.05, mode: ControlMode::SeparatedPi }
    }
}

impl ControllerGains {
    pub fn validate(&self) -> CoreResult<()> {
        if self.kp < 0.0 {
            return Err(CoreError::Config(format!("gains.kp ({}) must be >= 0", self.kp)));
        }
        if self.ki < 0.0 {
            return Err(CoreError::Config(format!("gains.ki ({}) must be >= 0", self.ki)));
        }
        if self.mode == ControlMode::SeparatedPi {
            if !(self.beta > 0.0 && self.beta < 1.0) {
                return Err(CoreError::Config(format!(
                    "gains.beta ({}) must be in (0, 1)",
                    self.beta
                )));
            }
            if !(self.eps1 > self.eps2 && self.eps2 > 0.0) {
                return Err(CoreError::Config(format!(
                    "gains.eps1 ({}) > gains.eps2 ({}) > 0 required",
                    self.eps1, self.eps2
                )));
            }
        }
        Ok(())
    }
}

/// Proportional error, integrator and multiplier after an update.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultiplierState {
    /// Signed constraint violation `1 - delta_threshold - p_s`.
    pub delta: f64,
    /// Accumulated (projected) violation, always >= 0.
    pub integrator: f64,
    /// Lagrange multiplier, always >= 0.
    pub lambda: f64,
}

impl Default for MultiplierState {
    fn default() -> Self {
        Self { delta: 0.0, integrator: 0.0, lambda: 0.0 }
    }
}

/// Separation gain `K_S` for the separated-PI mode.
///
/// Branch boundaries are assigned to the smaller-`delta` side:
/// `delta > eps1 -> 0`, `eps2 < delta <= eps1 -> beta`, `delta <= eps2 -> 1`.
pub fn separation_gain(delta: f64, gains: &ControllerGains) -> f64 {
    if delta > gains.eps1 {
        0.0
    } else if delta > gains.eps2 {
        gains.beta
    } else {
        1.0
    }
}

/// One multiplier update from a fresh safe-probability estimate.
pub fn update_multiplier(
    state: &MultiplierState,
    p_s: f64,
    delta_threshold: f64,
    gains: &ControllerGains,
) -> CoreResult<MultiplierState> {
    if !(0.0..=1.0).contains(&p_s) {
        return Err(CoreError::Contract("p_s outside [0, 1]"));
    }
    if !(delta_threshold > 0.0 && delta_threshold < 1.0) {
        return Err(CoreError::Config(format!(
            "delta_threshold ({delta_threshold}) must be in (0, 1)"
        )));
    }
    let delta = 1.0 - delta_threshold - p_s;
    let k_s = match gains.mode {
        ControlMode::SeparatedPi => separation_gain(delta, gains),
        _ => 1.0,
    };
    let integrator = (state.integrator + k_s * delta).max(0.0);
    let lambda = match gains.mode {
        ControlMode::Penalty => (gains.kp * delta).max(0.0),
        ControlMode::Lagrangian => (gains.ki * integrator).max(0.0),
        ControlMode::Pi | ControlMode::SeparatedPi => {
            (gains.kp * delta + gains.ki * integrator).max(0.0)
        }
    };
    Ok(MultiplierState { delta, integrator, lambda })
}
