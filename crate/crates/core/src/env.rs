//! Stochastic car-following dynamics.
//!
//! Discrete-time linear system over the state `[v_e, v_f, gap]`: the ego
//! vehicle accelerates with the commanded action, the front vehicle's
//! velocity is perturbed by Gaussian noise, and the gap integrates the
//! velocity difference. The safety constraint is a minimum gap.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, CoreResult};
use crate::rng::StreamRng;
use alloc::format;

/// State vector `[ego velocity (m/s), front velocity (m/s), gap (m)]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemState {
    pub ego_velocity: f64,
    pub front_velocity: f64,
    pub gap: f64,
}

impl SystemState {
    pub const DIM: usize = 3;

    pub fn new(ego_velocity: f64, front_velocity: f64, gap: f64) -> Self {
        Self { ego_velocity, front_velocity, gap }
    }

    pub fn is_finite(&self) -> bool {
        self.ego_velocity.is_finite() && self.front_velocity.is_finite() && self.gap.is_finite()
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.ego_velocity, self.front_velocity, self.gap]
    }
}

/// Inclusive `[low, high]` sampling range for one state field.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub low: f64,
    pub high: f64,
}

impl Range {
    pub fn new(low: f64, high: f64) -> Self {
        Self { low, high }
    }
}

/// Per-field initial-state sampling ranges.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StateRanges {
    pub ego_velocity: Range,
    pub front_velocity: Range,
    pub gap: Range,
}

impl Default for StateRanges {
    fn default() -> Self {
        // Gap lower bound stays above the safety threshold so freshly
        // sampled states start safe.
        Self {
            ego_velocity: Range::new(0.0, 10.0),
            front_velocity: Range::new(0.0, 10.0),
            gap: Range::new(3.0, 10.0),
        }
    }
}

/// Environment parameters for the car-following benchmark.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvParams {
    /// Simulation time step T in seconds.
    pub time_step: f64,
    /// Variance of the front-vehicle velocity disturbance, (m/s)^2.
    pub noise_variance: f64,
    /// Lower acceleration bound, m/s^2.
    pub action_low: f64,
    /// Upper acceleration bound, m/s^2.
    pub action_high: f64,
    /// Minimum safe gap in meters; the margin is `gap_threshold - gap`.
    pub gap_threshold: f64,
    /// Reward weights `[w_speed, w_gap, w_effort]`.
    pub reward_weights: [f64; 3],
    pub initial_state_ranges: StateRanges,
}

impl Default for EnvParams {
    fn default() -> Self {
        Self {
            time_step: 0.1,
            noise_variance: 0.7,
            action_low: -4.0,
            action_high: 3.0,
            gap_threshold: 2.0,
            reward_weights: [0.2, 0.1, 0.02],
            initial_state_ranges: StateRanges::default(),
        }
    }
}

impl EnvParams {
    pub fn validate(&self) -> CoreResult<()> {
        if !(self.action_low < self.action_high) {
            return Err(CoreError::Config(format!(
                "env.action_low ({}) must be < env.action_high ({})",
                self.action_low, self.action_high
            )));
        }
        if !(self.time_step > 0.0) {
            return Err(CoreError::Config(format!(
                "env.time_step ({}) must be > 0",
                self.time_step
            )));
        }
        if !(self.noise_variance >= 0.0) {
            return Err(CoreError::Config(format!(
                "env.noise_variance ({}) must be >= 0",
                self.noise_variance
            )));
        }
        for (name, r) in [
            ("ego_velocity", self.initial_state_ranges.ego_velocity),
            ("front_velocity", self.initial_state_ranges.front_velocity),
            ("gap", self.initial_state_ranges.gap),
        ] {
            if r.low > r.high {
                return Err(CoreError::Config(format!(
                    "env.initial_state_ranges.{name}: low ({}) > high ({})",
                    r.low, r.high
                )));
            }
        }
        Ok(())
    }

    /// Midpoint of the action interval (center of the squashed output).
    #[inline]
    pub fn action_mid(&self) -> f64 {
        0.5 * (self.action_low + self.action_high)
    }

    /// Half-width of the action interval.
    #[inline]
    pub fn action_half_range(&self) -> f64 {
        0.5 * (self.action_high - self.action_low)
    }
}

/// One step of the linear dynamics.
///
/// `[v_e, v_f, gap] -> [v_e + T*u, v_f + T*xi, gap + T*(v_f - v_e)]`
pub fn step(
    state: &SystemState,
    action: f64,
    noise: f64,
    params: &EnvParams,
) -> CoreResult<SystemState> {
    if !state.is_finite() {
        return Err(CoreError::NonFinite("step state"));
    }
    if !action.is_finite() {
        return Err(CoreError::NonFinite("step action"));
    }
    if !noise.is_finite() {
        return Err(CoreError::NonFinite("step noise"));
    }
    Ok(step_unchecked(state, action, noise, params.time_step))
}

/// Same formula as [`step`] without finiteness checks; the batched rollout
/// path uses this so taped and plain evaluation are bit-identical.
#[inline]
pub fn step_unchecked(state: &SystemState, action: f64, noise: f64, dt: f64) -> SystemState {
    SystemState {
        ego_velocity: state.ego_velocity + dt * action,
        front_velocity: state.front_velocity + dt * noise,
        gap: state.gap + dt * (state.front_velocity - state.ego_velocity),
    }
}

/// Stage reward `w0*v_e - w1*gap - w2*u^2`.
#[inline]
pub fn reward(state: &SystemState, action: f64, params: &EnvParams) -> f64 {
    let [w0, w1, w2] = params.reward_weights;
    w0 * state.ego_velocity - w1 * state.gap - w2 * action * action
}

/// Constraint margin `h(x) = gap_threshold - gap`; negative is safe.
#[inline]
pub fn constraint_margin(state: &SystemState, params: &EnvParams) -> f64 {
    params.gap_threshold - state.gap
}

/// One disturbance draw, `N(0, noise_variance)`.
#[inline]
pub fn sample_noise(rng: &mut StreamRng, params: &EnvParams) -> f64 {
    rng.normal(0.0, libm::sqrt(params.noise_variance))
}

/// Draw each state field independently uniform within its configured range.
pub fn sample_initial_state(rng: &mut StreamRng, params: &EnvParams) -> CoreResult<SystemState> {
    let r = &params.initial_state_ranges;
    for (name, range) in [
        ("ego_velocity", r.ego_velocity),
        ("front_velocity", r.front_velocity),
        ("gap", r.gap),
    ] {
        if range.low > range.high {
            return Err(CoreError::Config(format!(
                "initial_state_ranges.{name}: low > high"
            )));
        }
    }
    Ok(SystemState {
        ego_velocity: rng.uniform(r.ego_velocity.low, r.ego_velocity.high),
        front_velocity: rng.uniform(r.front_velocity.low, r.front_velocity.high),
        gap: rng.uniform(r.gap.low, r.gap.high),
    })
}
