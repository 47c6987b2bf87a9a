//! Property tests: controller projections and equivalences on randomized
//! update sequences, an independent brute-force recount oracle for the
//! safe-probability estimator, surrogate monotonicity, and the
//! co-monotonicity of the surrogate with the Monte-Carlo estimate.

use proptest::prelude::*;

use spil_core::controller::{
    separation_gain, update_multiplier, ControlMode, ControllerGains, MultiplierState,
};
use spil_core::env::{EnvParams, Range};
use spil_core::net::NetworkParams;
use spil_core::rng::StreamRng;
use spil_core::rollout::{
    estimate_safe_probability, rescale_gradient, rollout_batch, surrogate_value, StreamKey,
};
use spil_core::surrogate::{phi, SurrogateParams};
use spil_core::GradientAccumulator;

fn gains_for(mode: ControlMode) -> ControllerGains {
    ControllerGains { mode, ..ControllerGains::default() }
}

proptest! {
    /// Integrator and multiplier stay non-negative over any update sequence,
    /// in every mode.
    #[test]
    fn projection_never_negative(
        seq in prop::collection::vec((0.0f64..=1.0, 0.001f64..0.999), 1..40),
        mode_idx in 0usize..4,
    ) {
        let mode = [ControlMode::Penalty, ControlMode::Lagrangian, ControlMode::Pi, ControlMode::SeparatedPi][mode_idx];
        let gains = gains_for(mode);
        let mut st = MultiplierState::default();
        for (p_s, delta) in seq {
            st = update_multiplier(&st, p_s, delta, &gains).unwrap();
            prop_assert!(st.integrator >= 0.0);
            prop_assert!(st.lambda >= 0.0);
        }
    }

    /// PI with ki = 0 reproduces the proportional penalty weight
    /// `alpha_p * (1 - delta - p_s)^+` with `alpha_p = kp`.
    #[test]
    fn pi_with_zero_ki_equals_penalty_weight(
        seq in prop::collection::vec(0.0f64..=1.0, 1..50),
        kp in 0.1f64..100.0,
        delta in 0.001f64..0.5,
    ) {
        let gains = ControllerGains { kp, ki: 0.0, mode: ControlMode::Pi, ..ControllerGains::default() };
        let mut st = MultiplierState::default();
        for p_s in seq {
            st = update_multiplier(&st, p_s, delta, &gains).unwrap();
            let expect = (kp * (1.0 - delta - p_s)).max(0.0);
            prop_assert!((st.lambda - expect).abs() < 1e-12);
        }
    }

    /// PI with kp = 0 reproduces the classic multiplier recursion
    /// `lambda_k = alpha * I_k` with projected violation accumulation.
    #[test]
    fn pi_with_zero_kp_equals_lagrangian_recursion(
        seq in prop::collection::vec(0.0f64..=1.0, 1..50),
        ki in 0.1f64..50.0,
        delta in 0.001f64..0.5,
    ) {
        let gains = ControllerGains { kp: 0.0, ki, mode: ControlMode::Pi, ..ControllerGains::default() };
        let mut st = MultiplierState::default();
        let mut integral = 0.0f64;
        for p_s in seq {
            st = update_multiplier(&st, p_s, delta, &gains).unwrap();
            integral = (integral + (1.0 - delta - p_s)).max(0.0);
            prop_assert!((st.lambda - ki * integral).abs() < 1e-9);
        }
    }

    /// Over any violation sequence from equal starts, the separated
    /// integrator never exceeds the unseparated one.
    #[test]
    fn separated_integrator_never_exceeds_unseparated(
        seq in prop::collection::vec(0.0f64..=1.0, 1..60),
        delta in 0.001f64..0.5,
    ) {
        let sep = gains_for(ControlMode::SeparatedPi);
        let uns = gains_for(ControlMode::Pi);
        let mut a = MultiplierState::default();
        let mut b = MultiplierState::default();
        for p_s in seq {
            a = update_multiplier(&a, p_s, delta, &sep).unwrap();
            b = update_multiplier(&b, p_s, delta, &uns).unwrap();
            prop_assert!(a.integrator <= b.integrator + 1e-12);
        }
    }

    /// Separation gain takes exactly the published branch values.
    #[test]
    fn separation_gain_branches(delta in -1.0f64..1.0) {
        let gains = ControllerGains::default();
        let k = separation_gain(delta, &gains);
        if delta > gains.eps1 {
            prop_assert_eq!(k, 0.0);
        } else if delta > gains.eps2 {
            prop_assert_eq!(k, gains.beta);
        } else {
            prop_assert_eq!(k, 1.0);
        }
    }

    /// Pure function: identical inputs give identical outputs.
    #[test]
    fn update_is_pure(p_s in 0.0f64..=1.0, delta in 0.001f64..0.999, i0 in 0.0f64..5.0) {
        let gains = gains_for(ControlMode::SeparatedPi);
        let st = MultiplierState { delta: 0.0, integrator: i0, lambda: 0.0 };
        let a = update_multiplier(&st, p_s, delta, &gains).unwrap();
        let b = update_multiplier(&st, p_s, delta, &gains).unwrap();
        prop_assert_eq!(a, b);
    }

    /// phi is monotone increasing on a randomized grid.
    #[test]
    fn phi_monotone(x1 in -1.0f64..0.5, gap in 1e-6f64..0.5, tau in 0.01f64..0.5) {
        let sp = SurrogateParams { tau, a1: 0.45, a2: 0.3 };
        prop_assert!(phi(x1, &sp) < phi(x1 + gap, &sp));
    }

    /// Rescaled gradient norm equals ||grad_J|| to 1e-12 relative.
    #[test]
    fn rescale_norm_exact(vals in prop::collection::vec(-10.0f64..10.0, 8), scale in 0.1f64..10.0) {
        let net = NetworkParams::zeros(&[2, 2, 1]);
        let mut gj = GradientAccumulator::zeros_like(&net);
        let mut gp = GradientAccumulator::zeros_like(&net);
        for (k, v) in vals.iter().enumerate() {
            let (i, j) = (k / 2 % 2, k % 2);
            if k < 4 { gj.weights[0].set(i, j, *v); } else { gp.weights[0].set(i, j, v * scale); }
        }
        prop_assume!(gp.norm() > 1e-9);
        let out = rescale_gradient(&gj, &gp);
        let expect = gj.norm();
        prop_assert!((out.norm() - expect).abs() <= 1e-12 * expect.max(1.0));
    }
}

/// Independent brute-force recount of the estimator on randomized batches.
#[test]
fn estimator_matches_brute_force_recount() {
    let env = EnvParams {
        initial_state_ranges: spil_core::env::StateRanges {
            ego_velocity: Range::new(0.0, 10.0),
            front_velocity: Range::new(0.0, 10.0),
            gap: Range::new(2.0, 5.0), // straddle the threshold
        },
        ..EnvParams::default()
    };
    for trial in 0..100 {
        let actor = NetworkParams::init(&[3, 8, 1], &mut StreamRng::derive(&[trial, 50]));
        let key = StreamKey { master_seed: trial, salt: 60, iteration: 0 };
        let batch = rollout_batch(&actor, &env, 16, 8, &key).unwrap();
        let estimate = estimate_safe_probability(&batch).unwrap();
        // oracle: recount directly from the margin arrays
        let mut safe = 0usize;
        for tr in &batch.margins {
            let mut violated = false;
            for &h in tr {
                if h >= 0.0 {
                    violated = true;
                }
            }
            if !violated {
                safe += 1;
            }
        }
        assert_eq!(estimate, safe as f64 / batch.trajectory_count as f64, "trial {trial}");
    }
}

/// The sharp-surrogate objective orders policies the same way the
/// Monte-Carlo safe-probability estimate does (where the latter differs
/// by at least 0.05).
#[test]
fn surrogate_comonotone_with_safe_probability() {
    let env = EnvParams {
        initial_state_ranges: spil_core::env::StateRanges {
            ego_velocity: Range::new(0.0, 10.0),
            front_velocity: Range::new(0.0, 10.0),
            gap: Range::new(2.2, 6.0),
        },
        ..EnvParams::default()
    };
    let sp = SurrogateParams::default(); // tau = 1e-3
    let mut points = Vec::new();
    for seed in 0..12u64 {
        let actor = NetworkParams::init(&[3, 8, 8, 1], &mut StreamRng::derive(&[seed, 70]));
        let key = StreamKey { master_seed: 1234, salt: 80, iteration: 0 }; // common batch draws
        let batch = rollout_batch(&actor, &env, 64, 10, &key).unwrap();
        let p_s = estimate_safe_probability(&batch).unwrap();
        let phi_val = surrogate_value(&actor, &batch, &env, &sp).unwrap();
        points.push((p_s, phi_val));
    }
    let mut compared = 0;
    for i in 0..points.len() {
        for j in 0..points.len() {
            let (pa, fa) = points[i];
            let (pb, fb) = points[j];
            if pa + 0.05 <= pb {
                assert!(fa < fb, "p_s {pa} < {pb} but Phi {fa} >= {fb}");
                compared += 1;
            }
        }
    }
    assert!(compared > 5, "sweep did not produce enough distinct policies");
}
