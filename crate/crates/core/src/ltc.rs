//! Liquid time-constant recurrent cell.
//!
//! The hidden state follows dh/dt = (-h + relu(W_h h + W_in x + b)) / tau(x)
//! with an input-dependent time constant tau(x) = softplus(W_tau x) + eps,
//! integrated by explicit Euler steps. The per-element step ratio dt/tau is
//! clamped to 1 so each update stays a convex combination of the old state
//! and the drive, which bounds the trajectory for any learned W_tau. The
//! final state projects linearly into a refinement token.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Cell parameters as live tensors on some tape.
#[derive(Clone)]
pub struct LtcParams<S: Scalar> {
    /// [hidden, hidden]
    pub w_h: Tensor<S>,
    /// [hidden, input]
    pub w_in: Tensor<S>,
    /// [hidden, input]
    pub w_tau: Tensor<S>,
    /// [hidden]
    pub b: Tensor<S>,
    /// Positive floor added to softplus in tau.
    pub epsilon_tau: S,
}

pub const DEFAULT_EPSILON_TAU: f64 = 1e-3;

impl<S: Scalar> LtcParams<S> {
    pub fn new(
        w_h: Tensor<S>,
        w_in: Tensor<S>,
        w_tau: Tensor<S>,
        b: Tensor<S>,
        epsilon_tau: S,
    ) -> Self {
        let hidden = b.shape()[0];
        assert_eq!(
            w_h.shape(),
            vec![hidden, hidden],
            "ltc: w_h shape {:?} inconsistent with hidden dim {hidden}",
            w_h.shape()
        );
        assert_eq!(
            w_in.shape()[0],
            hidden,
            "ltc: w_in shape {:?} inconsistent with hidden dim {hidden}",
            w_in.shape()
        );
        assert_eq!(
            w_tau.shape(),
            w_in.shape(),
            "ltc: w_tau shape {:?} must match w_in {:?}",
            w_tau.shape(),
            w_in.shape()
        );
        assert!(epsilon_tau > S::ZERO, "ltc: epsilon_tau must be positive");
        LtcParams {
            w_h,
            w_in,
            w_tau,
            b,
            epsilon_tau,
        }
    }

    pub fn hidden_dim(&self) -> usize {
        self.b.shape()[0]
    }

    pub fn input_dim(&self) -> usize {
        self.w_in.shape()[1]
    }
}

/// Euler rollout settings: step count T and step size dt.
#[derive(Debug, Clone, Copy)]
pub struct RolloutConfig {
    pub steps: usize,
    pub dt: f64,
}

impl Default for RolloutConfig {
    fn default() -> Self {
        RolloutConfig { steps: 4, dt: 1.0 }
    }
}

/// tau(x) = softplus(W_tau x) + epsilon; strictly positive for any input.
pub fn tau<S: Scalar>(params: &LtcParams<S>, x: &Tensor<S>) -> Tensor<S> {
    assert_eq!(
        x.shape(),
        vec![params.input_dim()],
        "ltc tau: input shape {:?} does not match input dim {}",
        x.shape(),
        params.input_dim()
    );
    params
        .w_tau
        .matmul(x)
        .softplus()
        .add_const(params.epsilon_tau)
}

/// dh/dt = (-h + relu(W_h h + W_in x + b)) / tau(x).
pub fn ltc_derivative<S: Scalar>(
    params: &LtcParams<S>,
    h: &Tensor<S>,
    x: &Tensor<S>,
) -> Tensor<S> {
    let drive = drive(params, h, x);
    drive.sub(h).div(&tau(params, x))
}

fn drive<S: Scalar>(params: &LtcParams<S>, h: &Tensor<S>, x: &Tensor<S>) -> Tensor<S> {
    assert_eq!(
        h.shape(),
        vec![params.hidden_dim()],
        "ltc: state shape {:?} does not match hidden dim {}",
        h.shape(),
        params.hidden_dim()
    );
    params
        .w_h
        .matmul(h)
        .add(&params.w_in.matmul(x))
        .add(&params.b)
        .relu()
}

/// One Euler update h' = h + min(dt/tau, 1) * (relu(...) - h).
/// Returns the new state and how many elements hit the clamp.
pub fn euler_step<S: Scalar>(
    params: &LtcParams<S>,
    h: &Tensor<S>,
    x: &Tensor<S>,
    dt: f64,
) -> (Tensor<S>, usize) {
    let tau_x = tau(params, x);
    let dt_tensor = h.tape().constant(vec![S::from_f64(dt)], &[1]);
    let ratio_raw = dt_tensor.div(&tau_x);
    let clamp_fires = ratio_raw.value().iter().filter(|&&r| r > S::ONE).count();
    let alpha = ratio_raw.clamp_max(S::ONE);
    let next = h.add(&alpha.mul(&drive(params, h, x).sub(h)));
    (next, clamp_fires)
}

/// Full rollout trace: all T+1 states, the final state, and clamp counts.
pub struct Rollout<S: Scalar> {
    /// h_0 .. h_T.
    pub states: Vec<Tensor<S>>,
    /// Total count of clamped elements across all steps.
    pub clamp_fires: usize,
}

impl<S: Scalar> Rollout<S> {
    pub fn final_state(&self) -> &Tensor<S> {
        self.states.last().expect("rollout always holds h_0")
    }
}

/// Integrate T Euler steps under a fixed input vector. Differentiable
/// end-to-end; errors if a step produces a non-finite state.
pub fn euler_rollout<S: Scalar>(
    params: &LtcParams<S>,
    h0: &Tensor<S>,
    x: &Tensor<S>,
    cfg: &RolloutConfig,
) -> Result<Rollout<S>> {
    assert!(cfg.dt >= 0.0 && cfg.dt.is_finite(), "ltc: dt must be finite and >= 0");
    let mut states = Vec::with_capacity(cfg.steps + 1);
    states.push(h0.clone());
    let mut clamp_fires = 0;
    let mut h = h0.clone();
    for step in 1..=cfg.steps {
        let (next, fires) = euler_step(params, &h, x, cfg.dt);
        clamp_fires += fires;
        if next.value().iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: format!("ltc rollout step {step}"),
            });
        }
        states.push(next.clone());
        h = next;
    }
    Ok(Rollout {
        states,
        clamp_fires,
    })
}

/// Concatenate [GAP(features); GAP(initial_mask); GAP(current_mask)].
/// features: [c,h,w]; masks: [1,h,w] at the same spatial size. Output
/// length is c + 2.
pub fn build_bottleneck_input<S: Scalar>(
    features: &Tensor<S>,
    initial_mask: &Tensor<S>,
    current_mask: &Tensor<S>,
) -> Tensor<S> {
    let fs = features.shape();
    assert_eq!(fs.len(), 3, "bottleneck input: features must be [c,h,w]");
    let spatial = [fs[1], fs[2]];
    for (name, m) in [("initial", initial_mask), ("current", current_mask)] {
        let ms = m.shape();
        assert_eq!(
            ms.len(),
            3,
            "bottleneck input: {name} mask must be [1,h,w], got {ms:?}"
        );
        assert_eq!(
            [ms[1], ms[2]],
            spatial,
            "bottleneck input: {name} mask {ms:?} does not match features {fs:?}"
        );
    }
    Tensor::concat(&[&features.gap(), &initial_mask.gap(), &current_mask.gap()])
}

/// Project the final hidden state into the refinement token.
/// `projection` is [token_dim, hidden].
pub fn refinement_token<S: Scalar>(h_final: &Tensor<S>, projection: &Tensor<S>) -> Tensor<S> {
    projection.matmul(h_final)
}

/// Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) initialization buffers for a
/// cell of the given dims, in parameter order (w_h, w_in, w_tau, b).
pub fn init_buffers<S: Scalar>(
    hidden: usize,
    input: usize,
    rng: &mut crate::rng::Pcg32,
) -> [(Vec<S>, Vec<usize>); 4] {
    let mut uniform = |n: usize, fan_in: usize| -> Vec<S> {
        let bound = 1.0 / (fan_in as f64).sqrt();
        (0..n)
            .map(|_| S::from_f64(rng.uniform(-bound, bound)))
            .collect()
    };
    let w_h = (uniform(hidden * hidden, hidden), vec![hidden, hidden]);
    let w_in = (uniform(hidden * input, input), vec![hidden, input]);
    let w_tau = (uniform(hidden * input, input), vec![hidden, input]);
    let b = (vec![S::ZERO; hidden], vec![hidden]);
    [w_h, w_in, w_tau, b]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Pcg32;
    use crate::tensor::Tape;

    fn zero_params(tape: &Tape<f64>, hidden: usize, input: usize, eps: f64) -> LtcParams<f64> {
        LtcParams::new(
            tape.param(vec![0.0; hidden * hidden], &[hidden, hidden]),
            tape.param(vec![0.0; hidden * input], &[hidden, input]),
            tape.param(vec![0.0; hidden * input], &[hidden, input]),
            tape.param(vec![0.0; hidden], &[hidden]),
            eps,
        )
    }

    #[test]
    fn tau_at_zero_weights_is_ln2_plus_eps() {
        let tape = Tape::new();
        let params = zero_params(&tape, 3, 2, 1e-3);
        let x = tape.constant(vec![0.7, -0.3], &[2]);
        for &v in tau(&params, &x).value().iter() {
            assert!((v - (std::f64::consts::LN_2 + 1e-3)).abs() < 1e-12);
        }
    }

    #[test]
    fn tau_one_logit() {
        // softplus(1) + eps = ln(1+e) + 1e-3
        let tape = Tape::new();
        let params = LtcParams::new(
            tape.param(vec![0.0], &[1, 1]),
            tape.param(vec![0.0], &[1, 1]),
            tape.param(vec![1.0], &[1, 1]),
            tape.param(vec![0.0], &[1]),
            1e-3,
        );
        let x = tape.constant(vec![1.0], &[1]);
        let v = tau(&params, &x).item();
        assert!((v - ((1.0 + std::f64::consts::E).ln() + 1e-3)).abs() < 1e-12);
    }

    #[test]
    fn tau_stays_above_floor_for_huge_negative_logits() {
        let tape = Tape::new();
        let params = LtcParams::new(
            tape.param(vec![0.0], &[1, 1]),
            tape.param(vec![0.0], &[1, 1]),
            tape.param(vec![-200.0], &[1, 1]),
            tape.param(vec![0.0], &[1]),
            1e-3,
        );
        let x = tape.constant(vec![5.0], &[1]);
        let v = tau(&params, &x).item();
        assert!(v >= 1e-3 && v < 1e-3 + 1e-12, "tau={v}");
    }

    #[test]
    fn derivative_is_zero_at_origin_with_zero_params() {
        let tape = Tape::new();
        let params = zero_params(&tape, 4, 3, 1e-3);
        let h = tape.constant(vec![0.0; 4], &[4]);
        let x = tape.constant(vec![1.0, 2.0, 3.0], &[3]);
        assert!(ltc_derivative(&params, &h, &x)
            .value()
            .iter()
            .all(|&v| v == 0.0));
    }

    #[test]
    fn derivative_vanishes_at_constructed_fixed_point() {
        // W_h = 0, b such that relu(W_in x + b) = h.
        let tape = Tape::new();
        let h_star = vec![0.5, 1.5];
        let params = LtcParams::new(
            tape.param(vec![0.0; 4], &[2, 2]),
            tape.param(vec![0.0, 0.0], &[2, 1]),
            tape.param(vec![0.3, -0.2], &[2, 1]),
            tape.param(h_star.clone(), &[2]),
            1e-3,
        );
        let h = tape.constant(h_star, &[2]);
        let x = tape.constant(vec![0.9], &[1]);
        for &v in ltc_derivative(&params, &h, &x).value().iter() {
            assert!(v.abs() < 1e-12);
        }
    }

    #[test]
    fn derivative_scalar_decay_case() {
        // Weights 0, b = -5 so relu term is 0; tau = ln2 + 1e-3;
        // dh/dt at h = 1 is -1/tau.
        let tape = Tape::new();
        let params = LtcParams::new(
            tape.param(vec![0.0], &[1, 1]),
            tape.param(vec![0.0], &[1, 1]),
            tape.param(vec![0.0], &[1, 1]),
            tape.param(vec![-5.0], &[1]),
            1e-3,
        );
        let h = tape.constant(vec![1.0], &[1]);
        let x = tape.constant(vec![2.0], &[1]);
        let v = ltc_derivative(&params, &h, &x).item();
        let expect = -1.0 / (std::f64::consts::LN_2 + 1e-3);
        assert!((v - expect).abs() < 1e-10, "dh/dt = {v}, expect {expect}");
        assert!((v + 1.4406).abs() < 1e-3);
    }

    #[test]
    fn euler_geometric_decay() {
        // dt/tau = 0.5 with zero drive: h halves per step; (0.5)^4 = 0.0625.
        // tau = softplus(0) + eps; pick dt = tau/2.
        let tape = Tape::new();
        let eps = 1e-3;
        let params = LtcParams::new(
            tape.param(vec![0.0], &[1, 1]),
            tape.param(vec![0.0], &[1, 1]),
            tape.param(vec![0.0], &[1, 1]),
            tape.param(vec![-5.0], &[1]),
            eps,
        );
        let tau_v = std::f64::consts::LN_2 + eps;
        let h0 = tape.constant(vec![1.0], &[1]);
        let x = tape.constant(vec![0.0], &[1]);
        let cfg = RolloutConfig {
            steps: 4,
            dt: tau_v / 2.0,
        };
        let rollout = euler_rollout(&params, &h0, &x, &cfg).unwrap();
        assert_eq!(rollout.states.len(), 5);
        assert_eq!(rollout.clamp_fires, 0);
        let h4 = rollout.final_state().item();
        assert!((h4 - 0.0625).abs() < 1e-12, "h4={h4}");
    }

    #[test]
    fn fixed_point_preserved_over_rollout() {
        let tape = Tape::new();
        let h_star = vec![0.25, 2.0, 0.0];
        let params = LtcParams::new(
            tape.param(vec![0.0; 9], &[3, 3]),
            tape.param(vec![0.0; 6], &[3, 2]),
            tape.param(vec![0.1, -0.4, 0.0, 0.2, 0.5, -0.5], &[3, 2]),
            tape.param(h_star.clone(), &[3]),
            1e-3,
        );
        let h0 = tape.constant(h_star.clone(), &[3]);
        let x = tape.constant(vec![1.0, -1.0], &[2]);
        let rollout = euler_rollout(&params, &h0, &x, &RolloutConfig::default()).unwrap();
        for (i, &v) in rollout.final_state().value().iter().enumerate() {
            assert!((v - h_star[i]).abs() < 1e-6);
        }
    }

    #[test]
    fn zero_dt_keeps_state() {
        let tape = Tape::new();
        let params = zero_params(&tape, 2, 2, 1e-3);
        let h0 = tape.constant(vec![0.4, -0.7], &[2]);
        let x = tape.constant(vec![1.0, 1.0], &[2]);
        let rollout = euler_rollout(
            &params,
            &h0,
            &x,
            &RolloutConfig { steps: 1, dt: 0.0 },
        )
        .unwrap();
        assert_eq!(rollout.final_state().value(), h0.value());
    }

    #[test]
    fn tau_positive_under_random_parameters() {
        let mut rng = Pcg32::new(2024, 5);
        for _ in 0..1000 {
            let tape: Tape<f64> = Tape::new();
            let (hidden, input) = (1 + rng.below(6) as usize, 1 + rng.below(6) as usize);
            let draw = |rng: &mut Pcg32, n: usize| -> Vec<f64> {
                (0..n).map(|_| rng.uniform(-5.0, 5.0)).collect()
            };
            let params = LtcParams::new(
                tape.param(draw(&mut rng, hidden * hidden), &[hidden, hidden]),
                tape.param(draw(&mut rng, hidden * input), &[hidden, input]),
                tape.param(draw(&mut rng, hidden * input), &[hidden, input]),
                tape.param(draw(&mut rng, hidden), &[hidden]),
                1e-3,
            );
            let x = tape.constant(draw(&mut rng, input), &[input]);
            assert!(tau(&params, &x).value().iter().all(|&t| t > 0.0));
        }
    }

    #[test]
    fn clamped_rollout_respects_convex_envelope() {
        // With the elementwise clamp, every update is a convex combination
        // of h and the relu drive, so |h_t| never exceeds
        // max(|h_0|, max_t |drive_t|).
        let mut rng = Pcg32::new(99, 3);
        for _ in 0..50 {
            let tape: Tape<f64> = Tape::new();
            let (hidden, input) = (4usize, 3usize);
            let draw = |rng: &mut Pcg32, n: usize| -> Vec<f64> {
                (0..n).map(|_| rng.uniform(-2.0, 2.0)).collect()
            };
            let params = LtcParams::new(
                tape.param(draw(&mut rng, hidden * hidden), &[hidden, hidden]),
                tape.param(draw(&mut rng, hidden * input), &[hidden, input]),
                tape.param(draw(&mut rng, hidden * input), &[hidden, input]),
                tape.param(draw(&mut rng, hidden), &[hidden]),
                1e-3,
            );
            let h0v = draw(&mut rng, hidden);
            let h0 = tape.constant(h0v.clone(), &[hidden]);
            let x = tape.constant(draw(&mut rng, input), &[input]);

            let mut h = h0.clone();
            let mut bound: Vec<f64> = h0v.iter().map(|v| v.abs()).collect();
            for _ in 0..6 {
                let d = drive(&params, &h, &x);
                for (b, &f) in bound.iter_mut().zip(d.value().iter()) {
                    *b = b.max(f.abs());
                }
                let (next, _) = euler_step(&params, &h, &x, 1.0);
                for (i, &v) in next.value().iter().enumerate() {
                    assert!(
                        v.abs() <= bound[i] + 1e-9,
                        "component {i} escaped: {v} vs bound {}",
                        bound[i]
                    );
                }
                h = next;
            }
        }
    }

    #[test]
    fn bottleneck_input_is_gap_concat() {
        let tape: Tape<f64> = Tape::new();
        // Constant features c and masks m1, m2 pool to [c..., m1, m2].
        let c = 4;
        let mut data = Vec::new();
        for ch in 0..c {
            data.extend(std::iter::repeat(ch as f64 * 0.5).take(4));
        }
        let f5 = tape.constant(data, &[c, 2, 2]);
        let m0 = tape.constant(vec![0.25; 4], &[1, 2, 2]);
        let m1 = tape.constant(vec![0.75; 4], &[1, 2, 2]);
        let x = build_bottleneck_input(&f5, &m0, &m1);
        assert_eq!(x.shape(), vec![c + 2]);
        let v = x.value();
        for ch in 0..c {
            assert!((v[ch] - ch as f64 * 0.5).abs() < 1e-12);
        }
        assert!((v[c] - 0.25).abs() < 1e-12);
        assert!((v[c + 1] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn bottleneck_input_lengths_scale_with_channels() {
        // Wide feature maps give c + 2: 512 -> 514, 128 -> 130.
        for c in [512usize, 128] {
            let tape: Tape<f64> = Tape::new();
            let f5 = tape.constant(vec![0.1; c * 4], &[c, 2, 2]);
            let m0 = tape.constant(vec![0.5; 4], &[1, 2, 2]);
            let m1 = tape.constant(vec![0.25; 4], &[1, 2, 2]);
            let x = build_bottleneck_input(&f5, &m0, &m1);
            assert_eq!(x.shape(), vec![c + 2]);
        }
    }

    #[test]
    fn token_projection_cases() {
        let tape: Tape<f64> = Tape::new();
        let h = tape.constant(vec![0.3, -0.4, 1.2], &[3]);
        let identity = tape.constant(
            vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
            &[3, 3],
        );
        assert_eq!(refinement_token(&h, &identity).value(), h.value());
        let zero = tape.constant(vec![0.0; 6], &[2, 3]);
        assert_eq!(refinement_token(&h, &zero).value(), vec![0.0, 0.0]);

        // Random projection matches an independent matrix-vector product.
        let mut rng = Pcg32::new(8, 8);
        let proj_data: Vec<f64> = (0..6).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let proj = tape.constant(proj_data.clone(), &[2, 3]);
        let hv = h.value();
        let got = refinement_token(&h, &proj).value();
        for r in 0..2 {
            let expect: f64 = (0..3).map(|c| proj_data[r * 3 + c] * hv[c]).sum();
            assert!((got[r] - expect).abs() < 1e-12);
        }
    }
}
