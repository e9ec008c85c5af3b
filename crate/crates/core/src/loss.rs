//! Training objective: pixel losses (BCE from logits, soft Dice), the
//! Sobel-gradient boundary alignment term, and the deep-supervision
//! weighted sum over the main and two auxiliary heads.
//!
//! Auxiliary targets are the full-resolution ground truth downsampled by
//! area averaging and thresholded at 0.5. The boundary term applies to the
//! main head only, and the structural map enters as a constant (no
//! gradient flows back into the extractor).

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Deep-supervision weights. Defaults: main 1.0, aux 0.4/0.2, boundary 0.5.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub lambda_main: f64,
    pub lambda_aux1: f64,
    pub lambda_aux2: f64,
    pub lambda_bal: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lambda_main: 1.0,
            lambda_aux1: 0.4,
            lambda_aux2: 0.2,
            lambda_bal: 0.5,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda_main", self.lambda_main),
            ("lambda_aux1", self.lambda_aux1),
            ("lambda_aux2", self.lambda_aux2),
            ("lambda_bal", self.lambda_bal),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::config(format!("{name} must be >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// Per-component loss values of one forward pass.
#[derive(Debug, Clone, Copy, Default)]
pub struct LossBundle {
    pub bce_main: f64,
    pub dice_main: f64,
    pub bce_a1: f64,
    pub dice_a1: f64,
    pub bce_a2: f64,
    pub dice_a2: f64,
    pub bal: f64,
    pub total: f64,
}

impl LossBundle {
    /// The weighted sum the `total` field must reproduce.
    pub fn weighted_total(&self, w: &LossWeights) -> f64 {
        w.lambda_main * (self.bce_main + self.dice_main)
            + w.lambda_aux1 * (self.bce_a1 + self.dice_a1)
            + w.lambda_aux2 * (self.bce_a2 + self.dice_a2)
            + w.lambda_bal * self.bal
    }

    pub fn add_assign(&mut self, other: &LossBundle) {
        self.bce_main += other.bce_main;
        self.dice_main += other.dice_main;
        self.bce_a1 += other.bce_a1;
        self.dice_a1 += other.dice_a1;
        self.bce_a2 += other.bce_a2;
        self.dice_a2 += other.dice_a2;
        self.bal += other.bal;
        self.total += other.total;
    }

    pub fn scaled(&self, f: f64) -> LossBundle {
        LossBundle {
            bce_main: self.bce_main * f,
            dice_main: self.dice_main * f,
            bce_a1: self.bce_a1 * f,
            dice_a1: self.dice_a1 * f,
            bce_a2: self.bce_a2 * f,
            dice_a2: self.dice_a2 * f,
            bal: self.bal * f,
            total: self.total * f,
        }
    }

    pub fn log_line(&self, epoch: usize) -> String {
        format!(
            "epoch={} bce_main={:.6} dice_main={:.6} bce_a1={:.6} dice_a1={:.6} bce_a2={:.6} dice_a2={:.6} bal={:.6} total={:.6}",
            epoch,
            self.bce_main,
            self.dice_main,
            self.bce_a1,
            self.dice_a1,
            self.bce_a2,
            self.dice_a2,
            self.bal,
            self.total
        )
    }
}

/// Mean binary cross-entropy from logits, in the stable softplus form:
/// mean(t * softplus(-z) + (1-t) * softplus(z)).
pub fn bce_loss<S: Scalar>(logits: &Tensor<S>, target: &Tensor<S>) -> Tensor<S> {
    assert_eq!(
        logits.shape(),
        target.shape(),
        "bce_loss: shape mismatch {:?} vs {:?}",
        logits.shape(),
        target.shape()
    );
    let one_minus_t = target.neg().add_const(S::ONE);
    let pos = target.mul(&logits.neg().softplus());
    let neg = one_minus_t.mul(&logits.softplus());
    pos.add(&neg).mean_all()
}

/// Soft Dice loss: 1 - (2*sum(p*t) + smooth) / (sum(p) + sum(t) + smooth).
pub fn dice_loss<S: Scalar>(probs: &Tensor<S>, target: &Tensor<S>, smooth: S) -> Tensor<S> {
    assert_eq!(
        probs.shape(),
        target.shape(),
        "dice_loss: shape mismatch {:?} vs {:?}",
        probs.shape(),
        target.shape()
    );
    let two = S::ONE + S::ONE;
    let intersection = probs.mul(target).sum_all();
    let numerator = intersection.scale(two).add_const(smooth);
    let denominator = probs.sum_all().add(&target.sum_all()).add_const(smooth);
    numerator.div(&denominator).neg().add_const(S::ONE)
}

/// 3x3 Sobel gradient pair (Gx, Gy) with reflect padding; accepts [h,w] or
/// [1,h,w] and returns [1,h,w] fields.
pub fn sobel_gradients<S: Scalar>(field: &Tensor<S>) -> (Tensor<S>, Tensor<S>) {
    let shape = field.shape();
    let field = match shape.len() {
        2 => field.reshape(&[1, shape[0], shape[1]]),
        3 if shape[0] == 1 => field.clone(),
        _ => panic!("sobel_gradients: expected [h,w] or [1,h,w], got {shape:?}"),
    };
    let fshape = field.shape();
    let (h, w) = (fshape[1], fshape[2]);
    assert!(
        h >= 3 && w >= 3,
        "sobel_gradients: field {h}x{w} smaller than the 3x3 kernel"
    );
    let tape = field.tape();
    let kx: Vec<S> = [-1.0, 0.0, 1.0, -2.0, 0.0, 2.0, -1.0, 0.0, 1.0]
        .iter()
        .map(|&v| S::from_f64(v))
        .collect();
    let ky: Vec<S> = [-1.0, -2.0, -1.0, 0.0, 0.0, 0.0, 1.0, 2.0, 1.0]
        .iter()
        .map(|&v| S::from_f64(v))
        .collect();
    let kx = tape.constant(kx, &[1, 1, 3, 3]);
    let ky = tape.constant(ky, &[1, 1, 3, 3]);
    let padded = field.reflect_pad(1);
    (
        padded.conv2d(&kx, None, 1, 0),
        padded.conv2d(&ky, None, 1, 0),
    )
}

/// Boundary alignment: MSE between Sobel gradient fields of the predicted
/// probability map and of the (constant) structural mean channel, averaged
/// over pixels and both gradient components. The mean channel is resized
/// bilinearly to the prediction resolution when sizes differ.
pub fn bal_loss<S: Scalar>(pred_logits: &Tensor<S>, lss_mean: &Tensor<S>) -> Tensor<S> {
    let probs = match pred_logits.shape().len() {
        2 => {
            let s = pred_logits.shape();
            pred_logits.reshape(&[1, s[0], s[1]]).sigmoid()
        }
        _ => pred_logits.sigmoid(),
    };
    let pshape = probs.shape();
    assert_eq!(
        pshape.len(),
        3,
        "bal_loss: prediction must be [1,h,w], got {pshape:?}"
    );
    let (h, w) = (pshape[1], pshape[2]);
    let mean_map = {
        let mshape = lss_mean.shape();
        let m = match mshape.len() {
            2 => lss_mean.reshape(&[1, mshape[0], mshape[1]]),
            3 => lss_mean.clone(),
            _ => panic!("bal_loss: structural map must be [h,w] or [1,h,w], got {mshape:?}"),
        };
        let ms = m.shape();
        if ms[1] == h && ms[2] == w {
            m
        } else {
            m.bilinear_resize(h, w)
        }
    };
    let (gx_p, gy_p) = sobel_gradients(&probs);
    let (gx_m, gy_m) = sobel_gradients(&mean_map);
    let dx = gx_p.sub(&gx_m);
    let dy = gy_p.sub(&gy_m);
    let ss = dx.mul(&dx).sum_all().add(&dy.mul(&dy).sum_all());
    ss.scale(S::ONE / S::from_f64((2 * h * w) as f64))
}

/// Downsample a binary field by area averaging then threshold at 0.5.
pub fn downsample_binary(data: &[f64], h: usize, w: usize, oh: usize, ow: usize) -> Vec<f64> {
    assert!(
        h % oh == 0 && w % ow == 0,
        "downsample_binary: {h}x{w} not divisible into {oh}x{ow}"
    );
    let (fy, fx) = (h / oh, w / ow);
    let norm = (fy * fx) as f64;
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            let mut acc = 0.0;
            for dy in 0..fy {
                for dx in 0..fx {
                    acc += data[(y * fy + dy) * w + (x * fx + dx)];
                }
            }
            out[y * ow + x] = if acc / norm >= 0.5 { 1.0 } else { 0.0 };
        }
    }
    out
}

/// Composite deep-supervision objective. `target` is the full-resolution
/// binary ground truth (constant tensor, [1,H,W] or [H,W]); auxiliary
/// targets are derived from it. Returns the differentiable total plus the
/// recorded component values. Errors if any component is non-finite.
pub fn total_loss<S: Scalar>(
    main_logits: &Tensor<S>,
    aux1_logits: &Tensor<S>,
    aux2_logits: &Tensor<S>,
    target: &Tensor<S>,
    lss_mean: &Tensor<S>,
    weights: &LossWeights,
) -> Result<(Tensor<S>, LossBundle)> {
    let tape = main_logits.tape();
    let tshape = target.shape();
    let (h, w) = match tshape.len() {
        2 => (tshape[0], tshape[1]),
        3 => (tshape[1], tshape[2]),
        _ => panic!("total_loss: target must be [h,w] or [1,h,w], got {tshape:?}"),
    };
    let target_full = target.reshape(&[1, h, w]);
    let target_raw: Vec<f64> = target_full.value().iter().map(|v| v.to_f64()).collect();

    let aux_target = |logits: &Tensor<S>| -> Tensor<S> {
        let s = logits.shape();
        let (ah, aw) = (s[1], s[2]);
        let down = downsample_binary(&target_raw, h, w, ah, aw);
        tape.constant(down.iter().map(|&v| S::from_f64(v)).collect(), &[1, ah, aw])
    };

    let smooth = S::ONE;
    let bce_m = bce_loss(main_logits, &target_full);
    let dice_m = dice_loss(&main_logits.sigmoid(), &target_full, smooth);
    let t1 = aux_target(aux1_logits);
    let bce_1 = bce_loss(aux1_logits, &t1);
    let dice_1 = dice_loss(&aux1_logits.sigmoid(), &t1, smooth);
    let t2 = aux_target(aux2_logits);
    let bce_2 = bce_loss(aux2_logits, &t2);
    let dice_2 = dice_loss(&aux2_logits.sigmoid(), &t2, smooth);
    let bal = bal_loss(main_logits, lss_mean);

    let lm = S::from_f64(weights.lambda_main);
    let l1 = S::from_f64(weights.lambda_aux1);
    let l2 = S::from_f64(weights.lambda_aux2);
    let lb = S::from_f64(weights.lambda_bal);
    let total = bce_m
        .add(&dice_m)
        .scale(lm)
        .add(&bce_1.add(&dice_1).scale(l1))
        .add(&bce_2.add(&dice_2).scale(l2))
        .add(&bal.scale(lb));

    let bundle = LossBundle {
        bce_main: bce_m.item().to_f64(),
        dice_main: dice_m.item().to_f64(),
        bce_a1: bce_1.item().to_f64(),
        dice_a1: dice_1.item().to_f64(),
        bce_a2: bce_2.item().to_f64(),
        dice_a2: dice_2.item().to_f64(),
        bal: bal.item().to_f64(),
        total: total.item().to_f64(),
    };
    for (name, v) in [
        ("bce_main", bundle.bce_main),
        ("dice_main", bundle.dice_main),
        ("bce_a1", bundle.bce_a1),
        ("dice_a1", bundle.dice_a1),
        ("bce_a2", bundle.bce_a2),
        ("dice_a2", bundle.dice_a2),
        ("bal", bundle.bal),
        ("total", bundle.total),
    ] {
        if !v.is_finite() {
            return Err(Error::NonFinite {
                context: format!("loss component {name}"),
            });
        }
    }
    Ok((total, bundle))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tape;

    fn tape() -> Tape<f64> {
        Tape::new()
    }

    #[test]
    fn bce_uniform_logits_is_ln2() {
        let t = tape();
        let z = t.constant(vec![0.0; 16], &[4, 4]);
        let y = t.constant([1.0, 0.0, 1.0, 0.0].repeat(4), &[4, 4]);
        let loss = bce_loss(&z, &y).item();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn bce_saturated_logits_vanish() {
        let t = tape();
        let y = t.constant(vec![1.0, 0.0, 1.0, 1.0], &[4]);
        let z = t.constant(vec![20.0, -20.0, 20.0, 20.0], &[4]);
        let loss = bce_loss(&z, &y).item();
        assert!(loss > 0.0 && loss < 1e-8, "loss={loss}");
    }

    #[test]
    fn bce_single_pixel_value() {
        let t = tape();
        let z = t.constant(vec![1.0], &[1]);
        let y = t.constant(vec![1.0], &[1]);
        let expect = (1.0 + (-1.0f64).exp()).ln();
        assert!((bce_loss(&z, &y).item() - expect).abs() < 1e-12);
    }

    #[test]
    fn dice_perfect_and_disjoint() {
        let t = tape();
        let a = t.constant(vec![1.0, 1.0, 0.0, 0.0], &[4]);
        assert_eq!(dice_loss(&a, &a, 1.0).item(), 0.0);

        // Disjoint |A| = |B| = 8 -> 1 - 1/17.
        let p = t.constant([vec![1.0; 8], vec![0.0; 8]].concat(), &[16]);
        let g = t.constant([vec![0.0; 8], vec![1.0; 8]].concat(), &[16]);
        let loss = dice_loss(&p, &g, 1.0).item();
        assert!((loss - (1.0 - 1.0 / 17.0)).abs() < 1e-12);

        // Empty prediction and target: smoothing keeps it at 0.
        let e = t.constant(vec![0.0; 4], &[4]);
        assert_eq!(dice_loss(&e, &e, 1.0).item(), 0.0);
    }

    #[test]
    fn sobel_of_constant_is_zero() {
        let t = tape();
        let f = t.constant(vec![0.7; 25], &[5, 5]);
        let (gx, gy) = sobel_gradients(&f);
        assert!(gx.value().iter().all(|&v| v.abs() < 1e-12));
        assert!(gy.value().iter().all(|&v| v.abs() < 1e-12));
    }

    #[test]
    fn sobel_of_ramp_is_eight_s() {
        let s = 0.25;
        let (h, w) = (6, 7);
        let data: Vec<f64> = (0..h * w).map(|i| s * (i % w) as f64).collect();
        let t = tape();
        let f = t.constant(data, &[h, w]);
        let (gx, gy) = sobel_gradients(&f);
        let gxv = gx.value();
        let gyv = gy.value();
        for y in 1..h - 1 {
            for x in 1..w - 1 {
                assert!((gxv[y * w + x] - 8.0 * s).abs() < 1e-12);
                assert!(gyv[y * w + x].abs() < 1e-12);
            }
        }
    }

    #[test]
    fn sobel_of_step_edge() {
        let (h, w, k) = (5, 8, 4);
        let data: Vec<f64> = (0..h * w)
            .map(|i| if i % w >= k { 1.0 } else { 0.0 })
            .collect();
        let t = tape();
        let f = t.constant(data, &[h, w]);
        let (gx, _) = sobel_gradients(&f);
        let v = gx.value();
        for y in 1..h - 1 {
            for x in 1..w - 1 {
                let expect = if x == k - 1 || x == k { 4.0 } else { 0.0 };
                assert!(
                    (v[y * w + x] - expect).abs() < 1e-12,
                    "gx at ({y},{x}) = {}",
                    v[y * w + x]
                );
            }
        }
    }

    #[test]
    #[should_panic(expected = "smaller than the 3x3 kernel")]
    fn sobel_rejects_tiny_fields() {
        let t = tape();
        let f = t.constant(vec![0.0; 4], &[2, 2]);
        sobel_gradients(&f);
    }

    #[test]
    fn bal_zero_cases() {
        let t = tape();
        // Both fields constant.
        let z = t.constant(vec![0.3; 36], &[6, 6]);
        let m = t.constant(vec![0.9; 36], &[6, 6]);
        assert!(bal_loss(&z, &m).item() < 1e-12);

        // sigmoid(logits) == mean map pointwise -> identical gradients.
        let probs: Vec<f64> = (0..36).map(|i| 0.2 + 0.01 * (i % 6) as f64).collect();
        let logits: Vec<f64> = probs.iter().map(|&p| (p / (1.0 - p)).ln()).collect();
        let zl = t.constant(logits, &[6, 6]);
        let mm = t.constant(probs, &[6, 6]);
        assert!(bal_loss(&zl, &mm).item() < 1e-18);
    }

    #[test]
    fn total_loss_weighting() {
        let t = tape();
        let (h, w) = (16usize, 16usize);
        let main = t.constant((0..h * w).map(|i| 0.01 * i as f64 - 1.0).collect(), &[1, h, w]);
        let a1 = t.constant(vec![0.2; 1], &[1, 1, 1]);
        let a2 = t.constant(vec![-0.4; 4], &[1, 2, 2]);
        let target = t.constant(
            (0..h * w).map(|i| if i % 3 == 0 { 1.0 } else { 0.0 }).collect(),
            &[1, h, w],
        );
        let lss_mean = t.constant((0..h * w).map(|i| (i as f64 / 77.0).sin() * 0.1).collect(), &[h, w]);

        let w_full = LossWeights::default();
        let (total, bundle) = total_loss(&main, &a1, &a2, &target, &lss_mean, &w_full).unwrap();
        assert!((bundle.total - bundle.weighted_total(&w_full)).abs() < 1e-9);
        assert!((bundle.total - total.item()).abs() < 1e-12);

        // Main-only weights give exactly main BCE + Dice.
        let w_main = LossWeights {
            lambda_main: 1.0,
            lambda_aux1: 0.0,
            lambda_aux2: 0.0,
            lambda_bal: 0.0,
        };
        let (_, b_main) = total_loss(&main, &a1, &a2, &target, &lss_mean, &w_main).unwrap();
        assert_eq!(b_main.total, b_main.bce_main + b_main.dice_main);

        // Doubling lambda_bal doubles the BAL contribution exactly.
        let w_bal2 = LossWeights {
            lambda_bal: 2.0 * w_full.lambda_bal,
            ..w_full
        };
        let (_, b2) = total_loss(&main, &a1, &a2, &target, &lss_mean, &w_bal2).unwrap();
        assert_eq!(b2.bal, bundle.bal);
        let shift = b2.total - bundle.total;
        assert!((shift - w_full.lambda_bal * bundle.bal).abs() < 1e-12);
    }

    #[test]
    fn unit_components_bundle_is_3_7() {
        let bundle = LossBundle {
            bce_main: 1.0,
            dice_main: 1.0,
            bce_a1: 1.0,
            dice_a1: 1.0,
            bce_a2: 1.0,
            dice_a2: 1.0,
            bal: 1.0,
            total: 0.0,
        };
        let total = bundle.weighted_total(&LossWeights::default());
        assert!((total - 3.7).abs() < 1e-12);
    }

    #[test]
    fn downsample_threshold() {
        // 4x4 -> 2x2 blocks; block with two of four set averages 0.5 -> 1.
        let data = vec![
            1.0, 1.0, 0.0, 0.0, //
            0.0, 0.0, 0.0, 0.0, //
            1.0, 1.0, 1.0, 0.0, //
            1.0, 1.0, 0.0, 0.0,
        ];
        let down = downsample_binary(&data, 4, 4, 2, 2);
        assert_eq!(down, vec![1.0, 0.0, 1.0, 0.0]);
    }
}
