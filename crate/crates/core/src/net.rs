//! Trainable encoder-decoder with structural-map fusion, a liquid
//! time-constant bottleneck refinement loop, and deep supervision.
//!
//! Topology (spatial scale relative to the input):
//!   encoder: 4 stages of [3x3 stride-2 conv, relu, 3x3 conv, relu],
//!     reaching 1/16 with the widest channel count (F5);
//!   fusion: the 3-channel structural map is projected by a learned 3x3
//!     conv at native resolution, bilinearly resized to the first stage's
//!     size and added elementwise (identity when the projection is zero);
//!   bottleneck: an initial coarse mask from a 1x1 head, then T steps of
//!     [build 514-style GAP input -> Euler step -> new mask from a shared
//!     1x1 head over F5 + broadcast hidden state]; the final hidden state
//!     projects into a refinement token;
//!   decoder: bilinear upsample + skip concat + 3x3 conv per stage; the
//!     token enters the highest-resolution stage as a spatially constant
//!     additive bias; auxiliary 1x1 heads tap the 1/16 and 1/8 stages.

use crate::error::{Error, Result};
use crate::image::Image;
use crate::lss::{compute_lss_map, LssConfig, LssMap};
use crate::ltc::{self, LtcParams};
use crate::metrics::SegMask;
use crate::rng::Pcg32;
use crate::scalar::Scalar;
use crate::tensor::{Tape, Tensor};

#[derive(Debug, Clone)]
pub struct NetworkConfig {
    pub input_height: usize,
    pub input_width: usize,
    pub encoder_channels: [usize; 4],
    pub ltc_hidden: usize,
    /// Refinement steps T; 0 disables the loop (token is exactly zero).
    pub t_steps: usize,
    pub dt: f64,
    /// Additive fusion switch; the extractor itself always runs.
    pub lss_enabled: bool,
    pub lss: LssConfig,
    pub seed: u64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            input_height: 64,
            input_width: 64,
            encoder_channels: [16, 32, 64, 128],
            ltc_hidden: 64,
            t_steps: 4,
            dt: 1.0,
            lss_enabled: true,
            lss: LssConfig::default(),
            seed: 42,
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_height % 16 != 0 || self.input_width % 16 != 0 {
            return Err(Error::config(format!(
                "input size {}x{} must be divisible by 16",
                self.input_height, self.input_width
            )));
        }
        if self.input_height < 16 || self.input_width < 16 {
            return Err(Error::config("input size must be at least 16x16"));
        }
        if self.encoder_channels.iter().any(|&c| c == 0) || self.ltc_hidden == 0 {
            return Err(Error::config("channel widths must be positive"));
        }
        if !(self.dt >= 0.0) || !self.dt.is_finite() {
            return Err(Error::config("dt must be finite and >= 0"));
        }
        self.lss.validate()
    }

    pub fn bottleneck_size(&self) -> (usize, usize) {
        (self.input_height / 16, self.input_width / 16)
    }
}

/// One named parameter with its Adam state.
pub struct ParamEntry<S: Scalar> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<S>,
    pub adam_m: Vec<S>,
    pub adam_v: Vec<S>,
}

/// Flat, order-stable parameter set. Order defines the checkpoint layout.
pub struct ParamStore<S: Scalar> {
    pub entries: Vec<ParamEntry<S>>,
}

impl<S: Scalar> ParamStore<S> {
    fn new() -> Self {
        ParamStore {
            entries: Vec::new(),
        }
    }

    fn add(&mut self, name: &str, shape: Vec<usize>, data: Vec<S>) -> usize {
        let numel: usize = shape.iter().product();
        assert_eq!(numel, data.len(), "param {name}: shape/data mismatch");
        self.entries.push(ParamEntry {
            name: name.to_string(),
            shape,
            adam_m: vec![S::ZERO; numel],
            adam_v: vec![S::ZERO; numel],
            data,
        });
        self.entries.len() - 1
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.entries.iter().position(|e| e.name == name)
    }

    pub fn total_parameters(&self) -> usize {
        self.entries.iter().map(|e| e.data.len()).sum()
    }

    /// Register every entry as a trainable leaf on `tape`, in order.
    pub fn bind(&self, tape: &Tape<S>) -> BoundParams<S> {
        BoundParams {
            tensors: self
                .entries
                .iter()
                .map(|e| tape.param(e.data.clone(), &e.shape))
                .collect(),
        }
    }
}

/// Per-tape view of the parameter store.
pub struct BoundParams<S: Scalar> {
    pub tensors: Vec<Tensor<S>>,
}

impl<S: Scalar> BoundParams<S> {
    pub fn get(&self, idx: usize) -> &Tensor<S> {
        &self.tensors[idx]
    }

    /// Gradients in entry order after a backward pass (zeros when absent).
    pub fn gradients(&self) -> Vec<Vec<S>> {
        self.tensors
            .iter()
            .map(|t| t.grad().unwrap_or_else(|| vec![S::ZERO; t.numel()]))
            .collect()
    }
}

/// Parameter indices by role; fixed at construction.
struct ParamIndex {
    lss_proj_w: usize,
    lss_proj_b: usize,
    enc: [(usize, usize, usize, usize); 4], // (w1, b1, w2, b2)
    init_mask_w: usize,
    init_mask_b: usize,
    step_mask_w: usize,
    step_mask_b: usize,
    ltc_w_h: usize,
    ltc_w_in: usize,
    ltc_w_tau: usize,
    ltc_b: usize,
    token_proj_w: usize,
    token_inject_w: usize,
    dec: [(usize, usize); 4], // stage 1/8, 1/4, 1/2, 1/1: (w, b)
    aux1_w: usize,
    aux1_b: usize,
    aux2_w: usize,
    aux2_b: usize,
    main_w: usize,
    main_b: usize,
}

pub struct Network<S: Scalar> {
    pub cfg: NetworkConfig,
    pub store: ParamStore<S>,
    index: ParamIndex,
    pub epsilon_tau: S,
}

/// Everything one forward pass produces.
pub struct ForwardOutputs<S: Scalar> {
    /// [1, H, W]
    pub main_logits: Tensor<S>,
    /// [1, H/16, W/16]
    pub aux1_logits: Tensor<S>,
    /// [1, H/8, W/8]
    pub aux2_logits: Tensor<S>,
    /// Initial coarse bottleneck mask, [1, H/16, W/16].
    pub initial_mask: Tensor<S>,
    /// T refined masks, each [1, H/16, W/16], values in (0,1).
    pub mask_trajectory: Vec<Tensor<S>>,
    /// T+1 hidden states (h_0 = 0 first).
    pub hidden_trajectory: Vec<Tensor<S>>,
    /// Refinement token, [hidden].
    pub token: Tensor<S>,
    /// Elements clamped by the dt/tau cap across all steps.
    pub clamp_fires: usize,
}

/// Inference result on one image.
pub struct Inference<S: Scalar> {
    pub mask: SegMask,
    /// Row-major H*W probabilities.
    pub probabilities: Vec<f64>,
    pub lss: LssMap<S>,
    /// Hidden-state trajectory for inspection dumps.
    pub hidden_trajectory: Vec<Vec<f64>>,
}

impl<S: Scalar> Network<S> {
    /// Build a network with seeded uniform(-1/sqrt(fan_in)) init, zero biases.
    pub fn new(cfg: NetworkConfig) -> Result<Self> {
        cfg.validate()?;
        let mut store = ParamStore::new();
        let mut rng = Pcg32::new(cfg.seed, 1);
        let [c1, c2, c3, c4] = cfg.encoder_channels;
        let hid = cfg.ltc_hidden;

        let conv = |store: &mut ParamStore<S>,
                        rng: &mut Pcg32,
                        name: &str,
                        co: usize,
                        ci: usize,
                        k: usize|
         -> (usize, usize) {
            let fan_in = ci * k * k;
            let bound = 1.0 / (fan_in as f64).sqrt();
            let data = (0..co * ci * k * k)
                .map(|_| S::from_f64(rng.uniform(-bound, bound)))
                .collect();
            let w = store.add(&format!("{name}.weight"), vec![co, ci, k, k], data);
            let b = store.add(&format!("{name}.bias"), vec![co], vec![S::ZERO; co]);
            (w, b)
        };
        let matrix = |store: &mut ParamStore<S>,
                          rng: &mut Pcg32,
                          name: &str,
                          rows: usize,
                          cols: usize|
         -> usize {
            let bound = 1.0 / (cols as f64).sqrt();
            let data = (0..rows * cols)
                .map(|_| S::from_f64(rng.uniform(-bound, bound)))
                .collect();
            store.add(name, vec![rows, cols], data)
        };

        let (lss_proj_w, lss_proj_b) = conv(&mut store, &mut rng, "lss_proj", c1, 3, 3);
        let mut enc = [(0, 0, 0, 0); 4];
        let widths = [3, c1, c2, c3];
        for (i, &co) in cfg.encoder_channels.iter().enumerate() {
            let ci = widths[i];
            let (w1, b1) = conv(&mut store, &mut rng, &format!("enc{i}.conv1"), co, ci, 3);
            let (w2, b2) = conv(&mut store, &mut rng, &format!("enc{i}.conv2"), co, co, 3);
            enc[i] = (w1, b1, w2, b2);
        }
        let (init_mask_w, init_mask_b) = conv(&mut store, &mut rng, "init_mask", 1, c4, 1);
        let (step_mask_w, step_mask_b) =
            conv(&mut store, &mut rng, "step_mask", 1, c4 + hid, 1);
        let ltc_input = c4 + 2;
        let ltc_w_h = matrix(&mut store, &mut rng, "ltc.w_h", hid, hid);
        let ltc_w_in = matrix(&mut store, &mut rng, "ltc.w_in", hid, ltc_input);
        let ltc_w_tau = matrix(&mut store, &mut rng, "ltc.w_tau", hid, ltc_input);
        let ltc_b = store.add("ltc.b", vec![hid], vec![S::ZERO; hid]);
        let token_proj_w = matrix(&mut store, &mut rng, "token_proj.weight", hid, hid);
        let token_inject_w = matrix(&mut store, &mut rng, "token_inject.weight", c1, hid);
        let dec = [
            conv(&mut store, &mut rng, "dec3", c3, c4 + c3, 3),
            conv(&mut store, &mut rng, "dec2", c2, c3 + c2, 3),
            conv(&mut store, &mut rng, "dec1", c1, c2 + c1, 3),
            conv(&mut store, &mut rng, "dec0", c1, c1, 3),
        ];
        let (aux1_w, aux1_b) = conv(&mut store, &mut rng, "aux1_head", 1, c4, 1);
        let (aux2_w, aux2_b) = conv(&mut store, &mut rng, "aux2_head", 1, c3, 1);
        let (main_w, main_b) = conv(&mut store, &mut rng, "main_head", 1, c1, 1);

        let index = ParamIndex {
            lss_proj_w,
            lss_proj_b,
            enc,
            init_mask_w,
            init_mask_b,
            step_mask_w,
            step_mask_b,
            ltc_w_h,
            ltc_w_in,
            ltc_w_tau,
            ltc_b,
            token_proj_w,
            token_inject_w,
            dec,
            aux1_w,
            aux1_b,
            aux2_w,
            aux2_b,
            main_w,
            main_b,
        };
        Ok(Network {
            cfg,
            store,
            index,
            epsilon_tau: S::from_f64(ltc::DEFAULT_EPSILON_TAU),
        })
    }

    /// Planar image tensor from an [`Image`]; grayscale is replicated to RGB.
    pub fn image_tensor(&self, tape: &Tape<S>, image: &Image) -> Result<Tensor<S>> {
        if image.height != self.cfg.input_height || image.width != self.cfg.input_width {
            return Err(Error::config(format!(
                "image {}x{} does not match network input {}x{}",
                image.height, image.width, self.cfg.input_height, self.cfg.input_width
            )));
        }
        let planar = if image.channels == 3 {
            image.to_planar()
        } else {
            let gray = image.to_planar();
            let mut out = Vec::with_capacity(gray.len() * 3);
            for _ in 0..3 {
                out.extend_from_slice(&gray);
            }
            out
        };
        Ok(tape.constant(
            planar.iter().map(|&v| S::from_f64(v)).collect(),
            &[3, self.cfg.input_height, self.cfg.input_width],
        ))
    }

    /// Full forward pass. `lss` must match the input resolution.
    pub fn forward(
        &self,
        tape: &Tape<S>,
        bound: &BoundParams<S>,
        image: &Tensor<S>,
        lss: &LssMap<S>,
    ) -> ForwardOutputs<S> {
        let ix = &self.index;
        let (h_in, w_in) = (self.cfg.input_height, self.cfg.input_width);
        assert_eq!(
            image.shape(),
            vec![3, h_in, w_in],
            "forward: image shape {:?} does not match config",
            image.shape()
        );
        assert_eq!(
            (lss.height, lss.width),
            (h_in, w_in),
            "forward: structural map {}x{} does not match input {}x{}",
            lss.height,
            lss.width,
            h_in,
            w_in
        );

        let conv_block = |x: &Tensor<S>, w: usize, b: usize, stride: usize, pad: usize| {
            x.conv2d(bound.get(w), Some(bound.get(b)), stride, pad).relu()
        };

        // Encoder stage 1 at 1/2 resolution.
        let (w1, b1, w2, b2) = ix.enc[0];
        let c1_feat = conv_block(&conv_block(image, w1, b1, 2, 1), w2, b2, 1, 1);

        // Additive structural fusion: project at native resolution, then
        // resize to the stage-1 grid.
        let f1 = if self.cfg.lss_enabled {
            let lss_t = tape.constant(lss.to_planar(), &[3, h_in, w_in]);
            let projected = lss_t.conv2d(
                bound.get(ix.lss_proj_w),
                Some(bound.get(ix.lss_proj_b)),
                1,
                1,
            );
            let f_lss = projected.bilinear_resize(h_in / 2, w_in / 2);
            c1_feat.add(&f_lss)
        } else {
            c1_feat
        };

        let (w1, b1, w2, b2) = ix.enc[1];
        let s2 = conv_block(&conv_block(&f1, w1, b1, 2, 1), w2, b2, 1, 1);
        let (w1, b1, w2, b2) = ix.enc[2];
        let s3 = conv_block(&conv_block(&s2, w1, b1, 2, 1), w2, b2, 1, 1);
        let (w1, b1, w2, b2) = ix.enc[3];
        let f5 = conv_block(&conv_block(&s3, w1, b1, 2, 1), w2, b2, 1, 1);

        let (hb, wb) = self.cfg.bottleneck_size();

        // Bottleneck refinement loop.
        let initial_mask = f5
            .conv2d(bound.get(ix.init_mask_w), Some(bound.get(ix.init_mask_b)), 1, 0)
            .sigmoid();
        let ltc_params = LtcParams::new(
            bound.get(ix.ltc_w_h).clone(),
            bound.get(ix.ltc_w_in).clone(),
            bound.get(ix.ltc_w_tau).clone(),
            bound.get(ix.ltc_b).clone(),
            self.epsilon_tau,
        );
        let mut h = tape.constant(vec![S::ZERO; self.cfg.ltc_hidden], &[self.cfg.ltc_hidden]);
        let mut hidden_trajectory = vec![h.clone()];
        let mut mask_trajectory = Vec::with_capacity(self.cfg.t_steps);
        let mut current = initial_mask.clone();
        let mut clamp_fires = 0;
        for _ in 0..self.cfg.t_steps {
            let x_t = ltc::build_bottleneck_input(&f5, &initial_mask, &current);
            let (next, fires) = ltc::euler_step(&ltc_params, &h, &x_t, self.cfg.dt);
            clamp_fires += fires;
            h = next;
            hidden_trajectory.push(h.clone());
            let stacked = Tensor::concat(&[&f5, &h.broadcast_spatial(hb, wb)]);
            current = stacked
                .conv2d(bound.get(ix.step_mask_w), Some(bound.get(ix.step_mask_b)), 1, 0)
                .sigmoid();
            mask_trajectory.push(current.clone());
        }
        let token = ltc::refinement_token(&h, bound.get(ix.token_proj_w));

        // Heads at the bottleneck scale.
        let aux1_logits =
            f5.conv2d(bound.get(ix.aux1_w), Some(bound.get(ix.aux1_b)), 1, 0);

        // Decoder.
        let up = |x: &Tensor<S>| {
            let s = x.shape();
            x.bilinear_resize(s[1] * 2, s[2] * 2)
        };
        let (dw, db) = ix.dec[0];
        let d3 = conv_block(&Tensor::concat(&[&up(&f5), &s3]), dw, db, 1, 1);
        let aux2_logits = d3.conv2d(bound.get(ix.aux2_w), Some(bound.get(ix.aux2_b)), 1, 0);
        let (dw, db) = ix.dec[1];
        let d2 = conv_block(&Tensor::concat(&[&up(&d3), &s2]), dw, db, 1, 1);
        let (dw, db) = ix.dec[2];
        let d1 = conv_block(&Tensor::concat(&[&up(&d2), &f1]), dw, db, 1, 1);
        let (dw, db) = ix.dec[3];
        let d0 = conv_block(&up(&d1), dw, db, 1, 1);

        // Token becomes a spatially constant bias at the full-resolution stage.
        let token_bias = bound
            .get(ix.token_inject_w)
            .matmul(&token)
            .broadcast_spatial(h_in, w_in);
        let d0 = d0.add(&token_bias);
        let main_logits = d0.conv2d(bound.get(ix.main_w), Some(bound.get(ix.main_b)), 1, 0);

        ForwardOutputs {
            main_logits,
            aux1_logits,
            aux2_logits,
            initial_mask,
            mask_trajectory,
            hidden_trajectory,
            token,
            clamp_fires,
        }
    }

    /// Run the deterministic extractor for one image at this network's
    /// configured patch/radius.
    pub fn lss_for_image(&self, image: &Image) -> Result<LssMap<S>> {
        compute_lss_map(image, &self.cfg.lss)
    }

    /// Forward one image and threshold the main head at 0.5.
    pub fn infer(&self, image: &Image) -> Result<Inference<S>> {
        let lss = self.lss_for_image(image)?;
        let tape = Tape::new();
        let bound = self.store.bind(&tape);
        let input = self.image_tensor(&tape, image)?;
        let out = self.forward(&tape, &bound, &input, &lss);
        let probabilities: Vec<f64> = out
            .main_logits
            .sigmoid()
            .value()
            .iter()
            .map(|v| v.to_f64())
            .collect();
        let mask = SegMask::from_probabilities(
            &probabilities,
            self.cfg.input_width,
            self.cfg.input_height,
            0.5,
        );
        let hidden_trajectory = out
            .hidden_trajectory
            .iter()
            .map(|t| t.value().iter().map(|v| v.to_f64()).collect())
            .collect();
        Ok(Inference {
            mask,
            probabilities,
            lss,
            hidden_trajectory,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config() -> NetworkConfig {
        NetworkConfig {
            input_height: 16,
            input_width: 16,
            encoder_channels: [4, 5, 6, 7],
            ltc_hidden: 5,
            t_steps: 2,
            dt: 1.0,
            lss_enabled: true,
            lss: LssConfig {
                patch: 3,
                radius: 2,
                epsilon: 1e-8,
            },
            seed: 7,
        }
    }

    fn test_image(h: usize, w: usize) -> Image {
        let mut img = Image::new(w, h, 3);
        for y in 0..h {
            for x in 0..w {
                for c in 0..3 {
                    let v = ((y * 7 + x * 3 + c * 11) % 23) as f64 / 23.0;
                    img.set_pixel(y, x, c, v);
                }
            }
        }
        img
    }

    #[test]
    fn forward_output_shapes() {
        let net: Network<f64> = Network::new(tiny_config()).unwrap();
        let img = test_image(16, 16);
        let lss = net.lss_for_image(&img).unwrap();
        let tape = Tape::new();
        let bound = net.store.bind(&tape);
        let input = net.image_tensor(&tape, &img).unwrap();
        let out = net.forward(&tape, &bound, &input, &lss);
        assert_eq!(out.main_logits.shape(), vec![1, 16, 16]);
        assert_eq!(out.aux1_logits.shape(), vec![1, 1, 1]);
        assert_eq!(out.aux2_logits.shape(), vec![1, 2, 2]);
        assert_eq!(out.mask_trajectory.len(), 2);
        assert_eq!(out.hidden_trajectory.len(), 3);
        assert_eq!(out.token.shape(), vec![5]);
        for m in &out.mask_trajectory {
            assert_eq!(m.shape(), vec![1, 1, 1]);
            assert!(m.value().iter().all(|&v| v > 0.0 && v < 1.0));
        }
    }

    #[test]
    fn zero_projection_equals_fusion_off_exactly() {
        let mut net: Network<f64> = Network::new(tiny_config()).unwrap();
        let img = test_image(16, 16);
        let lss = net.lss_for_image(&img).unwrap();

        // Zero the projection parameters.
        let wi = net.store.index_of("lss_proj.weight").unwrap();
        let bi = net.store.index_of("lss_proj.bias").unwrap();
        for v in &mut net.store.entries[wi].data {
            *v = 0.0;
        }
        for v in &mut net.store.entries[bi].data {
            *v = 0.0;
        }

        let run = |net: &Network<f64>| {
            let tape = Tape::new();
            let bound = net.store.bind(&tape);
            let input = net.image_tensor(&tape, &img).unwrap();
            net.forward(&tape, &bound, &input, &lss).main_logits.value()
        };
        let with_fusion = run(&net);
        net.cfg.lss_enabled = false;
        let without_fusion = run(&net);
        assert_eq!(with_fusion, without_fusion);
    }

    #[test]
    fn zero_steps_means_zero_token() {
        let mut cfg = tiny_config();
        cfg.t_steps = 0;
        let net: Network<f64> = Network::new(cfg).unwrap();
        let img = test_image(16, 16);
        let lss = net.lss_for_image(&img).unwrap();
        let tape = Tape::new();
        let bound = net.store.bind(&tape);
        let input = net.image_tensor(&tape, &img).unwrap();
        let out = net.forward(&tape, &bound, &input, &lss);
        assert!(out.token.value().iter().all(|&v| v == 0.0));
        assert!(out.mask_trajectory.is_empty());
    }

    #[test]
    fn token_perturbation_changes_main_logits() {
        // Perturbing the token projection must move the output: the token
        // path is live even though it enters only the last stage.
        let mut net: Network<f64> = Network::new(tiny_config()).unwrap();
        let img = test_image(16, 16);
        let lss = net.lss_for_image(&img).unwrap();
        let run = |net: &Network<f64>| {
            let tape = Tape::new();
            let bound = net.store.bind(&tape);
            let input = net.image_tensor(&tape, &img).unwrap();
            net.forward(&tape, &bound, &input, &lss).main_logits.value()
        };
        let before = run(&net);
        let ti = net.store.index_of("token_proj.weight").unwrap();
        for v in &mut net.store.entries[ti].data {
            *v += 0.5;
        }
        let after = run(&net);
        let moved = before
            .iter()
            .zip(&after)
            .any(|(a, b)| (a - b).abs() > 1e-9);
        assert!(moved, "token has no effect on the main head");
    }

    #[test]
    fn inference_is_deterministic_and_thresholded() {
        let net: Network<f64> = Network::new(tiny_config()).unwrap();
        let img = test_image(16, 16);
        let a = net.infer(&img).unwrap();
        let b = net.infer(&img).unwrap();
        assert_eq!(a.mask.bits, b.mask.bits);
        assert_eq!(a.probabilities, b.probabilities);
        for (p, &m) in a.probabilities.iter().zip(&a.mask.bits) {
            assert_eq!(m, if *p >= 0.5 { 1 } else { 0 });
        }
        assert_eq!(a.mask.width, 16);
        assert_eq!(a.mask.height, 16);
    }

    #[test]
    fn rejects_bad_config() {
        let mut cfg = tiny_config();
        cfg.input_height = 20;
        assert!(Network::<f64>::new(cfg).is_err());
    }
}
