//! Adam training loop over (image, mask) pairs, with cached structural
//! maps, deterministic seeded shuffling, per-epoch loss logging, and an
//! optional held-out evaluation pass.

use std::path::Path;

use crate::error::{Error, Result};
use crate::image::Image;
use crate::loss::{total_loss, LossBundle, LossWeights};
use crate::lss::LssMap;
use crate::metrics::{MetricReport, SegMask};
use crate::net::Network;
use crate::pnm;
use crate::rng::Pcg32;
use crate::scalar::Scalar;
use crate::tensor::{Tape, Tensor};

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weights: LossWeights,
    /// Seed for epoch shuffling (independent of the init seed).
    pub shuffle_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 2,
            learning_rate: 1e-3,
            weights: LossWeights::default(),
            shuffle_seed: 42,
        }
    }
}

pub struct Sample {
    pub name: String,
    pub image: Image,
    /// Row-major H*W binary target.
    pub mask: Vec<f64>,
}

pub struct Dataset {
    pub samples: Vec<Sample>,
}

impl Dataset {
    /// Load `img_NNNNN.ppm` / `msk_NNNNN.pgm` pairs from a directory,
    /// sorted by name.
    pub fn load_dir(dir: &Path) -> Result<Dataset> {
        let mut names: Vec<String> = std::fs::read_dir(dir)
            .map_err(|e| Error::io(dir, e))?
            .filter_map(|entry| entry.ok())
            .filter_map(|entry| {
                let name = entry.file_name().to_string_lossy().into_owned();
                name.strip_prefix("img_")
                    .and_then(|rest| rest.strip_suffix(".ppm"))
                    .map(|stem| stem.to_string())
            })
            .collect();
        names.sort();
        if names.is_empty() {
            return Err(Error::config(format!(
                "no img_*.ppm files found in {}",
                dir.display()
            )));
        }
        let mut samples = Vec::with_capacity(names.len());
        for stem in names {
            let image = pnm::read_image(&dir.join(format!("img_{stem}.ppm")))?;
            let (bits, w, h) = pnm::read_mask(&dir.join(format!("msk_{stem}.pgm")))?;
            if w != image.width || h != image.height {
                return Err(Error::DimMismatch {
                    context: "dataset image/mask",
                    lhs: (image.height, image.width),
                    rhs: (h, w),
                });
            }
            samples.push(Sample {
                name: format!("img_{stem}"),
                image,
                mask: bits.iter().map(|&b| b as f64).collect(),
            });
        }
        Ok(Dataset { samples })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Loss means for one epoch plus clamp diagnostics.
#[derive(Debug, Clone)]
pub struct EpochLog {
    pub epoch: usize,
    pub mean: LossBundle,
    pub clamp_fires: usize,
}

pub struct TrainOutcome {
    pub epochs: Vec<EpochLog>,
    pub validation: Option<MetricReport>,
}

struct Adam {
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    step: u64,
}

impl Adam {
    fn new() -> Self {
        Adam {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
        }
    }

    fn apply<S: Scalar>(&mut self, net: &mut Network<S>, grads: &[Vec<S>], lr: f64) {
        self.step += 1;
        let b1 = S::from_f64(self.beta1);
        let b2 = S::from_f64(self.beta2);
        let one_m_b1 = S::from_f64(1.0 - self.beta1);
        let one_m_b2 = S::from_f64(1.0 - self.beta2);
        let corr1 = S::from_f64(1.0 - self.beta1.powi(self.step as i32));
        let corr2 = S::from_f64(1.0 - self.beta2.powi(self.step as i32));
        let eps = S::from_f64(self.epsilon);
        let lr = S::from_f64(lr);
        for (entry, grad) in net.store.entries.iter_mut().zip(grads) {
            for i in 0..entry.data.len() {
                let g = grad[i];
                entry.adam_m[i] = b1 * entry.adam_m[i] + one_m_b1 * g;
                entry.adam_v[i] = b2 * entry.adam_v[i] + one_m_b2 * g * g;
                let m_hat = entry.adam_m[i] / corr1;
                let v_hat = entry.adam_v[i] / corr2;
                entry.data[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}

/// Train in place. Structural maps are computed once per sample and cached
/// across epochs (they depend only on the image). Erroring out mid-epoch
/// names the epoch and step.
pub fn train<S: Scalar>(
    net: &mut Network<S>,
    data: &Dataset,
    cfg: &TrainConfig,
    validation: Option<&Dataset>,
) -> Result<TrainOutcome> {
    train_with_progress(net, data, cfg, validation, |_| {})
}

/// [`train`] with a per-epoch callback (used by the CLI to stream the log).
pub fn train_with_progress<S: Scalar, F: FnMut(&EpochLog)>(
    net: &mut Network<S>,
    data: &Dataset,
    cfg: &TrainConfig,
    validation: Option<&Dataset>,
    mut progress: F,
) -> Result<TrainOutcome> {
    if data.is_empty() {
        return Err(Error::config("training dataset is empty"));
    }
    if cfg.batch_size == 0 {
        return Err(Error::config("batch size must be >= 1"));
    }
    cfg.weights.validate()?;

    let lss_maps: Vec<LssMap<S>> = data
        .samples
        .iter()
        .map(|s| net.lss_for_image(&s.image))
        .collect::<Result<_>>()?;

    let mut adam = Adam::new();
    let mut epochs = Vec::with_capacity(cfg.epochs);
    let n = data.len();
    for epoch in 1..=cfg.epochs {
        let mut order: Vec<usize> = (0..n).collect();
        let mut rng = Pcg32::new(cfg.shuffle_seed, 0x5348 + epoch as u64);
        rng.shuffle(&mut order);

        let mut epoch_sum = LossBundle::default();
        let mut clamp_fires = 0usize;
        for (step, batch) in order.chunks(cfg.batch_size).enumerate() {
            let tape: Tape<S> = Tape::new();
            let bound = net.store.bind(&tape);
            let mut batch_total: Option<Tensor<S>> = None;
            for &sample_idx in batch {
                let sample = &data.samples[sample_idx];
                let image = net.image_tensor(&tape, &sample.image)?;
                let out = net.forward(&tape, &bound, &image, &lss_maps[sample_idx]);
                clamp_fires += out.clamp_fires;
                let target = tape.constant(
                    sample.mask.iter().map(|&v| S::from_f64(v)).collect(),
                    &[1, net.cfg.input_height, net.cfg.input_width],
                );
                let lss_mean = tape.constant(
                    lss_maps[sample_idx].mean.clone(),
                    &[net.cfg.input_height, net.cfg.input_width],
                );
                let (sample_total, bundle) = total_loss(
                    &out.main_logits,
                    &out.aux1_logits,
                    &out.aux2_logits,
                    &target,
                    &lss_mean,
                    &cfg.weights,
                )
                .map_err(|e| Error::NonFinite {
                    context: format!("epoch {epoch} step {step}: {e}"),
                })?;
                epoch_sum.add_assign(&bundle);
                batch_total = Some(match batch_total {
                    Some(acc) => acc.add(&sample_total),
                    None => sample_total,
                });
            }
            let batch_loss =
                batch_total.expect("non-empty batch").scale(S::from_f64(1.0 / batch.len() as f64));
            batch_loss.backward();
            let grads = bound.gradients();
            adam.apply(net, &grads, cfg.learning_rate);
        }
        let log = EpochLog {
            epoch,
            mean: epoch_sum.scaled(1.0 / n as f64),
            clamp_fires,
        };
        progress(&log);
        epochs.push(log);
    }

    let validation = match validation {
        Some(val) if !val.is_empty() => Some(evaluate(net, val)?),
        _ => None,
    };
    Ok(TrainOutcome { epochs, validation })
}

/// Run inference over a dataset and score against its masks.
pub fn evaluate<S: Scalar>(net: &Network<S>, data: &Dataset) -> Result<MetricReport> {
    let mut pairs = Vec::with_capacity(data.len());
    for sample in &data.samples {
        let inference = net.infer(&sample.image)?;
        let gt = SegMask::new(
            sample.image.width,
            sample.image.height,
            sample.mask.iter().map(|&v| if v >= 0.5 { 1 } else { 0 }).collect(),
        );
        pairs.push((sample.name.clone(), inference.mask, gt));
    }
    MetricReport::evaluate(&pairs)
}

/// Render per-epoch logs as the line-oriented training log.
pub fn format_training_log(header_comments: &[String], epochs: &[EpochLog]) -> String {
    let mut out = String::new();
    for c in header_comments {
        out.push_str(&format!("# {c}\n"));
    }
    for e in epochs {
        out.push_str(&e.mean.log_line(e.epoch));
        if e.clamp_fires > 0 {
            out.push_str(&format!(" clamp_fires={}", e.clamp_fires));
        }
        out.push('\n');
    }
    out
}
