//! Seeded synthetic dataset: sinusoidal background texture, an elliptical
//! lesion region with its own texture/tint, Gaussian pixel noise, and a
//! per-image positive affine brightness jitter. The mask is the ellipse.
//!
//! Every draw comes from PCG32 streams derived from (seed, sample_index)
//! in a fixed order, and all texture math runs in f64 before the final
//! 8-bit quantization, so identical configs produce bit-identical
//! datasets on any platform.

use std::path::Path;

use crate::error::{Error, Result};
use crate::image::Image;
use crate::pnm;
use crate::rng::Pcg32;
use crate::train::{Dataset, Sample};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub count: usize,
    pub size: usize,
    pub seed: u64,
    /// Base cycles-per-image of the background texture.
    pub background_freq: f64,
    /// Base cycles-per-image of the lesion texture.
    pub wound_freq: f64,
    pub noise_sigma: f64,
    /// Brightness jitter j: gain in [1-j, 1+j], offset in [-j/2, j/2].
    pub brightness_jitter: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            count: 16,
            size: 64,
            seed: 42,
            background_freq: 1.6,
            wound_freq: 11.0,
            noise_sigma: 0.02,
            brightness_jitter: 0.1,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.size < 32 {
            return Err(Error::config(format!(
                "synthetic image size must be >= 32, got {}",
                self.size
            )));
        }
        if self.count == 0 {
            return Err(Error::config("synthetic count must be >= 1"));
        }
        if !self.noise_sigma.is_finite() || self.noise_sigma < 0.0 {
            return Err(Error::config("noise sigma must be >= 0"));
        }
        if !self.brightness_jitter.is_finite() || !(0.0..1.0).contains(&self.brightness_jitter) {
            return Err(Error::config("brightness jitter must be in [0, 1)"));
        }
        Ok(())
    }
}

pub struct SynthSample {
    pub name: String,
    pub image: Image,
    /// Row-major 0/1 mask.
    pub mask: Vec<u8>,
}

struct Ellipse {
    cx: f64,
    cy: f64,
    half_a: f64,
    half_b: f64,
    rot: f64,
}

impl Ellipse {
    fn contains(&self, x: f64, y: f64) -> bool {
        let dx = x - self.cx;
        let dy = y - self.cy;
        let (sin, cos) = self.rot.sin_cos();
        let u = (dx * cos + dy * sin) / self.half_a;
        let v = (-dx * sin + dy * cos) / self.half_b;
        u * u + v * v <= 1.0
    }
}

/// Axis bounds keep the (unclipped) foreground fraction pi*a*b/S^2 inside
/// [2%, 40%] and the ellipse fully inside the image.
const AXIS_LO: f64 = 0.09;
const AXIS_HI: f64 = 0.35;

/// Generate sample `index` of the dataset described by `cfg`.
pub fn generate_sample(cfg: &SynthConfig, index: usize) -> Result<SynthSample> {
    cfg.validate()?;
    let s = cfg.size;
    let sf = s as f64;
    let mut rng = Pcg32::for_sample(cfg.seed, index as u64);

    // Fixed draw order; changing it changes every dataset.
    let bg_freq = cfg.background_freq * rng.uniform(0.8, 1.25);
    let bg_theta = rng.uniform(0.0, std::f64::consts::PI);
    let bg_phase = rng.uniform(0.0, std::f64::consts::TAU);
    let wound_freq = cfg.wound_freq * rng.uniform(0.8, 1.25);
    let wound_theta = rng.uniform(0.0, std::f64::consts::PI);
    let wound_phase = rng.uniform(0.0, std::f64::consts::TAU);

    let mut ellipse = None;
    for _ in 0..8 {
        let e = Ellipse {
            cx: sf * rng.uniform(0.4, 0.6),
            cy: sf * rng.uniform(0.4, 0.6),
            half_a: sf * rng.uniform(AXIS_LO, AXIS_HI),
            half_b: sf * rng.uniform(AXIS_LO, AXIS_HI),
            rot: rng.uniform(0.0, std::f64::consts::PI),
        };
        if e.half_a >= 1.0 && e.half_b >= 1.0 {
            ellipse = Some(e);
            break;
        }
    }
    let ellipse = ellipse.ok_or_else(|| {
        Error::config(format!("sample {index}: could not draw a non-degenerate ellipse"))
    })?;

    let gain = rng.uniform(1.0 - cfg.brightness_jitter, 1.0 + cfg.brightness_jitter);
    let offset = rng.uniform(-cfg.brightness_jitter / 2.0, cfg.brightness_jitter / 2.0);

    const BG_TINT: [f64; 3] = [1.0, 0.9, 0.82];
    const WOUND_TINT: [f64; 3] = [1.05, 0.62, 0.55];
    let (bg_sin, bg_cos) = bg_theta.sin_cos();
    let (w_sin, w_cos) = wound_theta.sin_cos();

    let mut image = Image::new(s, s, 3);
    let mut mask = vec![0u8; s * s];
    for y in 0..s {
        for x in 0..s {
            let (xf, yf) = (x as f64, y as f64);
            let inside = ellipse.contains(xf, yf);
            let tex = if inside {
                let phase = std::f64::consts::TAU * wound_freq * (xf * w_cos + yf * w_sin) / sf;
                0.38 + 0.20 * (phase + wound_phase).sin()
            } else {
                let phase = std::f64::consts::TAU * bg_freq * (xf * bg_cos + yf * bg_sin) / sf;
                0.62 + 0.16 * (phase + bg_phase).sin()
            };
            let tint = if inside { &WOUND_TINT } else { &BG_TINT };
            for c in 0..3 {
                let noisy = tex * tint[c] + cfg.noise_sigma * rng.gaussian();
                image.set_pixel(y, x, c, gain * noisy + offset);
            }
            if inside {
                mask[y * s + x] = 1;
            }
        }
    }
    image.quantize_u8();
    Ok(SynthSample {
        name: format!("{index:05}"),
        image,
        mask,
    })
}

pub fn generate(cfg: &SynthConfig) -> Result<Vec<SynthSample>> {
    (0..cfg.count).map(|i| generate_sample(cfg, i)).collect()
}

/// Write `img_NNNNN.ppm` + `msk_NNNNN.pgm` pairs and a `manifest` file
/// echoing the generator configuration.
pub fn write_dataset(cfg: &SynthConfig, dir: &Path, manifest_echo: &str) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for sample in generate(cfg)? {
        pnm::write_image(&dir.join(format!("img_{}.ppm", sample.name)), &sample.image, &[])?;
        pnm::write_mask(
            &dir.join(format!("msk_{}.pgm", sample.name)),
            &sample.mask,
            cfg.size,
            cfg.size,
        )?;
    }
    std::fs::write(dir.join("manifest"), manifest_echo)
        .map_err(|e| Error::io(&dir.join("manifest"), e))
}

/// In-memory dataset for training without touching the filesystem.
pub fn to_dataset(samples: Vec<SynthSample>) -> Dataset {
    Dataset {
        samples: samples
            .into_iter()
            .map(|s| Sample {
                name: format!("img_{}", s.name),
                image: s.image,
                mask: s.mask.iter().map(|&b| b as f64).collect(),
            })
            .collect(),
    }
}
