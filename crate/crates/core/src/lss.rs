//! Local structural-similarity maps.
//!
//! For every pixel, a K x K x C patch is zero-centered and L2-normalized
//! (with an epsilon guard, so constant patches become zero descriptors),
//! compared by dot product against the N = (2R+1)^2 - 1 neighbouring patch
//! descriptors inside a search radius R (center excluded), and the
//! similarity set is aggregated into three channels: mean, max, and the
//! population standard deviation. The map is deterministic, non-learned,
//! invariant to positive affine changes of illumination, and doubles as a
//! human-readable explainability artifact (the std channel is an edge map).
//!
//! Borders are handled by reflect-padding the image by floor(K/2) + R, so
//! the output has full H x W support. Descriptors are precomputed once per
//! position and gathered per neighbor, O(HW * (K^2 C + N * K^2 C)) total
//! with no per-neighbor patch re-extraction.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::pnm;
use crate::scalar::Scalar;
use crate::tensor::kernels::reflect_index;

#[derive(Debug, Clone, PartialEq)]
pub struct LssConfig {
    /// Patch side K; odd.
    pub patch: usize,
    /// Search radius R in pixels.
    pub radius: usize,
    /// Normalization guard in Eq-style denominator `norm + epsilon`.
    pub epsilon: f64,
}

impl Default for LssConfig {
    fn default() -> Self {
        LssConfig {
            patch: 5,
            radius: 5,
            epsilon: 1e-8,
        }
    }
}

impl LssConfig {
    pub fn validate(&self) -> Result<()> {
        if self.patch % 2 == 0 || self.patch == 0 {
            return Err(Error::config(format!(
                "patch size must be odd and positive, got {}",
                self.patch
            )));
        }
        if self.radius == 0 {
            return Err(Error::config("search radius must be >= 1"));
        }
        if !self.epsilon.is_finite() || self.epsilon <= 0.0 {
            return Err(Error::config("epsilon must be positive"));
        }
        Ok(())
    }

    /// Neighbor count N, center excluded.
    pub fn neighbor_count(&self) -> usize {
        let side = 2 * self.radius + 1;
        side * side - 1
    }
}

/// Three per-pixel similarity statistics over the neighbor set.
#[derive(Debug, Clone)]
pub struct LssMap<S: Scalar> {
    pub height: usize,
    pub width: usize,
    pub mean: Vec<S>,
    pub max: Vec<S>,
    pub std: Vec<S>,
}

impl<S: Scalar> LssMap<S> {
    /// Planar [3,H,W] buffer in channel order mean, max, std.
    pub fn to_planar(&self) -> Vec<S> {
        let mut out = Vec::with_capacity(3 * self.height * self.width);
        out.extend_from_slice(&self.mean);
        out.extend_from_slice(&self.max);
        out.extend_from_slice(&self.std);
        out
    }

    pub fn cast<T: Scalar>(&self) -> LssMap<T> {
        let conv = |v: &Vec<S>| v.iter().map(|&x| T::from_f64(x.to_f64())).collect();
        LssMap {
            height: self.height,
            width: self.width,
            mean: conv(&self.mean),
            max: conv(&self.max),
            std: conv(&self.std),
        }
    }
}

/// Zero-center a flattened patch and divide by (L2 norm + epsilon).
/// Constant patches map to the all-zero descriptor.
pub fn normalize_patch<S: Scalar>(patch: &[S], epsilon: S) -> Vec<S> {
    let mut out = vec![S::ZERO; patch.len()];
    normalize_patch_into(patch, epsilon, &mut out);
    out
}

fn normalize_patch_into<S: Scalar>(patch: &[S], epsilon: S, out: &mut [S]) {
    let n = S::from_f64(patch.len() as f64);
    let mut sum = S::ZERO;
    for &v in patch {
        sum += v;
    }
    let mean = sum / n;
    let mut sq = S::ZERO;
    for (o, &v) in out.iter_mut().zip(patch) {
        let d = v - mean;
        *o = d;
        sq += d * d;
    }
    let denom = sq.sqrt() + epsilon;
    let inv = S::ONE / denom;
    for o in out.iter_mut() {
        *o *= inv;
    }
}

/// Cosine similarity of two descriptors produced by [`normalize_patch`],
/// clamped to [-1, 1]. Panics on length mismatch.
pub fn patch_similarity<S: Scalar>(a: &[S], b: &[S]) -> S {
    assert_eq!(
        a.len(),
        b.len(),
        "patch_similarity: descriptor lengths {} vs {} differ",
        a.len(),
        b.len()
    );
    let mut dot = S::ZERO;
    for (&x, &y) in a.iter().zip(b) {
        dot += x * y;
    }
    dot.maxv(-S::ONE).minv(S::ONE)
}

/// Reflect-pad `image` and cast to S, returning (padded, padded_w).
fn padded_plane<S: Scalar>(image: &Image, pad: usize) -> (Vec<S>, usize, usize) {
    let (h, w, c) = (image.height, image.width, image.channels);
    let (ph, pw) = (h + 2 * pad, w + 2 * pad);
    let mut out = vec![S::ZERO; ph * pw * c];
    for y in 0..ph {
        let sy = reflect_index(y as isize - pad as isize, h);
        for x in 0..pw {
            let sx = reflect_index(x as isize - pad as isize, w);
            for ch in 0..c {
                out[(y * pw + x) * c + ch] = S::from_f64(image.pixel(sy, sx, ch));
            }
        }
    }
    (out, ph, pw)
}

/// Compute the full H x W LSS map of an image (stride 1, reflect borders).
pub fn compute_lss_map<S: Scalar>(image: &Image, cfg: &LssConfig) -> Result<LssMap<S>> {
    cfg.validate()?;
    let (h, w, c) = (image.height, image.width, image.channels);
    let k = cfg.patch;
    if h < k || w < k {
        return Err(Error::ImageTooSmall {
            height: h,
            width: w,
            min: k,
        });
    }
    let r = cfg.radius as isize;
    let half = k / 2;
    let pad = half + cfg.radius;
    let (padded, _ph, pw) = padded_plane::<S>(image, pad);
    let eps = S::from_f64(cfg.epsilon);

    // Descriptor field over every center any neighbor can touch:
    // field position (di, dj) = original pixel (di - R, dj - R).
    let dh = h + 2 * cfg.radius;
    let dw = w + 2 * cfg.radius;
    let dlen = k * k * c;
    let mut field = vec![S::ZERO; dh * dw * dlen];
    let mut patch = vec![S::ZERO; dlen];
    for di in 0..dh {
        for dj in 0..dw {
            // Padded coords of the patch's top-left corner.
            let top = di;
            let left = dj;
            let mut idx = 0;
            for yy in 0..k {
                let row = (top + yy) * pw;
                for xx in 0..k {
                    let base = (row + left + xx) * c;
                    for ch in 0..c {
                        patch[idx] = padded[base + ch];
                        idx += 1;
                    }
                }
            }
            let dst = &mut field[(di * dw + dj) * dlen..][..dlen];
            normalize_patch_into(&patch, eps, dst);
        }
    }

    let n = cfg.neighbor_count();
    let n_s = S::from_f64(n as f64);
    let mut mean = vec![S::ZERO; h * w];
    let mut max = vec![S::ZERO; h * w];
    let mut std = vec![S::ZERO; h * w];
    let mut sims = vec![S::ZERO; n];
    for i in 0..h {
        for j in 0..w {
            let center = &field[((i + cfg.radius) * dw + (j + cfg.radius)) * dlen..][..dlen];
            let mut count = 0;
            for dy in -r..=r {
                for dx in -r..=r {
                    if dy == 0 && dx == 0 {
                        continue;
                    }
                    let ni = (i as isize + cfg.radius as isize + dy) as usize;
                    let nj = (j as isize + cfg.radius as isize + dx) as usize;
                    let neighbor = &field[(ni * dw + nj) * dlen..][..dlen];
                    sims[count] = patch_similarity(center, neighbor);
                    count += 1;
                }
            }
            debug_assert_eq!(count, n);
            let mut sum = S::ZERO;
            let mut mx = sims[0];
            for &s in sims.iter() {
                sum += s;
                mx = mx.maxv(s);
            }
            let mu = sum / n_s;
            let mut var = S::ZERO;
            for &s in sims.iter() {
                let d = s - mu;
                var += d * d;
            }
            let idx = i * w + j;
            mean[idx] = mu;
            max[idx] = mx;
            std[idx] = (var / n_s).sqrt();
        }
    }
    Ok(LssMap {
        height: h,
        width: w,
        mean,
        max,
        std,
    })
}

/// Write the three channels as min-max normalized grayscale PGM files
/// (`lss_mean.pgm`, `lss_max.pgm`, `lss_std.pgm`). Constant channels map
/// to black. `comments` are embedded in each file header.
pub fn export_explainability<S: Scalar>(
    map: &LssMap<S>,
    out_dir: &Path,
    comments: &[&str],
) -> Result<[PathBuf; 3]> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut paths = Vec::with_capacity(3);
    for (name, channel) in [
        ("lss_mean.pgm", &map.mean),
        ("lss_max.pgm", &map.max),
        ("lss_std.pgm", &map.std),
    ] {
        let path = out_dir.join(name);
        let image = Image {
            width: map.width,
            height: map.height,
            channels: 1,
            data: min_max_normalize(channel),
        };
        pnm::write_image(&path, &image, comments)?;
        paths.push(path);
    }
    Ok([
        paths[0].clone(),
        paths[1].clone(),
        paths[2].clone(),
    ])
}

fn min_max_normalize<S: Scalar>(values: &[S]) -> Vec<f64> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in values {
        let v = v.to_f64();
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !(hi > lo) {
        return vec![0.0; values.len()];
    }
    values
        .iter()
        .map(|&v| (v.to_f64() - lo) / (hi - lo))
        .collect()
}
