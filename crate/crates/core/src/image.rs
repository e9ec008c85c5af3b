//! In-memory image: interleaved rows (HWC), real values in [0, 1].

#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    /// 1 (grayscale) or 3 (RGB).
    pub channels: usize,
    /// Row-major, channel-interleaved, values in [0, 1].
    pub data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize) -> Self {
        Image {
            width,
            height,
            channels,
            data: vec![0.0; width * height * channels],
        }
    }

    #[inline]
    pub fn pixel(&self, y: usize, x: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn set_pixel(&mut self, y: usize, x: usize, c: usize, v: f64) {
        self.data[(y * self.width + x) * self.channels + c] = v;
    }

    /// Planar (CHW) copy, the layout the tensor stack uses.
    pub fn to_planar(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.data.len()];
        let hw = self.height * self.width;
        for y in 0..self.height {
            for x in 0..self.width {
                for c in 0..self.channels {
                    out[c * hw + y * self.width + x] = self.pixel(y, x, c);
                }
            }
        }
        out
    }

    /// Quantize to the 8-bit grid: round(clamp(v,0,1)*255)/255. Generated
    /// datasets pass through this so in-memory and on-disk pipelines agree
    /// bit for bit.
    pub fn quantize_u8(&mut self) {
        for v in &mut self.data {
            *v = (v.clamp(0.0, 1.0) * 255.0).round() / 255.0;
        }
    }

    /// Apply `a*v + b` to every value, without clamping.
    pub fn affine(&self, a: f64, b: f64) -> Image {
        let mut out = self.clone();
        for v in &mut out.data {
            *v = a * *v + b;
        }
        out
    }
}
