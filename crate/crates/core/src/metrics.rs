//! Segmentation quality metrics: Dice, IoU, and the 95th-percentile
//! Hausdorff distance over boundary point sets.
//!
//! HD95 conventions (documented, since tooling differs):
//! - boundary pixels = foreground pixels with at least one background
//!   4-neighbor; the image border counts as background;
//! - directed distances are nearest-Euclidean between boundary sets;
//! - the percentile interpolates linearly between closest order statistics;
//! - HD95 = max of the two directed 95th percentiles;
//! - one empty mask vs a non-empty one is undefined (reported, excluded
//!   from aggregates); two empty masks give 0.
//!
//! `hd95` runs on an exact two-pass squared Euclidean distance transform;
//! `hd95_oracle` is the naive all-pairs reference the fast path is gated
//! against.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SegMask {
    pub width: usize,
    pub height: usize,
    /// Row-major, values 0/1.
    pub bits: Vec<u8>,
}

impl SegMask {
    pub fn new(width: usize, height: usize, bits: Vec<u8>) -> Self {
        assert_eq!(bits.len(), width * height, "SegMask: size mismatch");
        debug_assert!(bits.iter().all(|&b| b <= 1), "SegMask: values must be 0/1");
        SegMask {
            width,
            height,
            bits,
        }
    }

    pub fn from_probabilities(probs: &[f64], width: usize, height: usize, threshold: f64) -> Self {
        let bits = probs
            .iter()
            .map(|&p| if p >= threshold { 1 } else { 0 })
            .collect();
        SegMask::new(width, height, bits)
    }

    pub fn foreground(&self) -> usize {
        self.bits.iter().map(|&b| b as usize).sum()
    }

    fn same_dims(&self, other: &SegMask, context: &'static str) -> Result<()> {
        if self.width != other.width || self.height != other.height {
            return Err(Error::DimMismatch {
                context,
                lhs: (self.height, self.width),
                rhs: (other.height, other.width),
            });
        }
        Ok(())
    }

    /// Boundary pixels (y, x): foreground with a background 4-neighbor,
    /// where outside-the-image counts as background.
    pub fn boundary_points(&self) -> Vec<(usize, usize)> {
        let (h, w) = (self.height, self.width);
        let mut points = Vec::new();
        for y in 0..h {
            for x in 0..w {
                if self.bits[y * w + x] == 0 {
                    continue;
                }
                let edge = y == 0
                    || x == 0
                    || y == h - 1
                    || x == w - 1
                    || self.bits[(y - 1) * w + x] == 0
                    || self.bits[(y + 1) * w + x] == 0
                    || self.bits[y * w + x - 1] == 0
                    || self.bits[y * w + x + 1] == 0;
                if edge {
                    points.push((y, x));
                }
            }
        }
        points
    }
}

pub fn dice_score(pred: &SegMask, gt: &SegMask) -> Result<f64> {
    pred.same_dims(gt, "dice")?;
    let mut inter = 0usize;
    let mut p = 0usize;
    let mut g = 0usize;
    for (&a, &b) in pred.bits.iter().zip(&gt.bits) {
        inter += (a & b) as usize;
        p += a as usize;
        g += b as usize;
    }
    if p + g == 0 {
        // Both empty: perfect agreement by convention.
        return Ok(1.0);
    }
    Ok(2.0 * inter as f64 / (p + g) as f64)
}

pub fn iou_score(pred: &SegMask, gt: &SegMask) -> Result<f64> {
    pred.same_dims(gt, "iou")?;
    let mut inter = 0usize;
    let mut union = 0usize;
    for (&a, &b) in pred.bits.iter().zip(&gt.bits) {
        inter += (a & b) as usize;
        union += (a | b) as usize;
    }
    if union == 0 {
        return Ok(1.0);
    }
    Ok(inter as f64 / union as f64)
}

/// HD95 outcome; `Undefined` when exactly one mask is empty.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Hd95 {
    Defined(f64),
    Undefined,
}

impl Hd95 {
    pub fn value(self) -> Option<f64> {
        match self {
            Hd95::Defined(v) => Some(v),
            Hd95::Undefined => None,
        }
    }
}

/// 95th percentile with linear interpolation between closest ranks;
/// `values` need not be sorted.
fn percentile_95(values: &mut [f64]) -> f64 {
    debug_assert!(!values.is_empty());
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let rank = 0.95 * (values.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = (lo + 1).min(values.len() - 1);
    let frac = rank - lo as f64;
    values[lo] + frac * (values[hi] - values[lo])
}

fn hd95_from_squared(d_pred: Vec<i64>, d_gt: Vec<i64>) -> f64 {
    let mut a: Vec<f64> = d_pred.into_iter().map(|d| (d as f64).sqrt()).collect();
    let mut b: Vec<f64> = d_gt.into_iter().map(|d| (d as f64).sqrt()).collect();
    percentile_95(&mut a).max(percentile_95(&mut b))
}

/// Exact 1-D squared-distance lower envelope (Felzenszwalb-Huttenlocher).
/// `f` holds squared distances (i64::MAX/4 as "no seed"); output likewise.
fn edt_1d(f: &[i64], out: &mut [i64]) {
    const INF: i64 = i64::MAX / 4;
    let n = f.len();
    let mut v = vec![0usize; n];
    let mut z = vec![0.0f64; n + 1];
    let mut k = 0usize;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in 1..n {
        if f[q] >= INF {
            continue;
        }
        loop {
            let p = v[k];
            if f[p] >= INF {
                // First finite parabola.
                v[k] = q;
                z[k] = f64::NEG_INFINITY;
                z[k + 1] = f64::INFINITY;
                break;
            }
            let s = ((f[q] + (q * q) as i64) - (f[p] + (p * p) as i64)) as f64
                / (2 * (q - p)) as f64;
            if s <= z[k] {
                if k == 0 {
                    v[0] = q;
                    z[0] = f64::NEG_INFINITY;
                    z[1] = f64::INFINITY;
                    break;
                }
                k -= 1;
            } else {
                k += 1;
                v[k] = q;
                z[k] = s;
                z[k + 1] = f64::INFINITY;
                break;
            }
        }
    }
    let mut k = 0usize;
    for q in 0..n {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let p = v[k];
        out[q] = if f[p] >= INF {
            INF
        } else {
            let d = q as i64 - p as i64;
            d * d + f[p]
        };
    }
}

/// Exact squared Euclidean distance transform to the seed set.
fn distance_transform(seeds: &[(usize, usize)], h: usize, w: usize) -> Vec<i64> {
    const INF: i64 = i64::MAX / 4;
    let mut grid = vec![INF; h * w];
    for &(y, x) in seeds {
        grid[y * w + x] = 0;
    }
    // Columns first, then rows.
    let mut col_in = vec![0i64; h];
    let mut col_out = vec![0i64; h];
    for x in 0..w {
        for y in 0..h {
            col_in[y] = grid[y * w + x];
        }
        edt_1d(&col_in, &mut col_out);
        for y in 0..h {
            grid[y * w + x] = col_out[y];
        }
    }
    let mut row_in = vec![0i64; w];
    let mut row_out = vec![0i64; w];
    for y in 0..h {
        row_in.copy_from_slice(&grid[y * w..(y + 1) * w]);
        edt_1d(&row_in, &mut row_out);
        grid[y * w..(y + 1) * w].copy_from_slice(&row_out);
    }
    grid
}

/// Accelerated HD95 via the exact distance transform.
pub fn hd95(pred: &SegMask, gt: &SegMask) -> Result<Hd95> {
    pred.same_dims(gt, "hd95")?;
    let bp = pred.boundary_points();
    let bg = gt.boundary_points();
    match (bp.is_empty(), bg.is_empty()) {
        (true, true) => return Ok(Hd95::Defined(0.0)),
        (true, false) | (false, true) => return Ok(Hd95::Undefined),
        _ => {}
    }
    let (h, w) = (pred.height, pred.width);
    let dt_gt = distance_transform(&bg, h, w);
    let dt_pred = distance_transform(&bp, h, w);
    let d_pred: Vec<i64> = bp.iter().map(|&(y, x)| dt_gt[y * w + x]).collect();
    let d_gt: Vec<i64> = bg.iter().map(|&(y, x)| dt_pred[y * w + x]).collect();
    Ok(Hd95::Defined(hd95_from_squared(d_pred, d_gt)))
}

/// Naive all-pairs HD95 reference with the same contract as [`hd95`].
pub fn hd95_oracle(pred: &SegMask, gt: &SegMask) -> Result<Hd95> {
    pred.same_dims(gt, "hd95")?;
    let bp = pred.boundary_points();
    let bg = gt.boundary_points();
    match (bp.is_empty(), bg.is_empty()) {
        (true, true) => return Ok(Hd95::Defined(0.0)),
        (true, false) | (false, true) => return Ok(Hd95::Undefined),
        _ => {}
    }
    let nearest = |from: &[(usize, usize)], to: &[(usize, usize)]| -> Vec<i64> {
        from.iter()
            .map(|&(y, x)| {
                to.iter()
                    .map(|&(gy, gx)| {
                        let dy = y as i64 - gy as i64;
                        let dx = x as i64 - gx as i64;
                        dy * dy + dx * dx
                    })
                    .min()
                    .unwrap()
            })
            .collect()
    };
    Ok(Hd95::Defined(hd95_from_squared(
        nearest(&bp, &bg),
        nearest(&bg, &bp),
    )))
}

/// Per-image metric row; `hd95` is None when undefined.
#[derive(Debug, Clone)]
pub struct MetricRow {
    pub name: String,
    pub dice: f64,
    pub iou: f64,
    pub hd95: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct MetricReport {
    pub rows: Vec<MetricRow>,
    pub mean_dice: f64,
    pub median_dice: f64,
    pub mean_iou: f64,
    pub median_iou: f64,
    /// Mean/median over images where HD95 is defined.
    pub mean_hd95: Option<f64>,
    pub median_hd95: Option<f64>,
    pub hd95_undefined: usize,
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

impl MetricReport {
    pub fn from_rows(rows: Vec<MetricRow>) -> MetricReport {
        assert!(!rows.is_empty(), "MetricReport: no rows");
        let mut dices: Vec<f64> = rows.iter().map(|r| r.dice).collect();
        let mut ious: Vec<f64> = rows.iter().map(|r| r.iou).collect();
        let mut hds: Vec<f64> = rows.iter().filter_map(|r| r.hd95).collect();
        let undefined = rows.len() - hds.len();
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        dices.sort_by(|a, b| a.partial_cmp(b).unwrap());
        ious.sort_by(|a, b| a.partial_cmp(b).unwrap());
        hds.sort_by(|a, b| a.partial_cmp(b).unwrap());
        MetricReport {
            mean_dice: mean(&dices),
            median_dice: median(&dices),
            mean_iou: mean(&ious),
            median_iou: median(&ious),
            mean_hd95: if hds.is_empty() { None } else { Some(mean(&hds)) },
            median_hd95: if hds.is_empty() {
                None
            } else {
                Some(median(&hds))
            },
            hd95_undefined: undefined,
            rows,
        }
    }

    /// Evaluate a list of (name, pred, gt) pairs.
    pub fn evaluate(pairs: &[(String, SegMask, SegMask)]) -> Result<MetricReport> {
        let mut rows = Vec::with_capacity(pairs.len());
        for (name, pred, gt) in pairs {
            rows.push(MetricRow {
                name: name.clone(),
                dice: dice_score(pred, gt)?,
                iou: iou_score(pred, gt)?,
                hd95: hd95(pred, gt)?.value(),
            });
        }
        Ok(MetricReport::from_rows(rows))
    }

    /// Tab-separated, machine-parseable serialization (per-image rows then
    /// aggregate rows). Lines starting with '#' echo configuration.
    pub fn to_tsv(&self, header_comments: &[String]) -> String {
        let mut out = String::new();
        for c in header_comments {
            out.push_str(&format!("# {c}\n"));
        }
        out.push_str("name\tdice\tiou\thd95\n");
        let fmt_hd = |h: Option<f64>| match h {
            Some(v) => format!("{v:.6}"),
            None => "undefined".to_string(),
        };
        for r in &self.rows {
            out.push_str(&format!(
                "{}\t{:.6}\t{:.6}\t{}\n",
                r.name,
                r.dice,
                r.iou,
                fmt_hd(r.hd95)
            ));
        }
        out.push_str(&format!(
            "mean\t{:.6}\t{:.6}\t{}\n",
            self.mean_dice,
            self.mean_iou,
            fmt_hd(self.mean_hd95)
        ));
        out.push_str(&format!(
            "median\t{:.6}\t{:.6}\t{}\n",
            self.median_dice,
            self.median_iou,
            fmt_hd(self.median_hd95)
        ));
        out.push_str(&format!("hd95_undefined\t{}\n", self.hd95_undefined));
        out
    }

    /// Aligned-column text for humans.
    pub fn to_aligned(&self) -> String {
        let name_w = self
            .rows
            .iter()
            .map(|r| r.name.len())
            .chain(std::iter::once("median".len()))
            .max()
            .unwrap_or(6);
        let mut out = format!(
            "{:<name_w$}  {:>8}  {:>8}  {:>10}\n",
            "name", "dice", "iou", "hd95"
        );
        let fmt_hd = |h: Option<f64>| match h {
            Some(v) => format!("{v:10.4}"),
            None => format!("{:>10}", "undef"),
        };
        for r in &self.rows {
            out.push_str(&format!(
                "{:<name_w$}  {:8.4}  {:8.4}  {}\n",
                r.name,
                r.dice,
                r.iou,
                fmt_hd(r.hd95)
            ));
        }
        out.push_str(&format!(
            "{:<name_w$}  {:8.4}  {:8.4}  {}\n",
            "mean",
            self.mean_dice,
            self.mean_iou,
            fmt_hd(self.mean_hd95)
        ));
        out.push_str(&format!(
            "{:<name_w$}  {:8.4}  {:8.4}  {}\n",
            "median",
            self.median_dice,
            self.median_iou,
            fmt_hd(self.median_hd95)
        ));
        if self.hd95_undefined > 0 {
            out.push_str(&format!(
                "hd95 undefined on {} image(s), excluded from aggregates\n",
                self.hd95_undefined
            ));
        }
        out
    }
}
