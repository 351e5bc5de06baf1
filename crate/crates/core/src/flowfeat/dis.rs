//! Coarse-to-fine patch-based flow with inverse-search alignment.
//!
//! At each pyramid level, translation-only alignment of overlapping patches
//! runs against gradients precomputed on the reference image (the inverse
//! trick: the 2x2 normal matrix of a patch is fixed across iterations).
//! Patch flows are densified into a per-pixel field by residual-weighted
//! averaging and upsampled to seed the next finer level.

use crate::error::{Error, Result};

use super::{FlowConfig, FlowField, GrayImage};

/// Patches whose alignment drifts further than this many patch sides from
/// their initialization are discarded as diverged.
const MAX_DRIFT_PATCHES: f64 = 2.0;
/// Residual weight floor; keeps weights finite for perfectly aligned patches.
const WEIGHT_EPS: f64 = 1e-3;
/// Residual assigned to patches that had to be filled from neighbors.
const FILLED_MSE: f64 = 1.0;

struct Level {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Level {
    #[inline]
    fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    /// Bilinear sample with border clamp.
    fn sample(&self, x: f64, y: f64) -> f64 {
        let x = x.clamp(0.0, (self.width - 1) as f64);
        let y = y.clamp(0.0, (self.height - 1) as f64);
        let x0 = x.floor() as usize;
        let y0 = y.floor() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = x - x0 as f64;
        let fy = y - y0 as f64;
        let top = self.get(x0, y0) * (1.0 - fx) + self.get(x1, y0) * fx;
        let bot = self.get(x0, y1) * (1.0 - fx) + self.get(x1, y1) * fx;
        top * (1.0 - fy) + bot * fy
    }

    fn downsample(&self) -> Level {
        let w = self.width / 2;
        let h = self.height / 2;
        let mut data = Vec::with_capacity(w * h);
        for y in 0..h {
            for x in 0..w {
                let s = self.get(2 * x, 2 * y)
                    + self.get(2 * x + 1, 2 * y)
                    + self.get(2 * x, 2 * y + 1)
                    + self.get(2 * x + 1, 2 * y + 1);
                data.push(s / 4.0);
            }
        }
        Level { width: w, height: h, data }
    }
}

fn build_pyramid(img: &GrayImage, levels: usize) -> Vec<Level> {
    let mut pyr = Vec::with_capacity(levels);
    pyr.push(Level {
        width: img.width(),
        height: img.height(),
        data: img.pixels().to_vec(),
    });
    for _ in 1..levels {
        let next = pyr.last().unwrap().downsample();
        pyr.push(next);
    }
    pyr
}

/// Central-difference gradients over a whole level, clamped at the borders.
fn gradients(level: &Level) -> (Vec<f64>, Vec<f64>) {
    let (w, h) = (level.width, level.height);
    let mut gx = vec![0.0; w * h];
    let mut gy = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let xm = x.saturating_sub(1);
            let xp = (x + 1).min(w - 1);
            let ym = y.saturating_sub(1);
            let yp = (y + 1).min(h - 1);
            gx[y * w + x] = (level.get(xp, y) - level.get(xm, y)) / (xp - xm) as f64;
            gy[y * w + x] = (level.get(x, yp) - level.get(x, ym)) / (yp - ym) as f64;
        }
    }
    (gx, gy)
}

/// Patch grid positions along one axis: stride steps plus a final position
/// flush with the border so every pixel is covered.
fn patch_positions(extent: usize, patch: usize, stride: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let last = extent - patch;
    let mut p = 0;
    while p < last {
        out.push(p);
        p += stride;
    }
    out.push(last);
    out
}

struct Patch {
    flow: [f64; 2],
    mse: f64,
    valid: bool,
}

/// Dense flow from `reference` to `current`.
pub fn dense_flow(reference: &GrayImage, current: &GrayImage, cfg: &FlowConfig) -> Result<FlowField> {
    cfg.validate()?;
    if reference.width() != current.width() || reference.height() != current.height() {
        return Err(Error::config(format!(
            "image sizes differ: {}x{} vs {}x{}",
            reference.width(),
            reference.height(),
            current.width(),
            current.height()
        )));
    }

    // Drop pyramid levels that would be smaller than two patches.
    let min_side = reference.width().min(reference.height());
    let mut levels = cfg.levels;
    while levels > 1 && (min_side >> (levels - 1)) < 2 * cfg.patch_size {
        levels -= 1;
    }

    let ref_pyr = build_pyramid(reference, levels);
    let cur_pyr = build_pyramid(current, levels);

    let mut dense_u: Vec<f64> = Vec::new();
    let mut dense_v: Vec<f64> = Vec::new();
    let mut prev_dims = (0usize, 0usize);

    for li in (0..levels).rev() {
        let ref_level = &ref_pyr[li];
        let cur_level = &cur_pyr[li];
        let (w, h) = (ref_level.width, ref_level.height);

        // Seed from the coarser level (zero at the coarsest).
        let (init_u, init_v) = if dense_u.is_empty() {
            (vec![0.0; w * h], vec![0.0; w * h])
        } else {
            upsample(&dense_u, &dense_v, prev_dims, (w, h))
        };

        let (gx, gy) = gradients(ref_level);
        let xs = patch_positions(w, cfg.patch_size, cfg.stride);
        let ys = patch_positions(h, cfg.patch_size, cfg.stride);
        let mut patches: Vec<Patch> = Vec::with_capacity(xs.len() * ys.len());

        for &py in &ys {
            for &px in &xs {
                patches.push(align_patch(
                    ref_level, cur_level, &gx, &gy, &init_u, &init_v, px, py, cfg,
                ));
            }
        }

        fill_invalid(&mut patches, xs.len(), ys.len());

        let (du, dv) = densify(&patches, &xs, &ys, cfg.patch_size, w, h, &init_u, &init_v);
        dense_u = du;
        dense_v = dv;
        prev_dims = (w, h);
    }

    FlowField::new(reference.width(), reference.height(), dense_u, dense_v)
}

#[allow(clippy::too_many_arguments)]
fn align_patch(
    ref_level: &Level,
    cur_level: &Level,
    gx: &[f64],
    gy: &[f64],
    init_u: &[f64],
    init_v: &[f64],
    px: usize,
    py: usize,
    cfg: &FlowConfig,
) -> Patch {
    let n = cfg.patch_size;
    let w = ref_level.width;
    let area = (n * n) as f64;

    // Patch statistics and the fixed 2x2 normal matrix from the reference
    // gradients.
    let mut mean = 0.0;
    for y in py..py + n {
        for x in px..px + n {
            mean += ref_level.get(x, y);
        }
    }
    mean /= area;
    let mut var = 0.0;
    let (mut h00, mut h01, mut h11) = (0.0, 0.0, 0.0);
    for y in py..py + n {
        for x in px..px + n {
            let d = ref_level.get(x, y) - mean;
            var += d * d;
            let i = y * w + x;
            h00 += gx[i] * gx[i];
            h01 += gx[i] * gy[i];
            h11 += gy[i] * gy[i];
        }
    }
    var /= area;

    // Seed from the dense flow of the coarser level at the patch center.
    let ci = (py + n / 2) * w + (px + n / 2);
    let seed = [init_u[ci], init_v[ci]];

    let det = h00 * h11 - h01 * h01;
    if var < cfg.texture_var_min || det.abs() < 1e-14 {
        return Patch { flow: seed, mse: FILLED_MSE, valid: false };
    }

    let inv = [h11 / det, -h01 / det, h00 / det];
    let mut flow = seed;
    for _ in 0..cfg.max_iters {
        let mut b0 = 0.0;
        let mut b1 = 0.0;
        for y in py..py + n {
            for x in px..px + n {
                let r = cur_level.sample(x as f64 + flow[0], y as f64 + flow[1])
                    - ref_level.get(x, y);
                let i = y * w + x;
                b0 += gx[i] * r;
                b1 += gy[i] * r;
            }
        }
        let du = -(inv[0] * b0 + inv[1] * b1);
        let dv = -(inv[1] * b0 + inv[2] * b1);
        flow[0] += du;
        flow[1] += dv;
        if du.hypot(dv) < cfg.min_update_px {
            break;
        }
    }

    let drift = (flow[0] - seed[0]).hypot(flow[1] - seed[1]);
    if !flow[0].is_finite() || !flow[1].is_finite() || drift > MAX_DRIFT_PATCHES * n as f64 {
        return Patch { flow: seed, mse: FILLED_MSE, valid: false };
    }

    let mut mse = 0.0;
    for y in py..py + n {
        for x in px..px + n {
            let r = cur_level.sample(x as f64 + flow[0], y as f64 + flow[1]) - ref_level.get(x, y);
            mse += r * r;
        }
    }
    Patch { flow, mse: mse / area, valid: true }
}

/// Give textureless or diverged patches the mean flow of their valid
/// neighbors, propagating outward until nothing changes.
fn fill_invalid(patches: &mut [Patch], nx: usize, ny: usize) {
    loop {
        let mut fills: Vec<(usize, [f64; 2])> = Vec::new();
        for gy in 0..ny {
            for gx in 0..nx {
                let idx = gy * nx + gx;
                if patches[idx].valid {
                    continue;
                }
                let mut sum = [0.0; 2];
                let mut count = 0.0;
                for dy in -1i64..=1 {
                    for dx in -1i64..=1 {
                        if dx == 0 && dy == 0 {
                            continue;
                        }
                        let (qx, qy) = (gx as i64 + dx, gy as i64 + dy);
                        if qx < 0 || qy < 0 || qx >= nx as i64 || qy >= ny as i64 {
                            continue;
                        }
                        let q = &patches[(qy as usize) * nx + qx as usize];
                        if q.valid {
                            sum[0] += q.flow[0];
                            sum[1] += q.flow[1];
                            count += 1.0;
                        }
                    }
                }
                if count > 0.0 {
                    fills.push((idx, [sum[0] / count, sum[1] / count]));
                }
            }
        }
        if fills.is_empty() {
            // Patches with no valid neighbor anywhere keep their seed flow.
            break;
        }
        for (idx, flow) in fills {
            patches[idx].flow = flow;
            patches[idx].mse = FILLED_MSE;
            patches[idx].valid = true;
        }
    }
}

/// Residual-weighted average of every patch covering each pixel.
#[allow(clippy::too_many_arguments)]
fn densify(
    patches: &[Patch],
    xs: &[usize],
    ys: &[usize],
    patch: usize,
    w: usize,
    h: usize,
    init_u: &[f64],
    init_v: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let mut u = vec![0.0; w * h];
    let mut v = vec![0.0; w * h];
    let mut weight = vec![0.0; w * h];
    for (pi, p) in patches.iter().enumerate() {
        let px = xs[pi % xs.len()];
        let py = ys[pi / xs.len()];
        let wgt = 1.0 / (WEIGHT_EPS + p.mse);
        for y in py..py + patch {
            let row = y * w;
            for x in px..px + patch {
                u[row + x] += wgt * p.flow[0];
                v[row + x] += wgt * p.flow[1];
                weight[row + x] += wgt;
            }
        }
    }
    for i in 0..w * h {
        if weight[i] > 0.0 {
            u[i] /= weight[i];
            v[i] /= weight[i];
        } else {
            u[i] = init_u[i];
            v[i] = init_v[i];
        }
    }
    (u, v)
}

/// Bilinear upsample of the coarser flow, with components scaled by the
/// resolution ratio.
fn upsample(
    u: &[f64],
    v: &[f64],
    from: (usize, usize),
    to: (usize, usize),
) -> (Vec<f64>, Vec<f64>) {
    let (fw, fh) = from;
    let (tw, th) = to;
    let level = Level { width: fw, height: fh, data: u.to_vec() };
    let level_v = Level { width: fw, height: fh, data: v.to_vec() };
    let sx = fw as f64 / tw as f64;
    let sy = fh as f64 / th as f64;
    let scale = tw as f64 / fw as f64;
    let mut out_u = Vec::with_capacity(tw * th);
    let mut out_v = Vec::with_capacity(tw * th);
    for y in 0..th {
        for x in 0..tw {
            let fx = (x as f64 + 0.5) * sx - 0.5;
            let fy = (y as f64 + 0.5) * sy - 0.5;
            out_u.push(level.sample(fx, fy) * scale);
            out_v.push(level_v.sample(fx, fy) * scale);
        }
    }
    (out_u, out_v)
}
