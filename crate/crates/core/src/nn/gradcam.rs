use super::model::{images_to_tensor, TrainedModel};
use super::Mode;
use crate::error::{Error, Result};
use crate::topomap::RgbImage;

/// Class-activation map at image resolution, values in [−1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct HeatMap {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

impl HeatMap {
    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols + col]
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Row/column centroid of the positive part of the map.
    pub fn positive_centroid(&self) -> Option<(f64, f64)> {
        let (mut m, mut r, mut c) = (0.0, 0.0, 0.0);
        for (i, &v) in self.values.iter().enumerate() {
            if v > 0.0 {
                m += v;
                r += v * (i / self.cols) as f64;
                c += v * (i % self.cols) as f64;
            }
        }
        (m > 0.0).then(|| (r / m, c / m))
    }
}

/// Grad-CAM for `target_class` on one image: the last block's feature maps
/// weighted by the spatial mean of the target logit's gradient, bilinearly
/// upsampled and scaled so the largest magnitude is 1.
pub fn grad_cam(model: &TrainedModel, image: &RgbImage, target_class: usize) -> Result<HeatMap> {
    let spec = model.spec();
    if target_class >= spec.outputs {
        return Err(Error::Index {
            index: target_class,
            len: spec.outputs,
        });
    }
    let x = images_to_tensor(&[image])?;
    let (_, cache) = model.network.forward(&x, Mode::Infer)?;
    let acts = cache.last_activation();
    let (f, h, w) = (acts.shape()[1], acts.shape()[2], acts.shape()[3]);
    let plane = h * w;
    // the last block is unpooled and feeds the head directly, so the
    // gradient of a logit w.r.t. the feature maps is that logit's weight row
    let head = model.network.head();
    let row = &head.weight.data()[target_class * head.inputs()..(target_class + 1) * head.inputs()];
    let mut coarse = vec![0.0f64; plane];
    for ch in 0..f {
        let grad = &row[ch * plane..(ch + 1) * plane];
        let alpha = grad.iter().map(|&g| g as f64).sum::<f64>() / plane as f64;
        for (c, &a) in coarse.iter_mut().zip(&acts.data()[ch * plane..(ch + 1) * plane]) {
            *c += alpha * a as f64;
        }
    }
    let (rows, cols) = (image.rows, image.cols);
    let mut values = bilinear(&coarse, h, w, rows, cols);
    let peak = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        values.iter_mut().for_each(|v| *v /= peak);
    }
    Ok(HeatMap { rows, cols, values })
}

/// Half-pixel-centered bilinear resize with edge clamping.
fn bilinear(src: &[f64], h: usize, w: usize, rows: usize, cols: usize) -> Vec<f64> {
    let coord = |o: usize, n_out: usize, n_in: usize| {
        let s = ((o as f64 + 0.5) * n_in as f64 / n_out as f64 - 0.5).clamp(0.0, (n_in - 1) as f64);
        let lo = s.floor() as usize;
        let hi = (lo + 1).min(n_in - 1);
        (lo, hi, s - lo as f64)
    };
    let mut out = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        let (y0, y1, fy) = coord(r, rows, h);
        for c in 0..cols {
            let (x0, x1, fx) = coord(c, cols, w);
            let top = src[y0 * w + x0] * (1.0 - fx) + src[y0 * w + x1] * fx;
            let bottom = src[y1 * w + x0] * (1.0 - fx) + src[y1 * w + x1] * fx;
            out.push(top * (1.0 - fy) + bottom * fy);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bilinear_preserves_constants_and_corners() {
        let up = bilinear(&[2.0; 4], 2, 2, 5, 7);
        assert!(up.iter().all(|&v| (v - 2.0).abs() < 1e-12));
        let up = bilinear(&[0.0, 1.0, 2.0, 3.0], 2, 2, 4, 4);
        assert_eq!(up[0], 0.0);
        assert_eq!(up[15], 3.0);
        // monotone along rows and columns
        for r in 0..4 {
            for c in 1..4 {
                assert!(up[r * 4 + c] >= up[r * 4 + c - 1]);
            }
        }
    }
}
