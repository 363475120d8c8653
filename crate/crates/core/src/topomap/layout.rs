use std::f64::consts::FRAC_PI_2;
use std::sync::Arc;

use super::{RASTER_COLS, RASTER_ROWS};
use crate::eeg_io::Montage;
use crate::error::Result;

/// Disk radius reached by electrodes on the head equator (polar angle π/2).
pub const EQUATOR_RADIUS: f64 = 0.85;
/// Head-disk radius in pixels.
pub const DISK_RADIUS_PX: f64 = 67.0;

/// Electrode positions in the unit head disk plus the precomputed
/// inverse-distance interpolation plan for the raster.
#[derive(Debug, Clone)]
pub struct ScalpLayout {
    channels: Vec<String>,
    positions: Vec<[f64; 2]>,
    plan: Arc<InterpolationPlan>,
}

#[derive(Debug)]
pub(crate) struct InterpolationPlan {
    /// Raster index of every in-mask pixel.
    pub pixels: Vec<usize>,
    /// `pixels.len() × n_channels` normalized IDW weights.
    pub weights: Vec<f64>,
    pub mask: Vec<bool>,
}

/// Disk coordinates of a pixel center; nose is +y.
pub(crate) fn pixel_to_disk(row: usize, col: usize) -> [f64; 2] {
    let cx = RASTER_COLS as f64 / 2.0;
    let cy = RASTER_ROWS as f64 / 2.0;
    [
        (col as f64 + 0.5 - cx) / DISK_RADIUS_PX,
        (cy - (row as f64 + 0.5)) / DISK_RADIUS_PX,
    ]
}

/// Pixel (row, col) containing a disk position.
pub fn disk_to_pixel(p: [f64; 2]) -> (f64, f64) {
    let cx = RASTER_COLS as f64 / 2.0;
    let cy = RASTER_ROWS as f64 / 2.0;
    (cy - p[1] * DISK_RADIUS_PX, cx + p[0] * DISK_RADIUS_PX)
}

impl ScalpLayout {
    pub fn channels(&self) -> &[String] {
        &self.channels
    }

    /// Disk positions in channel order; x to the right ear, y to the nose.
    pub fn positions(&self) -> &[[f64; 2]] {
        &self.positions
    }

    pub fn position(&self, label: &str) -> Option<[f64; 2]> {
        self.channels
            .iter()
            .position(|c| c.eq_ignore_ascii_case(label))
            .map(|i| self.positions[i])
    }

    pub fn mask(&self) -> &[bool] {
        &self.plan.mask
    }

    pub(crate) fn plan(&self) -> &InterpolationPlan {
        &self.plan
    }
}

/// Azimuthal equidistant projection about the vertex: disk radius grows
/// linearly with polar angle, nose up.
pub fn project_electrodes<S: AsRef<str>>(montage: &Montage, channels: &[S]) -> Result<ScalpLayout> {
    let positions = channels
        .iter()
        .map(|label| {
            let [x, y, z] = montage.position(label.as_ref())?;
            let polar = z.clamp(-1.0, 1.0).acos();
            let radius = EQUATOR_RADIUS * polar / FRAC_PI_2;
            let horizontal = x.hypot(y);
            if horizontal < 1e-15 {
                return Ok([0.0, 0.0]);
            }
            // left ear (+y in head frame) goes to the left of the image
            Ok([-y / horizontal * radius, x / horizontal * radius])
        })
        .collect::<Result<Vec<_>>>()?;
    let plan = Arc::new(build_plan(&positions));
    Ok(ScalpLayout {
        channels: channels.iter().map(|c| c.as_ref().to_string()).collect(),
        positions,
        plan,
    })
}

fn build_plan(positions: &[[f64; 2]]) -> InterpolationPlan {
    let n = positions.len();
    let mut mask = vec![false; RASTER_ROWS * RASTER_COLS];
    let mut pixels = Vec::new();
    let mut weights = Vec::new();
    let mut row_w = vec![0.0; n];
    for r in 0..RASTER_ROWS {
        for c in 0..RASTER_COLS {
            let [u, v] = pixel_to_disk(r, c);
            if u * u + v * v > 1.0 {
                continue;
            }
            let idx = r * RASTER_COLS + c;
            mask[idx] = true;
            pixels.push(idx);
            let mut exact = None;
            for (k, p) in positions.iter().enumerate() {
                let d2 = (u - p[0]).powi(2) + (v - p[1]).powi(2);
                if d2 < 1e-18 {
                    exact = Some(k);
                    break;
                }
                row_w[k] = 1.0 / d2;
            }
            if let Some(k) = exact {
                row_w.iter_mut().for_each(|w| *w = 0.0);
                row_w[k] = 1.0;
            }
            let total: f64 = row_w.iter().sum();
            weights.extend(row_w.iter().map(|w| w / total));
        }
    }
    InterpolationPlan {
        pixels,
        weights,
        mask,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eeg_io::DEAP_CHANNELS;

    fn layout() -> ScalpLayout {
        project_electrodes(&Montage::standard_1020(), &DEAP_CHANNELS).unwrap()
    }

    #[test]
    fn vertex_at_center() {
        let l = layout();
        assert_eq!(l.position("Cz").unwrap(), [0.0, 0.0]);
    }

    #[test]
    fn frontal_pole_is_up() {
        let l = layout();
        for label in ["Fp1", "Fp2"] {
            let p = l.position(label).unwrap();
            // polar 92°, azimuth 18° off the midline
            let expected = EQUATOR_RADIUS * 92.0 / 90.0 * 18f64.to_radians().cos();
            assert!((p[1] - expected).abs() < 1e-9);
            assert!(p[1] > 0.6);
        }
        assert!(l.position("Fp1").unwrap()[0] < 0.0);
        assert!(l.position("Oz").unwrap()[1] < -0.8);
    }

    #[test]
    fn temporal_mirror() {
        let l = layout();
        let (t7, t8) = (l.position("T7").unwrap(), l.position("T8").unwrap());
        assert!((t7[0] + t8[0]).abs() < 1e-9);
        assert!((t7[1] - t8[1]).abs() < 1e-9);
        assert!(t7[0] < 0.0);
    }

    #[test]
    fn all_inside_unit_disk() {
        for p in layout().positions() {
            assert!(p[0].hypot(p[1]) < 1.0);
        }
    }

    #[test]
    fn unknown_label() {
        let err = project_electrodes(&Montage::standard_1020(), &["Cz", "XX9"]).unwrap_err();
        assert!(matches!(err, crate::Error::Montage(_)));
    }

    #[test]
    fn plan_rows_sum_to_one() {
        let l = layout();
        let n = l.channels().len();
        for row in l.plan().weights.chunks(n) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let (r, c) = disk_to_pixel([0.0, 0.0]);
        assert_eq!((r, c), (67.0, 68.0));
    }
}
