use super::layout::ScalpLayout;
use super::palette::Palette;
use super::{RASTER_COLS, RASTER_ROWS};
use crate::error::{Error, Result};
use crate::ica::ComponentWeights;

/// 8-bit RGB raster, row-major, interleaved channels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<u8>,
}

impl RgbImage {
    pub fn pixel(&self, row: usize, col: usize) -> [u8; 3] {
        let i = (row * self.cols + col) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Topoplot {
    pub image: RgbImage,
    /// Interpolated weights clamped to [−1, 1]; 0 outside the head.
    pub field: Vec<f64>,
    pub mask: Vec<bool>,
}

impl Topoplot {
    pub fn field_at(&self, row: usize, col: usize) -> f64 {
        self.field[row * RASTER_COLS + col]
    }
}

/// Renders normalized component weights, matching channels by name.
pub fn render_topoplot(w: &ComponentWeights, layout: &ScalpLayout) -> Result<Topoplot> {
    let ordered = layout
        .channels()
        .iter()
        .map(|ch| {
            w.weight_of(ch)
                .ok_or_else(|| Error::Shape(format!("weights lack layout channel `{ch}`")))
        })
        .collect::<Result<Vec<_>>>()?;
    render_weights(&ordered, layout)
}

/// Renders raw weights given in layout channel order. Values are not
/// renormalized; the field is clamped to [−1, 1].
pub fn render_weights(weights: &[f64], layout: &ScalpLayout) -> Result<Topoplot> {
    let n = layout.channels().len();
    if weights.len() != n {
        return Err(Error::Shape(format!("{} weights for {n} channels", weights.len())));
    }
    if weights.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite weight".into()));
    }
    let palette = Palette::parula();
    let plan = layout.plan();
    let mut data = vec![255u8; RASTER_ROWS * RASTER_COLS * 3];
    let mut field = vec![0.0; RASTER_ROWS * RASTER_COLS];
    for (&pix, idw) in plan.pixels.iter().zip(plan.weights.chunks_exact(n)) {
        let v: f64 = idw.iter().zip(weights).map(|(a, b)| a * b).sum();
        let v = v.clamp(-1.0, 1.0);
        field[pix] = v;
        let rgb = palette.color((v + 1.0) / 2.0)?;
        data[pix * 3..pix * 3 + 3].copy_from_slice(&rgb);
    }
    Ok(Topoplot {
        image: RgbImage {
            rows: RASTER_ROWS,
            cols: RASTER_COLS,
            data,
        },
        field,
        mask: plan.mask.clone(),
    })
}
