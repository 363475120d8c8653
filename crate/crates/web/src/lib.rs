//! Browser bindings: synthetic topoplots, custom weight maps and the notch
//! filter's frequency response.

use icascope::eeg_io::{Montage, NotchFilter, DEAP_CHANNELS};
use icascope::synthgen::{gen_weights, Archetype, ArchetypeParams};
use icascope::topomap::{disk_to_pixel, project_electrodes, render_topoplot, render_weights, RgbImage, ScalpLayout};
use wasm_bindgen::prelude::*;

pub const ROWS: usize = icascope::topomap::RASTER_ROWS;
pub const COLS: usize = icascope::topomap::RASTER_COLS;

fn layout() -> Result<ScalpLayout, JsError> {
    Ok(project_electrodes(&Montage::standard_1020(), &DEAP_CHANNELS)?)
}

/// Opaque inside the head, transparent outside.
fn to_rgba(img: &RgbImage, mask: &[bool]) -> Vec<u8> {
    img.data
        .chunks_exact(3)
        .zip(mask)
        .flat_map(|(px, &inside)| [px[0], px[1], px[2], if inside { 255 } else { 0 }])
        .collect()
}

#[wasm_bindgen]
pub fn raster_rows() -> usize {
    ROWS
}

#[wasm_bindgen]
pub fn raster_cols() -> usize {
    COLS
}

/// Space-separated archetype names.
#[wasm_bindgen]
pub fn archetype_names() -> String {
    Archetype::ALL.map(|a| a.name()).join(" ")
}

/// Space-separated channel labels in weight order.
#[wasm_bindgen]
pub fn channel_names() -> String {
    DEAP_CHANNELS.join(" ")
}

/// Electrode centers as interleaved `(row, col)` pixel coordinates.
#[wasm_bindgen]
pub fn electrode_pixels() -> Result<Vec<f64>, JsError> {
    Ok(layout()?
        .positions()
        .iter()
        .flat_map(|&p| {
            let (r, c) = disk_to_pixel(p);
            [r, c]
        })
        .collect())
}

/// RGBA topoplot of one synthetic component of the named archetype.
#[wasm_bindgen]
pub fn render_archetype(name: &str, seed: u64, noise: f64) -> Result<Vec<u8>, JsError> {
    let archetype: Archetype = name.parse()?;
    let params = ArchetypeParams::sample(archetype, noise, seed);
    let (weights, _) = gen_weights(&params, &Montage::standard_1020())?;
    let layout = layout()?;
    let t = render_topoplot(&weights, &layout)?;
    Ok(to_rgba(&t.image, &t.mask))
}

/// Per-channel weights of the same synthetic component, in channel order.
#[wasm_bindgen]
pub fn archetype_weights(name: &str, seed: u64, noise: f64) -> Result<Vec<f64>, JsError> {
    let archetype: Archetype = name.parse()?;
    let params = ArchetypeParams::sample(archetype, noise, seed);
    let (weights, _) = gen_weights(&params, &Montage::standard_1020())?;
    Ok(weights.weights().to_vec())
}

/// RGBA topoplot of 32 weights in channel order, clamped to [−1, 1].
#[wasm_bindgen]
pub fn render_custom(weights: &[f64]) -> Result<Vec<u8>, JsError> {
    let layout = layout()?;
    let t = render_weights(weights, &layout)?;
    Ok(to_rgba(&t.image, &t.mask))
}

/// Magnitude response of a notch cascade at `points` frequencies spread
/// evenly from 0 to Nyquist.
#[wasm_bindgen]
pub fn notch_response(freqs: &[f64], bandwidth: f64, sample_rate: f64, points: usize) -> Result<Vec<f64>, JsError> {
    let filter = NotchFilter::design(freqs, bandwidth, sample_rate)?;
    let nyquist = sample_rate / 2.0;
    let steps = points.max(2) - 1;
    Ok((0..=steps)
        .map(|i| filter.magnitude(nyquist * i as f64 / steps as f64))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rgba_and_response_shapes() {
        let rgba = render_archetype("BEOG", 1, 0.0).unwrap();
        assert_eq!(rgba.len(), ROWS * COLS * 4);
        assert_eq!(rgba[3], 0);
        let center = ((ROWS / 2) * COLS + COLS / 2) * 4;
        assert_eq!(rgba[center + 3], 255);
        let zeros = render_custom(&[0.0; 32]).unwrap();
        assert_eq!(zeros.len(), rgba.len());
        assert_eq!(electrode_pixels().unwrap().len(), 64);
        let r = notch_response(&[50.0], 2.0, 512.0, 257).unwrap();
        assert_eq!(r.len(), 257);
        assert!(r[50] < 1e-6);
        assert!((r[0] - 1.0).abs() < 1e-9);
        assert_eq!(archetype_weights("IF", 4, 0.0).unwrap().iter().filter(|w| **w != 0.0).count(), 1);
    }
}
