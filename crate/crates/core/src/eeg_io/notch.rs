use std::f64::consts::PI;

use super::Recording;
use crate::error::{Error, Result};

/// Direct-form-I second-order section, `a0` normalized to 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 2],
}

impl Biquad {
    /// Second-order notch at `freq` whose -3 dB points are exactly
    /// `bandwidth` Hz apart (bilinear-transform design).
    pub fn notch(freq: f64, bandwidth: f64, sample_rate: f64) -> Result<Self> {
        let nyquist = sample_rate / 2.0;
        if !(freq > 0.0 && freq < nyquist) {
            return Err(Error::FilterDesign(format!(
                "notch at {freq} Hz outside (0, {nyquist}) Hz"
            )));
        }
        if !(bandwidth > 0.0 && bandwidth < nyquist) {
            return Err(Error::FilterDesign(format!(
                "bandwidth {bandwidth} Hz must lie in (0, {nyquist}) Hz"
            )));
        }
        let w0 = 2.0 * PI * freq / sample_rate;
        let beta = (PI * bandwidth / sample_rate).tan();
        let gain = 1.0 / (1.0 + beta);
        let c = w0.cos();
        Ok(Self {
            b: [gain, -2.0 * gain * c, gain],
            a: [-2.0 * gain * c, 2.0 * gain - 1.0],
        })
    }

    /// |H(e^{jw})| at `freq`.
    pub fn magnitude(&self, freq: f64, sample_rate: f64) -> f64 {
        let w = 2.0 * PI * freq / sample_rate;
        let (c1, s1, c2, s2) = (w.cos(), w.sin(), (2.0 * w).cos(), (2.0 * w).sin());
        let num_re = self.b[0] + self.b[1] * c1 + self.b[2] * c2;
        let num_im = -(self.b[1] * s1 + self.b[2] * s2);
        let den_re = 1.0 + self.a[0] * c1 + self.a[1] * c2;
        let den_im = -(self.a[0] * s1 + self.a[1] * s2);
        (num_re.hypot(num_im)) / (den_re.hypot(den_im))
    }

    /// Runs the section over `x` in place, starting from rest.
    pub fn apply(&self, x: &mut [f64]) {
        let (mut x1, mut x2, mut y1, mut y2) = (0.0, 0.0, 0.0, 0.0);
        for v in x.iter_mut() {
            let x0 = *v;
            let y0 = self.b[0] * x0 + self.b[1] * x1 + self.b[2] * x2 - self.a[0] * y1 - self.a[1] * y2;
            x2 = x1;
            x1 = x0;
            y2 = y1;
            y1 = y0;
            *v = y0;
        }
    }
}

/// Cascade of notch sections, one per target frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct NotchFilter {
    pub sections: Vec<Biquad>,
    pub sample_rate: f64,
}

impl NotchFilter {
    pub fn design(freqs: &[f64], bandwidth: f64, sample_rate: f64) -> Result<Self> {
        let sections = freqs
            .iter()
            .map(|&f| Biquad::notch(f, bandwidth, sample_rate))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            sections,
            sample_rate,
        })
    }

    pub fn magnitude(&self, freq: f64) -> f64 {
        self.sections
            .iter()
            .map(|s| s.magnitude(freq, self.sample_rate))
            .product()
    }

    pub fn apply(&self, x: &mut [f64]) {
        for s in &self.sections {
            s.apply(x);
        }
    }
}

/// Causal notch filtering of every channel.
pub fn notch_filter(rec: &Recording, freqs: &[f64], bandwidth_hz: f64) -> Result<Recording> {
    let filter = NotchFilter::design(freqs, bandwidth_hz, rec.sample_rate() as f64)?;
    let mut out = rec.samples().clone();
    let mut row = vec![0.0; rec.n_samples()];
    for ch in 0..rec.n_channels() {
        for (dst, src) in row.iter_mut().zip(out.row(ch).iter()) {
            *dst = *src;
        }
        filter.apply(&mut row);
        for (j, v) in row.iter().enumerate() {
            out[(ch, j)] = *v;
        }
    }
    Ok(rec.with_samples(out))
}
