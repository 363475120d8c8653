use nalgebra::DMatrix;

use super::Recording;
use crate::error::{Error, Result};

/// One analysis window cut from a recording.
#[derive(Debug, Clone, PartialEq)]
pub struct SubTrial {
    pub samples: DMatrix<f64>,
    pub start_sample: usize,
    pub duration_s: f64,
}

fn to_samples(seconds: f64, sample_rate: u32, what: &str) -> Result<usize> {
    let exact = seconds * sample_rate as f64;
    let n = exact.round();
    if seconds <= 0.0 || (exact - n).abs() > 1e-9 || n < 1.0 {
        return Err(Error::Window(format!(
            "{what} of {seconds} s is not a positive whole number of samples at {sample_rate} Hz"
        )));
    }
    Ok(n as usize)
}

/// Cuts windows starting at 0, hop, 2·hop, …; a trailing partial window is
/// dropped.
pub fn window_subtrials(rec: &Recording, window_s: f64, hop_s: f64) -> Result<Vec<SubTrial>> {
    let window = to_samples(window_s, rec.sample_rate(), "window")?;
    let hop = to_samples(hop_s, rec.sample_rate(), "hop")?;
    let n = rec.n_samples();
    if n < window {
        return Err(Error::Window(format!(
            "recording of {:.3} s is shorter than one {window_s} s window",
            rec.duration_s()
        )));
    }
    let count = (n - window) / hop + 1;
    Ok((0..count)
        .map(|k| {
            let start = k * hop;
            SubTrial {
                samples: rec.samples().columns(start, window).into_owned(),
                start_sample: start,
                duration_s: window_s,
            }
        })
        .collect())
}
