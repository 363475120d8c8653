//! Recordings, the 10-20 montage, power-line notch filtering and sub-trial
//! windowing.

mod formats;
mod montage;
mod notch;
mod window;

pub use formats::{load_recording, save_recording, Format, RAW_MAGIC};
pub use montage::{angular_distance, Montage, DEAP_CHANNELS};
pub use notch::{notch_filter, Biquad, NotchFilter};
pub use window::{window_subtrials, SubTrial};

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Multichannel EEG in microvolts, one row per channel.
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    samples: DMatrix<f64>,
    sample_rate: u32,
    channel_names: Vec<String>,
}

impl Recording {
    /// Validates the invariants against the bundled 10-20 table.
    pub fn new(samples: DMatrix<f64>, sample_rate: u32, channel_names: Vec<String>) -> Result<Self> {
        Self::with_montage(samples, sample_rate, channel_names, &Montage::standard_1020())
    }

    pub fn with_montage(
        samples: DMatrix<f64>,
        sample_rate: u32,
        channel_names: Vec<String>,
        montage: &Montage,
    ) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::Parse("sample rate must be positive".into()));
        }
        if channel_names.len() < 2 {
            return Err(Error::Parse(format!(
                "need at least 2 channels, got {}",
                channel_names.len()
            )));
        }
        if samples.nrows() != channel_names.len() {
            return Err(Error::Parse(format!(
                "{} channel names for {} sample rows",
                channel_names.len(),
                samples.nrows()
            )));
        }
        if samples.ncols() == 0 {
            return Err(Error::Parse("recording has no samples".into()));
        }
        for (i, name) in channel_names.iter().enumerate() {
            if !montage.contains(name) {
                return Err(Error::Montage(name.clone()));
            }
            if channel_names[..i].iter().any(|n| n.eq_ignore_ascii_case(name)) {
                return Err(Error::Parse(format!("duplicate channel `{name}`")));
            }
        }
        Ok(Self {
            samples,
            sample_rate,
            channel_names,
        })
    }

    pub fn samples(&self) -> &DMatrix<f64> {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn channel_names(&self) -> &[String] {
        &self.channel_names
    }

    pub fn n_channels(&self) -> usize {
        self.samples.nrows()
    }

    pub fn n_samples(&self) -> usize {
        self.samples.ncols()
    }

    pub fn duration_s(&self) -> f64 {
        self.n_samples() as f64 / self.sample_rate as f64
    }

    pub fn channel_index(&self, label: &str) -> Option<usize> {
        self.channel_names
            .iter()
            .position(|n| n.eq_ignore_ascii_case(label))
    }

    /// Same channels and rate, new samples.
    pub(crate) fn with_samples(&self, samples: DMatrix<f64>) -> Self {
        debug_assert_eq!(samples.shape(), self.samples.shape());
        Self {
            samples,
            sample_rate: self.sample_rate,
            channel_names: self.channel_names.clone(),
        }
    }

    pub fn into_samples(self) -> DMatrix<f64> {
        self.samples
    }
}
