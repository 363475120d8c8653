//! Automatic recognition of EEG artifacts from independent-component scalp
//! topographies.
//!
//! The pipeline:
//!
//! ```text
//! Recording ──notch──▶ sub-trials (8 s, hop 4 s)
//!     └─▶ FastICA per sub-trial ──▶ ≤32 mixing columns
//!           └─▶ 134×136 Parula topoplot per component
//!                 └─▶ three binary CNNs (B_V, H_E, E_I) ──▶ Detection
//! ```
//!
//! * [`eeg_io`]: recordings, 10-20 montage, notch filtering, windowing.
//! * [`ica`]: whitening and symmetric FastICA.
//! * [`topomap`]: electrode projection, IDW interpolation, Parula rasters, PNG.
//! * [`nn`]: the small CNN engine, training, model files, Grad-CAM.
//! * [`framework`]: the classifier registry, detections, metrics, pipeline.
//! * [`synthgen`]: labeled synthetic topographies and recordings.

pub mod eeg_io;
pub mod error;
pub mod framework;
pub mod ica;
pub mod nn;
mod par;
pub mod synthgen;
pub mod topomap;

pub use error::{Error, Result};
