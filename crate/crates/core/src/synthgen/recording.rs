use std::f64::consts::{PI, TAU};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::archetype::{gen_weights, Archetype, ArchetypeParams};
use crate::eeg_io::{Montage, Recording, DEAP_CHANNELS};
use crate::error::{Error, Result};
use crate::ica::ComponentWeights;

#[derive(Debug, Clone, PartialEq)]
pub struct RecordingConfig {
    pub duration_s: f64,
    pub sample_rate: u32,
    /// Independent brain sources, each with a UBS scalp pattern.
    pub n_sources: usize,
    /// Standard deviation of each source time course.
    pub source_uv: f64,
    pub sensor_noise_uv: f64,
    /// Power-line hum amplitude; zero disables it.
    pub line_noise_uv: f64,
    pub line_freq: f64,
    pub seed: u64,
}

impl Default for RecordingConfig {
    fn default() -> Self {
        Self {
            duration_s: 60.0,
            sample_rate: 512,
            n_sources: 31,
            source_uv: 10.0,
            sensor_noise_uv: 1.0,
            line_noise_uv: 5.0,
            line_freq: 50.0,
            seed: 0,
        }
    }
}

/// A generated recording with the scalp pattern of every brain source.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticRecording {
    pub recording: Recording,
    /// `channels × n_sources`, columns normalized to max-abs 1.
    pub mixing: DMatrix<f64>,
}

fn deap_names() -> Vec<String> {
    DEAP_CHANNELS.iter().map(|s| s.to_string()).collect()
}

/// Draws a Laplace variate with unit variance.
fn laplace(rng: &mut impl Rng) -> f64 {
    let u: f64 = rng.random_range(-0.5..0.5);
    -u.signum() * (1.0 - 2.0 * u.abs()).max(f64::MIN_POSITIVE).ln() / 2f64.sqrt()
}

/// Clean 32-channel EEG: super-Gaussian sources mixed through smooth
/// dipolar scalp patterns, plus sensor noise and optional line hum.
pub fn clean_recording(cfg: &RecordingConfig) -> Result<SyntheticRecording> {
    if cfg.sample_rate == 0 || !(cfg.duration_s > 0.0) {
        return Err(Error::Range("recording needs a positive duration and sample rate".into()));
    }
    if cfg.n_sources == 0 || cfg.n_sources > DEAP_CHANNELS.len() {
        return Err(Error::Range(format!("{} sources for 32 channels", cfg.n_sources)));
    }
    let n = (cfg.duration_s * cfg.sample_rate as f64).round() as usize;
    let montage = Montage::standard_1020();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n_ch = DEAP_CHANNELS.len();
    let mut mixing = DMatrix::zeros(n_ch, cfg.n_sources);
    for k in 0..cfg.n_sources {
        let p = ArchetypeParams::sample(Archetype::Ubs, 0.0, rng.random());
        let (w, _) = gen_weights(&p, &montage)?;
        mixing.column_mut(k).copy_from_slice(w.weights());
    }
    let sources = DMatrix::from_fn(cfg.n_sources, n, |_, _| cfg.source_uv * laplace(&mut rng));
    let mut x = &mixing * sources;
    let noise = Normal::new(0.0, cfg.sensor_noise_uv).map_err(|e| Error::Range(e.to_string()))?;
    x.iter_mut().for_each(|v| *v += noise.sample(&mut rng));
    if cfg.line_noise_uv > 0.0 {
        let gains: Vec<f64> = (0..n_ch).map(|_| rng.random_range(0.5..1.0)).collect();
        let phase = rng.random_range(0.0..TAU);
        let w = TAU * cfg.line_freq / cfg.sample_rate as f64;
        for t in 0..n {
            let hum = cfg.line_noise_uv * (w * t as f64 + phase).sin();
            for (c, g) in gains.iter().enumerate() {
                x[(c, t)] += g * hum;
            }
        }
    }
    Ok(SyntheticRecording {
        recording: Recording::new(x, cfg.sample_rate, deap_names())?,
        mixing,
    })
}

/// An artifact added to a recording, with what was added.
#[derive(Debug, Clone, PartialEq)]
pub struct Injection {
    pub recording: Recording,
    /// Scalp pattern of the artifact source.
    pub pattern: ComponentWeights,
    /// Source time course in microvolts at the pattern's peak electrode.
    pub waveform: Vec<f64>,
}

const BLINK_S: f64 = 0.3;
const BLINK_GAP_S: (f64, f64) = (1.5, 3.0);
const BEAT_S: f64 = 0.1;
const BEAT_PERIOD_S: f64 = 0.85;
const MUSCLE_BAND_HZ: (f64, f64) = (15.0, 30.0);
const MUSCLE_TONES: usize = 12;

fn epoch_samples(epochs: &[(f64, f64)], fs: f64, n: usize, duration: f64) -> Result<Vec<(usize, usize)>> {
    epochs
        .iter()
        .map(|&(start, end)| {
            if !(start >= 0.0 && start < end && end <= duration + 1e-9) {
                return Err(Error::Range(format!(
                    "epoch {start}..{end} s outside the {duration} s recording"
                )));
            }
            let a = (start * fs).round() as usize;
            let b = ((end * fs).round() as usize).min(n);
            Ok((a, b))
        })
        .collect()
}

/// Repeats `pulse` inside `[a, b)` with random gaps.
fn pulse_train(wave: &mut [f64], (a, b): (usize, usize), pulse: &[f64], gap: (usize, usize), rng: &mut impl Rng) {
    let mut t = a + rng.random_range(0..=gap.0 / 2);
    while t + pulse.len() <= b {
        for (i, p) in pulse.iter().enumerate() {
            wave[t + i] += p;
        }
        t += pulse.len() + rng.random_range(gap.0..=gap.1);
    }
}

/// Adds an artifact source inside each epoch (seconds), spread over the
/// channels by the archetype's scalp pattern. Blink-like archetypes get
/// 0.3 s biphasic pulses, ECG periodic beats, EMG a 15-30 Hz burst and IF a
/// step on one electrode.
pub fn inject_artifact(
    rec: &Recording,
    archetype: Archetype,
    amplitude_uv: f64,
    epochs: &[(f64, f64)],
    seed: u64,
) -> Result<Injection> {
    if archetype == Archetype::Ubs {
        return Err(Error::Config("UBS is not an artifact".into()));
    }
    if !(amplitude_uv >= 0.0) || !amplitude_uv.is_finite() {
        return Err(Error::Range(format!("amplitude {amplitude_uv} must be non-negative")));
    }
    let fs = rec.sample_rate() as f64;
    let n = rec.n_samples();
    let spans = epoch_samples(epochs, fs, n, rec.duration_s())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (pattern, _) = gen_weights(&ArchetypeParams::sample(archetype, 0.0, rng.random()), &Montage::standard_1020())?;

    let mut wave = vec![0.0; n];
    let secs = |s: f64| (s * fs).round() as usize;
    for &span in &spans {
        match archetype {
            Archetype::Beog | Archetype::Veog | Archetype::Heog => {
                let len = secs(BLINK_S);
                let pulse: Vec<f64> = (0..len).map(|i| (TAU * i as f64 / len as f64).sin()).collect();
                pulse_train(&mut wave, span, &pulse, (secs(BLINK_GAP_S.0), secs(BLINK_GAP_S.1)), &mut rng);
            }
            Archetype::Ecg => {
                let len = secs(BEAT_S);
                let pulse: Vec<f64> = (0..len).map(|i| (PI * i as f64 / len as f64).sin().powi(3)).collect();
                let period = secs(BEAT_PERIOD_S);
                pulse_train(&mut wave, span, &pulse, (period - len, period - len), &mut rng);
            }
            Archetype::Emg => {
                let (a, b) = span;
                let tones: Vec<(f64, f64)> = (0..MUSCLE_TONES)
                    .map(|_| (rng.random_range(MUSCLE_BAND_HZ.0..MUSCLE_BAND_HZ.1), rng.random_range(0.0..TAU)))
                    .collect();
                let len = (b - a) as f64;
                for t in a..b {
                    let env = (PI * (t - a) as f64 / len).sin().powi(2);
                    let s: f64 = tones.iter().map(|(f, ph)| (TAU * f * t as f64 / fs + ph).sin()).sum();
                    wave[t] += env * s / (MUSCLE_TONES as f64 / 2.0).sqrt();
                }
            }
            Archetype::If => {
                let (a, b) = span;
                wave[a..b].iter_mut().for_each(|v| *v += 1.0);
            }
            Archetype::Ubs => unreachable!(),
        }
    }
    wave.iter_mut().for_each(|v| *v *= amplitude_uv);

    if amplitude_uv == 0.0 {
        return Ok(Injection {
            recording: rec.clone(),
            pattern,
            waveform: wave,
        });
    }
    let mut x = rec.samples().clone();
    for (label, &w) in pattern.channel_names().iter().zip(pattern.weights()) {
        if let Some(c) = rec.channel_index(label) {
            for (t, s) in wave.iter().enumerate() {
                x[(c, t)] += w * s;
            }
        }
    }
    Ok(Injection {
        recording: Recording::new(x, rec.sample_rate(), rec.channel_names().to_vec())?,
        pattern,
        waveform: wave,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ica::{decompose, IcaConfig};

    fn short(seed: u64, secs: f64) -> SyntheticRecording {
        clean_recording(&RecordingConfig {
            duration_s: secs,
            seed,
            ..RecordingConfig::default()
        })
        .unwrap()
    }

    fn var(v: &[f64]) -> f64 {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64
    }

    #[test]
    fn clean_recording_shape_and_determinism() {
        let a = short(1, 4.0);
        assert_eq!(a.recording.n_channels(), 32);
        assert_eq!(a.recording.n_samples(), 2048);
        assert_eq!(a.mixing.shape(), (32, 31));
        assert_eq!(a, short(1, 4.0));
        assert_ne!(a, short(2, 4.0));
        // laplace variates have unit variance
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let xs: Vec<f64> = (0..200_000).map(|_| laplace(&mut rng)).collect();
        assert!((var(&xs) - 1.0).abs() < 0.02);
    }

    #[test]
    fn zero_amplitude_is_bit_exact() {
        let rec = short(3, 4.0).recording;
        let out = inject_artifact(&rec, Archetype::Beog, 0.0, &[(0.0, 4.0)], 1).unwrap();
        assert_eq!(out.recording, rec);
    }

    #[test]
    fn blink_raises_frontal_variance_inside_epochs_only() {
        let rec = short(4, 8.0).recording;
        let out = inject_artifact(&rec, Archetype::Beog, 100.0, &[(2.0, 6.0)], 2).unwrap();
        let fp1 = rec.channel_index("Fp1").unwrap();
        let row = |r: &Recording, a: usize, b: usize| -> Vec<f64> { (a..b).map(|t| r.samples()[(fp1, t)]).collect() };
        assert!(var(&row(&out.recording, 1024, 3072)) > var(&row(&rec, 1024, 3072)));
        assert_eq!(row(&out.recording, 0, 1024), row(&rec, 0, 1024));
        assert_eq!(row(&out.recording, 3072, 4096), row(&rec, 3072, 4096));
    }

    #[test]
    fn epochs_outside_the_recording_are_rejected() {
        let rec = short(5, 2.0).recording;
        for bad in [(-0.1, 1.0), (1.0, 2.5), (1.5, 1.0)] {
            assert!(matches!(inject_artifact(&rec, Archetype::Emg, 10.0, &[bad], 0), Err(Error::Range(_))));
        }
        assert!(matches!(inject_artifact(&rec, Archetype::If, -1.0, &[(0.0, 1.0)], 0), Err(Error::Range(_))));
        assert!(inject_artifact(&rec, Archetype::Ubs, 1.0, &[(0.0, 1.0)], 0).is_err());
    }

    #[test]
    fn muscle_burst_lives_in_its_band() {
        let rec = short(6, 4.0).recording;
        let out = inject_artifact(&rec, Archetype::Emg, 50.0, &[(0.0, 4.0)], 3).unwrap();
        // project the waveform on sines: in-band power dominates
        let fs = 512.0;
        let power = |f: f64| {
            let (mut s, mut c) = (0.0, 0.0);
            for (t, v) in out.waveform.iter().enumerate() {
                s += v * (TAU * f * t as f64 / fs).sin();
                c += v * (TAU * f * t as f64 / fs).cos();
            }
            s * s + c * c
        };
        let inband: f64 = (15..=30).map(|f| power(f as f64)).sum::<f64>() / 16.0;
        let outband: f64 = [2.0, 5.0, 8.0, 45.0, 60.0, 90.0].iter().map(|&f| power(f)).sum::<f64>() / 6.0;
        assert!(inband > 20.0 * outband, "{inband} vs {outband}");
    }

    #[test]
    fn interference_is_a_step_on_one_channel() {
        let rec = short(7, 2.0).recording;
        let out = inject_artifact(&rec, Archetype::If, 30.0, &[(0.5, 1.5)], 4).unwrap();
        let diff = out.recording.samples() - rec.samples();
        let touched: Vec<usize> = (0..32).filter(|&c| diff.row(c).iter().any(|v| v.abs() > 1e-9)).collect();
        assert_eq!(touched.len(), 1);
        assert!((diff[(touched[0], 600)] - 30.0).abs() < 1e-9);
        assert_eq!(diff[(touched[0], 100)], 0.0);
    }

    #[test]
    fn ica_recovers_an_injected_blink() {
        let rec = short(8, 8.0).recording;
        // blink peak 100 µV against 10 µV sources
        let out = inject_artifact(&rec, Archetype::Beog, 100.0, &[(0.0, 8.0)], 5).unwrap();
        let ica = decompose(out.recording.samples(), 32, &IcaConfig { seed: 1, ..IcaConfig::default() }).unwrap();
        let target = out.pattern.weights();
        let best = (0..32)
            .map(|k| {
                let col: Vec<f64> = ica.mixing.column(k).iter().copied().collect();
                let dot: f64 = col.iter().zip(target).map(|(a, b)| a * b).sum();
                let na = col.iter().map(|a| a * a).sum::<f64>().sqrt();
                let nb = target.iter().map(|b| b * b).sum::<f64>().sqrt();
                (dot / (na * nb)).abs()
            })
            .fold(0.0, f64::max);
        assert!(best > 0.9, "best correlation {best}");
    }
}
