use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::eeg_io::{angular_distance, Montage, DEAP_CHANNELS};
use crate::error::{Error, Result};
use crate::ica::ComponentWeights;

/// Label of non-artifact components.
pub const UBS: &str = "UBS";

/// Scalp patterns the generator can draw.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Archetype {
    Beog,
    Veog,
    Heog,
    Ecg,
    Emg,
    If,
    Ubs,
}

/// Electrodes on the scalp border where muscle peaks are placed.
pub const BORDER_CHANNELS: [&str; 11] = ["Fp1", "Fp2", "F7", "F8", "T7", "T8", "P7", "P8", "O1", "O2", "Oz"];

const BLINK_SPREAD: (f64, f64) = (0.25, 0.3);
const VERTICAL_FACTOR: (f64, f64) = (2.0, 2.5);
const PAIR_SPREAD: (f64, f64) = (0.25, 0.4);
const MUSCLE_SPREAD: (f64, f64) = (0.06, 0.12);
const BRAIN_SPREAD: (f64, f64) = (0.5, 0.8);
/// Largest polar angle (from the vertex) of a brain-field lobe.
const BRAIN_MAX_POLAR: f64 = 1.05;
/// Brain-field lobes keep at least this angle from the frontal pole.
const BRAIN_FRONTAL_CLEARANCE: f64 = 1.3;
const DEFAULT_JITTER: f64 = 0.3;

impl Archetype {
    pub const ALL: [Archetype; 7] = [
        Archetype::Beog,
        Archetype::Veog,
        Archetype::Heog,
        Archetype::Ecg,
        Archetype::Emg,
        Archetype::If,
        Archetype::Ubs,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Archetype::Beog => "BEOG",
            Archetype::Veog => "VEOG",
            Archetype::Heog => "HEOG",
            Archetype::Ecg => "ECG",
            Archetype::Emg => "EMG",
            Archetype::If => "IF",
            Archetype::Ubs => "UBS",
        }
    }

    /// The framework category this pattern belongs to.
    pub fn label(self) -> &'static str {
        match self {
            Archetype::Beog | Archetype::Veog => "B_V",
            Archetype::Heog | Archetype::Ecg => "H_E",
            Archetype::Emg | Archetype::If => "E_I",
            Archetype::Ubs => UBS,
        }
    }

    /// Archetypes carrying `label`, in generation order.
    pub fn for_label(label: &str) -> Result<&'static [Archetype]> {
        Ok(match label {
            "B_V" => &[Archetype::Beog, Archetype::Veog],
            "H_E" => &[Archetype::Heog, Archetype::Ecg],
            "E_I" => &[Archetype::Emg, Archetype::If],
            UBS => &[Archetype::Ubs],
            other => return Err(Error::Data(format!("unknown label `{other}`"))),
        })
    }

    fn spread_range(self) -> (f64, f64) {
        match self {
            Archetype::Beog => BLINK_SPREAD,
            Archetype::Veog => (
                BLINK_SPREAD.0 * VERTICAL_FACTOR.0,
                BLINK_SPREAD.1 * VERTICAL_FACTOR.1,
            ),
            Archetype::Heog | Archetype::Ecg => PAIR_SPREAD,
            Archetype::Emg | Archetype::If => MUSCLE_SPREAD,
            Archetype::Ubs => BRAIN_SPREAD,
        }
    }
}

impl fmt::Display for Archetype {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Archetype {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Archetype::ALL
            .into_iter()
            .find(|a| a.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Parse(format!("unknown archetype `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArchetypeParams {
    pub archetype: Archetype,
    /// Relative amplitude jitter; the peak is drawn from `1 ± jitter`.
    pub amplitude_jitter: f64,
    /// Angular radius in radians of the pattern's Gaussian lobes.
    pub spread: f64,
    /// Standard deviation of additive channel noise relative to a unit peak.
    pub noise: f64,
    pub seed: u64,
}

impl ArchetypeParams {
    /// Draws the spread from the archetype's default range.
    pub fn sample(archetype: Archetype, noise: f64, seed: u64) -> Self {
        let (lo, hi) = archetype.spread_range();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
        Self {
            archetype,
            amplitude_jitter: DEFAULT_JITTER,
            spread: rng.random_range(lo..=hi),
            noise,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.spread > 0.0) || !self.spread.is_finite() {
            return Err(Error::Range(format!("spread {} must be positive", self.spread)));
        }
        if !(0.0..=0.5).contains(&self.noise) {
            return Err(Error::Range(format!("noise level {} outside [0, 0.5]", self.noise)));
        }
        if !(0.0..1.0).contains(&self.amplitude_jitter) {
            return Err(Error::Range(format!("amplitude jitter {} outside [0, 1)", self.amplitude_jitter)));
        }
        Ok(())
    }
}

fn normalize(v: [f64; 3]) -> [f64; 3] {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}

/// Unit vector at polar angle `polar` from the vertex and azimuth `azimuth`
/// measured from the nose toward the left ear.
fn spherical(polar: f64, azimuth: f64) -> [f64; 3] {
    [polar.sin() * azimuth.cos(), polar.sin() * azimuth.sin(), polar.cos()]
}

/// Nudges `p` by a small random rotation of at most `max_angle` radians.
fn jitter_direction(p: [f64; 3], max_angle: f64, rng: &mut impl Rng) -> [f64; 3] {
    let d = [
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
    ];
    let scale = max_angle * rng.random::<f64>();
    normalize([p[0] + d[0] * scale, p[1] + d[1] * scale, p[2] + d[2] * scale])
}

fn gaussian(positions: &[[f64; 3]], center: [f64; 3], spread: f64) -> Vec<f64> {
    positions
        .iter()
        .map(|&p| {
            let d = angular_distance(p, center);
            (-d * d / (2.0 * spread * spread)).exp()
        })
        .collect()
}

fn pair(positions: &[[f64; 3]], a: [f64; 3], b: [f64; 3], spread: f64, rng: &mut impl Rng) -> Vec<f64> {
    let ga = gaussian(positions, a, spread);
    let gb = gaussian(positions, b, spread);
    let balance = rng.random_range(0.7..1.0);
    let (wa, wb) = if rng.random::<bool>() { (1.0, -balance) } else { (-balance, 1.0) };
    ga.iter().zip(&gb).map(|(x, y)| wa * x + wb * y).collect()
}

/// Unnormalized pattern over the DEAP channels.
fn pattern(p: &ArchetypeParams, montage: &Montage, positions: &[[f64; 3]], rng: &mut impl Rng) -> Result<Vec<f64>> {
    let pos = |l: &str| montage.position(l);
    let mid = |a: &str, b: &str| -> Result<[f64; 3]> {
        let (a, b) = (pos(a)?, pos(b)?);
        Ok(normalize([a[0] + b[0], a[1] + b[1], a[2] + b[2]]))
    };
    Ok(match p.archetype {
        Archetype::Beog | Archetype::Veog => {
            let center = jitter_direction(mid("Fp1", "Fp2")?, 0.08, rng);
            gaussian(positions, center, p.spread)
        }
        Archetype::Heog => {
            let a = jitter_direction(pos("F7")?, 0.1, rng);
            let b = jitter_direction(pos("F8")?, 0.1, rng);
            pair(positions, a, b, p.spread, rng)
        }
        Archetype::Ecg => {
            let a = jitter_direction(pos("T7")?, 0.1, rng);
            let b = jitter_direction(pos("T8")?, 0.1, rng);
            pair(positions, a, b, p.spread, rng)
        }
        Archetype::Emg => {
            let label = BORDER_CHANNELS[rng.random_range(0..BORDER_CHANNELS.len())];
            gaussian(positions, pos(label)?, p.spread)
        }
        Archetype::If => {
            let k = rng.random_range(0..positions.len());
            (0..positions.len()).map(|i| if i == k { 1.0 } else { 0.0 }).collect()
        }
        Archetype::Ubs => {
            let frontal = mid("Fp1", "Fp2")?;
            let lobe = |rng: &mut ChaCha8Rng| loop {
                let c = spherical(
                    rng.random_range(0.0..BRAIN_MAX_POLAR),
                    rng.random_range(0.0..std::f64::consts::TAU),
                );
                if angular_distance(c, frontal) >= BRAIN_FRONTAL_CLEARANCE {
                    return c;
                }
            };
            let mut lrng = ChaCha8Rng::from_rng(rng);
            let first = gaussian(positions, lobe(&mut lrng), p.spread);
            if lrng.random::<bool>() {
                first
            } else {
                let second = gaussian(positions, lobe(&mut lrng), p.spread);
                let w = lrng.random_range(0.5..1.0);
                first.iter().zip(&second).map(|(a, b)| a - w * b).collect()
            }
        }
    })
}

/// Draws one component-weight vector over the 32 DEAP channels and returns
/// it with its category label.
pub fn gen_weights(p: &ArchetypeParams, montage: &Montage) -> Result<(ComponentWeights, &'static str)> {
    p.validate()?;
    let positions = DEAP_CHANNELS
        .iter()
        .map(|l| montage.position(l))
        .collect::<Result<Vec<_>>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let shape = pattern(p, montage, &positions, &mut rng)?;
    let amplitude = 1.0 + p.amplitude_jitter * rng.random_range(-1.0..=1.0);
    let noise = Normal::new(0.0, p.noise).map_err(|e| Error::Range(e.to_string()))?;
    let peak = shape.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let column: Vec<f64> = shape
        .iter()
        .map(|v| amplitude * v / peak + noise.sample(&mut rng))
        .collect();
    let names = DEAP_CHANNELS.iter().map(|s| s.to_string()).collect();
    let weights = ComponentWeights::from_column(&column, names, 0)?;
    Ok((weights, p.archetype.label()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn draw(a: Archetype, noise: f64, seed: u64) -> ComponentWeights {
        gen_weights(&ArchetypeParams::sample(a, noise, seed), &Montage::standard_1020())
            .unwrap()
            .0
    }

    fn argmax_label(w: &ComponentWeights) -> &str {
        let i = w
            .weights()
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
            .unwrap()
            .0;
        &w.channel_names()[i]
    }

    #[test]
    fn labels_cover_every_archetype() {
        for a in Archetype::ALL {
            assert!(["B_V", "H_E", "E_I", UBS].contains(&a.label()));
            assert!(Archetype::for_label(a.label()).unwrap().contains(&a));
            assert_eq!(a.name().parse::<Archetype>().unwrap(), a);
        }
        assert!(Archetype::for_label("XX").is_err());
    }

    #[test]
    fn blink_peaks_frontally() {
        for seed in 0..200 {
            let w = draw(Archetype::Beog, 0.0, seed);
            assert!(["Fp1", "Fp2", "AF3", "AF4"].contains(&argmax_label(&w)), "seed {seed}");
        }
    }

    #[test]
    fn vertical_blink_is_wider_than_blink() {
        let m = Montage::standard_1020();
        for seed in 0..50 {
            let b = ArchetypeParams::sample(Archetype::Beog, 0.0, seed);
            let v = ArchetypeParams::sample(Archetype::Veog, 0.0, seed);
            assert!(v.spread > b.spread);
            let mean = |a| {
                let (w, _) = gen_weights(&ArchetypeParams::sample(a, 0.0, seed), &m).unwrap();
                w.weights().iter().sum::<f64>() / 32.0
            };
            assert!(mean(Archetype::Veog) > mean(Archetype::Beog));
        }
    }

    #[test]
    fn horizontal_pair_has_opposite_signs() {
        for seed in 0..200 {
            let w = draw(Archetype::Heog, 0.0, seed);
            let (f7, f8) = (w.weight_of("F7").unwrap(), w.weight_of("F8").unwrap());
            assert!(f7 * f8 < 0.0, "seed {seed}: {f7} {f8}");
            let e = draw(Archetype::Ecg, 0.0, seed);
            assert!(e.weight_of("T7").unwrap() * e.weight_of("T8").unwrap() < 0.0);
        }
    }

    #[test]
    fn muscle_peak_is_on_the_border() {
        for seed in 0..200 {
            let w = draw(Archetype::Emg, 0.0, seed);
            assert!(BORDER_CHANNELS.contains(&argmax_label(&w)));
        }
    }

    #[test]
    fn interference_is_a_single_electrode() {
        for seed in 0..1000 {
            let w = draw(Archetype::If, 0.0, seed);
            let big = w.weights().iter().filter(|v| v.abs() > 0.5).count();
            assert_eq!(big, 1);
            assert!(w.weights().iter().filter(|v| v.abs() <= 0.5).all(|v| v.abs() < 0.2));
        }
    }

    #[test]
    fn brain_fields_avoid_the_frontal_rim_and_border_spikes() {
        for seed in 0..300 {
            let w = draw(Archetype::Ubs, 0.0, seed);
            let top = argmax_label(&w);
            assert!(!["Fp1", "Fp2"].contains(&top), "seed {seed} peaks at {top}");
            // broad: several electrodes carry substantial weight
            let n = w.weights().iter().filter(|v| v.abs() > 0.5).count();
            assert!(n >= 3, "seed {seed}: {n} {:?}", w.weights());
        }
    }

    /// Magnitudes per electrode (where the pattern is) followed by sorted
    /// magnitudes (what shape it has, wherever it is).
    fn centroid_feature(w: &ComponentWeights) -> Vec<f64> {
        let abs: Vec<f64> = w.weights().iter().map(|v| v.abs()).collect();
        let mut sorted = abs.clone();
        sorted.sort_by(|a, b| b.total_cmp(a));
        abs.into_iter().chain(sorted.into_iter().map(|v| 2.0 * v)).collect()
    }

    #[test]
    fn nearest_archetype_centroid_gives_the_right_category() {
        let m = Montage::standard_1020();
        let centroids: Vec<(Archetype, Vec<f64>)> = Archetype::ALL
            .iter()
            .map(|&a| {
                let mut c = vec![0.0; 64];
                for s in 0..300 {
                    let (w, _) = gen_weights(&ArchetypeParams::sample(a, 0.0, s), &m).unwrap();
                    c.iter_mut().zip(centroid_feature(&w)).for_each(|(c, v)| *c += v / 300.0);
                }
                (a, c)
            })
            .collect();
        let mut errors = Vec::new();
        for a in Archetype::ALL {
            for s in 1000..1300 {
                let (w, label) = gen_weights(&ArchetypeParams::sample(a, 0.0, s), &m).unwrap();
                let f = centroid_feature(&w);
                let dist = |c: &[f64]| c.iter().zip(&f).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
                let nearest = centroids
                    .iter()
                    .min_by(|x, y| dist(&x.1).total_cmp(&dist(&y.1)))
                    .unwrap()
                    .0;
                if nearest.label() != label {
                    errors.push((a, s, nearest));
                }
            }
        }
        assert!(errors.is_empty(), "{errors:?}");
    }

    #[test]
    fn generator_is_deterministic_and_validates() {
        assert_eq!(draw(Archetype::Ubs, 0.1, 3), draw(Archetype::Ubs, 0.1, 3));
        assert_ne!(draw(Archetype::Ubs, 0.1, 3), draw(Archetype::Ubs, 0.1, 4));
        let m = Montage::standard_1020();
        let mut p = ArchetypeParams::sample(Archetype::Beog, 0.6, 1);
        assert!(matches!(gen_weights(&p, &m), Err(Error::Range(_))));
        p.noise = 0.1;
        p.spread = 0.0;
        assert!(matches!(gen_weights(&p, &m), Err(Error::Range(_))));
    }
}
