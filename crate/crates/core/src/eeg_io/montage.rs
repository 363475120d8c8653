use crate::error::{Error, Result};

const STANDARD_1020: &str = include_str!("../../assets/montage_1020.csv");

/// The 32 DEAP channels in recording order.
pub const DEAP_CHANNELS: [&str; 32] = [
    "Fp1", "AF3", "F3", "F7", "FC5", "FC1", "C3", "T7", "CP5", "CP1", "P3", "P7", "PO3", "O1",
    "Oz", "Pz", "Fp2", "AF4", "Fz", "F4", "F8", "FC6", "FC2", "Cz", "C4", "T8", "CP6", "CP2",
    "P4", "P8", "PO4", "O2",
];

/// Electrode positions on the unit head sphere.
///
/// Head frame: `x` points to the nose, `y` to the left ear, `z` to the vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct Montage {
    entries: Vec<(String, [f64; 3])>,
}

impl Montage {
    /// The bundled 10-20 table.
    pub fn standard_1020() -> Self {
        Self::parse(STANDARD_1020).expect("bundled montage asset is well formed")
    }

    /// Parses `label,theta,phi` rows (BESA-style spherical degrees).
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries: Vec<(String, [f64; 3])> = Vec::new();
        let rows = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .skip(1);
        for row in rows {
            let fields: Vec<&str> = row.split(',').map(str::trim).collect();
            let [label, theta, phi] = fields[..] else {
                return Err(Error::Parse(format!("montage row `{row}`")));
            };
            let parse = |s: &str| {
                s.parse::<f64>()
                    .map_err(|_| Error::Parse(format!("montage angle `{s}`")))
            };
            let (theta, phi) = (parse(theta)?.to_radians(), parse(phi)?.to_radians());
            let right = theta.sin() * phi.cos();
            let front = theta.sin() * phi.sin();
            let up = theta.cos();
            if entries.iter().any(|(l, _)| l == label) {
                return Err(Error::Parse(format!("duplicate montage label `{label}`")));
            }
            entries.push((label.to_string(), [front, -right, up]));
        }
        Ok(Self { entries })
    }

    pub fn position(&self, label: &str) -> Result<[f64; 3]> {
        self.entries
            .iter()
            .find(|(l, _)| l.eq_ignore_ascii_case(label))
            .map(|(_, p)| *p)
            .ok_or_else(|| Error::Montage(label.to_string()))
    }

    pub fn contains(&self, label: &str) -> bool {
        self.position(label).is_ok()
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(l, _)| l.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Great-circle angle between two unit vectors, in radians.
pub fn angular_distance(a: [f64; 3], b: [f64; 3]) -> f64 {
    let dot = a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
    dot.clamp(-1.0, 1.0).acos()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_norm_and_deap_coverage() {
        let m = Montage::standard_1020();
        for label in DEAP_CHANNELS {
            let p = m.position(label).unwrap();
            let norm = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
            assert!((norm - 1.0).abs() < 1e-9, "{label}: {norm}");
        }
    }

    #[test]
    fn orientation() {
        let m = Montage::standard_1020();
        let cz = m.position("Cz").unwrap();
        assert!((cz[2] - 1.0).abs() < 1e-12);
        // nose is +x, left ear is +y
        assert!(m.position("Fp1").unwrap()[0] > 0.9);
        assert!(m.position("T7").unwrap()[1] > 0.99);
        assert!(m.position("T8").unwrap()[1] < -0.99);
        assert!(m.position("Oz").unwrap()[0] < -0.99);
    }

    #[test]
    fn unknown_label() {
        assert!(matches!(
            Montage::standard_1020().position("XX9"),
            Err(Error::Montage(_))
        ));
    }
}
