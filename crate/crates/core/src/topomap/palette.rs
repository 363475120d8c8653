use std::sync::OnceLock;

use crate::error::{Error, Result};

const PARULA64: &str = include_str!("../../assets/parula64.csv");

pub const PALETTE_LEN: usize = 64;

/// Quantized color ramp loaded from `r,g,b` lines.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Palette {
    colors: Vec<[u8; 3]>,
}

impl Palette {
    pub fn parse(text: &str) -> Result<Self> {
        let colors = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(|l| {
                let c: Vec<u8> = l
                    .split(',')
                    .map(|v| v.trim().parse::<u8>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| Error::Parse(format!("palette line `{l}`")))?;
                <[u8; 3]>::try_from(c).map_err(|_| Error::Parse(format!("palette line `{l}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        if colors.is_empty() {
            return Err(Error::Parse("empty palette".into()));
        }
        Ok(Self { colors })
    }

    /// The bundled 64-level Parula ramp.
    pub fn parula() -> &'static Palette {
        static PALETTE: OnceLock<Palette> = OnceLock::new();
        PALETTE.get_or_init(|| Palette::parse(PARULA64).expect("bundled palette is well formed"))
    }

    pub fn len(&self) -> usize {
        self.colors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.colors.is_empty()
    }

    pub fn colors(&self) -> &[[u8; 3]] {
        &self.colors
    }

    /// Bin `floor(v·(len−1))`; `v` must lie in `[0, 1]`.
    pub fn index(&self, v: f64) -> Result<usize> {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::Range(format!("palette coordinate {v} outside [0, 1]")));
        }
        Ok(((v * (self.len() - 1) as f64).floor() as usize).min(self.len() - 1))
    }

    pub fn color(&self, v: f64) -> Result<[u8; 3]> {
        Ok(self.colors[self.index(v)?])
    }
}

/// Parula color for `v ∈ [0, 1]`.
pub fn parula64(v: f64) -> Result<[u8; 3]> {
    Palette::parula().color(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_ramp() {
        let p = Palette::parula();
        assert_eq!(p.len(), PALETTE_LEN);
        // all distinct, so in-mask colors identify their bin
        let mut seen = p.colors().to_vec();
        seen.sort();
        seen.dedup();
        assert_eq!(seen.len(), PALETTE_LEN);
    }

    #[test]
    fn endpoints() {
        let first = parula64(0.0).unwrap();
        let last = parula64(1.0).unwrap();
        assert_eq!(first, Palette::parula().colors()[0]);
        assert_eq!(last, Palette::parula().colors()[63]);
        // dark blue start, bright yellow end
        assert!(first[2] > first[0] && first[2] > first[1]);
        assert!(last[0] > 200 && last[1] > 200 && last[2] < 60);
    }

    #[test]
    fn quantization_and_range() {
        assert_eq!(parula64(0.5).unwrap(), parula64(0.5 + 1e-9).unwrap());
        assert_eq!(Palette::parula().index(0.5).unwrap(), 31);
        assert!(matches!(parula64(-0.01), Err(Error::Range(_))));
        assert!(matches!(parula64(1.5), Err(Error::Range(_))));
        assert!(matches!(parula64(f64::NAN), Err(Error::Range(_))));
    }
}
