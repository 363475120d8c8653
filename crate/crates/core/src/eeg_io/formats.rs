use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::Recording;
use crate::error::{Error, Result};

/// Leading bytes of a raw-f32 recording.
pub const RAW_MAGIC: &[u8; 16] = b"ICASCOPE-RAW\0\0\0\0";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    /// `# fs=<int>`, a line of channel names, then one row per sample.
    Csv,
    /// Magic, length-prefixed JSON header, channel-major little-endian f32.
    RawF32,
}

impl Format {
    /// Guesses from the extension: `.csv` is CSV, everything else raw-f32.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => Format::Csv,
            _ => Format::RawF32,
        }
    }
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "raw-f32" | "raw" | "f32" => Ok(Format::RawF32),
            other => Err(Error::Parse(format!("unknown recording format `{other}`"))),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct RawHeader {
    fs: u32,
    channels: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    n_samples: Option<usize>,
}

pub fn load_recording(path: &Path, format: Format) -> Result<Recording> {
    match format {
        Format::Csv => {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            parse_csv(&text)
        }
        Format::RawF32 => {
            let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
            parse_raw(&bytes)
        }
    }
}

pub fn save_recording(rec: &Recording, path: &Path, format: Format) -> Result<()> {
    let bytes = match format {
        Format::Csv => encode_csv(rec).into_bytes(),
        Format::RawF32 => encode_raw(rec),
    };
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&bytes).map_err(|e| Error::io(path, e))
}

fn parse_csv(text: &str) -> Result<Recording> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("empty CSV".into()))?
        .trim();
    let fs = header
        .strip_prefix('#')
        .map(str::trim)
        .and_then(|h| h.strip_prefix("fs="))
        .and_then(|v| v.trim().parse::<u32>().ok())
        .ok_or_else(|| Error::Parse(format!("expected `# fs=<int>`, got `{header}`")))?;
    let channels: Vec<String> = lines
        .next()
        .ok_or_else(|| Error::Parse("missing channel-name line".into()))?
        .split(',')
        .map(|s| s.trim().to_string())
        .collect();
    let n_ch = channels.len();
    let mut columns: Vec<f64> = Vec::new();
    for (row, line) in lines.enumerate() {
        let before = columns.len();
        for field in line.split(',') {
            let v = field.trim().parse::<f64>().map_err(|_| {
                Error::Parse(format!("row {}: bad value `{}`", row + 1, field.trim()))
            })?;
            columns.push(v);
        }
        if columns.len() - before != n_ch {
            return Err(Error::Parse(format!(
                "row {} has {} values, header declares {n_ch} channels",
                row + 1,
                columns.len() - before
            )));
        }
    }
    let n_samples = columns.len() / n_ch.max(1);
    // rows of the file are samples, i.e. columns of the channel-major matrix
    let samples = DMatrix::from_vec(n_ch, n_samples, columns);
    Recording::new(samples, fs, channels)
}

fn encode_csv(rec: &Recording) -> String {
    let mut out = format!("# fs={}\n{}\n", rec.sample_rate(), rec.channel_names().join(","));
    for col in rec.samples().column_iter() {
        let row: Vec<String> = col.iter().map(|v| v.to_string()).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

fn parse_raw(bytes: &[u8]) -> Result<Recording> {
    if bytes.len() < RAW_MAGIC.len() + 4 || &bytes[..RAW_MAGIC.len()] != RAW_MAGIC {
        return Err(Error::Parse("missing raw-f32 magic".into()));
    }
    let mut pos = RAW_MAGIC.len();
    let header_len = u32::from_le_bytes(bytes[pos..pos + 4].try_into().unwrap()) as usize;
    pos += 4;
    let header_bytes = bytes
        .get(pos..pos + header_len)
        .ok_or_else(|| Error::Parse("truncated raw-f32 header".into()))?;
    let header: RawHeader = serde_json::from_slice(header_bytes)
        .map_err(|e| Error::Parse(format!("raw-f32 header: {e}")))?;
    pos += header_len;
    let body = &bytes[pos..];
    let n_ch = header.channels.len();
    if n_ch == 0 || body.len() % (4 * n_ch) != 0 {
        return Err(Error::Parse(format!(
            "{} payload bytes do not split into {n_ch} f32 channels",
            body.len()
        )));
    }
    let n_samples = body.len() / (4 * n_ch);
    if let Some(declared) = header.n_samples {
        if declared != n_samples {
            return Err(Error::Parse(format!(
                "header declares {declared} samples per channel, payload holds {n_samples}"
            )));
        }
    }
    let values: Vec<f64> = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    // payload is channel-major, i.e. row-major for the [channel × sample] matrix
    let samples = DMatrix::from_row_slice(n_ch, n_samples, &values);
    Recording::new(samples, header.fs, header.channels)
}

fn encode_raw(rec: &Recording) -> Vec<u8> {
    let header = RawHeader {
        fs: rec.sample_rate(),
        channels: rec.channel_names().to_vec(),
        n_samples: Some(rec.n_samples()),
    };
    let header = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(RAW_MAGIC.len() + 4 + header.len() + rec.samples().len() * 4);
    out.extend_from_slice(RAW_MAGIC);
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    for row in rec.samples().row_iter() {
        for &v in row.iter() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, bytes: &[u8]) -> std::path::PathBuf {
        let p = dir.join(name);
        fs::write(&p, bytes).unwrap();
        p
    }

    #[test]
    fn csv_sixty_seconds() {
        let dir = tempfile::tempdir().unwrap();
        let names = super::super::DEAP_CHANNELS.join(",");
        let mut text = format!("# fs=512\n{names}\n");
        let row = vec!["1.5"; 32].join(",");
        for _ in 0..60 * 512 {
            text.push_str(&row);
            text.push('\n');
        }
        let p = write(dir.path(), "rec.csv", text.as_bytes());
        let rec = load_recording(&p, Format::Csv).unwrap();
        assert_eq!(rec.n_channels(), 32);
        assert_eq!(rec.n_samples(), 30720);
        assert_eq!(rec.samples()[(5, 100)], 1.5);
    }

    #[test]
    fn csv_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "a.csv", b"fs=512\nFp1,Fp2\n1,2\n");
        assert!(matches!(load_recording(&p, Format::Csv), Err(Error::Parse(_))));
        let p = write(dir.path(), "b.csv", b"# fs=512\nFp1,Fp2\n1,2\n3\n");
        assert!(matches!(load_recording(&p, Format::Csv), Err(Error::Parse(_))));
        let p = write(dir.path(), "c.csv", b"# fs=512\nFp1,XX9\n1,2\n");
        assert!(matches!(load_recording(&p, Format::Csv), Err(Error::Montage(l)) if l == "XX9"));
    }

    #[test]
    fn raw_two_channels() {
        let mut bytes = RAW_MAGIC.to_vec();
        let header = br#"{"fs":512,"channels":["Fp1","AF3"]}"#;
        bytes.extend_from_slice(&(header.len() as u32).to_le_bytes());
        bytes.extend_from_slice(header);
        for ch in 0..2 {
            for i in 0..1024 {
                bytes.extend_from_slice(&((ch * 10_000 + i) as f32).to_le_bytes());
            }
        }
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "r.raw", &bytes);
        let rec = load_recording(&p, Format::RawF32).unwrap();
        assert_eq!(rec.samples().shape(), (2, 1024));
        assert_eq!(rec.samples()[(1, 3)], 10_003.0);
        assert_eq!(rec.channel_names(), ["Fp1", "AF3"]);
    }

    #[test]
    fn raw_count_mismatch() {
        let mut bytes = RAW_MAGIC.to_vec();
        let header = br#"{"fs":512,"channels":["Fp1","AF3"],"n_samples":10}"#;
        bytes.extend_from_slice(&(header.len() as u32).to_le_bytes());
        bytes.extend_from_slice(header);
        bytes.extend_from_slice(&[0u8; 4 * 2 * 9]);
        assert!(matches!(parse_raw(&bytes), Err(Error::Parse(_))));
        assert!(matches!(parse_raw(b"NOPE"), Err(Error::Parse(_))));
    }
}
