use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use super::render::{RgbImage, Topoplot};
use crate::error::{Error, Result};

/// Lossless 8-bit RGB PNG of the topoplot raster.
pub fn export_png(t: &Topoplot, path: &Path) -> Result<()> {
    write_png(&t.image, path)
}

pub fn write_png(img: &RgbImage, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    encode(img, &mut out).map_err(|e| Error::io(path, std::io::Error::other(e)))?;
    out.flush().map_err(|e| Error::io(path, e))
}

fn encode<W: Write>(img: &RgbImage, w: W) -> std::result::Result<(), png::EncodingError> {
    let mut enc = png::Encoder::new(w, img.cols as u32, img.rows as u32);
    enc.set_color(png::ColorType::Rgb);
    enc.set_depth(png::BitDepth::Eight);
    let mut writer = enc.write_header()?;
    writer.write_image_data(&img.data)?;
    writer.finish()
}

/// Reads an 8-bit RGB or RGBA PNG; alpha is dropped.
pub fn load_png(path: &Path) -> Result<RgbImage> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let decoder = png::Decoder::new(BufReader::new(file));
    let bad = |e: png::DecodingError| Error::Parse(format!("{}: {e}", path.display()));
    let mut reader = decoder.read_info().map_err(bad)?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::Parse(format!("{}: image too large", path.display())))?;
    let mut buf = vec![0u8; size];
    let info = reader.next_frame(&mut buf).map_err(bad)?;
    if info.bit_depth != png::BitDepth::Eight {
        return Err(Error::Parse(format!("{}: expected 8-bit PNG", path.display())));
    }
    let buf = &buf[..info.buffer_size()];
    let data = match info.color_type {
        png::ColorType::Rgb => buf.to_vec(),
        png::ColorType::Rgba => buf
            .chunks_exact(4)
            .flat_map(|p| [p[0], p[1], p[2]])
            .collect(),
        other => {
            return Err(Error::Parse(format!(
                "{}: unsupported color type {other:?}",
                path.display()
            )))
        }
    };
    Ok(RgbImage {
        rows: info.height as usize,
        cols: info.width as usize,
        data,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eeg_io::{Montage, DEAP_CHANNELS};
    use crate::topomap::{project_electrodes, render::render_weights};

    fn sample() -> Topoplot {
        let l = project_electrodes(&Montage::standard_1020(), &DEAP_CHANNELS).unwrap();
        let w: Vec<f64> = (0..32).map(|i| ((i * 7) % 11) as f64 / 5.0 - 1.0).collect();
        render_weights(&w, &l).unwrap()
    }

    #[test]
    fn round_trip_is_lossless() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.png");
        let t = sample();
        export_png(&t, &p).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        assert!(bytes.len() > 8);
        assert_eq!(&bytes[..4], &[0x89, 0x50, 0x4E, 0x47]);
        let back = load_png(&p).unwrap();
        assert_eq!(back, t.image);
    }

    #[test]
    fn unwritable_path() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("missing-dir").join("t.png");
        assert!(matches!(export_png(&sample(), &p), Err(Error::Io { .. })));
    }
}
