use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};

/// Writes an 8-bit grayscale PNG.
pub fn write_png_gray(path: &Path, image: &Array2<u8>) -> Result<()> {
    let (h, w) = image.dim();
    let file = BufWriter::new(File::create(path)?);
    let mut enc = png::Encoder::new(file, w as u32, h as u32);
    enc.set_color(png::ColorType::Grayscale);
    enc.set_depth(png::BitDepth::Eight);
    let data: Vec<u8> = image.iter().copied().collect();
    enc.write_header()
        .and_then(|mut wr| wr.write_image_data(&data))
        .map_err(|e| Error::Io(std::io::Error::other(e)))
}

/// Writes a mono 16-bit PCM WAVE file.
pub fn write_wav_mono16(path: &Path, samples: &[i16], sample_rate: u32) -> Result<()> {
    let data_len = u32::try_from(samples.len() * 2).map_err(|_| Error::Config("wave too long".into()))?;
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(b"RIFF")?;
    out.write_all(&(36 + data_len).to_le_bytes())?;
    out.write_all(b"WAVEfmt ")?;
    out.write_all(&16u32.to_le_bytes())?;
    out.write_all(&1u16.to_le_bytes())?;
    out.write_all(&1u16.to_le_bytes())?;
    out.write_all(&sample_rate.to_le_bytes())?;
    out.write_all(&(sample_rate * 2).to_le_bytes())?;
    out.write_all(&2u16.to_le_bytes())?;
    out.write_all(&16u16.to_le_bytes())?;
    out.write_all(b"data")?;
    out.write_all(&data_len.to_le_bytes())?;
    for s in samples {
        out.write_all(&s.to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}
