//! Binary PGM (P5) and PPM (P6) images with 8-bit samples.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    /// 1 for grayscale, 3 for RGB.
    pub channels: usize,
    pub data: Vec<u8>,
}

impl Image {
    pub fn gray(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        Self::with_channels(width, height, 1, data)
    }

    pub fn rgb(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        Self::with_channels(width, height, 3, data)
    }

    fn with_channels(width: usize, height: usize, channels: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != width * height * channels {
            return Err(Error::Shape(format!(
                "{width}x{height}x{channels} image needs {} bytes, got {}",
                width * height * channels,
                data.len()
            )));
        }
        Ok(Image {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn pixel(&self, x: usize, y: usize) -> &[u8] {
        let i = (y * self.width + x) * self.channels;
        &self.data[i..i + self.channels]
    }

    pub fn encode(&self) -> Vec<u8> {
        let magic = if self.channels == 1 { "P5" } else { "P6" };
        let mut out = format!("{magic}\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.data);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut pos = 0usize;
        let magic = token(bytes, &mut pos)?;
        let channels = match magic.as_str() {
            "P5" => 1,
            "P6" => 3,
            other => {
                return Err(Error::Input(format!(
                    "unsupported image format '{other}' (expected binary P5 or P6)"
                )))
            }
        };
        let width = number(bytes, &mut pos)?;
        let height = number(bytes, &mut pos)?;
        let maxval = number(bytes, &mut pos)?;
        if maxval == 0 || maxval > 255 {
            return Err(Error::Input(format!("only 8-bit images are supported (maxval {maxval})")));
        }
        // Exactly one whitespace byte separates the header from the raster.
        pos += 1;
        let need = width * height * channels;
        let end = pos + need;
        if bytes.len() < end {
            return Err(Error::Input(format!(
                "image raster truncated: need {need} bytes from offset {pos}, file has {}",
                bytes.len()
            )));
        }
        let mut data = bytes[pos..end].to_vec();
        if maxval != 255 {
            for v in &mut data {
                *v = ((u32::from(*v) * 255 + maxval as u32 / 2) / maxval as u32).min(255) as u8;
            }
        }
        Image::with_channels(width, height, channels, data)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Image::decode(&bytes).map_err(|e| match e {
            Error::Input(m) => Error::Input(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.encode()).map_err(|e| Error::io(path, e))
    }
}

fn skip_space(bytes: &[u8], pos: &mut usize) {
    while *pos < bytes.len() {
        match bytes[*pos] {
            b'#' => {
                while *pos < bytes.len() && bytes[*pos] != b'\n' {
                    *pos += 1;
                }
            }
            b if b.is_ascii_whitespace() => *pos += 1,
            _ => break,
        }
    }
}

fn token(bytes: &[u8], pos: &mut usize) -> Result<String> {
    skip_space(bytes, pos);
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if start == *pos {
        return Err(Error::Input(format!("image header ends early at offset {start}")));
    }
    Ok(String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
}

fn number(bytes: &[u8], pos: &mut usize) -> Result<usize> {
    let at = *pos;
    let t = token(bytes, pos)?;
    t.parse()
        .map_err(|_| Error::Input(format!("bad number '{t}' in image header at offset {at}")))
}
