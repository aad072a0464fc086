//! Packed 8-bit RGB raster used for transmission and reconstruction.

use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};

/// Samples per pixel. Every buffer in the simulator is RGB.
pub const CHANNELS: usize = 3;

pub type Rgb = [u8; 3];

pub const WHITE: Rgb = [255, 255, 255];

/// Row-major H×W×3 raster with 8-bit samples.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageBuffer {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

impl ImageBuffer {
    pub fn filled(width: u32, height: u32, color: Rgb) -> Self {
        let mut data = Vec::with_capacity(width as usize * height as usize * CHANNELS);
        for _ in 0..(width as usize * height as usize) {
            data.extend_from_slice(&color);
        }
        Self { width, height, data }
    }

    pub fn white(width: u32, height: u32) -> Self {
        Self::filled(width, height, WHITE)
    }

    /// Wraps raw samples, returning `None` when the length does not match the
    /// dimensions.
    pub fn from_raw(width: u32, height: u32, data: Vec<u8>) -> Option<Self> {
        if data.len() != width as usize * height as usize * CHANNELS {
            return None;
        }
        Some(Self { width, height, data })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn channels(&self) -> usize {
        CHANNELS
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_raw(self) -> Vec<u8> {
        self.data
    }

    fn offset(&self, x: u32, y: u32) -> usize {
        (y as usize * self.width as usize + x as usize) * CHANNELS
    }

    pub fn pixel(&self, x: u32, y: u32) -> Rgb {
        let o = self.offset(x, y);
        [self.data[o], self.data[o + 1], self.data[o + 2]]
    }

    pub fn put_pixel(&mut self, x: u32, y: u32, color: Rgb) {
        let o = self.offset(x, y);
        self.data[o..o + CHANNELS].copy_from_slice(&color);
    }

    pub fn is_background(&self, x: u32, y: u32) -> bool {
        self.pixel(x, y) == WHITE
    }

    /// Copies the rectangle `[x0, x0+w) × [y0, y0+h)`, clipped to the buffer.
    pub fn crop(&self, x0: u32, y0: u32, w: u32, h: u32) -> ImageBuffer {
        let x1 = (x0 + w).min(self.width);
        let y1 = (y0 + h).min(self.height);
        let (x0, y0) = (x0.min(x1), y0.min(y1));
        let cw = x1 - x0;
        let mut data = Vec::with_capacity(cw as usize * (y1 - y0) as usize * CHANNELS);
        for y in y0..y1 {
            let start = self.offset(x0, y);
            data.extend_from_slice(&self.data[start..start + cw as usize * CHANNELS]);
        }
        ImageBuffer {
            width: cw,
            height: y1 - y0,
            data,
        }
    }

    /// Overwrites pixels with `src` placed at `(x0, y0)`; out-of-bounds parts
    /// are dropped.
    pub fn paste(&mut self, src: &ImageBuffer, x0: u32, y0: u32) {
        for sy in 0..src.height {
            let y = y0 + sy;
            if y >= self.height {
                break;
            }
            for sx in 0..src.width {
                let x = x0 + sx;
                if x >= self.width {
                    break;
                }
                self.put_pixel(x, y, src.pixel(sx, sy));
            }
        }
    }

    /// Flattened samples as reals, for similarity metrics.
    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|&s| f64::from(s)).collect()
    }

    /// Writes binary PPM (P6, maxval 255).
    pub fn write_ppm<W: Write>(&self, mut w: W) -> io::Result<()> {
        write!(w, "P6\n{} {}\n255\n", self.width, self.height)?;
        w.write_all(&self.data)
    }

    pub fn read_ppm<R: BufRead>(mut r: R) -> io::Result<Self> {
        let mut fields = Vec::with_capacity(4);
        let mut token = String::new();
        // Header: magic, width, height, maxval separated by whitespace, with
        // optional '#' comments.
        while fields.len() < 4 {
            let mut byte = [0u8; 1];
            r.read_exact(&mut byte)?;
            let c = byte[0] as char;
            if c == '#' {
                let mut skip = Vec::new();
                r.read_until(b'\n', &mut skip)?;
            } else if c.is_ascii_whitespace() {
                if !token.is_empty() {
                    fields.push(std::mem::take(&mut token));
                }
            } else {
                token.push(c);
            }
        }
        let bad = |msg: &str| io::Error::new(io::ErrorKind::InvalidData, msg.to_string());
        if fields[0] != "P6" {
            return Err(bad("not a binary PPM"));
        }
        let width: u32 = fields[1].parse().map_err(|_| bad("bad width"))?;
        let height: u32 = fields[2].parse().map_err(|_| bad("bad height"))?;
        if fields[3] != "255" {
            return Err(bad("only maxval 255 is supported"));
        }
        let mut data = vec![0u8; width as usize * height as usize * CHANNELS];
        r.read_exact(&mut data)?;
        Ok(Self { width, height, data })
    }
}
