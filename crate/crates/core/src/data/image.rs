//! 8-bit raster images stored as binary PGM (`P5`, grayscale) or PPM (`P6`,
//! RGB) files.

use std::path::Path;

use crate::error::{ensure, MgaError, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    /// Row-major, interleaved channels.
    data: Vec<u8>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<u8>) -> Result<Self> {
        ensure!(width > 0 && height > 0, Data, "image extents must be positive");
        ensure!(channels == 1 || channels == 3, Data, "images have 1 or 3 channels, got {channels}");
        ensure!(
            data.len() == width * height * channels,
            Data,
            "{width}x{height}x{channels} image needs {} bytes, got {}",
            width * height * channels,
            data.len()
        );
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: u8) -> Self {
        Self::new(width, height, channels, vec![value; width * height * channels]).expect("valid extents")
    }

    /// Builds an image from intensities in `[0, 1]`, laid out like [`Image::data`].
    pub fn from_unit(width: usize, height: usize, channels: usize, values: &[f64]) -> Result<Self> {
        Self::new(width, height, channels, values.iter().map(|&v| to_byte(v)).collect())
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize, c: usize) -> u8 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    /// Channel-first `[C, H, W]` values scaled to `[0, 1]`. Grayscale images
    /// are replicated when `channels` is 3.
    pub fn to_planar(&self, channels: usize) -> Result<Vec<f64>> {
        ensure!(
            channels == self.channels || (self.channels == 1 && channels == 3),
            Dimension,
            "cannot present a {}-channel image as {channels} channels",
            self.channels
        );
        let plane = self.width * self.height;
        let mut out = vec![0.0; channels * plane];
        for c in 0..channels {
            let src = c.min(self.channels - 1);
            for i in 0..plane {
                out[c * plane + i] = f64::from(self.data[i * self.channels + src]) / 255.0;
            }
        }
        Ok(out)
    }

    /// Mirrors columns: pixel `x` moves to `width - 1 - x`.
    pub fn flip_horizontal(&self) -> Self {
        let mut data = Vec::with_capacity(self.data.len());
        for y in 0..self.height {
            for x in (0..self.width).rev() {
                let i = (y * self.width + x) * self.channels;
                data.extend_from_slice(&self.data[i..i + self.channels]);
            }
        }
        Self { data, ..*self }
    }

    /// Bilinear sample at a real-valued position; outside the image reads 0.
    pub fn sample(&self, x: f64, y: f64, c: usize) -> f64 {
        let (x0, y0) = (x.floor(), y.floor());
        let (fx, fy) = (x - x0, y - y0);
        let at = |xi: f64, yi: f64| -> f64 {
            if xi < 0.0 || yi < 0.0 || xi >= self.width as f64 || yi >= self.height as f64 {
                0.0
            } else {
                f64::from(self.get(xi as usize, yi as usize, c))
            }
        };
        at(x0, y0) * (1.0 - fx) * (1.0 - fy)
            + at(x0 + 1.0, y0) * fx * (1.0 - fy)
            + at(x0, y0 + 1.0) * (1.0 - fx) * fy
            + at(x0 + 1.0, y0 + 1.0) * fx * fy
    }

    /// Rotates by `angle` radians about `center` with the same convention as
    /// [`crate::geometry::LandmarkSet::rotate`]. A zero angle is exact.
    pub fn rotate(&self, angle: f64, center: [f64; 2]) -> Self {
        if angle == 0.0 {
            return self.clone();
        }
        let (s, c) = angle.sin_cos();
        let mut data = Vec::with_capacity(self.data.len());
        for y in 0..self.height {
            for x in 0..self.width {
                let (dx, dy) = (x as f64 - center[0], y as f64 - center[1]);
                // Inverse rotation finds the source position.
                let sx = center[0] + c * dx + s * dy;
                let sy = center[1] - s * dx + c * dy;
                for ch in 0..self.channels {
                    data.push(self.sample(sx, sy, ch).round().clamp(0.0, 255.0) as u8);
                }
            }
        }
        Self { data, ..*self }
    }

    /// Bilinear resize to `width x height`, aligning pixel centers.
    pub fn resize(&self, width: usize, height: usize) -> Self {
        if width == self.width && height == self.height {
            return self.clone();
        }
        let sx = self.width as f64 / width as f64;
        let sy = self.height as f64 / height as f64;
        let mut data = Vec::with_capacity(width * height * self.channels);
        for y in 0..height {
            for x in 0..width {
                let fx = ((x as f64 + 0.5) * sx - 0.5).clamp(0.0, (self.width - 1) as f64);
                let fy = ((y as f64 + 0.5) * sy - 0.5).clamp(0.0, (self.height - 1) as f64);
                for c in 0..self.channels {
                    data.push(self.sample(fx, fy, c).round().clamp(0.0, 255.0) as u8);
                }
            }
        }
        Self {
            width,
            height,
            channels: self.channels,
            data,
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let magic = if self.channels == 1 { "P5" } else { "P6" };
        let mut out = format!("{magic}\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.data);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut pos = 0;
        let mut fields = Vec::with_capacity(4);
        while fields.len() < 4 {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            ensure!(pos > start, Data, "truncated PNM header");
            fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
        }
        // Exactly one whitespace byte separates the header from the raster.
        pos += 1;
        let channels = match fields[0].as_str() {
            "P5" => 1,
            "P6" => 3,
            other => return Err(MgaError::Data(format!("unsupported PNM magic {other:?}; expected P5 or P6"))),
        };
        let num = |s: &str| -> Result<usize> {
            s.parse()
                .map_err(|_| MgaError::Data(format!("bad PNM header field {s:?}")))
        };
        let (w, h, max) = (num(&fields[1])?, num(&fields[2])?, num(&fields[3])?);
        ensure!(max == 255, Data, "only 8-bit PNM images are supported (maxval {max})");
        let need = w * h * channels;
        ensure!(
            bytes.len() >= pos + need,
            Data,
            "PNM raster truncated: need {need} bytes, have {}",
            bytes.len().saturating_sub(pos)
        );
        Self::new(w, h, channels, bytes[pos..pos + need].to_vec())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| MgaError::io(path, e))?;
        Self::decode(&bytes).map_err(|e| MgaError::Data(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.encode()).map_err(|e| MgaError::io(path, e))
    }
}

pub fn to_byte(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(w: usize, h: usize, c: usize) -> Image {
        Image::new(w, h, c, (0..w * h * c).map(|i| (i * 7 % 256) as u8).collect()).unwrap()
    }

    #[test]
    fn pnm_round_trip() {
        for c in [1, 3] {
            let img = ramp(5, 4, c);
            assert_eq!(Image::decode(&img.encode()).unwrap(), img);
        }
        let with_comment = b"P5\n# made by hand\n2 1\n255\n\x01\x02";
        assert_eq!(Image::decode(with_comment).unwrap().data(), &[1, 2]);
        assert!(Image::decode(b"P3\n1 1\n255\n0").is_err());
        assert!(Image::decode(b"P5\n4 4\n255\n\x00").is_err());
    }

    #[test]
    fn flip_is_an_involution() {
        let img = ramp(7, 3, 3);
        assert_ne!(img.flip_horizontal(), img);
        assert_eq!(img.flip_horizontal().flip_horizontal(), img);
        assert_eq!(img.flip_horizontal().get(0, 1, 2), img.get(6, 1, 2));
    }

    #[test]
    fn rotation_moves_pixels_like_landmarks() {
        let mut data = vec![0u8; 9];
        data[5] = 200; // (x=2, y=1)
        let img = Image::new(3, 3, 1, data).unwrap();
        assert_eq!(img.rotate(0.0, [1.0, 1.0]), img);
        // A quarter turn maps (2,1) to (1,2) about the center.
        let r = img.rotate(std::f64::consts::FRAC_PI_2, [1.0, 1.0]);
        assert_eq!(r.get(1, 2, 0), 200);
        assert_eq!(r.get(2, 1, 0), 0);
    }

    #[test]
    fn planar_layout_and_replication() {
        let img = Image::new(2, 1, 1, vec![0, 255]).unwrap();
        assert_eq!(img.to_planar(3).unwrap(), vec![0.0, 1.0, 0.0, 1.0, 0.0, 1.0]);
        let rgb = Image::new(1, 1, 3, vec![255, 0, 51]).unwrap();
        assert_eq!(rgb.to_planar(3).unwrap(), vec![1.0, 0.0, 0.2]);
        assert!(rgb.to_planar(1).is_err());
    }

    #[test]
    fn resize_identity_and_constant() {
        let img = ramp(4, 4, 1);
        assert_eq!(img.resize(4, 4), img);
        let flat = Image::filled(8, 6, 3, 90);
        assert_eq!(flat.resize(3, 5), Image::filled(3, 5, 3, 90));
    }
}
