//! Square pixel images on a centered grid.
//!
//! Pixel `(iy, ix)` sits at `(x, y) = (ix - c, iy - c)` pixel pitches from
//! the center with `c = m / 2` (integer division), so for odd `m` the grid is
//! symmetric. The unit ball of the continuous model is the disk of radius
//! `m / 2` pixels.

use std::path::Path;

use crate::error::{Error, Result};
use crate::io::{put_f64s, put_u32, read_file, write_atomic, Reader};

const IMAGE_MAGIC: &[u8; 4] = b"UVTI";
const IMAGE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    m: usize,
    data: Vec<f64>,
}

/// Integer center index of an `m`-point grid.
pub fn center(m: usize) -> usize {
    m / 2
}

impl Image {
    pub fn zeros(m: usize) -> Self {
        Self {
            m,
            data: vec![0.0; m * m],
        }
    }

    pub fn from_vec(m: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != m * m {
            return Err(Error::InvalidArgument(format!(
                "image data has {} values, expected {}",
                data.len(),
                m * m
            )));
        }
        Ok(Self { m, data })
    }

    /// Build from a function of centered pixel coordinates `(x, y)`.
    pub fn from_fn(m: usize, mut f: impl FnMut(f64, f64) -> f64) -> Self {
        let c = center(m) as f64;
        let mut data = Vec::with_capacity(m * m);
        for iy in 0..m {
            for ix in 0..m {
                data.push(f(ix as f64 - c, iy as f64 - c));
            }
        }
        Self { m, data }
    }

    pub fn size(&self) -> usize {
        self.m
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, iy: usize, ix: usize) -> f64 {
        self.data[iy * self.m + ix]
    }

    pub fn set(&mut self, iy: usize, ix: usize, v: f64) {
        self.data[iy * self.m + ix] = v;
    }

    /// Radius of the unit ball in pixels.
    pub fn ball_radius(&self) -> f64 {
        self.m as f64 / 2.0
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn max(&self) -> f64 {
        self.data.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.data.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Bilinear interpolation at centered coordinates; zero outside the grid.
    pub fn sample(&self, x: f64, y: f64) -> f64 {
        let c = center(self.m) as f64;
        let fx = x + c;
        let fy = y + c;
        let x0 = fx.floor();
        let y0 = fy.floor();
        let tx = fx - x0;
        let ty = fy - y0;
        let (x0, y0) = (x0 as i64, y0 as i64);
        let m = self.m as i64;
        let at = |iy: i64, ix: i64| -> f64 {
            if ix < 0 || iy < 0 || ix >= m || iy >= m {
                0.0
            } else {
                self.data[(iy * m + ix) as usize]
            }
        };
        (1.0 - ty) * ((1.0 - tx) * at(y0, x0) + tx * at(y0, x0 + 1))
            + ty * ((1.0 - tx) * at(y0 + 1, x0) + tx * at(y0 + 1, x0 + 1))
    }

    /// Apply the O(2) element "reflect across the x axis (optional), then
    /// rotate counter-clockwise by `alpha`": `out(p) = self(S R_{-alpha} p)`.
    /// Pixels outside the unit ball are set to zero.
    pub fn transform_o2(&self, alpha: f64, reflect: bool) -> Image {
        let (s, c) = alpha.sin_cos();
        let radius = self.ball_radius();
        Image::from_fn(self.m, |x, y| {
            if x * x + y * y > radius * radius {
                return 0.0;
            }
            let xr = c * x + s * y;
            let yr = -s * x + c * y;
            let yr = if reflect { -yr } else { yr };
            self.sample(xr, yr)
        })
    }

    /// Zero every pixel outside the unit ball.
    pub fn mask_ball(&mut self) {
        let m = self.m;
        let c = center(m) as f64;
        let r2 = self.ball_radius().powi(2);
        for iy in 0..m {
            for ix in 0..m {
                let (x, y) = (ix as f64 - c, iy as f64 - c);
                if x * x + y * y > r2 {
                    self.data[iy * m + ix] = 0.0;
                }
            }
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(12 + 8 * self.data.len());
        buf.extend_from_slice(IMAGE_MAGIC);
        put_u32(&mut buf, IMAGE_VERSION);
        put_u32(&mut buf, self.m as u32);
        put_f64s(&mut buf, &self.data);
        buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        r.magic(IMAGE_MAGIC)?;
        r.version(IMAGE_VERSION)?;
        let m = r.u32()? as usize;
        let data = r.f64s(m * m)?;
        Ok(Self { m, data })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&read_file(path)?)
    }

    /// 16-bit binary PGM, min-max scaled.
    pub fn to_pgm(&self) -> Vec<u8> {
        let (lo, hi) = (self.min(), self.max());
        let span = if hi > lo { hi - lo } else { 1.0 };
        let mut buf = format!("P5\n{} {}\n65535\n", self.m, self.m).into_bytes();
        for v in &self.data {
            let q = (((v - lo) / span) * 65535.0).round().clamp(0.0, 65535.0) as u16;
            buf.extend_from_slice(&q.to_be_bytes());
        }
        buf
    }

    pub fn save_pgm(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_pgm())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_round_trip_is_bit_exact() {
        let img = Image::from_fn(7, |x, y| x * 0.1 - y * y + 1.0 / 3.0);
        let back = Image::from_bytes(&img.to_bytes()).unwrap();
        assert_eq!(back, img);
    }

    #[test]
    fn rejects_wrong_magic_and_version() {
        let img = Image::zeros(3);
        let mut bytes = img.to_bytes();
        bytes[0] = b'X';
        assert!(matches!(Image::from_bytes(&bytes), Err(Error::Format(_))));
        let mut bytes = img.to_bytes();
        bytes[4] = 9;
        assert!(matches!(
            Image::from_bytes(&bytes),
            Err(Error::Version { found: 9, .. })
        ));
    }

    #[test]
    fn sample_hits_pixel_centers() {
        let img = Image::from_fn(5, |x, y| 10.0 * y + x);
        assert_eq!(img.sample(1.0, -2.0), -19.0);
        assert!((img.sample(0.5, 0.0) - 0.5).abs() < 1e-15);
        assert_eq!(img.sample(10.0, 0.0), 0.0);
    }

    #[test]
    fn quarter_turn_moves_pixels() {
        let mut img = Image::zeros(9);
        // pixel at (x, y) = (2, 0)
        img.set(4, 6, 1.0);
        let rot = img.transform_o2(std::f64::consts::FRAC_PI_2, false);
        // lands on (0, 2)
        assert!((rot.get(6, 4) - 1.0).abs() < 1e-12);
        let refl = img.transform_o2(0.0, true);
        assert!((refl.get(4, 6) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pgm_header() {
        let img = Image::from_fn(4, |x, _| x);
        let pgm = img.to_pgm();
        assert!(pgm.starts_with(b"P5\n4 4\n65535\n"));
        assert_eq!(pgm.len(), 13 + 2 * 16);
    }
}
