//! Global image descriptor: Gabor filter energies pooled over a 4×4 grid.
//!
//! Images are resampled to a fixed working resolution, transformed once with
//! a 2-D FFT, multiplied by each filter's transfer function and transformed
//! back. The magnitude of the complex response is the filter energy, which is
//! then averaged inside every cell of the grid.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Cells per side of the pooling grid.
pub const GRID: usize = 4;
pub const SCALES: usize = 4;
pub const ORIENTATIONS: usize = 6;
/// Length of a raw descriptor: scales × orientations × grid cells.
pub const RAW_LEN: usize = SCALES * ORIENTATIONS * GRID * GRID;
/// Working resolution every image is resampled to before filtering.
pub const WORK_SIZE: usize = 128;
/// Smallest accepted edge length; every grid cell must hold a pixel.
pub const MIN_EDGE: usize = 16;

/// Centre frequencies of the four scales, in cycles per pixel.
pub const SCALE_FREQUENCIES: [f64; SCALES] = [0.25, 0.125, 0.0625, 0.03125];

/// Single-channel image with luminance in `[0, 1]`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        if width < MIN_EDGE || height < MIN_EDGE {
            return Err(Error::Dimension(format!(
                "image is {width}x{height}, need at least {MIN_EDGE}x{MIN_EDGE}"
            )));
        }
        if pixels.len() != width * height {
            return Err(Error::Dimension(format!(
                "expected {} pixels for {width}x{height}, got {}",
                width * height,
                pixels.len()
            )));
        }
        if let Some(i) = pixels
            .iter()
            .position(|p| !p.is_finite() || *p < 0.0 || *p > 1.0)
        {
            return Err(Error::Validation(format!(
                "pixel {i} = {} is outside [0, 1]",
                pixels[i]
            )));
        }
        Ok(GrayImage {
            width,
            height,
            pixels,
        })
    }

    /// Builds an image by evaluating `f(x, y)` at every pixel.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        GrayImage::new(width, height, pixels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }

    /// Bilinear resampling with pixel-centre alignment and edge clamping.
    pub fn resize_bilinear(&self, width: usize, height: usize) -> Result<GrayImage> {
        if width == self.width && height == self.height {
            return Ok(self.clone());
        }
        let sx = self.width as f64 / width as f64;
        let sy = self.height as f64 / height as f64;
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            let fy = ((y as f64 + 0.5) * sy - 0.5).clamp(0.0, (self.height - 1) as f64);
            let y0 = fy.floor() as usize;
            let y1 = (y0 + 1).min(self.height - 1);
            let ty = fy - y0 as f64;
            for x in 0..width {
                let fx = ((x as f64 + 0.5) * sx - 0.5).clamp(0.0, (self.width - 1) as f64);
                let x0 = fx.floor() as usize;
                let x1 = (x0 + 1).min(self.width - 1);
                let tx = fx - x0 as f64;
                let top = self.get(x0, y0) * (1.0 - tx) + self.get(x1, y0) * tx;
                let bottom = self.get(x0, y1) * (1.0 - tx) + self.get(x1, y1) * tx;
                pixels.push((top * (1.0 - ty) + bottom * ty).clamp(0.0, 1.0));
            }
        }
        GrayImage::new(width, height, pixels)
    }

    /// Reads a binary 8-bit PGM (`P5`) file.
    pub fn read_pgm(path: impl AsRef<Path>) -> Result<GrayImage> {
        let path = path.as_ref();
        let bytes = fs::read(path)?;
        GrayImage::parse_pgm(&bytes).map_err(|e| match e {
            Error::Parse { location, message } => {
                Error::parse(format!("{}: {location}", path.display()), message)
            }
            other => other,
        })
    }

    pub fn parse_pgm(bytes: &[u8]) -> Result<GrayImage> {
        let mut pos = 0usize;
        let mut fields = Vec::with_capacity(4);
        while fields.len() < 4 {
            // whitespace and comments between header tokens
            while pos < bytes.len() {
                if bytes[pos].is_ascii_whitespace() {
                    pos += 1;
                } else if bytes[pos] == b'#' {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                } else {
                    break;
                }
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(Error::parse(format!("byte {pos}"), "truncated PGM header"));
            }
            fields.push((start, String::from_utf8_lossy(&bytes[start..pos]).into_owned()));
        }
        if fields[0].1 != "P5" {
            return Err(Error::parse("byte 0", format!("expected P5 magic, found {:?}", fields[0].1)));
        }
        let mut nums = [0usize; 3];
        for (slot, (at, tok)) in nums.iter_mut().zip(&fields[1..]) {
            *slot = tok
                .parse()
                .map_err(|_| Error::parse(format!("byte {at}"), format!("invalid header number {tok:?}")))?;
        }
        let [width, height, maxval] = nums;
        if maxval == 0 || maxval > 255 {
            return Err(Error::parse(
                format!("byte {}", fields[3].0),
                format!("only 8-bit PGM is supported, maxval = {maxval}"),
            ));
        }
        // exactly one whitespace byte separates the header from the raster
        pos += 1;
        let need = width * height;
        if bytes.len() < pos + need {
            return Err(Error::parse(
                format!("byte {}", bytes.len()),
                format!("raster truncated: need {need} bytes"),
            ));
        }
        let scale = maxval as f64;
        let pixels = bytes[pos..pos + need]
            .iter()
            .map(|&b| (b as f64 / scale).min(1.0))
            .collect();
        GrayImage::new(width, height, pixels)
    }

    /// Encodes as 8-bit binary PGM, rounding to the nearest level.
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(self.pixels.iter().map(|p| (p * 255.0).round() as u8));
        out
    }
}

/// 384 pooled filter energies, laid out scale-major, then orientation, then
/// grid cell in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct RawDescriptor(Vec<f64>);

impl RawDescriptor {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() != RAW_LEN {
            return Err(Error::Dimension(format!(
                "raw descriptor needs {RAW_LEN} values, got {}",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Validation(format!(
                "raw descriptor entry {i} = {} is not a finite energy",
                values[i]
            )));
        }
        Ok(RawDescriptor(values))
    }

    #[inline]
    pub fn index(scale: usize, orientation: usize, cell: usize) -> usize {
        (scale * ORIENTATIONS + orientation) * GRID * GRID + cell
    }

    pub fn get(&self, scale: usize, orientation: usize, cell: usize) -> f64 {
        self.0[Self::index(scale, orientation, cell)]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

impl AsRef<[f64]> for RawDescriptor {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// Frequency-domain Gabor bank: one-octave radial bandwidth, orientations
/// every 30°, DC bin forced to zero.
pub struct GaborBank {
    size: usize,
    transfer: Vec<Vec<f64>>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for GaborBank {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GaborBank").field("size", &self.size).finish()
    }
}

impl Default for GaborBank {
    fn default() -> Self {
        GaborBank::new(WORK_SIZE)
    }
}

/// Signed frequency of DFT bin `k` for a transform of length `n`.
#[inline]
fn bin_frequency(k: usize, n: usize) -> f64 {
    let k = k as f64;
    let n_f = n as f64;
    if k < n_f / 2.0 {
        k / n_f
    } else {
        (k - n_f) / n_f
    }
}

fn wrap_angle(a: f64) -> f64 {
    let mut a = (a + PI) % (2.0 * PI);
    if a < 0.0 {
        a += 2.0 * PI;
    }
    a - PI
}

impl GaborBank {
    /// Builds the bank for square `size`×`size` working images.
    pub fn new(size: usize) -> Self {
        // half-amplitude width of one octave around f0 is f0·(√2 − 1/√2)
        let fwhm_to_sigma = 1.0 / (2.0 * (2.0 * 2f64.ln()).sqrt());
        let angular_sigma = (PI / ORIENTATIONS as f64) * fwhm_to_sigma;

        let mut transfer = Vec::with_capacity(SCALES * ORIENTATIONS);
        for &f0 in &SCALE_FREQUENCIES {
            let radial_sigma = f0 * (2f64.sqrt() - 1.0 / 2f64.sqrt()) * fwhm_to_sigma;
            for o in 0..ORIENTATIONS {
                let theta0 = o as f64 * PI / ORIENTATIONS as f64;
                let mut h = vec![0.0; size * size];
                for ky in 0..size {
                    let fy = bin_frequency(ky, size);
                    for kx in 0..size {
                        let fx = bin_frequency(kx, size);
                        let f = (fx * fx + fy * fy).sqrt();
                        if f == 0.0 {
                            continue;
                        }
                        let dtheta = wrap_angle(fy.atan2(fx) - theta0);
                        let radial = (f - f0) / radial_sigma;
                        let angular = dtheta / angular_sigma;
                        h[ky * size + kx] = (-0.5 * (radial * radial + angular * angular)).exp();
                    }
                }
                transfer.push(h);
            }
        }

        let mut planner = FftPlanner::new();
        GaborBank {
            size,
            transfer,
            forward: planner.plan_fft_forward(size),
            inverse: planner.plan_fft_inverse(size),
        }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// Real transfer function of one filter, row-major over DFT bins.
    pub fn transfer(&self, scale: usize, orientation: usize) -> &[f64] {
        &self.transfer[scale * ORIENTATIONS + orientation]
    }

    fn fft2(&self, data: &mut [Complex64], fft: &Arc<dyn Fft<f64>>) {
        let n = self.size;
        for row in data.chunks_exact_mut(n) {
            fft.process(row);
        }
        let mut column = vec![Complex64::new(0.0, 0.0); n];
        for x in 0..n {
            for y in 0..n {
                column[y] = data[y * n + x];
            }
            fft.process(&mut column);
            for y in 0..n {
                data[y * n + x] = column[y];
            }
        }
    }

    /// Response magnitude maps for every filter, in descriptor order.
    ///
    /// The image must already be at the bank's working size.
    pub fn responses(&self, image: &GrayImage) -> Result<Vec<Vec<f64>>> {
        let n = self.size;
        if image.width() != n || image.height() != n {
            return Err(Error::Dimension(format!(
                "bank expects {n}x{n} images, got {}x{}",
                image.width(),
                image.height()
            )));
        }
        let mut spectrum: Vec<Complex64> = image
            .pixels()
            .iter()
            .map(|&p| Complex64::new(p, 0.0))
            .collect();
        self.fft2(&mut spectrum, &self.forward);

        let norm = 1.0 / (n * n) as f64;
        let mut scratch = vec![Complex64::new(0.0, 0.0); n * n];
        let mut maps = Vec::with_capacity(self.transfer.len());
        for h in &self.transfer {
            for ((out, s), g) in scratch.iter_mut().zip(&spectrum).zip(h) {
                *out = s * *g;
            }
            self.fft2(&mut scratch, &self.inverse);
            maps.push(scratch.iter().map(|c| c.norm() * norm).collect());
        }
        Ok(maps)
    }
}

/// Pixel range `[start, end)` of grid band `index` along an axis of `len`.
#[inline]
pub fn grid_span(len: usize, index: usize) -> (usize, usize) {
    (len * index / GRID, len * (index + 1) / GRID)
}

/// Computes the 384-d descriptor of `image`.
pub fn compute_gist(image: &GrayImage, bank: &GaborBank) -> Result<RawDescriptor> {
    if image.width() < MIN_EDGE || image.height() < MIN_EDGE {
        return Err(Error::Dimension(format!(
            "image is {}x{}, need at least {MIN_EDGE}x{MIN_EDGE}",
            image.width(),
            image.height()
        )));
    }
    let work = image.resize_bilinear(bank.size(), bank.size())?;
    let maps = bank.responses(&work)?;
    let n = bank.size();

    let mut values = vec![0.0; RAW_LEN];
    for (filter, map) in maps.iter().enumerate() {
        for gy in 0..GRID {
            let (y0, y1) = grid_span(n, gy);
            for gx in 0..GRID {
                let (x0, x1) = grid_span(n, gx);
                let mut sum = 0.0;
                for y in y0..y1 {
                    sum += map[y * n + x0..y * n + x1].iter().sum::<f64>();
                }
                let area = ((y1 - y0) * (x1 - x0)) as f64;
                values[filter * GRID * GRID + gy * GRID + gx] = sum / area;
            }
        }
    }
    RawDescriptor::new(values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_small_images() {
        let err = GrayImage::new(15, 20, vec![0.0; 300]).unwrap_err();
        assert!(matches!(err, Error::Dimension(_)));
    }

    #[test]
    fn rejects_out_of_range_pixels() {
        let mut px = vec![0.5; 16 * 16];
        px[7] = f64::NAN;
        assert!(matches!(GrayImage::new(16, 16, px).unwrap_err(), Error::Validation(_)));
        let mut px = vec![0.5; 16 * 16];
        px[3] = 1.5;
        assert!(matches!(GrayImage::new(16, 16, px).unwrap_err(), Error::Validation(_)));
    }

    #[test]
    fn constant_image_has_zero_energy() {
        let bank = GaborBank::default();
        let img = GrayImage::new(64, 64, vec![0.5; 64 * 64]).unwrap();
        let d = compute_gist(&img, &bank).unwrap();
        assert_eq!(d.as_slice().len(), RAW_LEN);
        assert!(d.as_slice().iter().all(|v| v.abs() < 1e-6));
    }

    #[test]
    fn minimum_size_image_is_accepted() {
        let bank = GaborBank::default();
        let img = GrayImage::from_fn(16, 16, |x, y| ((x * 7 + y * 3) % 11) as f64 / 10.0).unwrap();
        let d = compute_gist(&img, &bank).unwrap();
        assert_eq!(d.as_slice().len(), RAW_LEN);
    }

    #[test]
    fn grid_partition_is_exhaustive() {
        for len in [16, 17, 31, 128, 130] {
            let mut covered = 0;
            for i in 0..GRID {
                let (a, b) = grid_span(len, i);
                assert!(b > a);
                covered += b - a;
            }
            assert_eq!(covered, len);
        }
    }

    #[test]
    fn transfer_has_no_dc_and_peaks_on_ring() {
        let bank = GaborBank::new(64);
        for s in 0..SCALES {
            for o in 0..ORIENTATIONS {
                let h = bank.transfer(s, o);
                assert_eq!(h[0], 0.0);
                assert!(h.iter().all(|v| (0.0..=1.0).contains(v)));
            }
        }
        // 0.25 cycles/pixel along +x lands on bin 16 of 64
        assert!((bank.transfer(0, 0)[16] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pgm_round_trip() {
        let img = GrayImage::from_fn(20, 17, |x, y| ((x + 2 * y) % 256) as f64 / 255.0).unwrap();
        let bytes = img.to_pgm();
        let back = GrayImage::parse_pgm(&bytes).unwrap();
        assert_eq!(back.width(), 20);
        assert_eq!(back.height(), 17);
        for (a, b) in img.pixels().iter().zip(back.pixels()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn pgm_with_comment_and_truncation() {
        let mut bytes = b"P5\n# made by hand\n16 16\n255\n".to_vec();
        bytes.extend(std::iter::repeat_n(128u8, 256));
        let img = GrayImage::parse_pgm(&bytes).unwrap();
        assert!((img.get(3, 3) - 128.0 / 255.0).abs() < 1e-12);

        bytes.truncate(bytes.len() - 10);
        assert!(matches!(GrayImage::parse_pgm(&bytes), Err(Error::Parse { .. })));
        assert!(matches!(GrayImage::parse_pgm(b"P2\n16 16\n255\n"), Err(Error::Parse { .. })));
    }
}
