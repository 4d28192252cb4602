//! Dense planar raster used for every HR, LR, subband and diffusion state.

use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use rand::Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::rng::normal;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Shape {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl Shape {
    pub fn new(height: usize, width: usize, channels: usize) -> Self {
        Shape { height, width, channels }
    }

    pub fn len(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.height, self.width, self.channels)
    }
}

/// Planar image: channel `c`, row `y`, column `x` lives at
/// `data[(c * height + y) * width + x]`.
#[derive(Clone, PartialEq)]
pub struct Image<T> {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<T>,
}

impl<T> fmt::Debug for Image<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Image<{}>({}x{}x{})", std::any::type_name::<T>(), self.height, self.width, self.channels)
    }
}

impl<T: Scalar> Image<T> {
    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Self::filled(height, width, channels, T::zero())
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: T) -> Self {
        Image { height, width, channels, data: vec![value; height * width * channels] }
    }

    pub fn zeros_like(other: &Self) -> Self {
        Self::zeros(other.height, other.width, other.channels)
    }

    pub fn from_vec(height: usize, width: usize, channels: usize, data: Vec<T>) -> Result<Self> {
        let expected = height * width * channels;
        if data.len() != expected {
            return Err(Error::invalid(format!(
                "image data has {} values, {height}x{width}x{channels} needs {expected}",
                data.len()
            )));
        }
        Ok(Image { height, width, channels, data })
    }

    pub fn from_fn(height: usize, width: usize, channels: usize, mut f: impl FnMut(usize, usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(height * width * channels);
        for c in 0..channels {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(c, y, x));
                }
            }
        }
        Image { height, width, channels, data }
    }

    /// i.i.d. standard normal entries.
    pub fn randn<R: Rng + ?Sized>(height: usize, width: usize, channels: usize, rng: &mut R) -> Self {
        let data = (0..height * width * channels).map(|_| normal(rng)).collect();
        Image { height, width, channels, data }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn shape(&self) -> Shape {
        Shape::new(self.height, self.width, self.channels)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn plane(&self, c: usize) -> &[T] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn plane_mut(&mut self, c: usize) -> &mut [T] {
        let n = self.height * self.width;
        &mut self.data[c * n..(c + 1) * n]
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> T {
        self.data[(c * self.height + y) * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, v: T) {
        self.data[(c * self.height + y) * self.width + x] = v;
    }

    pub fn ensure_shape(&self, expected: Shape) -> Result<()> {
        if self.shape() != expected {
            return Err(Error::ShapeMismatch { expected, got: self.shape() });
        }
        Ok(())
    }

    pub fn ensure_same_shape(&self, other: &Self) -> Result<()> {
        other.ensure_shape(self.shape())
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Image {
            height: self.height,
            width: self.width,
            channels: self.channels,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Result<Self> {
        self.ensure_same_shape(other)?;
        Ok(Image {
            height: self.height,
            width: self.width,
            channels: self.channels,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn scale(&self, k: T) -> Self {
        self.map(|v| v * k)
    }

    /// `self += k * other`
    pub fn add_scaled(&mut self, other: &Self, k: T) -> Result<()> {
        self.ensure_same_shape(other)?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += k * b;
        }
        Ok(())
    }

    pub fn dot(&self, other: &Self) -> Result<T> {
        self.ensure_same_shape(other)?;
        Ok(self.data.iter().zip(&other.data).map(|(&a, &b)| a * b).sum())
    }

    pub fn sum_sq(&self) -> T {
        self.data.iter().map(|&v| v * v).sum()
    }

    pub fn mean(&self) -> T {
        let n = T::from_usize(self.data.len()).unwrap();
        self.data.iter().copied().sum::<T>() / n
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn clamp01(&self) -> Self {
        self.map(|v| v.max(T::zero()).min(T::one()))
    }

    /// Spatial crop covering rows `y0..y0+h` and columns `x0..x0+w` of every channel.
    pub fn crop(&self, y0: usize, x0: usize, h: usize, w: usize) -> Result<Self> {
        if y0 + h > self.height || x0 + w > self.width {
            return Err(Error::invalid(format!("crop {h}x{w} at ({y0},{x0}) exceeds {}", self.shape())));
        }
        let mut data = Vec::with_capacity(h * w * self.channels);
        for c in 0..self.channels {
            let plane = self.plane(c);
            for y in y0..y0 + h {
                data.extend_from_slice(&plane[y * self.width + x0..y * self.width + x0 + w]);
            }
        }
        Ok(Image { height: h, width: w, channels: self.channels, data })
    }

    /// Stacks the channels of `self` followed by those of `other`.
    pub fn concat_channels(&self, other: &Self) -> Result<Self> {
        if self.height != other.height || self.width != other.width {
            return Err(Error::ShapeMismatch {
                expected: Shape::new(self.height, self.width, other.channels),
                got: other.shape(),
            });
        }
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Ok(Image { height: self.height, width: self.width, channels: self.channels + other.channels, data })
    }

    pub fn cast<U: Scalar>(&self) -> Image<U> {
        Image {
            height: self.height,
            width: self.width,
            channels: self.channels,
            data: self.data.iter().map(|v| U::c(v.as_f64())).collect(),
        }
    }

    /// SHA-256 over the shape and the little-endian bytes of every value.
    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        for d in [self.height, self.width, self.channels] {
            hasher.update((d as u64).to_le_bytes());
        }
        let mut buf = Vec::with_capacity(self.data.len() * 8);
        for &v in &self.data {
            v.write_le(&mut buf);
        }
        hasher.update(&buf);
        hex(&hasher.finalize())
    }

    /// Round-to-nearest 8-bit samples after clamping to [0, 1], interleaved per pixel.
    pub fn to_u8_interleaved(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.data.len());
        for y in 0..self.height {
            for x in 0..self.width {
                for c in 0..self.channels {
                    out.push(quantize_u8(self.get(c, y, x).as_f64()));
                }
            }
        }
        out
    }

    fn from_interleaved(height: usize, width: usize, channels: usize, samples: &[f64]) -> Self {
        Self::from_fn(height, width, channels, |c, y, x| T::c(samples[(y * width + x) * channels + c]))
    }
}

fn quantize_u8(v: f64) -> u8 {
    (v * 255.0).round().clamp(0.0, 255.0) as u8
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Lowercase hex SHA-256 of `bytes`.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

/// Loads an 8- or 16-bit grayscale or RGB PNG/PGM/PPM, normalized to [0, 1].
pub fn load_image<T: Scalar>(path: impl AsRef<Path>) -> Result<Image<T>> {
    use image::DynamicImage as D;

    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| Error::Io { path: path.to_owned(), source })?;
    let format =
        image::guess_format(&bytes).map_err(|e| Error::Decode { path: path.to_owned(), message: e.to_string() })?;
    if !matches!(format, image::ImageFormat::Png | image::ImageFormat::Pnm) {
        return Err(Error::Unsupported {
            path: path.to_owned(),
            message: format!("{format:?} files are not supported"),
        });
    }
    let decoded = image::load_from_memory_with_format(&bytes, format)
        .map_err(|e| Error::Decode { path: path.to_owned(), message: e.to_string() })?;
    let (w, h) = (decoded.width() as usize, decoded.height() as usize);
    let (channels, samples): (usize, Vec<f64>) = match decoded {
        D::ImageLuma8(b) => (1, b.into_raw().iter().map(|&v| v as f64 / 255.0).collect()),
        D::ImageRgb8(b) => (3, b.into_raw().iter().map(|&v| v as f64 / 255.0).collect()),
        D::ImageLuma16(b) => (1, b.into_raw().iter().map(|&v| v as f64 / 65535.0).collect()),
        D::ImageRgb16(b) => (3, b.into_raw().iter().map(|&v| v as f64 / 65535.0).collect()),
        other => {
            return Err(Error::Unsupported {
                path: path.to_owned(),
                message: format!("color type {:?} (only gray or RGB without alpha)", other.color()),
            })
        }
    };
    Ok(Image::from_interleaved(h, w, channels, &samples))
}

/// Writes an 8-bit image; the format follows the extension (`png`, `pgm`, `ppm`, `pnm`).
pub fn save_image<T: Scalar>(img: &Image<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let ext = path.extension().and_then(|e| e.to_str()).map(|e| e.to_ascii_lowercase()).unwrap_or_default();
    let bytes = img.to_u8_interleaved();
    let (w, h) = (img.width() as u32, img.height() as u32);
    let io_err = |source| Error::Io { path: path.to_owned(), source };
    match (ext.as_str(), img.channels()) {
        ("png", 1 | 3) => {
            let color = if img.channels() == 1 { image::ExtendedColorType::L8 } else { image::ExtendedColorType::Rgb8 };
            image::save_buffer_with_format(path, &bytes, w, h, color, image::ImageFormat::Png).map_err(|e| match e {
                image::ImageError::IoError(source) => io_err(source),
                other => Error::Decode { path: path.to_owned(), message: other.to_string() },
            })
        }
        ("pgm" | "ppm" | "pnm", 1 | 3) => {
            let magic = if img.channels() == 1 { "P5" } else { "P6" };
            let mut file = fs::File::create(path).map_err(io_err)?;
            write!(file, "{magic}\n{w} {h}\n255\n").map_err(io_err)?;
            file.write_all(&bytes).map_err(io_err)
        }
        (_, 1 | 3) => {
            Err(Error::Unsupported { path: path.to_owned(), message: format!("unknown output extension {ext:?}") })
        }
        (_, c) => {
            Err(Error::Unsupported { path: path.to_owned(), message: format!("{c} channels cannot be exported") })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, Stream};

    #[test]
    fn planar_indexing() {
        let img = Image::<f64>::from_fn(2, 3, 2, |c, y, x| (c * 100 + y * 10 + x) as f64);
        assert_eq!(img.get(1, 1, 2), 112.0);
        assert_eq!(img.plane(1)[0], 100.0);
        assert_eq!(img.len(), 12);
    }

    #[test]
    fn from_vec_checks_length() {
        assert!(Image::<f64>::from_vec(2, 2, 1, vec![0.0; 3]).is_err());
    }

    #[test]
    fn crop_and_concat() {
        let img = Image::<f64>::from_fn(4, 4, 1, |_, y, x| (y * 4 + x) as f64);
        let c = img.crop(1, 2, 2, 2).unwrap();
        assert_eq!(c.data(), &[6.0, 7.0, 10.0, 11.0]);
        assert!(img.crop(3, 3, 2, 2).is_err());
        let cat = c.concat_channels(&c.scale(2.0)).unwrap();
        assert_eq!(cat.channels(), 2);
        assert_eq!(cat.get(1, 1, 1), 22.0);
    }

    #[test]
    fn shape_errors() {
        let a = Image::<f64>::zeros(2, 2, 1);
        let b = Image::<f64>::zeros(2, 3, 1);
        assert!(matches!(a.sub(&b), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn pgm_bytes_normalize() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tiny.pgm");
        let mut raw = b"P5\n2 2\n255\n".to_vec();
        raw.extend_from_slice(&[0, 255, 128, 64]);
        fs::write(&path, raw).unwrap();
        let img: Image<f64> = load_image(&path).unwrap();
        assert_eq!(img.shape(), Shape::new(2, 2, 1));
        assert_eq!(img.data(), &[0.0, 1.0, 128.0 / 255.0, 64.0 / 255.0]);
    }

    #[test]
    fn single_white_png() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("one.png");
        image::save_buffer(&path, &[255u8], 1, 1, image::ExtendedColorType::L8).unwrap();
        let img: Image<f32> = load_image(&path).unwrap();
        assert_eq!(img.data(), &[1.0]);
    }

    #[test]
    fn sixteen_bit_png() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("deep.png");
        let buf: image::ImageBuffer<image::Luma<u16>, Vec<u16>> =
            image::ImageBuffer::from_raw(2, 1, vec![0u16, 65535]).unwrap();
        buf.save(&path).unwrap();
        let img: Image<f64> = load_image(&path).unwrap();
        assert_eq!(img.data(), &[0.0, 1.0]);
    }

    #[test]
    fn rejects_alpha_and_garbage() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rgba.png");
        image::save_buffer(&path, &[1, 2, 3, 4], 1, 1, image::ExtendedColorType::Rgba8).unwrap();
        assert!(matches!(load_image::<f64>(&path), Err(Error::Unsupported { .. })));

        let junk = dir.path().join("junk.png");
        fs::write(&junk, b"not an image").unwrap();
        assert!(matches!(load_image::<f64>(&junk), Err(Error::Decode { .. })));

        let missing = dir.path().join("missing.png");
        assert!(matches!(load_image::<f64>(&missing), Err(Error::Io { .. })));
    }

    #[test]
    fn export_clamps_and_rounds() {
        let img = Image::<f64>::from_vec(1, 4, 1, vec![-0.2, 0.5, 1.7, 0.002]).unwrap();
        assert_eq!(img.to_u8_interleaved(), vec![0, 128, 255, 1]);
    }

    #[test]
    fn hash_tracks_content() {
        let mut rng = stream_rng(1, Stream::Sampler);
        let a = Image::<f64>::randn(3, 3, 1, &mut rng);
        let mut b = a.clone();
        assert_eq!(a.content_hash(), b.content_hash());
        b.set(0, 1, 1, b.get(0, 1, 1) + 1e-15);
        assert_ne!(a.content_hash(), b.content_hash());
    }
}
