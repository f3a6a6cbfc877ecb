//! Image containers, field-of-view masking and raster I/O.
//!
//! Addressing is row-major with `x` the column and `y` the row.

use std::io::{Read, Write};
use std::path::Path;

use image::{ImageFormat, ImageReader};

use crate::error::{Error, Result};
use crate::regions::{label_components, Connectivity};
use crate::scalar::Real;

/// Default FOV threshold as a fraction of full scale.
pub const DEFAULT_FOV_THRESHOLD: f64 = 0.06;

const RAW_MAGIC: &[u8; 4] = b"LCFF";

/// Per-pixel boolean plane.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize, data: Vec<bool>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::DimensionMismatch { expected: width * height, got: data.len() });
        }
        Ok(Self { width, height, data })
    }

    pub fn full(width: usize, height: usize) -> Self {
        Self { width, height, data: vec![true; width * height] }
    }

    pub fn empty(width: usize, height: usize) -> Self {
        Self { width, height, data: vec![false; width * height] }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self { width, height, data }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.data[y * self.width + x] = v;
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.data
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.data.iter().any(|&b| b)
    }

    /// Diameter of a disk with the same area as the mask.
    pub fn equivalent_diameter(&self) -> f64 {
        (4.0 * self.count() as f64 / std::f64::consts::PI).sqrt()
    }
}

/// Two-dimensional real-valued grid with a field-of-view mask.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
    mask: Mask,
}

impl<T: Real> ScalarField<T> {
    pub fn new(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::DimensionMismatch { expected: width * height, got: data.len() });
        }
        Ok(Self { width, height, data, mask: Mask::full(width, height) })
    }

    pub fn filled(width: usize, height: usize, value: T) -> Self {
        Self { width, height, data: vec![value; width * height], mask: Mask::full(width, height) }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self { width, height, data, mask: Mask::full(width, height) }
    }

    pub fn with_mask(mut self, mask: Mask) -> Result<Self> {
        if mask.width != self.width || mask.height != self.height {
            return Err(Error::DimensionMismatch {
                expected: self.width * self.height,
                got: mask.width * mask.height,
            });
        }
        self.mask = mask;
        Ok(self)
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> T {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: T) {
        self.data[y * self.width + x] = v;
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn mask(&self) -> &Mask {
        &self.mask
    }

    #[inline]
    pub fn in_mask(&self, x: usize, y: usize) -> bool {
        self.mask.get(x, y)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
            mask: self.mask.clone(),
        }
    }

    /// Pixelwise combination of two same-sized fields; the mask of `self` is kept.
    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Self {
        assert_eq!((self.width, self.height), (other.width, other.height));
        Self {
            width: self.width,
            height: self.height,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
            mask: self.mask.clone(),
        }
    }

    /// Minimum and maximum over in-mask pixels.
    pub fn masked_range(&self) -> Option<(T, T)> {
        let mut it = self.data.iter().zip(&self.mask.data).filter(|(_, &m)| m).map(|(&v, _)| v);
        let first = it.next()?;
        Some(it.fold((first, first), |(lo, hi), v| (lo.min(v), hi.max(v))))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Converts the element type.
    pub fn cast<U: Real>(&self) -> ScalarField<U> {
        ScalarField {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|v| U::lit(v.as_f64())).collect(),
            mask: self.mask.clone(),
        }
    }
}

/// Three 8-bit planes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    r: Vec<u8>,
    g: Vec<u8>,
    b: Vec<u8>,
}

impl RgbImage {
    pub fn from_planes(width: usize, height: usize, r: Vec<u8>, g: Vec<u8>, b: Vec<u8>) -> Result<Self> {
        let n = width * height;
        for plane in [&r, &g, &b] {
            if plane.len() != n {
                return Err(Error::DimensionMismatch { expected: n, got: plane.len() });
            }
        }
        Ok(Self { width, height, r, g, b })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = y * self.width + x;
        [self.r[i], self.g[i], self.b[i]]
    }

    pub fn red(&self) -> &[u8] {
        &self.r
    }

    pub fn green(&self) -> &[u8] {
        &self.g
    }

    pub fn blue(&self) -> &[u8] {
        &self.b
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::with_capacity(self.width * self.height * 3);
        for i in 0..self.width * self.height {
            buf.extend_from_slice(&[self.r[i], self.g[i], self.b[i]]);
        }
        let img = image::RgbImage::from_raw(self.width as u32, self.height as u32, buf)
            .expect("buffer sized from dimensions");
        img.save_with_format(path, ImageFormat::Png)
            .map_err(|e| Error::Unreadable { path: path.to_owned(), reason: e.to_string() })
    }
}

/// Decodes a PNG or binary PPM/PGM file. Grayscale sources are replicated
/// into all three channels.
pub fn load_image(path: &Path) -> Result<RgbImage> {
    let unreadable = |reason: String| Error::Unreadable { path: path.to_owned(), reason };
    let reader = ImageReader::open(path)
        .map_err(|e| unreadable(e.to_string()))?
        .with_guessed_format()
        .map_err(|e| unreadable(e.to_string()))?;
    match reader.format() {
        Some(ImageFormat::Png) | Some(ImageFormat::Pnm) => {}
        Some(other) => return Err(Error::UnsupportedFormat(format!("{other:?}"))),
        None => return Err(Error::UnsupportedFormat(path.display().to_string())),
    }
    let decoded = reader.decode().map_err(|e| unreadable(e.to_string()))?;
    let rgb = decoded.to_rgb8();
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    if w == 0 || h == 0 {
        return Err(Error::ZeroDimension);
    }
    let n = w * h;
    let (mut r, mut g, mut b) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    for px in rgb.pixels() {
        r.push(px[0]);
        g.push(px[1]);
        b.push(px[2]);
    }
    RgbImage::from_planes(w, h, r, g, b)
}

/// Green plane scaled to `[0, 1]`, mask all-true.
pub fn green_channel<T: Real>(img: &RgbImage) -> ScalarField<T> {
    let scale = T::lit(1.0 / 255.0);
    let data = img.g.iter().map(|&v| T::lit(v as f64) * scale).collect();
    ScalarField::new(img.width, img.height, data).expect("planes sized from dimensions")
}

/// Field of view: mean channel intensity above `threshold` (fraction of full
/// scale), reduced to the largest 4-connected component with interior holes
/// filled.
pub fn fov_mask(img: &RgbImage, threshold: f64) -> Result<Mask> {
    let (w, h) = (img.width, img.height);
    let raw = Mask::from_fn(w, h, |x, y| {
        let i = y * w + x;
        let mean = (img.r[i] as f64 + img.g[i] as f64 + img.b[i] as f64) / (3.0 * 255.0);
        mean > threshold
    });
    if raw.is_empty() {
        return Err(Error::EmptyMask);
    }
    let labels = label_components(&raw, Connectivity::Four);
    let mut sizes = vec![0usize; labels.count + 1];
    for &l in &labels.labels {
        if l > 0 {
            sizes[l as usize] += 1;
        }
    }
    let keep = (1..sizes.len()).max_by_key(|&l| (sizes[l], std::cmp::Reverse(l))).expect("non-empty");
    let mut mask = Mask::from_fn(w, h, |x, y| labels.labels[y * w + x] as usize == keep);

    // Background pieces not reaching the image border are holes.
    let background = Mask::from_fn(w, h, |x, y| !mask.get(x, y));
    let bg = label_components(&background, Connectivity::Eight);
    let mut touches = vec![false; bg.count + 1];
    for y in 0..h {
        for x in 0..w {
            if (x == 0 || y == 0 || x + 1 == w || y + 1 == h) && bg.labels[y * w + x] > 0 {
                touches[bg.labels[y * w + x] as usize] = true;
            }
        }
    }
    for y in 0..h {
        for x in 0..w {
            let l = bg.labels[y * w + x] as usize;
            if l > 0 && !touches[l] {
                mask.set(x, y, true);
            }
        }
    }
    Ok(mask)
}

/// Writes a field as little-endian `f32` with a 16-byte header
/// (`LCFF`, width, height, reserved).
pub fn write_raw<T: Real>(field: &ScalarField<T>, path: &Path) -> Result<()> {
    let mut out = Vec::with_capacity(16 + 4 * field.data.len());
    out.extend_from_slice(RAW_MAGIC);
    out.extend_from_slice(&(field.width as u32).to_le_bytes());
    out.extend_from_slice(&(field.height as u32).to_le_bytes());
    out.extend_from_slice(&0u32.to_le_bytes());
    for v in &field.data {
        out.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
    }
    std::fs::File::create(path)?.write_all(&out)?;
    Ok(())
}

pub fn read_raw<T: Real>(path: &Path) -> Result<ScalarField<T>> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::Unreadable { path: path.to_owned(), reason: e.to_string() })?;
    let bad = |reason: &str| Error::Unreadable { path: path.to_owned(), reason: reason.to_owned() };
    if bytes.len() < 16 || &bytes[0..4] != RAW_MAGIC {
        return Err(bad("missing LCFF header"));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap()) as usize;
    let (w, h) = (word(4), word(8));
    if w == 0 || h == 0 {
        return Err(Error::ZeroDimension);
    }
    if bytes.len() != 16 + 4 * w * h {
        return Err(bad("payload length does not match header"));
    }
    let data = bytes[16..]
        .chunks_exact(4)
        .map(|c| T::lit(f32::from_le_bytes(c.try_into().unwrap()) as f64))
        .collect();
    ScalarField::new(w, h, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn solid(w: usize, h: usize, rgb: [u8; 3]) -> RgbImage {
        let n = w * h;
        RgbImage::from_planes(w, h, vec![rgb[0]; n], vec![rgb[1]; n], vec![rgb[2]; n]).unwrap()
    }

    #[test]
    fn green_scaling() {
        let img = solid(2, 1, [10, 255, 30]);
        let g: ScalarField<f64> = green_channel(&img);
        assert_eq!(g.get(0, 0), 1.0);
        let img = solid(1, 1, [0, 128, 0]);
        let g: ScalarField<f64> = green_channel(&img);
        assert!((g.get(0, 0) - 128.0 / 255.0).abs() < 1e-12);
        let zero: ScalarField<f32> = green_channel(&solid(3, 3, [0, 0, 0]));
        assert!(zero.as_slice().iter().all(|&v| v == 0.0));
        assert!(zero.mask().count() == 9);
    }

    #[test]
    fn fov_of_disk_matches_rasterization() {
        let (w, h) = (41usize, 37usize);
        let (cx, cy, r) = (20.0, 18.0, 12.5);
        let inside = |x: usize, y: usize| (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2) <= r * r;
        let mut planes = vec![vec![0u8; w * h]; 3];
        for y in 0..h {
            for x in 0..w {
                if inside(x, y) {
                    for p in planes.iter_mut() {
                        p[y * w + x] = 200;
                    }
                }
            }
        }
        let img = RgbImage::from_planes(w, h, planes[0].clone(), planes[1].clone(), planes[2].clone()).unwrap();
        let mask = fov_mask(&img, DEFAULT_FOV_THRESHOLD).unwrap();
        assert_eq!(mask, Mask::from_fn(w, h, inside));
    }

    #[test]
    fn fov_keeps_largest_and_fills_holes() {
        let (w, h) = (30usize, 30usize);
        let bright = |x: usize, y: usize| {
            let in_square = (3..25).contains(&x) && (3..25).contains(&y);
            let hole = (10..13).contains(&x) && (10..13).contains(&y);
            let speck = x == 28 && y == 28;
            (in_square && !hole) || speck
        };
        let plane: Vec<u8> = (0..w * h).map(|i| if bright(i % w, i / w) { 180 } else { 0 }).collect();
        let img = RgbImage::from_planes(w, h, plane.clone(), plane.clone(), plane).unwrap();
        let mask = fov_mask(&img, 0.06).unwrap();
        assert_eq!(mask.count(), 22 * 22);
        assert!(mask.get(11, 11));
        assert!(!mask.get(28, 28));
    }

    #[test]
    fn fov_edge_cases() {
        assert_eq!(fov_mask(&solid(5, 4, [200, 200, 200]), 0.06).unwrap().count(), 20);
        assert!(matches!(fov_mask(&solid(5, 4, [0, 0, 0]), 0.06), Err(Error::EmptyMask)));
    }

    #[test]
    fn raw_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.raw");
        let f = ScalarField::<f32>::from_fn(5, 3, |x, y| x as f32 * 0.25 - y as f32);
        write_raw(&f, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[..4], b"LCFF");
        assert_eq!(bytes.len(), 16 + 60);
        let g: ScalarField<f32> = read_raw(&path).unwrap();
        assert_eq!(f, g);
    }

    #[test]
    fn png_and_pnm_decode() {
        let dir = tempfile::tempdir().unwrap();
        let black = solid(2, 2, [0, 0, 0]);
        let p = dir.path().join("black.png");
        black.save_png(&p).unwrap();
        assert_eq!(load_image(&p).unwrap(), black);

        let pgm = dir.path().join("g.pgm");
        let mut bytes = b"P5\n3 2\n255\n".to_vec();
        bytes.extend_from_slice(&[0, 10, 20, 30, 40, 255]);
        std::fs::write(&pgm, bytes).unwrap();
        let img = load_image(&pgm).unwrap();
        assert_eq!((img.width(), img.height()), (3, 2));
        assert_eq!(img.pixel(2, 1), [255, 255, 255]);
        assert_eq!(img.pixel(1, 0), [10, 10, 10]);
    }

    #[test]
    fn truncated_file_is_unreadable() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.png");
        let img = solid(16, 16, [1, 2, 3]);
        img.save_png(&p).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        std::fs::write(&p, &bytes[..bytes.len() / 2]).unwrap();
        assert!(matches!(load_image(&p), Err(Error::Unreadable { .. })));
        assert!(matches!(load_image(&dir.path().join("missing.png")), Err(Error::Unreadable { .. })));
    }
}
